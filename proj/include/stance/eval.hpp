#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "stance/metrics.hpp"
#include "stance/model.hpp"

namespace stance {

/// One labelled evaluation set scored against its own inventory.
struct EvalSet {
  std::string dataset;
  std::vector<StanceExample> examples;
  std::shared_ptr<const LabelInventory> inventory;
};

inline std::vector<EvalSet> dev_sets(const std::vector<Dataset>& datasets) {
  std::vector<EvalSet> out;
  for (const auto& ds : datasets) out.push_back({ds.name(), ds.splits.dev, ds.inventory});
  return out;
}

inline std::vector<EvalSet> test_sets(const std::vector<Dataset>& datasets) {
  std::vector<EvalSet> out;
  for (const auto& ds : datasets) out.push_back({ds.name(), ds.splits.test, ds.inventory});
  return out;
}

struct Evaluation {
  EvalReport report;
  std::vector<std::vector<Prediction>> predictions;  ///< per eval set
};

inline Evaluation evaluate(StanceModel& model, const std::vector<EvalSet>& sets) {
  Evaluation ev;
  ev.report.model = model.name();
  for (const auto& set : sets) {
    auto preds = model.predict(set.examples, *set.inventory);
    std::vector<std::string> gold, pred;
    for (const auto& p : preds) {
      gold.push_back(p.gold);
      pred.push_back(p.pred);
    }
    ev.report.add(set.dataset, f1_scores(gold, pred, *set.inventory));
    ev.predictions.push_back(std::move(preds));
  }
  return ev;
}

/// Ranks only the task's own inventory labels and takes the best one; no
/// parameter is touched.
inline std::vector<Prediction> zero_shot_predict(const std::vector<StanceExample>& examples,
                                                 PatternModel& model,
                                                 const LabelInventory& inventory) {
  return model.predict(examples, inventory);
}

inline void write_predictions(const std::filesystem::path& path,
                              const std::vector<Prediction>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : preds) out << to_json(p).dump() << '\n';
}

}  // namespace stance
