#pragma once

#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stance/data_model.hpp"
#include "stance/error.hpp"

namespace stance {

struct ClassScores {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct F1Result {
  double macro_f1 = 0.0;
  std::vector<ClassScores> per_class;  ///< inventory order
};

/// Per-class F1 = 2PR/(P+R) (0 when P+R = 0), macro-averaged over every
/// inventory class, including classes that are never predicted.
inline F1Result f1_scores(const std::vector<std::string>& gold,
                          const std::vector<std::string>& pred, const LabelInventory& inventory) {
  if (gold.size() != pred.size()) {
    throw DataError("macro_f1: " + std::to_string(gold.size()) + " gold labels vs " +
                    std::to_string(pred.size()) + " predictions");
  }
  const std::size_t c = inventory.size();
  std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0), support(c, 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::size_t g = inventory.index_of(gold[i]);
    const std::size_t p = inventory.index_of(pred[i]);
    ++support[g];
    if (g == p) {
      ++tp[g];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  F1Result r;
  double sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    ClassScores s;
    s.label = inventory.labels()[k];
    s.support = support[k];
    const double tpk = static_cast<double>(tp[k]);
    s.precision = tp[k] + fp[k] ? tpk / static_cast<double>(tp[k] + fp[k]) : 0.0;
    s.recall = tp[k] + fn[k] ? tpk / static_cast<double>(tp[k] + fn[k]) : 0.0;
    s.f1 = s.precision + s.recall > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    sum += s.f1;
    r.per_class.push_back(s);
  }
  r.macro_f1 = sum / static_cast<double>(c);
  return r;
}

inline double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                       const LabelInventory& inventory) {
  return f1_scores(gold, pred, inventory).macro_f1;
}

/// Macro-F1 of a classifier that always predicts one class whose test
/// share is p: 2p/(1+p) for that class, 0 for the rest.
inline double constant_predictor_f1(double p, std::size_t num_classes) {
  return (2.0 * p / (1.0 + p)) / static_cast<double>(num_classes);
}

struct DatasetScore {
  std::string dataset;
  double macro_f1 = 0.0;
  std::vector<ClassScores> per_class;
};

struct EvalReport {
  std::string model;
  std::vector<DatasetScore> datasets;
  nlohmann::json metadata = nlohmann::json::object();

  /// Unweighted mean of per-dataset macro-F1.
  double average() const {
    if (datasets.empty()) return 0.0;
    double s = 0.0;
    for (const auto& d : datasets) s += d.macro_f1;
    return s / static_cast<double>(datasets.size());
  }

  const DatasetScore& at(const std::string& name) const {
    for (const auto& d : datasets) {
      if (d.dataset == name) return d;
    }
    throw DataError("no score for dataset '" + name + "'");
  }

  void add(const std::string& dataset, const F1Result& r) {
    datasets.push_back({dataset, r.macro_f1, r.per_class});
  }

  nlohmann::json to_json() const {
    nlohmann::json ds = nlohmann::json::array();
    for (const auto& d : datasets) {
      nlohmann::json pc = nlohmann::json::array();
      for (const auto& c : d.per_class) {
        pc.push_back({{"label", c.label},
                      {"precision", c.precision},
                      {"recall", c.recall},
                      {"f1", c.f1},
                      {"support", c.support}});
      }
      ds.push_back({{"dataset", d.dataset}, {"macro_f1", d.macro_f1}, {"per_class", pc}});
    }
    return {{"model", model}, {"datasets", ds}, {"average_macro_f1", average()},
            {"metadata", metadata}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.model = j.value("model", "");
    r.metadata = j.value("metadata", nlohmann::json::object());
    for (const auto& d : j.at("datasets")) {
      DatasetScore s;
      s.dataset = d.at("dataset").get<std::string>();
      s.macro_f1 = d.at("macro_f1").get<double>();
      for (const auto& c : d.value("per_class", nlohmann::json::array())) {
        s.per_class.push_back({c.at("label").get<std::string>(), c.at("precision").get<double>(),
                               c.at("recall").get<double>(), c.at("f1").get<double>(),
                               c.at("support").get<std::size_t>()});
      }
      r.datasets.push_back(std::move(s));
    }
    return r;
  }

  /// dataset,label,precision,recall,f1,support rows; label "*" carries the
  /// dataset macro-F1 and dataset "*" the cross-dataset average.
  void write_csv(std::ostream& out) const {
    out << "dataset,label,precision,recall,f1,support\n";
    for (const auto& d : datasets) {
      for (const auto& c : d.per_class) {
        out << d.dataset << ',' << c.label << ',' << c.precision << ',' << c.recall << ','
            << c.f1 << ',' << c.support << '\n';
      }
      out << d.dataset << ",*,,," << d.macro_f1 << ",\n";
    }
    out << "*,*,,," << average() << ",\n";
  }
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  ///< population standard deviation
  std::size_t n = 0;
  bool single_run = false;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(v / static_cast<double>(xs.size()));
  m.single_run = xs.size() == 1;
  return m;
}

}  // namespace stance
