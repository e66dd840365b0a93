#pragma once

// Optimisation loop shared by pre-training, single-dataset and
// multi-dataset fine-tuning, plus the repeat/seed protocol.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stance/eval.hpp"
#include "stance/fewshot.hpp"
#include "stance/log.hpp"
#include "stance/metrics.hpp"
#include "stance/model.hpp"
#include "stance/optimizer.hpp"

namespace stance {

enum class TrainMode { pretrain, finetune, mdl };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::pretrain: return "pretrain";
    case TrainMode::finetune: return "finetune";
    case TrainMode::mdl: return "mdl";
  }
  return "?";
}

inline TrainMode parse_mode(const std::string& s) {
  if (s == "pretrain") return TrainMode::pretrain;
  if (s == "finetune") return TrainMode::finetune;
  if (s == "mdl") return TrainMode::mdl;
  throw ConfigError("unknown training mode '" + s + "'");
}

struct TrainConfig {
  TrainMode mode = TrainMode::finetune;
  double learning_rate = 1e-5;
  double warmup_fraction = 0.06;
  std::size_t max_steps = 2000;  ///< 0: run `epochs` passes instead
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  AdamWConfig adam;
  std::size_t eval_interval = 200;
  double max_grad_norm = 1.0;
  LossConfig loss;
  std::vector<std::uint64_t> seeds = {0, 1, 2};

  /// Few-shot fine-tuning: LR 1e-5, warmup 0.06, 2000 steps (4000 for MDL).
  static TrainConfig few_shot(bool mdl = false) {
    TrainConfig c;
    c.mode = mdl ? TrainMode::mdl : TrainMode::finetune;
    c.max_steps = mdl ? 4000 : 2000;
    return c;
  }

  /// Full-resource fine-tuning: LR 3e-5, warmup 0.06, 8 epochs.
  static TrainConfig full_resource(bool mdl = false) {
    TrainConfig c;
    c.mode = mdl ? TrainMode::mdl : TrainMode::finetune;
    c.learning_rate = 3e-5;
    c.max_steps = 0;
    c.epochs = 8;
    return c;
  }

  /// Sentiment-based pre-training: 3 epochs, MLM 12.5%, 2 negatives per
  /// label, no positive sampling, lambda 0.5.
  static TrainConfig pretraining() {
    TrainConfig c;
    c.mode = TrainMode::pretrain;
    c.max_steps = 0;
    c.epochs = 3;
    c.loss.lambda = 0.5;
    c.loss.mlm_mask_rate = 0.125;
    c.loss.negatives_per_label = 2;
    c.loss.positive_sampling = false;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
      throw ConfigError("warmup fraction must lie in [0,1)");
    }
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (max_steps == 0 && epochs == 0) throw ConfigError("need max_steps or epochs");
    if (eval_interval == 0) throw ConfigError("eval interval must be positive");
    loss.validate();
  }

  std::size_t total_steps(std::size_t pool_size) const {
    if (max_steps > 0) return max_steps;
    return epochs * ((pool_size + batch_size - 1) / batch_size);
  }

  nlohmann::json to_json() const {
    std::vector<std::uint64_t> s(seeds.begin(), seeds.end());
    return {{"mode", to_string(mode)},
            {"learning_rate", learning_rate},
            {"warmup_fraction", warmup_fraction},
            {"max_steps", max_steps},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"weight_decay", adam.weight_decay},
            {"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"epsilon", adam.epsilon},
            {"eval_interval", eval_interval},
            {"max_grad_norm", max_grad_norm},
            {"lambda", loss.lambda},
            {"mlm_mask_rate", loss.mlm_mask_rate},
            {"negatives_per_label", loss.negatives_per_label},
            {"positive_sampling", loss.positive_sampling},
            {"freeze_label_embeddings", loss.freeze_label_embeddings},
            {"seeds", s}};
  }
};

struct TraceRow {
  std::size_t step = 0;
  std::string split;    ///< "train" or "dev"
  std::string dataset;  ///< "*" for aggregate rows
  double macro_f1 = std::numeric_limits<double>::quiet_NaN();
  double loss = std::numeric_limits<double>::quiet_NaN();
};

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "step,split,dataset,macro_f1,loss\n";
  auto num = [&](double v) {
    if (!std::isnan(v)) out << v;
  };
  for (const auto& r : trace) {
    out << r.step << ',' << r.split << ',' << r.dataset << ',';
    num(r.macro_f1);
    out << ',';
    num(r.loss);
    out << '\n';
  }
}

struct TrainResult {
  std::size_t total_steps = 0;
  std::size_t best_step = 0;
  double best_metric = -1.0;
  std::vector<TraceRow> trace;
  std::vector<ad::Matrix> best_weights;
  std::vector<double> step_losses;  ///< mean batch loss per step
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  ///< writes best/ and last/
};

/// Runs AdamW with linear warmup/decay and global-norm clipping on `pool`.
/// Dev macro-F1 (unweighted mean over `dev`) is measured every
/// eval_interval steps and at the end; the best-scoring weights are
/// restored into `model` and returned.
inline TrainResult train(StanceModel& model, const std::vector<PoolItem>& pool,
                         const std::vector<EvalSet>& dev, const TrainConfig& config,
                         std::uint64_t seed, const TrainOptions& options = {}) {
  config.validate();
  if (pool.empty()) throw DataError("training pool is empty");
  for (const auto& item : pool) model.prepare(*item.inventory);
  for (const auto& d : dev) model.prepare(*d.inventory);

  TrainResult result;
  result.total_steps = config.total_steps(pool.size());
  auto params = model.parameters();
  AdamW opt(params, config.adam);
  const LinearSchedule schedule{config.learning_rate, config.warmup_fraction, result.total_steps};
  Rng rng(seed);
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t cursor = 0;

  double running = 0.0;
  std::size_t running_n = 0;
  auto run_eval = [&](std::size_t step) {
    TraceRow tr{step, "train", "*", std::numeric_limits<double>::quiet_NaN(),
                running_n ? running / static_cast<double>(running_n)
                          : std::numeric_limits<double>::quiet_NaN()};
    result.trace.push_back(tr);
    running = 0.0;
    running_n = 0;
    double metric = 0.0;
    if (!dev.empty()) {
      const Evaluation ev = evaluate(model, dev);
      for (const auto& d : ev.report.datasets) {
        result.trace.push_back({step, "dev", d.dataset, d.macro_f1,
                                std::numeric_limits<double>::quiet_NaN()});
      }
      metric = ev.report.average();
      result.trace.push_back({step, "dev", "*", metric, std::numeric_limits<double>::quiet_NaN()});
    }
    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_step = step;
      result.best_weights = model.snapshot();
      if (options.checkpoint_dir) model.save(*options.checkpoint_dir / "best");
    }
  };

  for (std::size_t step = 0; step < result.total_steps; ++step) {
    model.zero_grad();
    double batch_loss = 0.0;
    const double scale = 1.0 / static_cast<double>(config.batch_size);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const PoolItem& item = pool[order[cursor++]];
      ad::Tape tape;
      ad::Var loss = model.loss(tape, item, rng);
      const double value = tape.scalar_value(loss);
      if (!std::isfinite(value)) {
        nlohmann::json diag{{"step", step},
                            {"example", item.example.id},
                            {"dataset", item.inventory->dataset()},
                            {"loss", std::to_string(value)},
                            {"learning_rate", schedule.at(step)}};
        if (options.checkpoint_dir) {
          std::filesystem::create_directories(*options.checkpoint_dir);
          std::ofstream(*options.checkpoint_dir / "diagnostic.json") << diag.dump(2) << '\n';
        }
        throw NumericError("non-finite loss: " + diag.dump());
      }
      batch_loss += value;
      tape.backward(loss, scale);
    }
    clip_grad_norm(params, config.max_grad_norm);
    opt.step(schedule.at(step));
    const double mean = batch_loss * scale;
    result.step_losses.push_back(mean);
    running += mean;
    ++running_n;
    const std::size_t done = step + 1;
    if (done % config.eval_interval == 0 || done == result.total_steps) run_eval(done);
  }
  if (options.checkpoint_dir) model.save(*options.checkpoint_dir / "last");
  model.restore(result.best_weights);
  return result;
}

using ModelFactory = std::function<std::unique_ptr<StanceModel>(std::uint64_t seed)>;

struct RepeatResult {
  std::size_t repeat = 0;
  std::uint64_t model_seed = 0;
  std::optional<TrainResult> training;  ///< empty for zero-shot
  Evaluation test;
};

struct ProtocolResult {
  std::vector<RepeatResult> repeats;
  std::map<std::string, MeanStd> per_dataset;
  MeanStd average;  ///< over repeats of the cross-dataset mean
};

inline void set_pool_class_weights(StanceModel& model, const std::vector<PoolItem>& pool) {
  std::map<std::string, std::pair<std::shared_ptr<const LabelInventory>,
                                  std::vector<StanceExample>>> by_ds;
  for (const auto& it : pool) {
    auto& e = by_ds[it.inventory->dataset()];
    e.first = it.inventory;
    e.second.push_back(it.example);
  }
  for (const auto& [name, e] : by_ds) model.set_class_weights(name, class_weights(e.second, *e.first));
}

/// Runs the repeat protocol on `datasets` jointly (one model trained on a
/// pool drawn from every dataset; use one dataset for single-dataset runs).
///   k=0:   one evaluation-only run, no weight updates
///   k>0:   `shots.repeats` subsets, one model seed (seeds[0])
///   k=ALL: full training split, one run per model seed
inline ProtocolResult run_protocol(const std::vector<Dataset>& datasets, const ShotSpec& shots,
                                   const TrainConfig& config, const ModelFactory& factory,
                                   const std::optional<std::filesystem::path>& out_dir = {}) {
  if (datasets.empty()) throw ConfigError("run_protocol needs at least one dataset");
  if (config.seeds.empty()) throw ConfigError("run_protocol needs at least one seed");
  ProtocolResult result;
  const auto tests = test_sets(datasets);
  const auto devs = dev_sets(datasets);
  std::size_t runs = shots.is_zero_shot() ? 1 : shots.is_all() ? config.seeds.size() : shots.repeats;
  for (std::size_t r = 0; r < runs; ++r) {
    RepeatResult rep;
    rep.repeat = r;
    rep.model_seed = shots.is_all() ? config.seeds[r] : config.seeds[0];
    auto model = factory(rep.model_seed);
    if (!shots.is_zero_shot()) {
      std::vector<PoolItem> pool;
      if (shots.is_all()) {
        for (const auto& ds : datasets) {
          auto part = make_pool(ds.splits.train, ds.inventory);
          pool.insert(pool.end(), part.begin(), part.end());
        }
        Rng(derive_seed(rep.model_seed, 0x706f6f6cULL)).shuffle(pool);
      } else {
        pool = build_mdl_pool(datasets, shots, r);
      }
      set_pool_class_weights(*model, pool);
      TrainOptions opts;
      if (out_dir) opts.checkpoint_dir = *out_dir / ("repeat_" + std::to_string(r));
      rep.training = train(*model, pool, devs, config, rep.model_seed, opts);
      if (out_dir) {
        std::ofstream csv(*out_dir / ("repeat_" + std::to_string(r)) / "metrics.csv");
        write_trace_csv(csv, rep.training->trace);
      }
    }
    rep.test = evaluate(*model, tests);
    result.repeats.push_back(std::move(rep));
  }
  std::vector<double> avgs;
  for (const auto& ds : datasets) {
    std::vector<double> xs;
    for (const auto& rep : result.repeats) xs.push_back(rep.test.report.at(ds.name()).macro_f1);
    result.per_dataset[ds.name()] = mean_std(xs);
  }
  for (const auto& rep : result.repeats) avgs.push_back(rep.test.report.average());
  result.average = mean_std(avgs);
  return result;
}

inline nlohmann::json to_json(const MeanStd& m) {
  return {{"mean", m.mean}, {"std", m.stddev}, {"n", m.n}, {"single_run", m.single_run}};
}

inline nlohmann::json to_json(const ProtocolResult& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [k, v] : r.per_dataset) per[k] = to_json(v);
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& rep : r.repeats) {
    nlohmann::json j{{"repeat", rep.repeat},
                     {"model_seed", rep.model_seed},
                     {"test", rep.test.report.to_json()}};
    if (rep.training) {
      j["best_step"] = rep.training->best_step;
      j["best_dev_macro_f1"] = rep.training->best_metric;
      j["total_steps"] = rep.training->total_steps;
    }
    reps.push_back(j);
  }
  return {{"per_dataset", per}, {"average", to_json(r.average)}, {"repeats", reps}};
}

}  // namespace stance
