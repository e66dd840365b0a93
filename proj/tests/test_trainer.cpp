#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "stance/trainer.hpp"
#include "support.hpp"

using namespace stance;
using namespace testing_support;

namespace {

const Dataset& small_task() {
  static const Dataset ds = [] {
    synthetic::StanceTaskConfig c;
    c.train = 60;
    c.dev = 30;
    c.test = 45;
    return synthetic::stance_task(c);
  }();
  return ds;
}

std::unique_ptr<PatternModel> pattern_model(std::uint64_t seed = 0) {
  return std::make_unique<PatternModel>(toy_backbone(seed), LossConfig{});
}

TrainConfig quick(std::size_t steps = 30) {
  TrainConfig c;
  c.learning_rate = 3e-3;
  c.max_steps = steps;
  c.batch_size = 4;
  c.eval_interval = 10;
  return c;
}

}  // namespace

TEST(LinearSchedule, WarmupPeakAndDecay) {
  const LinearSchedule s{1.0, 0.1, 100};
  EXPECT_EQ(s.at(0), 0.0);
  EXPECT_NEAR(s.at(5), 0.5, 1e-15);
  EXPECT_NEAR(s.at(10), 1.0, 1e-15);
  EXPECT_NEAR(s.at(55), 0.5, 1e-15);
  EXPECT_EQ(s.at(100), 0.0);
  double prev = -1;
  for (std::size_t i = 0; i <= 10; ++i) {
    EXPECT_GE(s.at(i), prev);
    prev = s.at(i);
  }
  for (std::size_t i = 11; i <= 100; ++i) {
    EXPECT_LE(s.at(i), prev);
    prev = s.at(i);
  }
  EXPECT_NEAR(LinearSchedule({2.0, 0.0, 4}).at(0), 2.0, 1e-15);
}

TEST(ClipGradNorm, ScalesToMaximum) {
  ad::Parameter p("p", ad::Matrix(1, 2));
  p.grad[0] = 3;
  p.grad[1] = 4;
  std::vector<ad::Parameter*> ps{&p};
  EXPECT_EQ(global_grad_norm(ps), 5.0);
  clip_grad_norm(ps, 1.0);
  EXPECT_NEAR(global_grad_norm(ps), 1.0, 1e-12);
  EXPECT_NEAR(p.grad[0], 0.6, 1e-12);
  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(clip_grad_norm(ps, 1.0), NumericError);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  ad::Parameter p("p", ad::Matrix(1, 2, 1.0));
  p.grad[0] = 0.5;
  p.grad[1] = -2.0;
  AdamW opt({&p}, {0.9, 0.999, 1e-8, 0.0});
  opt.step(0.1);
  // Bias correction makes the first update lr * sign(g).
  EXPECT_NEAR(p.value[0], 0.9, 1e-6);
  EXPECT_NEAR(p.value[1], 1.1, 1e-6);
}

TEST(TrainConfig, Presets) {
  const auto fs = TrainConfig::few_shot();
  EXPECT_EQ(fs.learning_rate, 1e-5);
  EXPECT_EQ(fs.warmup_fraction, 0.06);
  EXPECT_EQ(fs.max_steps, 2000u);
  EXPECT_EQ(fs.batch_size, 16u);
  EXPECT_EQ(fs.adam.weight_decay, 1e-8);
  EXPECT_EQ(TrainConfig::few_shot(true).max_steps, 4000u);
  EXPECT_EQ(TrainConfig::few_shot(true).mode, TrainMode::mdl);
  const auto fr = TrainConfig::full_resource();
  EXPECT_EQ(fr.learning_rate, 3e-5);
  EXPECT_EQ(fr.epochs, 8u);
  EXPECT_EQ(fr.total_steps(33), 8u * 3u);
  const auto pt = TrainConfig::pretraining();
  EXPECT_EQ(pt.epochs, 3u);
  EXPECT_EQ(pt.loss.lambda, 0.5);
  EXPECT_EQ(pt.loss.mlm_mask_rate, 0.125);
  EXPECT_EQ(pt.loss.negatives_per_label, 2u);
  EXPECT_FALSE(pt.loss.positive_sampling);
  EXPECT_EQ(parse_mode(to_string(TrainMode::pretrain)), TrainMode::pretrain);
  EXPECT_THROW(parse_mode("bogus"), ConfigError);
}

TEST(TrainConfig, Validate) {
  auto c = quick();
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick();
  c.warmup_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick();
  c.loss.lambda = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, BestMetricIsTraceMaximumAndRestored) {
  const auto& ds = small_task();
  auto model = pattern_model();
  const auto pool = make_pool(ds.splits.train, ds.inventory);
  const auto dev = dev_sets({ds});
  const auto res = train(*model, pool, dev, quick(), 3);
  EXPECT_EQ(res.step_losses.size(), 30u);
  double best = -1;
  std::size_t best_step = 0;
  for (const auto& r : res.trace) {
    if (r.split == "dev" && r.dataset == "*" && r.macro_f1 > best) {
      best = r.macro_f1;
      best_step = r.step;
    }
  }
  EXPECT_EQ(res.best_metric, best);
  EXPECT_EQ(res.best_step, best_step);
  EXPECT_EQ(evaluate(*model, dev).report.average(), best);
  EXPECT_EQ(model->snapshot(), res.best_weights);
  std::ostringstream csv;
  write_trace_csv(csv, res.trace);
  EXPECT_EQ(csv.str().rfind("step,split,dataset,macro_f1,loss\n", 0), 0u);
}

TEST(Train, Deterministic) {
  const auto& ds = small_task();
  const auto pool = make_pool(ds.splits.train, ds.inventory);
  auto a = pattern_model(), b = pattern_model();
  const auto ra = train(*a, pool, dev_sets({ds}), quick(12), 5);
  const auto rb = train(*b, pool, dev_sets({ds}), quick(12), 5);
  EXPECT_EQ(ra.step_losses, rb.step_losses);
  EXPECT_EQ(a->backbone().weights_hash(), b->backbone().weights_hash());
}

TEST(Train, LossDecreases) {
  const auto& ds = small_task();
  auto model = pattern_model();
  const auto pool = make_pool(ds.splits.train, ds.inventory);
  auto cfg = quick(50);
  cfg.eval_interval = 50;
  const auto res = train(*model, pool, {}, cfg, 1);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += res.step_losses[i];
    last += res.step_losses[40 + i];
  }
  EXPECT_LT(last, first);
}

TEST(Train, NonFiniteLossWritesDiagnostic) {
  TempDir dir;
  const auto& ds = small_task();
  auto model = pattern_model();
  for (auto* p : model->backbone().parameters()) {
    if (p->name == "final_ln.gain") p->value.fill(std::numeric_limits<double>::quiet_NaN());
  }
  TrainOptions opts;
  opts.checkpoint_dir = dir / "run";
  EXPECT_THROW(train(*model, make_pool(ds.splits.train, ds.inventory), {}, quick(5), 0, opts),
               NumericError);
  const auto diag = nlohmann::json::parse(slurp(dir / "run" / "diagnostic.json"));
  EXPECT_EQ(diag.at("step"), 0);
  EXPECT_TRUE(diag.contains("example"));
  EXPECT_EQ(diag.at("dataset"), ds.name());
}

TEST(Train, EmptyPoolRejected) {
  auto model = pattern_model();
  EXPECT_THROW(train(*model, {}, {}, quick(), 0), DataError);
}

TEST(Train, CheckpointsBestAndLast) {
  TempDir dir;
  const auto& ds = small_task();
  auto model = pattern_model();
  TrainOptions opts;
  opts.checkpoint_dir = dir.path();
  const auto res = train(*model, make_pool(ds.splits.train, ds.inventory), dev_sets({ds}), quick(20), 0, opts);
  const auto best = ToyBackbone::load(dir / "best");
  EXPECT_EQ(best.weights_hash(), model->backbone().weights_hash());
  EXPECT_TRUE(fs::exists(dir / "last" / "weights.bin"));
  if (res.best_step != 20) {
    EXPECT_NE(ToyBackbone::load(dir / "last").weights_hash(), best.weights_hash());
  }
}

TEST(Protocol, ZeroShotDoesNotTrain) {
  const auto& ds = small_task();
  const auto r = run_protocol({ds}, {0, 3, 0}, quick(),
                              [](std::uint64_t s) -> std::unique_ptr<StanceModel> { return pattern_model(s); });
  ASSERT_EQ(r.repeats.size(), 1u);
  EXPECT_FALSE(r.repeats[0].training.has_value());
  EXPECT_TRUE(r.average.single_run);
  EXPECT_EQ(r.average.stddev, 0.0);
}

TEST(ZeroShot, PredictionsInInventoryAndWeightsUntouched) {
  const auto& ds = small_task();
  auto m = pattern_model(0);
  const auto before = m->backbone().weights_hash();
  const auto a = zero_shot_predict(ds.splits.test, *m, *ds.inventory);
  const auto b = zero_shot_predict(ds.splits.test, *m, *ds.inventory);
  EXPECT_EQ(m->backbone().weights_hash(), before);
  ASSERT_EQ(a.size(), ds.splits.test.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(ds.inventory->contains(a[i].pred));
    EXPECT_EQ(a[i].pred, b[i].pred);
    EXPECT_EQ(a[i].scores, b[i].scores);
  }
}

TEST(Protocol, FewShotRepeatsAggregate) {
  TempDir dir;
  const auto& ds = small_task();
  auto cfg = quick(10);
  const auto r = run_protocol({ds}, {6, 3, 2}, cfg,
                              [](std::uint64_t s) -> std::unique_ptr<StanceModel> { return pattern_model(s); },
                              dir.path());
  ASSERT_EQ(r.repeats.size(), 3u);
  std::vector<double> xs;
  for (const auto& rep : r.repeats) {
    EXPECT_TRUE(rep.training.has_value());
    EXPECT_EQ(rep.model_seed, 0u);
    xs.push_back(rep.test.report.average());
  }
  const auto m = mean_std(xs);
  EXPECT_EQ(r.average.mean, m.mean);
  EXPECT_EQ(r.average.stddev, m.stddev);
  EXPECT_EQ(r.per_dataset.at(ds.name()).n, 3u);
  EXPECT_TRUE(fs::exists(dir / "repeat_2" / "metrics.csv"));
  const auto j = to_json(r);
  EXPECT_EQ(j.at("repeats").size(), 3u);
}

TEST(Protocol, AllRunsOncePerSeed) {
  const auto& ds = small_task();
  auto cfg = quick(4);
  cfg.seeds = {1, 2};
  const auto r = run_protocol({ds}, ShotSpec::all(), cfg,
                              [](std::uint64_t s) -> std::unique_ptr<StanceModel> { return pattern_model(s); });
  ASSERT_EQ(r.repeats.size(), 2u);
  EXPECT_EQ(r.repeats[1].model_seed, 2u);
}
