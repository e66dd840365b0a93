#include <gtest/gtest.h>

#include "stance/config.hpp"
#include "support.hpp"

using namespace stance;
using namespace testing_support;

TEST(RunConfig, Defaults) {
  RunConfig c;
  EXPECT_EQ(c.get("run.shots"), "32");
  EXPECT_TRUE(c.is_auto("train.learning_rate"));
  EXPECT_EQ(c.shots().k, std::optional<std::size_t>(32));
  EXPECT_EQ(c.get_list("datagen.split_ratios"), (std::vector<std::string>{"0.8", "0.1", "0.1"}));
}

TEST(RunConfig, UnknownKeyRejected) {
  RunConfig c;
  EXPECT_THROW(c.set("train.learnign_rate", "1"), ConfigError);
  EXPECT_THROW(c.get("nope.key"), ConfigError);
  EXPECT_THROW(c.set_assignment("run.shots"), ConfigError);
}

TEST(RunConfig, IniMerge) {
  TempDir d;
  spit(d / "a.ini", "[run]\nshots = all\nseed = 7\n\n[train]\nlearning_rate = 2e-5\n");
  const auto c = RunConfig::load(d / "a.ini");
  EXPECT_TRUE(c.shots().is_all());
  EXPECT_EQ(c.get_uint("run.seed"), 7u);
  EXPECT_EQ(c.train_config("train").learning_rate, 2e-5);
  spit(d / "bad.ini", "[run]\nbogus = 1\n");
  EXPECT_THROW(RunConfig::load(d / "bad.ini"), ConfigError);
  EXPECT_THROW(RunConfig::load(d / "missing.ini"), ConfigError);
}

TEST(RunConfig, KeyOutsideSection) {
  TempDir d;
  spit(d / "a.ini", "shots = 3\n[run]\nseed = 1\n");
  EXPECT_THROW(RunConfig::load(d / "a.ini"), ConfigError);
}

TEST(RunConfig, OverridesApplyInOrder) {
  TempDir d;
  spit(d / "a.ini", "[run]\nshots = 8\n");
  spit(d / "b.ini", "[run]\nshots = 16\n");
  RunConfig c = RunConfig::load(d / "a.ini");
  c.merge_file(d / "b.ini");
  EXPECT_EQ(c.get("run.shots"), "16");
  c.set_assignment("run.shots = 64");
  EXPECT_EQ(c.get("run.shots"), "64");
}

TEST(RunConfig, PresetsFollowShotsAndCommand) {
  RunConfig c;
  EXPECT_EQ(c.train_config("train").max_steps, 2000u);
  c.set("run.mdl", "true");
  EXPECT_EQ(c.train_config("train").max_steps, 4000u);
  c.set("run.shots", "all");
  const auto fr = c.train_config("train");
  EXPECT_EQ(fr.learning_rate, 3e-5);
  EXPECT_EQ(fr.epochs, 8u);
  const auto pt = c.train_config("pretrain");
  EXPECT_EQ(pt.loss.lambda, 0.5);
  EXPECT_EQ(pt.loss.negatives_per_label, 2u);
  c.set("loss.lambda", "0.25");
  EXPECT_EQ(c.train_config("pretrain").loss.lambda, 0.25);
  c.set("loss.lambda", "2");
  EXPECT_THROW(c.train_config("train"), ConfigError);
}

TEST(RunConfig, BadValues) {
  RunConfig c;
  c.set("run.repeats", "x");
  EXPECT_THROW(c.shots(), ConfigError);
  c.set("run.repeats", "0");
  EXPECT_THROW(c.shots(), ConfigError);
  c.set("run.repeats", "3");
  c.set("train.learning_rate", "fast");
  EXPECT_THROW(c.train_config("train"), ConfigError);
  c.set("train.learning_rate", "auto");
  c.set("train.seeds", "1,b");
  EXPECT_THROW(c.train_config("train"), ConfigError);
  c.set("run.mdl", "maybe");
  EXPECT_THROW(c.get_bool("run.mdl"), ConfigError);
}

TEST(RunConfig, SeedsDefaultFromRunSeed) {
  RunConfig c;
  c.set("run.seed", "10");
  EXPECT_EQ(c.train_config("train").seeds, (std::vector<std::uint64_t>{10, 11, 12}));
  c.set("train.seeds", "4, 5");
  EXPECT_EQ(c.train_config("train").seeds, (std::vector<std::uint64_t>{4, 5}));
}

TEST(RunConfig, ResolvedHasNoAutoTrainingKeys) {
  RunConfig c;
  c.set("train.batch_size", "4");
  const auto r = c.resolved("train");
  for (const auto& [k, v] : r.values()) {
    if (k.rfind("train.", 0) == 0 || k.rfind("loss.", 0) == 0) EXPECT_NE(v, "auto") << k;
  }
  EXPECT_EQ(r.get("train.batch_size"), "4");
  EXPECT_EQ(r.get("train.mode"), "finetune");
  EXPECT_EQ(r.train_config("train").learning_rate, c.train_config("train").learning_rate);
}

TEST(RunConfig, SaveLoadRoundTrip) {
  TempDir d;
  RunConfig c;
  c.set("run.shots", "all");
  c.set("datagen.languages", "en,de");
  c.save(d / "c.ini");
  const auto back = RunConfig::load(d / "c.ini");
  EXPECT_EQ(back.values(), c.values());
  EXPECT_EQ(back.to_json().at("run").at("shots"), "all");
}
