#pragma once

// Command-line front end: generate-data, sample-shots, pretrain, train,
// evaluate and report. Exit codes: 0 ok, 2 config, 3 data, 4 numeric.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stance/backbone.hpp"
#include "stance/baselines.hpp"
#include "stance/config.hpp"
#include "stance/data_model.hpp"
#include "stance/eval.hpp"
#include "stance/fewshot.hpp"
#include "stance/log.hpp"
#include "stance/model.hpp"
#include "stance/senti_datagen.hpp"
#include "stance/synthetic.hpp"
#include "stance/tokenizer.hpp"
#include "stance/trainer.hpp"

namespace stance::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

inline void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ----------------------------------------------------------- data/backbone

inline Dataset resolve_dataset(const std::string& spec, std::uint64_t data_seed) {
  if (spec == "toy") {
    synthetic::StanceTaskConfig c;
    c.seed = data_seed;
    return synthetic::stance_task(c);
  }
  if (!fs::is_directory(spec)) throw DataError("dataset '" + spec + "' is neither builtin nor a directory");
  return load_dataset(spec);
}

inline std::vector<Dataset> resolve_datasets(const RunConfig& cfg, const char* key = "run.dataset") {
  std::vector<Dataset> out;
  std::set<std::string> names;
  for (const auto& spec : cfg.get_list(key)) {
    out.push_back(resolve_dataset(spec, cfg.get_uint("run.data_seed")));
    if (!names.insert(out.back().name()).second) {
      throw ConfigError("dataset '" + out.back().name() + "' given twice");
    }
  }
  if (out.empty() && std::string(key) == "run.dataset") throw ConfigError("no dataset given");
  return out;
}

using LabelTexts = std::map<std::string, std::map<std::string, std::string>>;

/// TSV rows: dataset, label, surface text.
inline LabelTexts load_label_texts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file " + path.string());
  LabelTexts out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || text::trim(line)[0] == '#') continue;
    const auto cols = text::split(line, '\t');
    if (cols.size() != 3) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": expected dataset<TAB>label<TAB>surface");
    }
    out[text::canonical(cols[0])][text::canonical(cols[1])] = text::canonical(cols[2]);
  }
  return out;
}

struct BackboneSource {
  std::optional<ToyTokenizer> tokenizer;     ///< fresh toy backbone
  std::optional<fs::path> checkpoint;        ///< or a saved one
  ToyBackboneConfig config;

  std::unique_ptr<Backbone> make(std::uint64_t seed) const {
    if (checkpoint) return std::make_unique<ToyBackbone>(ToyBackbone::load(*checkpoint));
    ToyBackboneConfig c = config;
    c.seed = seed;
    return std::make_unique<ToyBackbone>(*tokenizer, c);
  }
};

inline BackboneSource resolve_backbone(const RunConfig& cfg, const std::vector<Dataset>& datasets,
                                       const LabelTexts& label_texts) {
  BackboneSource src;
  const std::string spec = cfg.get("backbone.spec");
  if (spec != "toy") {
    if (!fs::is_directory(spec)) throw ConfigError("backbone '" + spec + "' is neither toy nor a checkpoint directory");
    src.checkpoint = spec;
    const ToyBackbone probe = ToyBackbone::load(spec);
    if (!cfg.is_auto("backbone.hidden") && cfg.get_uint("backbone.hidden") != probe.hidden_dim()) {
      throw DataError("checkpoint " + spec + " has hidden dim " + std::to_string(probe.hidden_dim()) +
                      " but the configured backbone hidden dim is " + cfg.get("backbone.hidden"));
    }
    return src;
  }
  src.config.hidden_dim = cfg.is_auto("backbone.hidden") ? 32 : cfg.get_uint("backbone.hidden");
  src.config.ffn_dim = cfg.get_uint("backbone.ffn");
  src.config.layers = cfg.get_uint("backbone.layers");
  src.config.embedding_std = cfg.get_double("backbone.embedding_std");
  std::vector<std::string> texts;
  LabelRegistry reg;
  auto add = [&](const Dataset& ds) {
    auto t = synthetic::corpus_texts(ds);
    texts.insert(texts.end(), t.begin(), t.end());
    reg.add(*ds.inventory);
  };
  for (const auto& ds : datasets) add(ds);
  for (const auto& ds : resolve_datasets(cfg, "backbone.vocab_from")) add(ds);
  for (const auto& [_, m] : label_texts) {
    for (const auto& [__, surface] : m) reg.add(surface);
  }
  src.tokenizer = build_toy_tokenizer(texts, reg.labels(), cfg.get_uint("backbone.vocab_capacity"));
  return src;
}

/// Replaces the remaining "auto" backbone value with the concrete one.
inline void pin_backbone(RunConfig& cfg, const BackboneSource& src) {
  if (!cfg.is_auto("backbone.hidden")) return;
  const std::size_t d = src.checkpoint ? ToyBackbone::load(*src.checkpoint).hidden_dim() : src.config.hidden_dim;
  cfg.set("backbone.hidden", std::to_string(d));
}

inline LabelRegistry registry_for(const std::vector<Dataset>& datasets) {
  LabelRegistry reg;
  for (const auto& ds : datasets) reg.add(*ds.inventory);
  return reg;
}

inline std::unique_ptr<StanceModel> make_model(const RunConfig& cfg, std::unique_ptr<Backbone> bb,
                                               const TrainConfig& tc,
                                               const std::vector<Dataset>& datasets,
                                               const LabelTexts& label_texts, std::uint64_t seed) {
  const std::string kind = cfg.get("run.model");
  if (kind == "pattern") {
    PromptTemplate tmpl = cfg.get("run.template").empty() ? PromptTemplate::standard()
                                                          : PromptTemplate::load(cfg.get("run.template"));
    auto m = std::make_unique<PatternModel>(std::move(bb), tc.loss, registry_for(datasets), tmpl);
    for (const auto& [ds, texts] : label_texts) m->set_label_texts(ds, texts);
    return m;
  }
  if (kind == "cls") {
    auto m = std::make_unique<ClsModel>(std::move(bb), seed);
    if (cfg.get("backbone.spec") != "toy") m->load_heads(cfg.get("backbone.spec"));
    return m;
  }
  throw ConfigError("run.model must be pattern or cls, got '" + kind + "'");
}

inline json fingerprints(const std::vector<Dataset>& datasets) {
  json j = json::object();
  for (const auto& ds : datasets) {
    j[ds.name()] = {{"train", fingerprint(ds.splits.train)},
                    {"dev", fingerprint(ds.splits.dev)},
                    {"test", fingerprint(ds.splits.test)}};
  }
  return j;
}

/// Archives the resolved config and the run manifest.
inline void archive(const fs::path& out, const std::string& command, const RunConfig& resolved,
                    const std::vector<Dataset>& datasets, json extra = json::object()) {
  fs::create_directories(out);
  resolved.save(out / "config.ini");
  json m{{"command", command},
         {"config", resolved.to_json()},
         {"seed", resolved.get_uint("run.seed")},
         {"fingerprints", fingerprints(datasets)}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_json(out / "run.json", m);
}

inline std::string run_label(const RunConfig& cfg, const std::string& fallback) {
  return cfg.get("run.label") == "auto" ? fallback : cfg.get("run.label");
}

inline json summary_json(const std::string& label, const std::string& model, const std::string& shots,
                         const std::map<std::string, MeanStd>& per_dataset, const MeanStd& avg) {
  json ds = json::object();
  for (const auto& [k, v] : per_dataset) ds[k] = to_json(v);
  return {{"label", label}, {"model", model}, {"shots", shots}, {"datasets", ds}, {"average", to_json(avg)}};
}

// ---------------------------------------------------------------- commands

inline int cmd_generate_data(const RunConfig& base) {
  const RunConfig cfg = base.resolved("generate-data");
  const fs::path out = cfg.get("run.out");
  std::vector<datagen::Article> articles;
  if (cfg.get("datagen.articles") == "toy") {
    synthetic::ArticleConfig ac;
    ac.seed = cfg.get_uint("run.data_seed");
    articles = synthetic::articles(ac);
  } else {
    articles = datagen::read_articles(cfg.get("datagen.articles"));
  }
  std::unique_ptr<datagen::SentimentAnnotator> annotator;
  const std::string kind = cfg.get("datagen.annotator");
  if (kind == "lexicon") {
    annotator = std::make_unique<datagen::LexiconAnnotator>();
  } else if (kind == "http") {
    if (cfg.get("datagen.annotator_url").empty()) {
      if (!cfg.get_bool("datagen.lexicon_fallback")) {
        throw ConfigError("no sentiment annotator endpoint configured (set datagen.annotator_url, "
                          "use --annotator lexicon, or pass --lexicon-fallback)");
      }
      log::warn("no annotator endpoint; falling back to the lexicon annotator");
      annotator = std::make_unique<datagen::LexiconAnnotator>();
    } else {
      datagen::HttpAnnotatorConfig hc;
      hc.url = cfg.get("datagen.annotator_url");
      hc.timeout_seconds = cfg.get_double("datagen.annotator_timeout");
      hc.retries = static_cast<int>(cfg.get_uint("datagen.annotator_retries"));
      annotator = std::make_unique<datagen::HttpAnnotator>(hc);
    }
  } else {
    throw ConfigError("datagen.annotator must be lexicon or http, got '" + kind + "'");
  }
  datagen::DatagenConfig dc;
  dc.languages = cfg.get_list("datagen.languages");
  dc.articles_per_language = cfg.get_uint("datagen.articles_per_language");
  dc.include_hindi = cfg.get_bool("datagen.include_hindi");
  dc.unrelated_fraction = cfg.get_double("datagen.unrelated_fraction");
  dc.augment_fraction = cfg.get_double("datagen.augment_fraction");
  const auto ratios = cfg.get_list("datagen.split_ratios");
  if (ratios.size() != 3) throw ConfigError("datagen.split_ratios needs three values");
  for (int i = 0; i < 3; ++i) dc.split_ratios[i] = parse_double("datagen.split_ratios", ratios[i]);
  dc.seed = cfg.get_uint("run.seed");
  dc.threads = cfg.get_uint("datagen.threads");
  if (cfg.get("datagen.dataset") != "auto") dc.dataset_name = cfg.get("datagen.dataset");
  const auto result = datagen::generate(articles, *annotator, dc);
  datagen::write_result(out, result);
  archive(out, "generate-data", cfg, {result.dataset});
  log::info("wrote " + std::to_string(result.manifest["records"].get<std::size_t>()) + " records to " +
            out.string());
  return kOk;
}

inline int cmd_sample_shots(const RunConfig& base) {
  const RunConfig cfg = base.resolved("sample-shots");
  const fs::path out = cfg.get("run.out");
  const auto datasets = resolve_datasets(cfg);
  const ShotSpec spec = cfg.shots();
  for (const auto& ds : datasets) {
    const auto subsets = sample_shots(ds.splits.train, spec, *ds.inventory);
    write_json(out / "shots" / (ds.name() + ".json"), shot_manifest(ds.name(), spec, subsets));
  }
  archive(out, "sample-shots", cfg, datasets);
  return kOk;
}

inline int cmd_pretrain(const RunConfig& base) {
  RunConfig cfg = base.resolved("pretrain");
  const fs::path out = cfg.get("run.out");
  const auto datasets = resolve_datasets(cfg);
  const auto label_texts = cfg.get("run.labels_file").empty() ? LabelTexts{}
                                                              : load_label_texts(cfg.get("run.labels_file"));
  const TrainConfig tc = cfg.train_config("pretrain");
  const auto source = resolve_backbone(cfg, datasets, label_texts);
  pin_backbone(cfg, source);
  const std::uint64_t seed = tc.seeds.front();
  auto model = make_model(cfg, source.make(seed), tc, datasets, label_texts, seed);
  std::vector<PoolItem> pool;
  for (const auto& ds : datasets) {
    auto p = make_pool(ds.splits.train, ds.inventory);
    pool.insert(pool.end(), p.begin(), p.end());
    model->set_class_weights(ds.name(), class_weights(ds.splits.train, *ds.inventory));
  }
  Rng(derive_seed(seed, 0x706f6f6cULL)).shuffle(pool);
  archive(out, "pretrain", cfg, datasets);
  TrainOptions opts;
  opts.checkpoint_dir = out;
  const auto res = train(*model, pool, dev_sets(datasets), tc, seed, opts);
  std::ofstream csv(out / "metrics.csv", std::ios::binary);
  write_trace_csv(csv, res.trace);
  write_json(out / "results.json", {{"best_step", res.best_step},
                                    {"best_dev_macro_f1", res.best_metric},
                                    {"total_steps", res.total_steps},
                                    {"checkpoint", (out / "best").string()}});
  log::info("pre-training done; best dev macro-F1 " + std::to_string(res.best_metric) + " at step " +
            std::to_string(res.best_step) + ", checkpoint " + (out / "best").string());
  return kOk;
}

inline int cmd_train(const RunConfig& base) {
  RunConfig cfg = base.resolved("train");
  const fs::path out = cfg.get("run.out");
  const auto datasets = resolve_datasets(cfg);
  const auto label_texts = cfg.get("run.labels_file").empty() ? LabelTexts{}
                                                              : load_label_texts(cfg.get("run.labels_file"));
  const TrainConfig tc = cfg.train_config("train");
  const ShotSpec shots = cfg.shots();
  const auto source = resolve_backbone(cfg, datasets, label_texts);
  pin_backbone(cfg, source);
  const std::string model = cfg.get("run.model") + (cfg.get_bool("run.mdl") ? "+mdl" : "");
  cfg.set("run.label", run_label(cfg, model));
  archive(out, "train", cfg, datasets);

  std::vector<std::pair<std::string, std::vector<Dataset>>> groups;
  if (cfg.get_bool("run.mdl")) {
    groups.emplace_back("mdl", datasets);
  } else {
    for (const auto& ds : datasets) groups.emplace_back(ds.name(), std::vector<Dataset>{ds});
  }
  std::map<std::string, MeanStd> per_dataset;
  MeanStd avg;
  json results = json::object();
  for (const auto& [group, members] : groups) {
    auto factory = [&, &members = members](std::uint64_t seed) {
      return make_model(cfg, source.make(seed), tc, members, label_texts, seed);
    };
    const auto res = run_protocol(members, shots, tc, factory, out / group);
    results[group] = to_json(res);
    for (const auto& [k, v] : res.per_dataset) per_dataset[k] = v;
    avg = res.average;
  }
  if (groups.size() > 1) {
    // independent single-dataset runs: average of the per-dataset means
    std::vector<double> means;
    for (const auto& [_, v] : per_dataset) means.push_back(v.mean);
    avg = mean_std(means);
    avg.single_run = false;
  }
  write_json(out / "results.json", results);
  write_json(out / "summary.json",
             summary_json(cfg.get("run.label"), model, shots.k_string(), per_dataset, avg));
  for (const auto& [k, v] : per_dataset) {
    std::cout << k << "\t" << v.mean << "\t" << v.stddev << (v.single_run ? "\t(single run)" : "") << "\n";
  }
  return kOk;
}

inline int cmd_evaluate(const RunConfig& base) {
  RunConfig cfg = base.resolved("evaluate");
  const fs::path out = cfg.get("run.out");
  const auto datasets = resolve_datasets(cfg);
  const std::string baseline = cfg.get("run.baseline");
  EvalReport report;
  std::map<std::string, MeanStd> per_dataset;
  std::string model_name;
  if (!baseline.empty()) {
    model_name = baseline;
    report.model = baseline;
    for (const auto& ds : datasets) {
      F1Result r;
      if (baseline == "majority") {
        r = majority_baseline(ds.splits.train, ds.splits.test, *ds.inventory,
                              parse_prior_source(cfg.get("run.prior")));
      } else if (baseline == "random") {
        r = random_baseline(ds.splits.test, *ds.inventory, cfg.get_uint("run.seed"),
                            cfg.get_uint("run.random_trials"));
      } else if (baseline == "logreg") {
        r = logreg_baseline(ds.splits.train, ds.splits.test, *ds.inventory);
      } else {
        throw ConfigError("unknown baseline '" + baseline +
                          "' (majority, random, logreg; train --model cls for the fine-tuned one)");
      }
      report.add(ds.name(), r);
    }
    report.metadata = {{"baseline", baseline}, {"prior", cfg.get("run.prior")}};
  } else {
    const auto label_texts = cfg.get("run.labels_file").empty() ? LabelTexts{}
                                                                : load_label_texts(cfg.get("run.labels_file"));
    const TrainConfig tc = cfg.train_config("evaluate");
    const auto source = resolve_backbone(cfg, datasets, label_texts);
    pin_backbone(cfg, source);
    const std::uint64_t seed = cfg.get_uint("run.seed");
    auto model = make_model(cfg, source.make(seed), tc, datasets, label_texts, seed);
    model_name = model->name();
    const auto before = model->backbone().weights_hash();
    const auto ev = evaluate(*model, test_sets(datasets));
    if (model->backbone().weights_hash() != before) throw NumericError("evaluation modified the weights");
    report = ev.report;
    report.metadata = {{"backbone", cfg.get("backbone.spec")}};
    for (std::size_t i = 0; i < datasets.size(); ++i) {
      fs::create_directories(out / "predictions");
      write_predictions(out / "predictions" / (datasets[i].name() + ".jsonl"), ev.predictions[i]);
    }
  }
  for (const auto& d : report.datasets) per_dataset[d.dataset] = mean_std({d.macro_f1});
  write_json(out / "report.json", report.to_json());
  {
    std::ofstream csv(out / "report.csv", std::ios::binary);
    report.write_csv(csv);
  }
  cfg.set("run.label", run_label(cfg, model_name));
  archive(out, "evaluate", cfg, datasets);
  const std::string shots = baseline.empty() ? "0" : "all";
  write_json(out / "summary.json", summary_json(run_label(cfg, model_name), model_name, shots, per_dataset,
                                                mean_std({report.average()})));
  std::cout << report.to_json().dump(2) << "\n";
  return kOk;
}

inline std::string format_score(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

/// Rows = run labels; columns = shots (macro-F1 averaged over datasets)
/// or datasets (plus "avg").
inline int cmd_report(const std::vector<std::string>& dirs, const std::string& by, const fs::path& out) {
  if (by != "shots" && by != "datasets") throw ConfigError("--by must be shots or datasets");
  std::vector<json> summaries;
  for (const auto& d : dirs) {
    if (fs::is_regular_file(fs::path(d) / "summary.json")) {
      summaries.push_back(read_json(fs::path(d) / "summary.json"));
      continue;
    }
    if (!fs::is_directory(d)) throw DataError("run directory '" + d + "' does not exist");
    std::vector<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      if (e.path().filename() == "summary.json") found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    for (const auto& p : found) summaries.push_back(read_json(p));
  }
  if (summaries.empty()) throw DataError("no summary.json found under the given run directories");
  std::vector<std::string> rows, cols;
  std::map<std::pair<std::string, std::string>, double> cells;
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& s : summaries) {
    const auto label = s.at("label").get<std::string>();
    add_unique(rows, label);
    if (by == "shots") {
      const auto shots = s.at("shots").get<std::string>();
      add_unique(cols, shots);
      cells[{label, shots}] = s.at("average").at("mean").get<double>();
    } else {
      for (const auto& [ds, v] : s.at("datasets").items()) {
        add_unique(cols, ds);
        cells[{label, ds}] = v.at("mean").get<double>();
      }
      cells[{label, "avg"}] = s.at("average").at("mean").get<double>();
    }
  }
  if (by == "shots") {
    auto key = [](const std::string& s) {
      return s == "all" ? std::numeric_limits<std::size_t>::max() : std::stoull(s);
    };
    std::sort(cols.begin(), cols.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  } else {
    std::sort(cols.begin(), cols.end());
    cols.push_back("avg");
  }
  std::ostringstream csv;
  csv << "model";
  for (const auto& c : cols) csv << ',' << c;
  csv << '\n';
  for (const auto& r : rows) {
    csv << r;
    for (const auto& c : cols) {
      csv << ',';
      auto it = cells.find({r, c});
      if (it != cells.end()) csv << format_score(it->second);
    }
    csv << '\n';
  }
  fs::create_directories(out);
  std::ofstream(out / "report.csv", std::ios::binary) << csv.str();
  std::cout << csv.str();
  return kOk;
}

// ------------------------------------------------------------------- main

inline int run(int argc, char** argv) {
  CLI::App app{"Few-shot prompt-based stance detection"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, verbosity = "info";
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;
  std::set<std::string> bool_flags;
  app.add_option("--log-level", verbosity, "debug, info, warn or off")->capture_default_str();

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI config file");
    sub->add_option("--set", sets, "override: section.key=value (repeatable)");
    auto opt = [&](const char* flag, const char* key, const char* help) {
      sub->add_option_function<std::string>(
          flag, [&, key](const std::string& v) { flag_values[key] = v; }, help);
    };
    opt("--seed", "run.seed", "base seed");
    opt("--out", "run.out", "output directory");
    opt("--backbone", "backbone.spec", "toy or a checkpoint directory");
    sub->add_option_function<std::vector<std::string>>(
        "--dataset", [&](const std::vector<std::string>& v) { flag_values["run.dataset"] = text::join(v, ","); },
        "dataset directory or builtin 'toy' (repeatable)");
    opt("--shots", "run.shots", "k or all");
    opt("--repeats", "run.repeats", "number of repeats");
    sub->add_flag_function("--mdl", [&](std::int64_t) { bool_flags.insert("run.mdl"); },
                           "multi-dataset learning");
    opt("--lambda", "loss.lambda", "label-encoder loss weight");
    opt("--negatives", "loss.negatives_per_label", "negative labels per inventory label");
    opt("--mlm-rate", "loss.mlm_mask_rate", "MLM masking rate");
    opt("--labels-file", "run.labels_file", "TSV dataset/label/surface translated inventories");
    opt("--model", "run.model", "pattern or cls");
    opt("--label", "run.label", "row label in reports");
  };

  auto* gen = app.add_subcommand("generate-data", "build the sentiment-based pre-training corpus");
  auto* shots = app.add_subcommand("sample-shots", "write few-shot subset manifests");
  auto* pre = app.add_subcommand("pretrain", "pre-train on a generated corpus");
  auto* trn = app.add_subcommand("train", "fine-tune, single dataset or MDL");
  auto* evl = app.add_subcommand("evaluate", "score a checkpoint or a baseline");
  auto* rep = app.add_subcommand("report", "aggregate run directories into a CSV table");
  for (auto* s : {gen, shots, pre, trn, evl}) common(s);
  auto gopt = [&](const char* flag, const char* key, const char* help) {
    gen->add_option_function<std::string>(
        flag, [&, key](const std::string& v) { flag_values[key] = v; }, help);
  };
  gopt("--articles", "datagen.articles", "article JSONL dump or builtin 'toy'");
  gopt("--languages", "datagen.languages", "comma-separated language filter");
  gopt("--annotator", "datagen.annotator", "lexicon or http");
  gopt("--annotator-url", "datagen.annotator_url", "sentiment endpoint");
  gen->add_flag_function("--lexicon-fallback", [&](std::int64_t) { bool_flags.insert("datagen.lexicon_fallback"); },
                         "use the lexicon annotator when no endpoint is configured");
  gen->add_flag_function("--include-hindi", [&](std::int64_t) { bool_flags.insert("datagen.include_hindi"); },
                         "keep Hindi articles");
  evl->add_option_function<std::string>(
      "--baseline", [&](const std::string& v) { flag_values["run.baseline"] = v; }, "majority, random or logreg");
  evl->add_option_function<std::string>(
      "--prior", [&](const std::string& v) { flag_values["run.prior"] = v; }, "majority prior: test or train");
  std::vector<std::string> report_dirs;
  std::string report_by = "shots", report_out = ".";
  rep->add_option("dirs", report_dirs, "run directories")->required();
  rep->add_option("--by", report_by, "columns: shots or datasets")->capture_default_str();
  rep->add_option("--out", report_out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (verbosity == "debug") log::threshold() = log::Level::debug;
    else if (verbosity == "info") log::threshold() = log::Level::info;
    else if (verbosity == "warn") log::threshold() = log::Level::warn;
    else if (verbosity == "off") log::threshold() = log::Level::off;
    else throw ConfigError("unknown log level '" + verbosity + "'");

    if (rep->parsed()) return cmd_report(report_dirs, report_by, report_out);

    RunConfig cfg;
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (const auto& s : sets) cfg.set_assignment(s);
    for (const auto& [k, v] : flag_values) cfg.set(k, v);
    for (const auto& k : bool_flags) cfg.set(k, "true");

    if (gen->parsed()) return cmd_generate_data(cfg);
    if (shots->parsed()) return cmd_sample_shots(cfg);
    if (pre->parsed()) return cmd_pretrain(cfg);
    if (trn->parsed()) return cmd_train(cfg);
    if (evl->parsed()) return cmd_evaluate(cfg);
    return kConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace stance::cli
