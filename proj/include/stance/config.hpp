#pragma once

// Sectioned key/value run configuration. Every key has a default; file
// values override defaults and command-line overrides win over both.
// "auto" values are resolved from the training presets before a run so
// the archived config is fully explicit.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stance/error.hpp"
#include "stance/fewshot.hpp"
#include "stance/text.hpp"
#include "stance/trainer.hpp"

namespace stance {

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  /// "section.key" -> default value.
  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"run.seed", "0"},
        {"run.out", "runs/out"},
        {"run.dataset", "toy"},
        {"run.data_seed", "0"},
        {"run.shots", "32"},
        {"run.repeats", "3"},
        {"run.mdl", "false"},
        {"run.model", "pattern"},
        {"run.label", "auto"},
        {"run.labels_file", ""},
        {"run.template", ""},
        {"run.baseline", ""},
        {"run.prior", "test"},
        {"run.random_trials", "100"},
        {"backbone.spec", "toy"},
        {"backbone.hidden", "auto"},
        {"backbone.ffn", "64"},
        {"backbone.layers", "2"},
        {"backbone.embedding_std", "0.3"},
        {"backbone.vocab_capacity", "512"},
        {"backbone.vocab_from", ""},
        {"train.mode", "auto"},
        {"train.learning_rate", "auto"},
        {"train.warmup_fraction", "auto"},
        {"train.max_steps", "auto"},
        {"train.epochs", "auto"},
        {"train.batch_size", "auto"},
        {"train.weight_decay", "auto"},
        {"train.beta1", "auto"},
        {"train.beta2", "auto"},
        {"train.epsilon", "auto"},
        {"train.eval_interval", "auto"},
        {"train.max_grad_norm", "auto"},
        {"train.seeds", "auto"},
        {"loss.lambda", "auto"},
        {"loss.mlm_mask_rate", "auto"},
        {"loss.negatives_per_label", "auto"},
        {"loss.positive_sampling", "auto"},
        {"loss.vocab_fallback", "auto"},
        {"loss.freeze_label_embeddings", "auto"},
        {"datagen.articles", "toy"},
        {"datagen.languages", ""},
        {"datagen.articles_per_language", "1000"},
        {"datagen.include_hindi", "false"},
        {"datagen.unrelated_fraction", "0.6"},
        {"datagen.augment_fraction", "0.5"},
        {"datagen.split_ratios", "0.8,0.1,0.1"},
        {"datagen.dataset", "auto"},
        {"datagen.annotator", "http"},
        {"datagen.annotator_url", ""},
        {"datagen.annotator_timeout", "10"},
        {"datagen.annotator_retries", "2"},
        {"datagen.lexicon_fallback", "false"},
        {"datagen.threads", "1"},
    };
    return d;
  }

  static RunConfig load(const std::filesystem::path& path) {
    RunConfig c;
    c.merge_file(path);
    return c;
  }

  void merge_file(const std::filesystem::path& path) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("cannot read config " + path.string() + ": " + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) {
        throw ConfigError(path.string() + ": key '" + section + "' is outside any section");
      }
      for (const auto& [key, value] : body) set(section + "." + key, value.data());
    }
  }

  void set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = text::trim(value);
  }

  /// "section.key=value"
  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected section.key=value, got '" + assignment + "'");
    set(text::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  bool is_auto(const std::string& key) const { return get(key) == "auto"; }

  double get_double(const std::string& key) const { return parse_double(key, get(key)); }

  std::uint64_t get_uint(const std::string& key) const {
    const auto& v = get(key);
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
      throw ConfigError(key + ": integer out of range: '" + v + "'");
    }
  }

  bool get_bool(const std::string& key) const {
    const auto v = text::lower(get(key));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + get(key) + "'");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& p : text::split(get(key), ',')) {
      auto t = text::trim(p);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  ShotSpec shots() const {
    ShotSpec s;
    try {
      s.k = ShotSpec::parse_k(get("run.shots"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("run.shots: ") + e.what());
    }
    s.repeats = get_uint("run.repeats");
    s.seed = get_uint("run.seed");
    if (s.repeats == 0) throw ConfigError("run.repeats must be at least 1");
    return s;
  }

  /// Preset for `command`, then every non-auto key applied on top.
  TrainConfig train_config(const std::string& command) const {
    const bool mdl = get_bool("run.mdl");
    TrainConfig c;
    if (command == "pretrain") {
      c = TrainConfig::pretraining();
    } else if (shots().is_all()) {
      c = TrainConfig::full_resource(mdl);
    } else {
      c = TrainConfig::few_shot(mdl);
    }
    if (!is_auto("train.mode")) c.mode = parse_mode(get("train.mode"));
    auto num = [&](const char* k, double& dst) {
      if (!is_auto(k)) dst = get_double(k);
    };
    auto cnt = [&](const char* k, std::size_t& dst) {
      if (!is_auto(k)) dst = get_uint(k);
    };
    auto flag = [&](const char* k, bool& dst) {
      if (!is_auto(k)) dst = get_bool(k);
    };
    num("train.learning_rate", c.learning_rate);
    num("train.warmup_fraction", c.warmup_fraction);
    cnt("train.max_steps", c.max_steps);
    cnt("train.epochs", c.epochs);
    cnt("train.batch_size", c.batch_size);
    num("train.weight_decay", c.adam.weight_decay);
    num("train.beta1", c.adam.beta1);
    num("train.beta2", c.adam.beta2);
    num("train.epsilon", c.adam.epsilon);
    cnt("train.eval_interval", c.eval_interval);
    num("train.max_grad_norm", c.max_grad_norm);
    if (!is_auto("train.seeds")) {
      c.seeds.clear();
      for (const auto& s : get_list("train.seeds")) {
        if (s.find_first_not_of("0123456789") != std::string::npos) {
          throw ConfigError("train.seeds: '" + s + "' is not an integer");
        }
        c.seeds.push_back(std::stoull(s));
      }
    } else {
      const auto base = get_uint("run.seed");
      c.seeds = {base, base + 1, base + 2};
    }
    num("loss.lambda", c.loss.lambda);
    num("loss.mlm_mask_rate", c.loss.mlm_mask_rate);
    cnt("loss.negatives_per_label", c.loss.negatives_per_label);
    flag("loss.positive_sampling", c.loss.positive_sampling);
    flag("loss.vocab_fallback", c.loss.vocab_fallback);
    flag("loss.freeze_label_embeddings", c.loss.freeze_label_embeddings);
    c.validate();
    return c;
  }

  /// Copy with every training/loss "auto" replaced by its resolved value.
  RunConfig resolved(const std::string& command) const {
    RunConfig r = *this;
    const TrainConfig t = train_config(command);
    auto put = [&](const std::string& k, const std::string& v) {
      if (r.is_auto(k)) r.values_[k] = v;
    };
    auto num = [](double d) {
      std::ostringstream os;
      os.precision(17);
      os << d;
      return os.str();
    };
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    put("train.mode", to_string(t.mode));
    put("train.learning_rate", num(t.learning_rate));
    put("train.warmup_fraction", num(t.warmup_fraction));
    put("train.max_steps", std::to_string(t.max_steps));
    put("train.epochs", std::to_string(t.epochs));
    put("train.batch_size", std::to_string(t.batch_size));
    put("train.weight_decay", num(t.adam.weight_decay));
    put("train.beta1", num(t.adam.beta1));
    put("train.beta2", num(t.adam.beta2));
    put("train.epsilon", num(t.adam.epsilon));
    put("train.eval_interval", std::to_string(t.eval_interval));
    put("train.max_grad_norm", num(t.max_grad_norm));
    std::vector<std::string> seeds;
    for (auto s : t.seeds) seeds.push_back(std::to_string(s));
    put("train.seeds", text::join(seeds, ","));
    put("loss.lambda", num(t.loss.lambda));
    put("loss.mlm_mask_rate", num(t.loss.mlm_mask_rate));
    put("loss.negatives_per_label", std::to_string(t.loss.negatives_per_label));
    put("loss.positive_sampling", b(t.loss.positive_sampling));
    put("loss.vocab_fallback", b(t.loss.vocab_fallback));
    put("loss.freeze_label_embeddings", b(t.loss.freeze_label_embeddings));
    return r;
  }

  void write_ini(std::ostream& out) const {
    std::string section;
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      const std::string s = k.substr(0, dot);
      if (s != section) {
        if (!section.empty()) out << '\n';
        out << '[' << s << "]\n";
        section = s;
      }
      out << k.substr(dot + 1) << " = " << v << '\n';
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    write_ini(out);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      j[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
    return j;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace stance
