#pragma once

// Core record types, corpus ingestion and split management.
//
// Corpus directory layout:
//   train.jsonl dev.jsonl test.jsonl   one StanceExample object per line
//   inventory.json                     {"labels": [...], "language": "..."}
//   lexicon.tsv (optional)             label <TAB> synonym

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "stance/error.hpp"
#include "stance/random.hpp"
#include "stance/text.hpp"

namespace stance {

using json = nlohmann::json;

struct StanceExample {
  std::string id;
  std::string target;
  std::string context;
  std::string label;
  std::string language;
  std::string dataset;

  bool operator==(const StanceExample&) const = default;
};

using Lexicon = std::map<std::string, std::set<std::string>>;

/// Ordered label set of one task with its synonym lexicon.
class LabelInventory {
 public:
  LabelInventory() = default;

  LabelInventory(std::string dataset, std::vector<std::string> labels, Lexicon synonyms = {},
                 std::string language = {})
      : dataset_(std::move(dataset)), language_(std::move(language)) {
    for (auto& l : labels) labels_.push_back(text::canonical(l));
    if (labels_.size() < 2) {
      throw DataError("inventory '" + dataset_ + "' needs at least 2 labels");
    }
    std::set<std::string> seen;
    for (const auto& l : labels_) {
      if (l.empty()) throw DataError("inventory '" + dataset_ + "' has an empty label");
      if (!seen.insert(l).second) {
        throw DataError("inventory '" + dataset_ + "' repeats label '" + l + "'");
      }
    }
    set_synonyms(std::move(synonyms));
  }

  const std::string& dataset() const { return dataset_; }
  const std::string& language() const { return language_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  const Lexicon& synonyms() const { return synonyms_; }

  bool contains(const std::string& label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
  }

  std::size_t index_of(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) {
      throw DataError("label '" + label + "' is not in inventory '" + dataset_ + "'");
    }
    return static_cast<std::size_t>(it - labels_.begin());
  }

  std::set<std::string> synonyms_of(const std::string& label) const {
    auto it = synonyms_.find(label);
    return it == synonyms_.end() ? std::set<std::string>{} : it->second;
  }

  /// Keeps only entries for labels of this inventory; enforces that no
  /// synonym equals a different gold label.
  void set_synonyms(Lexicon lexicon) {
    synonyms_.clear();
    for (auto& [label, syns] : lexicon) {
      const std::string key = text::canonical(label);
      if (!contains(key)) continue;
      for (const auto& s : syns) {
        const std::string syn = text::canonical(s);
        if (syn.empty() || syn == key) continue;
        if (contains(syn)) {
          throw DataError("synonym '" + syn + "' of '" + key + "' collides with gold label '" +
                          syn + "' in inventory '" + dataset_ + "'");
        }
        synonyms_[key].insert(syn);
      }
    }
  }

  bool operator==(const LabelInventory&) const = default;

 private:
  std::string dataset_;
  std::string language_;
  std::vector<std::string> labels_;
  Lexicon synonyms_;
};

struct DatasetSplits {
  std::vector<StanceExample> train;
  std::vector<StanceExample> dev;
  std::vector<StanceExample> test;

  bool operator==(const DatasetSplits&) const = default;
};

/// A named corpus: inventory plus its splits.
struct Dataset {
  std::shared_ptr<const LabelInventory> inventory;
  DatasetSplits splits;

  const std::string& name() const { return inventory->dataset(); }
};

inline void validate_example(const StanceExample& ex, const LabelInventory& inventory) {
  if (text::trim(ex.target).empty()) throw DataError("example '" + ex.id + "' has empty target");
  if (text::trim(ex.context).empty()) {
    throw DataError("example '" + ex.id + "' has empty context");
  }
  if (!inventory.contains(ex.label)) {
    throw DataError("example '" + ex.id + "': unknown label '" + ex.label +
                    "' for inventory '" + inventory.dataset() + "'");
  }
}

inline void validate_splits(const DatasetSplits& splits, const LabelInventory& inventory) {
  std::unordered_set<std::string> all_ids;
  for (const auto* part : {&splits.train, &splits.dev, &splits.test}) {
    std::unordered_set<std::string> ids;
    for (const auto& ex : *part) {
      validate_example(ex, inventory);
      if (!ids.insert(ex.id).second) throw DataError("duplicate id '" + ex.id + "' in split");
      if (!all_ids.insert(ex.id).second) {
        throw DataError("id '" + ex.id + "' appears in more than one split");
      }
    }
  }
}

inline json to_json(const StanceExample& ex) {
  return json{{"id", ex.id},         {"target", ex.target},     {"context", ex.context},
              {"label", ex.label},   {"language", ex.language}, {"dataset", ex.dataset}};
}

inline StanceExample example_from_json(const json& j) {
  StanceExample ex;
  for (const char* key : {"id", "target", "context", "label", "language", "dataset"}) {
    if (!j.contains(key) || !j[key].is_string()) {
      throw DataError(std::string("missing or non-string field '") + key + "'");
    }
  }
  ex.id = text::canonical(j["id"].get<std::string>());
  ex.target = j["target"].get<std::string>();
  ex.context = j["context"].get<std::string>();
  ex.label = text::canonical(j["label"].get<std::string>());
  ex.language = j["language"].get<std::string>();
  ex.dataset = j["dataset"].get<std::string>();
  return ex;
}

/// Parses a JSONL file; errors name the 1-based line number.
inline std::vector<StanceExample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<StanceExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(example_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": parse error: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<StanceExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

/// Reads a label/synonym TSV. `gold_labels` extends the set of labels a
/// synonym may not collide with (lexicon keys are always included).
inline Lexicon load_lexicon(const std::filesystem::path& path,
                            const std::vector<std::string>& gold_labels = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  Lexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string trimmed = text::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    auto cols = text::split(trimmed, '\t');
    if (cols.size() != 2) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 2 tab-separated columns");
    }
    const std::string label = text::canonical(cols[0]);
    const std::string syn = text::canonical(cols[1]);
    if (label.empty() || syn.empty()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": empty column");
    }
    lex[label].insert(syn);
  }
  std::set<std::string> gold;
  for (const auto& [label, _] : lex) gold.insert(label);
  for (const auto& g : gold_labels) gold.insert(text::canonical(g));
  for (const auto& [label, syns] : lex) {
    for (const auto& s : syns) {
      if (s != label && gold.count(s)) {
        throw DataError("lexicon " + path.string() + ": synonym '" + s + "' of '" + label +
                        "' is itself a gold label");
      }
    }
  }
  return lex;
}

inline LabelInventory load_inventory(const std::filesystem::path& dir) {
  const auto path = dir / "inventory.json";
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!j.contains("labels") || !j["labels"].is_array()) {
    throw DataError(path.string() + ": missing 'labels' array");
  }
  std::string name = j.value("dataset", dir.filename().string());
  if (name.empty()) name = std::filesystem::absolute(dir).parent_path().filename().string();
  auto labels = j["labels"].get<std::vector<std::string>>();
  Lexicon lex;
  if (std::filesystem::exists(dir / "lexicon.tsv")) lex = load_lexicon(dir / "lexicon.tsv", labels);
  return LabelInventory(name, labels, lex, j.value("language", ""));
}

inline void write_inventory(const std::filesystem::path& dir, const LabelInventory& inv) {
  json j{{"dataset", inv.dataset()}, {"labels", inv.labels()}, {"language", inv.language()}};
  std::ofstream out(dir / "inventory.json", std::ios::binary);
  out << j.dump(2) << '\n';
  if (!inv.synonyms().empty()) {
    std::ofstream lex(dir / "lexicon.tsv", std::ios::binary);
    for (const auto& [label, syns] : inv.synonyms()) {
      for (const auto& s : syns) lex << label << '\t' << s << '\n';
    }
  }
}

/// Loads train/dev/test JSONL files and validates them against `inventory`.
/// A missing split file yields an empty split.
inline DatasetSplits load_corpus(const std::filesystem::path& dir,
                                 const LabelInventory& inventory) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  DatasetSplits splits;
  auto read = [&](const char* name, std::vector<StanceExample>& dst) {
    const auto p = dir / name;
    if (std::filesystem::exists(p)) dst = read_jsonl(p);
  };
  read("train.jsonl", splits.train);
  read("dev.jsonl", splits.dev);
  read("test.jsonl", splits.test);
  validate_splits(splits, inventory);
  return splits;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  auto inv = std::make_shared<const LabelInventory>(load_inventory(dir));
  return Dataset{inv, load_corpus(dir, *inv)};
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  write_inventory(dir, *ds.inventory);
  write_jsonl(dir / "train.jsonl", ds.splits.train);
  write_jsonl(dir / "dev.jsonl", ds.splits.dev);
  write_jsonl(dir / "test.jsonl", ds.splits.test);
}

/// Largest-remainder apportionment: floor each share, then hand the
/// leftover items out by descending fractional part, ties in split order.
inline std::vector<std::size_t> split_sizes(std::size_t n, const std::vector<double>& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    total += r;
  }
  std::vector<std::size_t> sizes(ratios.size());
  std::vector<double> frac(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double exact = static_cast<double>(n) * ratios[i] / total;
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % order.size()]];
  return sizes;
}

/// Shuffled train/dev/test partition. With `stratify`, each label is
/// apportioned separately and the per-label parts are concatenated.
inline DatasetSplits make_splits(std::vector<StanceExample> examples,
                                 const std::array<double, 3>& ratios, std::uint64_t seed,
                                 bool stratify = false) {
  if (examples.size() < 3) throw DataError("make_splits needs at least 3 examples");
  Rng rng(seed);
  const std::vector<double> r(ratios.begin(), ratios.end());
  DatasetSplits out;
  auto distribute = [&](std::vector<StanceExample>& items) {
    rng.shuffle(items);
    const auto sizes = split_sizes(items.size(), r);
    auto it = items.begin();
    out.train.insert(out.train.end(), it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    it += static_cast<std::ptrdiff_t>(sizes[0]);
    out.dev.insert(out.dev.end(), it, it + static_cast<std::ptrdiff_t>(sizes[1]));
    it += static_cast<std::ptrdiff_t>(sizes[1]);
    out.test.insert(out.test.end(), it, items.end());
  };
  if (!stratify) {
    distribute(examples);
    return out;
  }
  std::map<std::string, std::vector<StanceExample>> by_label;
  for (auto& ex : examples) by_label[ex.label].push_back(std::move(ex));
  for (auto& [_, group] : by_label) distribute(group);
  return out;
}

/// Label counts over a split, in inventory order.
inline std::vector<std::size_t> label_counts(const std::vector<StanceExample>& examples,
                                             const LabelInventory& inventory) {
  std::vector<std::size_t> counts(inventory.size(), 0);
  for (const auto& ex : examples) ++counts[inventory.index_of(ex.label)];
  return counts;
}

/// Inverse-frequency weights total / (|classes| * count(c)); classes absent
/// from `examples` get weight 1.
inline std::map<std::string, double> class_weights(const std::vector<StanceExample>& examples,
                                                   const LabelInventory& inventory) {
  const auto counts = label_counts(examples, inventory);
  std::size_t present = 0;
  for (auto c : counts) present += c > 0;
  std::map<std::string, double> w;
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    w[inventory.labels()[i]] =
        counts[i] == 0 ? 1.0
                       : static_cast<double>(examples.size()) /
                             (static_cast<double>(present) * static_cast<double>(counts[i]));
  }
  return w;
}

/// Stable content fingerprint of a split (order-sensitive).
inline std::string fingerprint(const std::vector<StanceExample>& examples) {
  std::uint64_t h = text::fnv1a("");
  for (const auto& ex : examples) h = text::fnv1a(to_json(ex).dump(), h);
  return text::hex64(h);
}

/// Labels of every inventory known to the framework: the cross-lingual
/// task inventories and the English stance inventories. This is the
/// default pool for negative label sampling.
inline const std::vector<std::string>& builtin_label_registry() {
  static const std::vector<std::string> labels = {
      "agree",      "disagree",   "other",      "unrelated",  "discuss",    "against",
      "favor",      "none",       "in favor",   "commenting", "denying",    "querying",
      "supporting", "favour",     "neutral",    "comment",    "query",      "support",
      "deny",       "argument for", "argument against", "negative", "positive", "con",
      "for",        "observing",  "pro",        "endorse",    "undermine",  "refute",
      "anti",       "question",   "discussing", "in favour",  "unrelated to"};
  return labels;
}

/// Global label registry: builtin labels plus those of loaded inventories.
class LabelRegistry {
 public:
  LabelRegistry() {
    for (const auto& l : builtin_label_registry()) add(l);
  }

  void add(const std::string& label) {
    const auto c = text::canonical(label);
    if (seen_.insert(c).second) labels_.push_back(c);
  }

  void add(const LabelInventory& inv) {
    for (const auto& l : inv.labels()) add(l);
  }

  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::set<std::string> seen_;
};

}  // namespace stance
