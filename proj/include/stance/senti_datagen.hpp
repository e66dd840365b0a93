#pragma once

// Weakly supervised stance corpus from encyclopedic articles: sentence
// split, sentiment annotation, relabelling, target attachment, unrelated
// pair injection, abstract augmentation and article-disjoint splits.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "stance/data_model.hpp"
#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/random.hpp"
#include "stance/text.hpp"

namespace stance::datagen {

struct Section {
  std::optional<std::string> heading;
  std::string text;
};

struct Article {
  std::string id;
  std::string language;
  std::string title;
  std::string abstract;
  std::vector<Section> sections;
};

inline Article article_from_json(const nlohmann::json& j) {
  Article a;
  if (!j.contains("id") || !j["id"].is_string()) throw DataError("article without string id");
  a.id = j["id"].get<std::string>();
  a.language = j.value("language", "");
  a.title = j.value("title", "");
  a.abstract = j.value("abstract", "");
  for (const auto& s : j.value("sections", nlohmann::json::array())) {
    Section sec;
    if (s.contains("heading") && s["heading"].is_string() &&
        !text::trim(s["heading"].get<std::string>()).empty()) {
      sec.heading = s["heading"].get<std::string>();
    }
    sec.text = s.value("text", "");
    a.sections.push_back(std::move(sec));
  }
  return a;
}

inline nlohmann::json to_json(const Article& a) {
  nlohmann::json secs = nlohmann::json::array();
  for (const auto& s : a.sections) {
    nlohmann::json js{{"text", s.text}};
    js["heading"] = s.heading ? nlohmann::json(*s.heading) : nlohmann::json(nullptr);
    secs.push_back(js);
  }
  return {{"id", a.id}, {"language", a.language}, {"title", a.title},
          {"abstract", a.abstract}, {"sections", secs}};
}

inline std::vector<Article> read_articles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Article> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(article_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
    if (!ids.insert(out.back().id).second) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": duplicate article id '" +
                      out.back().id + "'");
    }
  }
  return out;
}

inline void write_articles(const std::filesystem::path& path, const std::vector<Article>& articles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& a : articles) out << to_json(a).dump() << '\n';
}

// ------------------------------------------------------- sentence splitting

using SentenceSplitter = std::function<std::vector<std::string>(std::string_view)>;

/// Breaks after '.', '!' or '?' (runs of them included) when followed by
/// whitespace or the end of text.
inline std::vector<std::string> rule_based_split(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    std::string piece = text::trim(s.substr(start, end - start));
    if (!piece.empty()) out.push_back(std::move(piece));
    start = end;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t j = i + 1;
    while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?')) ++j;
    if (j == s.size() || text::is_space(s[j])) {
      flush(j);
      i = j - 1;
    }
  }
  flush(s.size());
  return out;
}

class SplitterRegistry {
 public:
  /// Rule-based splitter for the languages the default pipeline handles.
  static SplitterRegistry with_defaults() {
    SplitterRegistry r;
    for (const char* lang : {"ar", "bg", "ca", "cs", "da", "de", "el", "en", "es", "et", "eu",
                             "fa", "fi", "fr", "gl", "he", "hi", "hr", "hu", "id", "it", "lt",
                             "lv", "nl", "no", "pl", "pt", "ro", "ru", "sk", "sl", "sr", "sv",
                             "tr", "uk", "vi"}) {
      r.add(lang, rule_based_split);
    }
    return r;
  }

  void add(const std::string& language, SentenceSplitter s) { splitters_[language] = std::move(s); }
  bool has(const std::string& language) const { return splitters_.count(language) > 0; }

  const SentenceSplitter& at(const std::string& language) const {
    auto it = splitters_.find(language);
    if (it == splitters_.end()) {
      throw ConfigError("no sentence splitter registered for language '" + language + "'");
    }
    return it->second;
  }

 private:
  std::map<std::string, SentenceSplitter> splitters_;
};

/// A context sentence with the section it came from (nullopt = lead).
struct ArticleSentence {
  std::optional<std::string> heading;
  std::string text;
};

/// Sentences of the lead (abstract) and every section body. Headings are
/// never emitted as sentences.
inline std::vector<ArticleSentence> split_sentences(const Article& article,
                                                    const SplitterRegistry& splitters) {
  const auto& split = splitters.at(article.language);
  std::vector<ArticleSentence> out;
  for (auto& s : split(article.abstract)) out.push_back({std::nullopt, std::move(s)});
  for (const auto& sec : article.sections) {
    for (auto& s : split(sec.text)) out.push_back({sec.heading, std::move(s)});
  }
  return out;
}

inline std::optional<std::string> abstract_first_sentence(const Article& article,
                                                          const SplitterRegistry& splitters) {
  auto s = splitters.at(article.language)(article.abstract);
  if (s.empty()) return std::nullopt;
  return s.front();
}

// --------------------------------------------------------------- sentiment

enum class Sentiment { positive, negative, neutral };

inline std::string to_string(Sentiment s) {
  switch (s) {
    case Sentiment::positive: return "positive";
    case Sentiment::negative: return "negative";
    case Sentiment::neutral: return "neutral";
  }
  return "?";
}

inline Sentiment parse_sentiment(const std::string& s) {
  if (s == "positive") return Sentiment::positive;
  if (s == "negative") return Sentiment::negative;
  if (s == "neutral") return Sentiment::neutral;
  throw DataError("unknown sentiment label '" + s + "'");
}

struct SentimentResult {
  Sentiment label = Sentiment::neutral;
  double score = 0.0;
};

class SentimentAnnotator {
 public:
  virtual ~SentimentAnnotator() = default;
  virtual std::string name() const = 0;
  /// nullopt when the text could not be annotated (the caller skips it).
  virtual std::optional<SentimentResult> annotate(const std::string& text,
                                                  const std::string& language) const = 0;
};

/// Counts cue words; more positive than negative cues is positive, the
/// reverse negative, anything else neutral.
class LexiconAnnotator final : public SentimentAnnotator {
 public:
  LexiconAnnotator() : LexiconAnnotator(default_positive(), default_negative()) {}
  LexiconAnnotator(std::set<std::string> positive, std::set<std::string> negative)
      : positive_(std::move(positive)), negative_(std::move(negative)) {}

  std::string name() const override { return "lexicon"; }

  std::optional<SentimentResult> annotate(const std::string& s,
                                          const std::string&) const override {
    int pos = 0, neg = 0, total = 0;
    for (const auto& w : text::words(text::lower(s))) {
      ++total;
      pos += positive_.count(w) ? 1 : 0;
      neg += negative_.count(w) ? 1 : 0;
    }
    SentimentResult r;
    if (pos > neg) {
      r.label = Sentiment::positive;
    } else if (neg > pos) {
      r.label = Sentiment::negative;
    }
    r.score = total ? static_cast<double>(std::abs(pos - neg)) / total : 0.0;
    if (r.label == Sentiment::neutral) r.score = 1.0 - r.score;
    return r;
  }

  static std::set<std::string> default_positive() {
    return {"excellent", "wonderful", "great",     "good",     "beautiful", "brilliant",
            "success",   "successful", "admired",  "praised",  "celebrated", "love",
            "happy",     "best",      "amazing",   "gut",      "wunderbar", "ausgezeichnet",
            "erfolgreich", "schön",   "beste",     "großartig", "bon"};
  }
  static std::set<std::string> default_negative() {
    return {"terrible", "awful",     "bad",        "horrible", "failure",  "failed",
            "disaster", "hated",     "criticised", "worst",    "sad",      "poor",
            "tragic",   "schlecht",  "schrecklich", "furchtbar", "katastrophe",
            "gescheitert", "schlimmste", "mauvais"};
  }

 private:
  std::set<std::string> positive_, negative_;
};

struct HttpAnnotatorConfig {
  std::string url = "http://127.0.0.1:8080/annotate";
  double timeout_seconds = 10.0;
  int retries = 2;  ///< extra attempts after the first
};

/// Posts {"text","language"} and reads {"label","score"}.
class HttpAnnotator final : public SentimentAnnotator {
 public:
  explicit HttpAnnotator(HttpAnnotatorConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme = cfg_.url.find("://");
    if (scheme == std::string::npos) throw ConfigError("annotator url needs a scheme: " + cfg_.url);
    const auto path_at = cfg_.url.find('/', scheme + 3);
    host_ = cfg_.url.substr(0, path_at);
    path_ = path_at == std::string::npos ? "/" : cfg_.url.substr(path_at);
    if (cfg_.url.compare(0, scheme, "http") != 0) {
      throw ConfigError("only http annotator endpoints are supported: " + cfg_.url);
    }
  }

  std::string name() const override { return "http:" + cfg_.url; }

  std::optional<SentimentResult> annotate(const std::string& s,
                                          const std::string& language) const override {
    httplib::Client cli(host_);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - secs) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    const std::string body = nlohmann::json{{"text", s}, {"language", language}}.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
      auto res = cli.Post(path_, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status != 200) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      try {
        const auto j = nlohmann::json::parse(res->body);
        return SentimentResult{parse_sentiment(j.at("label").get<std::string>()),
                               j.value("score", 0.0)};
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    log::warn("annotator gave up after " + std::to_string(cfg_.retries + 1) +
              " attempts (" + last_error + "); skipping sentence");
    return std::nullopt;
  }

 private:
  HttpAnnotatorConfig cfg_;
  std::string host_, path_;
};

// ------------------------------------------------------------------ labels

inline const std::vector<std::string>& stance_labels() {
  static const std::vector<std::string> l = {"favor", "against", "discuss", "unrelated"};
  return l;
}

/// Published class shares, in stance_labels() order.
inline const std::map<std::string, double>& target_distribution() {
  static const std::map<std::string, double> d = {
      {"unrelated", 0.60}, {"discuss", 0.23}, {"against", 0.10}, {"favor", 0.07}};
  return d;
}

inline std::string map_label(Sentiment s) {
  switch (s) {
    case Sentiment::positive: return "favor";
    case Sentiment::negative: return "against";
    case Sentiment::neutral: return "discuss";
  }
  throw DataError("unknown sentiment");
}

inline std::string map_label(const std::string& sentiment) { return map_label(parse_sentiment(sentiment)); }

struct SyntheticStanceRecord {
  std::string target;
  std::string context;
  std::string label;
  std::string source_article;
  std::string target_article;
  std::string language;
  bool augmented = false;
};

inline nlohmann::json to_json(const SyntheticStanceRecord& r) {
  return {{"target", r.target},
          {"context", r.context},
          {"label", r.label},
          {"source_article", r.source_article},
          {"target_article", r.target_article},
          {"language", r.language},
          {"augmented", r.augmented}};
}

/// Title, or title + " " + subheading.
inline std::string attach_target(const Article& article, const std::optional<std::string>& heading) {
  const std::string title = text::trim(article.title);
  if (title.empty()) throw DataError("article '" + article.id + "' has an empty title");
  if (!heading || text::trim(*heading).empty()) return title;
  return title + " " + text::trim(*heading);
}

// ------------------------------------------------------------------ stages

/// Adds unrelated records until they make up `fraction` of the result:
/// u = round(f·n / (1−f)). Each pairs an existing context with the target
/// of an existing record from a different article.
inline std::vector<SyntheticStanceRecord> inject_unrelated(std::vector<SyntheticStanceRecord> records,
                                                           double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ConfigError("unrelated fraction must lie in [0,1), got " + std::to_string(fraction));
  }
  if (fraction == 0.0) return records;
  std::set<std::string> articles;
  for (const auto& r : records) articles.insert(r.source_article);
  if (articles.size() < 2) throw DataError("unrelated injection needs at least 2 articles");
  const std::size_t n = records.size();
  const auto u = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n) / (1.0 - fraction)));
  records.reserve(n + u);
  for (std::size_t k = 0; k < u; ++k) {
    const auto& ctx = records[rng.index(n)];
    std::size_t j = rng.index(n);
    while (records[j].source_article == ctx.source_article) j = rng.index(n);
    SyntheticStanceRecord r;
    r.context = ctx.context;
    r.source_article = ctx.source_article;
    r.language = ctx.language;
    r.target = records[j].target;
    r.target_article = records[j].source_article;
    r.label = "unrelated";
    records.push_back(std::move(r));
  }
  return records;
}

/// Downsamples toward `target` shares over the present classes:
/// N = min_i c_i/t_i, keep floor(N·t_i) of class i (uniform choice,
/// original order preserved). Absent classes are logged and ignored.
inline std::vector<SyntheticStanceRecord> rebalance(const std::vector<SyntheticStanceRecord>& records,
                                                    const std::map<std::string, double>& target,
                                                    Rng& rng) {
  if (records.empty()) return {};
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) by_label[records[i].label].push_back(i);
  double scale = std::numeric_limits<double>::infinity();
  for (const auto& [label, share] : target) {
    auto it = by_label.find(label);
    if (it == by_label.end()) {
      if (share > 0.0) log::warn("rebalance: class '" + label + "' absent; shares will deviate");
      continue;
    }
    if (share > 0.0) scale = std::min(scale, static_cast<double>(it->second.size()) / share);
  }
  std::vector<char> keep(records.size(), 0);
  for (const auto& [label, idx] : by_label) {
    auto t = target.find(label);
    if (t == target.end() || !(t->second > 0.0)) continue;
    const auto want = std::min(idx.size(), static_cast<std::size_t>(std::floor(scale * t->second + 1e-9)));
    for (std::size_t s : rng.sample_indices(idx.size(), want)) keep[idx[s]] = 1;
  }
  std::vector<SyntheticStanceRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

/// Appends copies of floor(fraction·n) uniformly chosen records whose
/// target article has an abstract, with the target replaced by the
/// abstract's first sentence.
inline std::vector<SyntheticStanceRecord> augment_with_abstract(
    std::vector<SyntheticStanceRecord> records,
    const std::map<std::string, std::string>& abstract_sentences, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("augment fraction must lie in [0,1]");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].augmented && abstract_sentences.count(records[i].target_article)) {
      eligible.push_back(i);
    }
  }
  const auto want = std::min(
      eligible.size(), static_cast<std::size_t>(std::floor(fraction * static_cast<double>(records.size()))));
  auto chosen = rng.sample_indices(eligible.size(), want);
  std::sort(chosen.begin(), chosen.end());
  const std::size_t n = records.size();
  records.reserve(n + want);
  for (std::size_t c : chosen) {
    SyntheticStanceRecord copy = records[eligible[c]];
    copy.target = abstract_sentences.at(copy.target_article);
    copy.augmented = true;
    records.push_back(std::move(copy));
  }
  return records;
}

struct RecordSplits {
  std::vector<SyntheticStanceRecord> train, dev, test;
};

/// Assigns whole source articles to splits: articles in seeded random
/// order, largest first, each to the split furthest below its target
/// record count (ties: train, dev, test).
inline RecordSplits emit_splits(const std::vector<SyntheticStanceRecord>& records,
                                const std::array<double, 3>& ratios, Rng& rng) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].source_article].push_back(i);
  if (groups.size() < 3) throw DataError("need at least 3 source articles to split, got " +
                                         std::to_string(groups.size()));
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (!(ratios[0] >= 0 && ratios[1] >= 0 && ratios[2] >= 0 && sum > 0)) {
    throw ConfigError("split ratios must be non-negative with a positive sum");
  }
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [_, idx] : groups) order.push_back(&idx);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->size() > b->size(); });
  std::array<double, 3> want;
  for (int s = 0; s < 3; ++s) want[s] = ratios[s] / sum * static_cast<double>(records.size());
  std::array<double, 3> have{0, 0, 0};
  std::vector<int> split_of(records.size(), 0);
  for (const auto* g : order) {
    int best = 0;
    for (int s = 1; s < 3; ++s) {
      if (want[s] - have[s] > want[best] - have[best]) best = s;
    }
    have[best] += static_cast<double>(g->size());
    for (std::size_t i : *g) split_of[i] = best;
  }
  RecordSplits out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    (split_of[i] == 0 ? out.train : split_of[i] == 1 ? out.dev : out.test).push_back(records[i]);
  }
  return out;
}

// ---------------------------------------------------------------- pipeline

struct DatagenConfig {
  std::vector<std::string> languages;  ///< empty: every language present
  std::size_t articles_per_language = 1000;
  bool include_hindi = false;
  double unrelated_fraction = 0.60;
  double augment_fraction = 0.5;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::optional<std::string> dataset_name;  ///< default mwiki, or enwiki for English only

  nlohmann::json to_json() const {
    return {{"languages", languages},
            {"articles_per_language", articles_per_language},
            {"include_hindi", include_hindi},
            {"unrelated_fraction", unrelated_fraction},
            {"augment_fraction", augment_fraction},
            {"split_ratios", split_ratios},
            {"seed", seed},
            {"threads", threads},
            {"dataset", dataset_name ? nlohmann::json(*dataset_name) : nlohmann::json(nullptr)}};
  }
};

struct DatagenResult {
  Dataset dataset;
  std::vector<SyntheticStanceRecord> train, dev, test;  ///< provenance, aligned with splits
  nlohmann::json manifest;
};

inline std::map<std::string, double> label_shares(const std::vector<SyntheticStanceRecord>& rs) {
  std::map<std::string, double> out;
  for (const auto& l : stance_labels()) out[l] = 0.0;
  for (const auto& r : rs) out[r.label] += 1.0;
  if (!rs.empty()) {
    for (auto& [_, v] : out) v /= static_cast<double>(rs.size());
  }
  return out;
}

namespace detail {

using Annotated = std::vector<std::pair<ArticleSentence, std::optional<SentimentResult>>>;

inline std::vector<Annotated> annotate_articles(const std::vector<const Article*>& articles,
                                                const SplitterRegistry& splitters,
                                                const SentimentAnnotator& annotator,
                                                std::size_t threads) {
  std::vector<Annotated> out(articles.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < articles.size(); i += step) {
      for (auto& s : split_sentences(*articles[i], splitters)) {
        auto res = annotator.annotate(s.text, articles[i]->language);
        out[i].emplace_back(std::move(s), res);
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, articles.size()));
  if (threads == 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::future<void>> fs;
  for (std::size_t t = 0; t < threads; ++t) fs.push_back(std::async(std::launch::async, work, t, threads));
  for (auto& f : fs) f.get();
  return out;
}

}  // namespace detail

inline DatagenResult generate(const std::vector<Article>& all_articles,
                              const SentimentAnnotator& annotator, const DatagenConfig& cfg,
                              const SplitterRegistry& splitters = SplitterRegistry::with_defaults()) {
  // Language filter and per-language quota.
  std::map<std::string, std::vector<const Article*>> by_lang;
  const std::set<std::string> wanted(cfg.languages.begin(), cfg.languages.end());
  for (const auto& a : all_articles) {
    if (!wanted.empty() && !wanted.count(a.language)) continue;
    if (a.language == "hi" && !cfg.include_hindi) continue;
    by_lang[a.language].push_back(&a);
  }
  if (by_lang.empty()) throw DataError("no articles left after language filtering");
  std::vector<const Article*> articles;
  nlohmann::json per_language = nlohmann::json::object();
  for (auto& [lang, list] : by_lang) {
    Rng rng(derive_seed(cfg.seed, text::fnv1a("quota:" + lang)));
    std::vector<const Article*> picked;
    for (std::size_t i : rng.sample_indices(list.size(), std::min(list.size(), cfg.articles_per_language))) {
      picked.push_back(list[i]);
    }
    std::sort(picked.begin(), picked.end(), [](auto* a, auto* b) { return a->id < b->id; });
    per_language[lang] = {{"available", list.size()}, {"sampled", picked.size()}};
    articles.insert(articles.end(), picked.begin(), picked.end());
  }

  const auto annotated = detail::annotate_articles(articles, splitters, annotator, cfg.threads);
  std::vector<SyntheticStanceRecord> related;
  std::map<std::string, std::string> abstracts;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const Article& a = *articles[i];
    if (auto first = abstract_first_sentence(a, splitters)) abstracts[a.id] = *first;
    for (const auto& [sent, res] : annotated[i]) {
      if (!res) {
        ++skipped;
        continue;
      }
      SyntheticStanceRecord r;
      r.target = attach_target(a, sent.heading);
      r.context = sent.text;
      r.label = map_label(res->label);
      r.source_article = a.id;
      r.target_article = a.id;
      r.language = a.language;
      related.push_back(std::move(r));
    }
  }
  const auto raw_shares = label_shares(related);

  std::map<std::string, double> related_target;
  const auto& dist = target_distribution();
  const double related_mass = 1.0 - dist.at("unrelated");
  for (const auto& [l, v] : dist) {
    if (l != "unrelated") related_target[l] = v / related_mass;
  }
  Rng rebalance_rng(derive_seed(cfg.seed, 1));
  Rng inject_rng(derive_seed(cfg.seed, 2));
  Rng augment_rng(derive_seed(cfg.seed, 3));
  Rng split_rng(derive_seed(cfg.seed, 4));
  auto records = rebalance(related, related_target, rebalance_rng);
  const std::size_t rebalanced = records.size();
  records = inject_unrelated(std::move(records), cfg.unrelated_fraction, inject_rng);
  records = augment_with_abstract(std::move(records), abstracts, cfg.augment_fraction, augment_rng);
  auto parts = emit_splits(records, cfg.split_ratios, split_rng);

  std::set<std::string> langs;
  for (const auto* a : articles) langs.insert(a->language);
  const std::string name =
      cfg.dataset_name ? *cfg.dataset_name
                       : (langs.size() == 1 && *langs.begin() == "en" ? "enwiki" : "mwiki");
  const std::string inv_lang = langs.size() == 1 ? *langs.begin() : "mul";
  auto inventory = std::make_shared<const LabelInventory>(name, stance_labels(), Lexicon{}, inv_lang);

  DatagenResult result;
  result.dataset.inventory = inventory;
  std::size_t counter = 0;
  std::map<std::string, std::map<std::string, std::size_t>> per_language_records;
  auto convert = [&](const std::vector<SyntheticStanceRecord>& rs, std::vector<StanceExample>& dst) {
    for (const auto& r : rs) {
      StanceExample ex{name + "-" + std::to_string(counter++), r.target, r.context, r.label,
                       r.language, name};
      validate_example(ex, *inventory);
      dst.push_back(std::move(ex));
      ++per_language_records[r.language][r.label];
    }
  };
  convert(parts.train, result.dataset.splits.train);
  convert(parts.dev, result.dataset.splits.dev);
  convert(parts.test, result.dataset.splits.test);
  result.train = std::move(parts.train);
  result.dev = std::move(parts.dev);
  result.test = std::move(parts.test);

  nlohmann::json split_sizes{{"train", result.train.size()},
                             {"dev", result.dev.size()},
                             {"test", result.test.size()}};
  result.manifest = {{"dataset", name},
                     {"annotator", annotator.name()},
                     {"config", cfg.to_json()},
                     {"articles_per_language", per_language},
                     {"records_per_language", per_language_records},
                     {"related_records_raw", related.size()},
                     {"related_records_rebalanced", rebalanced},
                     {"skipped_sentences", skipped},
                     {"raw_shares", raw_shares},
                     {"final_shares", label_shares(records)},
                     {"target_shares", dist},
                     {"records", records.size()},
                     {"splits", split_sizes}};
  return result;
}

/// Corpus files plus manifest.json and provenance.jsonl (one line per
/// example, in split order).
inline void write_result(const std::filesystem::path& dir, const DatagenResult& r) {
  write_dataset(dir, r.dataset);
  std::ofstream(dir / "manifest.json", std::ios::binary) << r.manifest.dump(2) << '\n';
  std::ofstream prov(dir / "provenance.jsonl", std::ios::binary);
  auto dump = [&](const char* split, const std::vector<StanceExample>& exs,
                  const std::vector<SyntheticStanceRecord>& recs) {
    for (std::size_t i = 0; i < exs.size(); ++i) {
      prov << nlohmann::json{{"id", exs[i].id},
                             {"split", split},
                             {"source_article", recs[i].source_article},
                             {"target_article", recs[i].target_article},
                             {"augmented", recs[i].augmented}}
                  .dump()
           << '\n';
    }
  };
  dump("train", r.dataset.splits.train, r.train);
  dump("dev", r.dataset.splits.dev, r.dev);
  dump("test", r.dataset.splits.test, r.test);
}

}  // namespace stance::datagen
