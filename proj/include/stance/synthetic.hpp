#pragma once

// Seeded fixtures: a separable bilingual 3-class stance task and a small
// article dump whose sentences carry the same sentiment cue words.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stance/data_model.hpp"
#include "stance/random.hpp"
#include "stance/senti_datagen.hpp"

namespace stance::synthetic {

struct Vocab {
  std::vector<std::string> positive, negative, neutral, filler, topics, headings, frames;
};

inline const Vocab& vocab(const std::string& language) {
  static const Vocab en{
      {"excellent", "wonderful", "great", "good", "brilliant"},
      {"terrible", "awful", "bad", "horrible", "poor"},
      {"new", "old", "local", "large", "small"},
      {"the", "city", "river", "people", "year", "school", "team", "music", "was", "is", "and",
       "of", "in", "with", "many", "local", "new", "old", "area", "built", "known", "for"},
      {"the new park", "the tax reform", "electric cars", "remote work", "the city council",
       "nuclear power", "the football club", "public transport"},
      {"History", "Geography", "Culture", "Economy", "Sports"},
      {"in my view it is {}", "people say it is {} for the city", "this is {}",
       "the plan is {} and known"}};
  static const Vocab de{
      {"ausgezeichnet", "wunderbar", "großartig", "gut", "schön"},
      {"schrecklich", "furchtbar", "schlecht", "katastrophe", "gescheitert"},
      {"neue", "alte", "lokale", "große", "kleine"},
      {"die", "stadt", "fluss", "menschen", "jahr", "schule", "verein", "musik", "war", "ist",
       "und", "von", "in", "mit", "viele", "neue", "alte", "gebiet", "gebaut", "bekannt", "für"},
      {"der neue park", "die steuerreform", "elektroautos", "das homeoffice", "der stadtrat",
       "die atomkraft", "der fußballverein", "der nahverkehr"},
      {"Geschichte", "Geographie", "Kultur", "Wirtschaft", "Sport"},
      {"ich finde es {}", "die leute sagen es ist {} für die stadt", "das ist {}",
       "der plan ist {} und bekannt"}};
  if (language == "en") return en;
  if (language == "de") return de;
  throw ConfigError("synthetic fixtures cover en and de only, not '" + language + "'");
}

enum class Polarity { positive, negative, neutral };

/// 4-8 filler words with at most one cue word at a random position, drawn
/// from the first `cues` entries of the polarity's list (0 = all).
inline std::string sentence(const std::string& language, Polarity p, Rng& rng,
                            std::size_t cues = 0) {
  const Vocab& v = vocab(language);
  const std::size_t n = 4 + rng.index(5);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back(v.filler[rng.index(v.filler.size())]);
  if (p != Polarity::neutral) {
    const auto& list = p == Polarity::positive ? v.positive : v.negative;
    const std::size_t m = cues == 0 ? list.size() : std::min(cues, list.size());
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.index(n + 1)), list[rng.index(m)]);
  }
  return text::join(words, " ");
}

/// One of the language's frames with its slot filled by a word of the
/// polarity (neutral: a plain adjective), then 0-2 filler words.
inline std::string stance_context(const std::string& language, Polarity p, Rng& rng,
                                  std::size_t cues = 0) {
  const Vocab& v = vocab(language);
  const auto& list = p == Polarity::positive ? v.positive
                     : p == Polarity::negative ? v.negative
                                               : v.neutral;
  const std::size_t m = cues == 0 ? list.size() : std::min(cues, list.size());
  std::string out = v.frames[rng.index(v.frames.size())];
  out.replace(out.find("{}"), 2, list[rng.index(m)]);
  for (std::size_t i = rng.index(3); i > 0; --i) out += " " + v.filler[rng.index(v.filler.size())];
  return out;
}

struct StanceTaskConfig {
  std::size_t train = 500;
  std::size_t dev = 100;
  std::size_t test = 500;
  std::uint64_t seed = 0;
  std::string name = "toy";
  std::size_t cues_per_polarity = 1;
  std::vector<std::string> languages{"en", "de"};
  std::vector<std::string> labels{"favor", "against", "none"};
};

/// The slot word's polarity decides the label and the target is drawn
/// independently. Classes are close to balanced.
inline Dataset stance_task(const StanceTaskConfig& cfg = {}) {
  if (cfg.labels.size() != 3) throw ConfigError("synthetic stance task needs exactly 3 labels");
  auto inv = std::make_shared<const LabelInventory>(
      cfg.name, cfg.labels, Lexicon{}, cfg.languages.size() == 1 ? cfg.languages[0] : "mul");
  Rng rng(derive_seed(cfg.seed, text::fnv1a("stance:" + cfg.name)));
  auto make = [&](const char* split, std::size_t n) {
    std::vector<StanceExample> out;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& lang = cfg.languages[rng.index(cfg.languages.size())];
      const Vocab& v = vocab(lang);
      const double u = rng.uniform();
      const std::size_t cls = u < 0.35 ? 0 : u < 0.70 ? 1 : 2;
      const Polarity p = cls == 0 ? Polarity::positive : cls == 1 ? Polarity::negative : Polarity::neutral;
      out.push_back({cfg.name + "-" + split + "-" + std::to_string(i),
                     v.topics[rng.index(v.topics.size())], stance_context(lang, p, rng, cfg.cues_per_polarity), cfg.labels[cls],
                     lang, cfg.name});
    }
    return out;
  };
  Dataset ds;
  ds.inventory = inv;
  ds.splits.train = make("train", cfg.train);
  ds.splits.dev = make("dev", cfg.dev);
  ds.splits.test = make("test", cfg.test);
  validate_splits(ds.splits, *inv);
  return ds;
}

struct ArticleConfig {
  std::size_t count = 200;
  std::uint64_t seed = 0;
  std::vector<std::string> languages{"en", "de"};
  double positive_share = 0.2;
  double negative_share = 0.2;
  double abstract_share = 0.9;
};

/// Articles with 2-4 sections (some headed, the occasional heading-only
/// one) and an abstract for most of them.
inline std::vector<datagen::Article> articles(const ArticleConfig& cfg = {}) {
  static const std::vector<std::string> places = {
      "Rome", "Berlin", "Vienna", "Lyon", "Porto", "Turin", "Bremen", "Graz", "Leeds", "Cork", "Bergen",
      "Gdansk", "Split", "Ghent", "Basel", "Malmo"};
  Rng rng(derive_seed(cfg.seed, text::fnv1a("articles")));
  std::vector<datagen::Article> out;
  auto polarity = [&] {
    const double u = rng.uniform();
    return u < cfg.positive_share ? Polarity::positive
           : u < cfg.positive_share + cfg.negative_share ? Polarity::negative
                                                          : Polarity::neutral;
  };
  auto paragraph = [&](const std::string& lang, std::size_t n) {
    std::vector<std::string> s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(sentence(lang, polarity(), rng) + ".");
    return text::join(s, " ");
  };
  for (std::size_t i = 0; i < cfg.count; ++i) {
    datagen::Article a;
    a.language = cfg.languages[i % cfg.languages.size()];
    const Vocab& v = vocab(a.language);
    a.id = a.language + "-" + std::to_string(i);
    a.title = places[rng.index(places.size())] + " " + std::to_string(i);
    if (rng.uniform() < cfg.abstract_share) a.abstract = paragraph(a.language, 1 + rng.index(2));
    const std::size_t sections = 2 + rng.index(3);
    for (std::size_t s = 0; s < sections; ++s) {
      datagen::Section sec;
      if (s > 0 || rng.uniform() < 0.5) sec.heading = v.headings[rng.index(v.headings.size())];
      if (!(sec.heading && rng.uniform() < 0.1)) sec.text = paragraph(a.language, 2 + rng.index(4));
      a.sections.push_back(std::move(sec));
    }
    out.push_back(std::move(a));
  }
  return out;
}

/// Every text a toy tokenizer must cover for the two fixtures.
inline std::vector<std::string> corpus_texts(const Dataset& ds) {
  std::vector<std::string> out;
  for (const auto* part : {&ds.splits.train, &ds.splits.dev, &ds.splits.test}) {
    for (const auto& e : *part) {
      out.push_back(e.target);
      out.push_back(e.context);
    }
  }
  return out;
}

}  // namespace stance::synthetic
