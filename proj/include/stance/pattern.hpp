#pragma once

// Cloze prompt construction, truncation, positive/negative label sampling
// and the mixed label-encoder + MLM training loss.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stance/autodiff.hpp"
#include "stance/backbone.hpp"
#include "stance/data_model.hpp"
#include "stance/error.hpp"
#include "stance/label_encoder.hpp"
#include "stance/random.hpp"

namespace stance {

inline constexpr std::size_t kMaxSequenceLength = 150;

enum class SegmentTag { pattern, target, context, special };

struct EncodedPrompt {
  std::vector<TokenId> ids;
  std::size_t mask_position = 0;
  std::vector<SegmentTag> tags;
  std::string example_id;

  std::size_t count(SegmentTag tag) const {
    return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), tag));
  }
};

/// Prompt template with {CONTEXT}, {MASK} and {TARGET} placeholders, each
/// used exactly once. BOS and SEP are added around the realised text.
class PromptTemplate {
 public:
  enum class Slot { literal, context, target, mask };
  struct Part {
    Slot slot;
    std::string text;  // literal text; empty for slots
  };

  static constexpr std::string_view kStandard =
      "The stance of the following {CONTEXT} is {MASK} the {TARGET}.";

  static PromptTemplate standard() { return parse(kStandard); }

  static PromptTemplate parse(std::string_view spec) {
    PromptTemplate t;
    t.source_ = std::string(spec);
    std::size_t pos = 0;
    int seen[3] = {0, 0, 0};
    while (pos < spec.size()) {
      const std::size_t open = spec.find('{', pos);
      if (open == std::string_view::npos) {
        t.parts_.push_back({Slot::literal, std::string(spec.substr(pos))});
        break;
      }
      if (open > pos) t.parts_.push_back({Slot::literal, std::string(spec.substr(pos, open - pos))});
      const std::size_t close = spec.find('}', open);
      if (close == std::string_view::npos) throw ConfigError("template: unterminated placeholder");
      const std::string_view name = spec.substr(open + 1, close - open - 1);
      if (name == "CONTEXT") {
        t.parts_.push_back({Slot::context, {}});
        ++seen[0];
      } else if (name == "TARGET") {
        t.parts_.push_back({Slot::target, {}});
        ++seen[1];
      } else if (name == "MASK") {
        t.parts_.push_back({Slot::mask, {}});
        ++seen[2];
      } else {
        throw ConfigError("template: unknown placeholder {" + std::string(name) + "}");
      }
      pos = close + 1;
    }
    if (seen[0] != 1 || seen[1] != 1 || seen[2] != 1) {
      throw ConfigError("template must contain {CONTEXT}, {TARGET} and {MASK} exactly once");
    }
    return t;
  }

  static PromptTemplate load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open template file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(text::trim(ss.str()));
  }

  const std::vector<Part>& parts() const { return parts_; }
  const std::string& source() const { return source_; }

  /// The realised prompt text with `mask_text` in the mask slot.
  std::string realise(const std::string& context, const std::string& target,
                      const std::string& mask_text) const {
    std::string out;
    for (const auto& p : parts_) {
      switch (p.slot) {
        case Slot::literal: out += p.text; break;
        case Slot::context: out += context; break;
        case Slot::target: out += target; break;
        case Slot::mask: out += mask_text; break;
      }
    }
    return out;
  }

 private:
  std::vector<Part> parts_;
  std::string source_;
};

/// Removes one trailing token at a time from the currently longer
/// sequence (context on ties) until the pair fits `budget`.
inline std::pair<std::vector<TokenId>, std::vector<TokenId>> truncate_pair(
    std::vector<TokenId> target, std::vector<TokenId> context, std::size_t budget) {
  while (target.size() + context.size() > budget) {
    if (context.size() >= target.size()) {
      context.pop_back();
    } else {
      target.pop_back();
    }
  }
  return {std::move(target), std::move(context)};
}

inline EncodedPrompt build_prompt(const StanceExample& ex, const Tokenizer& tok,
                                  const PromptTemplate& tmpl = PromptTemplate::standard(),
                                  std::size_t max_length = kMaxSequenceLength) {
  using Slot = PromptTemplate::Slot;
  const auto& parts = tmpl.parts();
  // Sentence-piece style: a piece starts a word when it follows whitespace
  // or opens the prompt.
  auto starts_word = [&](std::size_t i, const std::string& value) {
    if (i == 0) return true;
    if (!value.empty() && text::is_space(value.front())) return true;
    const auto& prev = parts[i - 1];
    const std::string& pt = prev.slot == Slot::literal ? prev.text : std::string("x");
    return !pt.empty() && text::is_space(pt.back());
  };
  std::vector<std::vector<TokenId>> literal_ids(parts.size());
  std::size_t overhead = 3;  // BOS, SEP, MASK
  std::vector<TokenId> target_ids, context_ids;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    switch (parts[i].slot) {
      case Slot::literal:
        literal_ids[i] = tok.tokenize(parts[i].text, starts_word(i, parts[i].text));
        overhead += literal_ids[i].size();
        break;
      case Slot::context: context_ids = tok.tokenize(ex.context, starts_word(i, ex.context)); break;
      case Slot::target: target_ids = tok.tokenize(ex.target, starts_word(i, ex.target)); break;
      case Slot::mask: break;
    }
  }
  if (overhead + 2 > max_length) {
    throw DataError("prompt pattern alone (" + std::to_string(overhead) +
                    " tokens) leaves no room within max length " + std::to_string(max_length));
  }
  auto [tgt, ctx] = truncate_pair(std::move(target_ids), std::move(context_ids),
                                  max_length - overhead);
  if (tgt.empty() && ctx.empty()) {
    throw DataError("example '" + ex.id + "': target and context are both empty");
  }
  const auto& sp = tok.specials();
  EncodedPrompt out;
  out.example_id = ex.id;
  auto append = [&](std::span<const TokenId> ids, SegmentTag tag) {
    out.ids.insert(out.ids.end(), ids.begin(), ids.end());
    out.tags.insert(out.tags.end(), ids.size(), tag);
  };
  const TokenId bos[] = {sp.bos}, sep[] = {sp.sep}, mask[] = {sp.mask};
  append(bos, SegmentTag::special);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    switch (parts[i].slot) {
      case Slot::literal: append(literal_ids[i], SegmentTag::pattern); break;
      case Slot::context: append(ctx, SegmentTag::context); break;
      case Slot::target: append(tgt, SegmentTag::target); break;
      case Slot::mask:
        out.mask_position = out.ids.size();
        append(mask, SegmentTag::special);
        break;
    }
  }
  append(sep, SegmentTag::special);
  return out;
}

struct LossConfig {
  double lambda = 1.0;
  double mlm_mask_rate = 0.125;
  std::size_t negatives_per_label = 0;
  bool positive_sampling = true;
  bool vocab_fallback = true;  ///< top up negatives with vocabulary words
  bool freeze_label_embeddings = false;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
    if (!(mlm_mask_rate >= 0.0 && mlm_mask_rate < 1.0)) {
      throw ConfigError("mlm_mask_rate must lie in [0,1)");
    }
  }
};

/// Candidate labels for negative sampling.
struct NegativePool {
  std::vector<std::string> labels;
  const Tokenizer* vocabulary = nullptr;  ///< fallback source; may be null

  static NegativePool from_registry(const LabelRegistry& reg, const Tokenizer* vocab = nullptr) {
    return {reg.labels(), vocab};
  }
};

struct LabelSample {
  std::vector<std::string> positives;  ///< gold first
  std::vector<std::string> negatives;
};

inline LabelSample sample_labels(const std::string& gold, const LabelInventory& inventory,
                                 const LossConfig& config, const NegativePool& pool, Rng& rng) {
  if (!inventory.contains(gold)) {
    throw DataError("gold label '" + gold + "' not in inventory '" + inventory.dataset() + "'");
  }
  LabelSample out;
  out.positives.push_back(gold);
  const auto syns = inventory.synonyms_of(gold);
  if (config.positive_sampling) {
    for (const auto& s : syns) out.positives.push_back(s);
  }
  const std::size_t wanted = config.negatives_per_label * inventory.size();
  if (wanted == 0) return out;
  std::set<std::string> excluded(inventory.labels().begin(), inventory.labels().end());
  excluded.insert(syns.begin(), syns.end());
  excluded.insert(out.positives.begin(), out.positives.end());
  std::vector<std::string> candidates;
  for (const auto& l : pool.labels) {
    if (!excluded.count(l)) candidates.push_back(l);
  }
  for (std::size_t i : rng.sample_indices(candidates.size(), wanted)) {
    out.negatives.push_back(candidates[i]);
  }
  if (out.negatives.size() < wanted && config.vocab_fallback && pool.vocabulary) {
    const Tokenizer& tok = *pool.vocabulary;
    const std::string marker(ToyTokenizer::kMarker);
    std::set<std::string> used(out.negatives.begin(), out.negatives.end());
    std::vector<std::string> words;
    for (std::size_t id = 0; id < tok.vocab_size(); ++id) {
      if (tok.is_special(static_cast<TokenId>(id))) continue;
      const std::string p = tok.piece(static_cast<TokenId>(id));
      if (p.rfind(marker, 0) != 0 || p.size() == marker.size()) continue;
      const std::string w = p.substr(marker.size());
      auto segs = text::segment(w);
      if (segs.size() != 1 || segs[0].kind != text::CharClass::word) continue;
      if (excluded.count(w) || used.count(w)) continue;
      words.push_back(w);
    }
    for (std::size_t i : rng.sample_indices(words.size(), wanted - out.negatives.size())) {
      out.negatives.push_back(words[i]);
    }
  }
  return out;
}

struct ScoredLabel {
  std::string text;
  double target;  ///< 1 for positives, 0 for negatives
  double weight;  ///< class weight on positives, 1 on negatives
};

/// Inventory labels first (inventory order), then extra positives, then
/// sampled negatives. Only target-1 entries carry the class weight.
inline std::vector<ScoredLabel> make_scored_labels(const std::string& gold,
                                                   const LabelInventory& inventory,
                                                   const LabelSample& sample,
                                                   const std::map<std::string, double>& weights) {
  auto it = weights.find(gold);
  const double w = it == weights.end() ? 1.0 : it->second;
  std::vector<ScoredLabel> out;
  for (const auto& l : inventory.labels()) {
    out.push_back(l == gold ? ScoredLabel{l, 1.0, w} : ScoredLabel{l, 0.0, 1.0});
  }
  for (const auto& p : sample.positives) {
    if (p != gold) out.push_back({p, 1.0, w});
  }
  for (const auto& n : sample.negatives) out.push_back({n, 0.0, 1.0});
  return out;
}

inline void check_has_positive(std::span<const ScoredLabel> scored) {
  for (const auto& s : scored) {
    if (s.target == 1.0) return;
  }
  throw DataError("label_loss: no positive label");
}

/// sum_pos w * BCE(sigmoid(z), 1) + sum_neg BCE(sigmoid(z), 0)
inline double label_loss(std::span<const double> logits, std::span<const ScoredLabel> scored) {
  if (logits.size() != scored.size()) throw NumericError("label_loss: size mismatch");
  check_has_positive(scored);
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    loss += scored[i].weight * (scored[i].target * ad::softplus(-z) +
                                (1.0 - scored[i].target) * ad::softplus(z));
  }
  return loss;
}

inline ad::Var label_loss_var(ad::Tape& t, ad::Var logits, std::span<const ScoredLabel> scored) {
  check_has_positive(scored);
  std::vector<double> targets, weights;
  for (const auto& s : scored) {
    targets.push_back(s.target);
    weights.push_back(s.weight);
  }
  return ad::bce_with_logits(t, logits, targets, weights);
}

/// Stacked label embeddings (L x d) for a list of label strings.
inline ad::Var label_matrix(ad::Tape& t, Backbone& bb, const std::vector<std::string>& labels,
                            bool frozen) {
  std::vector<ad::Var> rows;
  rows.reserve(labels.size());
  for (const auto& l : labels) {
    rows.push_back(label_embedding_var(t, bb, label_tokens(bb.tokenizer(), l), frozen));
  }
  return ad::concat_rows(t, rows);
}

/// 1 x L logits: mask-position hidden state against each label embedding.
inline ad::Var label_logits_var(ad::Tape& t, Backbone& bb, const EncodedPrompt& prompt,
                                const std::vector<std::string>& labels, bool frozen = false) {
  EncoderGraph g = bb.forward(t, prompt.ids);
  ad::Var h = ad::take_row(t, g.hidden, prompt.mask_position);
  return ad::matmul_nt(t, h, label_matrix(t, bb, labels, frozen));
}

struct MlmMasking {
  std::vector<TokenId> ids;
  std::vector<std::size_t> positions;
  std::vector<TokenId> originals;
};

/// Masks ceil(rate * eligible) target/context tokens chosen uniformly.
inline MlmMasking mask_for_mlm(const EncodedPrompt& prompt, double rate, TokenId mask_id,
                               Rng& rng) {
  MlmMasking m;
  m.ids = prompt.ids;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < prompt.ids.size(); ++i) {
    if (prompt.tags[i] == SegmentTag::target || prompt.tags[i] == SegmentTag::context) {
      eligible.push_back(i);
    }
  }
  if (rate <= 0.0 || eligible.empty()) return m;
  const auto count = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(eligible.size()) - 1e-9));
  for (std::size_t k : rng.sample_indices(eligible.size(), count)) m.positions.push_back(eligible[k]);
  std::sort(m.positions.begin(), m.positions.end());
  for (std::size_t p : m.positions) {
    m.originals.push_back(m.ids[p]);
    m.ids[p] = mask_id;
  }
  return m;
}

/// Mean MLM cross-entropy at the masked positions; a constant 0 when
/// nothing was masked.
inline ad::Var mlm_loss_var(ad::Tape& t, Backbone& bb, const EncodedPrompt& prompt, double rate,
                            Rng& rng) {
  MlmMasking m = mask_for_mlm(prompt, rate, bb.tokenizer().specials().mask, rng);
  if (m.positions.empty()) return t.scalar(0.0);
  EncoderGraph g = bb.forward(t, m.ids);
  ad::Var rows = ad::take_rows(t, g.hidden, m.positions);
  return ad::cross_entropy_rows(t, bb.mlm_head(t, rows), m.originals);
}

inline double mlm_loss(const EncodedPrompt& prompt, Backbone& bb, double rate, Rng& rng) {
  ad::Tape t;
  return t.scalar_value(mlm_loss_var(t, bb, prompt, rate, rng));
}

/// Everything the loss needs besides the example itself.
struct LossContext {
  const LabelInventory* inventory = nullptr;
  const NegativePool* pool = nullptr;
  const std::map<std::string, double>* class_weights = nullptr;
  LossConfig config;
};

/// lambda * L_LE + (1 - lambda) * L_MLM. A term whose weight is zero is not
/// evaluated and consumes no randomness.
inline ad::Var total_loss_var(ad::Tape& t, Backbone& bb, const StanceExample& ex,
                              const EncodedPrompt& prompt, const LossContext& ctx, Rng& rng) {
  ctx.config.validate();
  static const NegativePool kEmptyPool;
  static const std::map<std::string, double> kNoWeights;
  const NegativePool& pool = ctx.pool ? *ctx.pool : kEmptyPool;
  const auto& weights = ctx.class_weights ? *ctx.class_weights : kNoWeights;
  const double lambda = ctx.config.lambda;
  ad::Var le{}, mlm{};
  if (lambda > 0.0) {
    const LabelSample sample = sample_labels(ex.label, *ctx.inventory, ctx.config, pool, rng);
    const auto scored = make_scored_labels(ex.label, *ctx.inventory, sample, weights);
    std::vector<std::string> texts;
    for (const auto& s : scored) texts.push_back(s.text);
    le = label_loss_var(t, label_logits_var(t, bb, prompt, texts,
                                            ctx.config.freeze_label_embeddings),
                        scored);
    if (lambda == 1.0) return le;
  }
  mlm = mlm_loss_var(t, bb, prompt, ctx.config.mlm_mask_rate, rng);
  if (lambda == 0.0) return mlm;
  return ad::mix(t, le, lambda, mlm, 1.0 - lambda);
}

inline double total_loss(Backbone& bb, const StanceExample& ex, const LossContext& ctx, Rng& rng,
                         const PromptTemplate& tmpl = PromptTemplate::standard()) {
  ad::Tape t;
  const EncodedPrompt prompt = build_prompt(ex, bb.tokenizer(), tmpl);
  return t.scalar_value(total_loss_var(t, bb, ex, prompt, ctx, rng));
}

/// Logits over inventory labels at the mask position, using precomputed
/// label embeddings.
inline std::vector<double> inventory_logits(Backbone& bb, const EncodedPrompt& prompt,
                                            std::span<const LabelEmbedding> labels) {
  const BackboneOutput out = bb.encode(prompt.ids, false);
  const auto scores = score_labels(out.hidden.row(prompt.mask_position), labels);
  std::vector<double> logits;
  for (const auto& [_, s] : scores) logits.push_back(s);
  return logits;
}

}  // namespace stance
