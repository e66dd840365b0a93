#pragma once

// Label embeddings as the element-wise mean of a label's token
// embeddings, and dot-product scoring against the mask representation.

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stance/autodiff.hpp"
#include "stance/backbone.hpp"
#include "stance/error.hpp"

namespace stance {

struct LabelEmbedding {
  std::string label;
  std::vector<TokenId> tokens;
  std::vector<double> vector;
};

/// Labels are tokenised as a sentence-internal word (leading space), so
/// "against" becomes the single piece "▁against".
inline std::vector<TokenId> label_tokens(const Tokenizer& tok, const std::string& label) {
  auto ids = tok.tokenize(" " + label, true);
  if (ids.empty()) throw DataError("label '" + label + "' tokenises to zero tokens");
  return ids;
}

/// Graph form: 1 x d mean of the label's token-embedding rows. With
/// `frozen`, the value is read from the live table but no gradient flows
/// back into it.
inline ad::Var label_embedding_var(ad::Tape& t, Backbone& bb, std::span<const TokenId> tokens,
                                   bool frozen = false) {
  if (tokens.empty()) throw DataError("label with no tokens");
  if (frozen) {
    ad::Tape scratch;
    ad::Matrix v = scratch.value(ad::mean_rows(scratch, bb.token_embeddings(scratch, tokens)));
    return t.constant(std::move(v));
  }
  return ad::mean_rows(t, bb.token_embeddings(t, tokens));
}

inline LabelEmbedding encode_label(const std::string& label, Backbone& bb) {
  if (label.empty()) throw DataError("empty label");
  LabelEmbedding le;
  le.label = label;
  le.tokens = label_tokens(bb.tokenizer(), label);
  ad::Tape t;
  const ad::Matrix& v = t.value(label_embedding_var(t, bb, le.tokens));
  le.vector.assign(v.values().begin(), v.values().end());
  return le;
}

inline std::vector<LabelEmbedding> encode_labels(const std::vector<std::string>& labels,
                                                 Backbone& bb) {
  std::vector<LabelEmbedding> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(encode_label(l, bb));
  return out;
}

/// Dot-product logits in inventory order.
inline std::vector<std::pair<std::string, double>> score_labels(
    std::span<const double> masked_hidden, std::span<const LabelEmbedding> labels) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(labels.size());
  for (const auto& le : labels) {
    if (le.vector.size() != masked_hidden.size()) {
      throw NumericError("score_labels: hidden dim " + std::to_string(masked_hidden.size()) +
                         " vs label embedding dim " + std::to_string(le.vector.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < masked_hidden.size(); ++i) s += masked_hidden[i] * le.vector[i];
    out.emplace_back(le.label, s);
  }
  return out;
}

/// Index of the largest logit; ties go to the lowest index.
inline std::size_t argmax_index(std::span<const double> logits) {
  if (logits.empty()) throw DataError("argmax over empty inventory");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

inline std::string predict(std::span<const double> masked_hidden,
                           std::span<const LabelEmbedding> labels) {
  if (labels.empty()) throw DataError("predict: empty inventory");
  const auto scores = score_labels(masked_hidden, labels);
  std::vector<double> logits;
  for (const auto& [_, s] : scores) logits.push_back(s);
  return scores[argmax_index(logits)].first;
}

inline nlohmann::json to_json(const LabelEmbedding& le) {
  return {{"label", le.label}, {"tokens", le.tokens}, {"vector", le.vector}};
}

}  // namespace stance
