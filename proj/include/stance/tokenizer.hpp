#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stance/error.hpp"
#include "stance/text.hpp"

namespace stance {

using TokenId = int;

struct SpecialTokens {
  TokenId pad = 0;
  TokenId bos = 1;
  TokenId sep = 2;
  TokenId mask = 3;
  TokenId unk = 4;
};

/// Tokenizer contract used by the pattern engine and the label encoder.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  /// `start_of_word`: whether the text begins a new word (sentence-piece
  /// style leading-space marker on the first piece).
  virtual std::vector<TokenId> tokenize(std::string_view text, bool start_of_word) const = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) const = 0;
  virtual std::string piece(TokenId id) const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual const SpecialTokens& specials() const = 0;

  std::vector<TokenId> tokenize(std::string_view text) const { return tokenize(text, true); }

  bool is_special(TokenId id) const {
    const auto& s = specials();
    return id == s.pad || id == s.bos || id == s.sep || id == s.mask || id == s.unk;
  }
};

/// Lowercasing greedy longest-match piece tokenizer. Word-initial pieces
/// carry the U+2581 marker ("▁against"); continuation pieces do not
/// ("ing"). Text is first cut into word runs and single punctuation code
/// points; a segment that cannot be fully covered by pieces becomes one
/// UNK token.
class ToyTokenizer final : public Tokenizer {
 public:
  static constexpr std::string_view kMarker = "\xE2\x96\x81";  // U+2581

  /// Pieces get ids in order after the five special tokens.
  explicit ToyTokenizer(const std::vector<std::string>& pieces) {
    for (const char* s : {"<pad>", "<s>", "</s>", "<mask>", "<unk>"}) add_piece(s);
    for (const auto& p : pieces) add_piece(p);
  }

  /// Explicit piece → id map (ids must not reuse the special ids 0..4).
  static ToyTokenizer from_vocab(const std::map<std::string, TokenId>& vocab) {
    ToyTokenizer tok;
    tok.assign(vocab);
    return tok;
  }
  using Tokenizer::tokenize;
  std::vector<TokenId> tokenize(std::string_view input, bool start_of_word) const override {
    std::vector<TokenId> out;
    const std::string lowered = text::lower(input);
    for (const auto& seg : text::segment(lowered, start_of_word)) {
      const std::string s = seg.word_initial ? std::string(kMarker) + seg.text : seg.text;
      if (!cover(s, out)) out.push_back(specials_.unk);
    }
    return out;
  }

  std::string detokenize(std::span<const TokenId> ids) const override {
    std::string out;
    for (TokenId id : ids) {
      std::string p = piece(id);
      if (p.rfind(kMarker, 0) == 0) {
        if (!out.empty()) out.push_back(' ');
        out.append(p.substr(kMarker.size()));
      } else {
        out.append(p);
      }
    }
    return out;
  }

  std::string piece(TokenId id) const override {
    if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size()) {
      throw DataError("token id " + std::to_string(id) + " out of range");
    }
    return pieces_[static_cast<std::size_t>(id)];
  }

  std::size_t vocab_size() const override { return pieces_.size(); }
  const SpecialTokens& specials() const override { return specials_; }

  bool has_piece(const std::string& p) const { return ids_.count(p) > 0; }
  TokenId id_of(const std::string& p) const {
    auto it = ids_.find(p);
    if (it == ids_.end()) throw DataError("unknown piece '" + p + "'");
    return it->second;
  }

  const std::vector<std::string>& pieces() const { return pieces_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (std::size_t i = 5; i < pieces_.size(); ++i) out << pieces_[i] << '\n';
  }

  static ToyTokenizer load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary " + path.string());
    std::vector<std::string> pieces;
    std::string line;
    while (std::getline(in, line)) pieces.push_back(line);
    return ToyTokenizer(pieces);
  }

 private:
  ToyTokenizer() = default;

  void assign(const std::map<std::string, TokenId>& vocab) {
    TokenId max_id = 4;
    for (const auto& [_, id] : vocab) max_id = std::max(max_id, id);
    pieces_.assign(static_cast<std::size_t>(max_id) + 1, std::string());
    const char* specials[] = {"<pad>", "<s>", "</s>", "<mask>", "<unk>"};
    for (TokenId i = 0; i < 5; ++i) {
      pieces_[static_cast<std::size_t>(i)] = specials[i];
      ids_[specials[i]] = i;
    }
    for (const auto& [p, id] : vocab) {
      if (id < 5) throw DataError("piece '" + p + "' uses a reserved special id");
      if (!pieces_[static_cast<std::size_t>(id)].empty()) {
        throw DataError("duplicate id in vocabulary");
      }
      pieces_[static_cast<std::size_t>(id)] = p;
      ids_[p] = id;
      max_piece_bytes_ = std::max(max_piece_bytes_, p.size());
    }
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
      if (pieces_[i].empty()) pieces_[i] = "<unused" + std::to_string(i) + ">";
    }
  }


  void add_piece(const std::string& p) {
    if (p.empty() || ids_.count(p)) return;
    ids_[p] = static_cast<TokenId>(pieces_.size());
    pieces_.push_back(p);
    max_piece_bytes_ = std::max(max_piece_bytes_, p.size());
  }

  // Greedy longest match of the whole segment; false if some suffix is
  // not coverable (nothing is appended in that case).
  bool cover(const std::string& s, std::vector<TokenId>& out) const {
    std::vector<TokenId> local;
    std::size_t pos = 0;
    while (pos < s.size()) {
      std::size_t len = std::min(max_piece_bytes_, s.size() - pos);
      TokenId found = -1;
      for (; len > 0; --len) {
        auto it = ids_.find(s.substr(pos, len));
        if (it != ids_.end() && it->second > specials_.unk) {
          found = it->second;
          break;
        }
      }
      if (found < 0) return false;
      local.push_back(found);
      pos += len;
    }
    out.insert(out.end(), local.begin(), local.end());
    return true;
  }

  SpecialTokens specials_;
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> ids_;
  std::size_t max_piece_bytes_ = 1;
};

/// Base pieces every toy vocabulary carries: prompt words, punctuation and
/// the sub-word pieces of common stance labels.
inline std::vector<std::string> base_toy_pieces() {
  const std::string m(ToyTokenizer::kMarker);
  std::vector<std::string> words = {"the",  "stance", "of",   "following", "is",      "a",
                                    "and",  "to",     "in",   "against",   "discuss", "favor",
                                    "none", "agree",  "disagree", "support", "neutral", "un",
                                    "favour", "comment", "query", "deny", "pro", "con", "for",
                                    "other", "positive", "negative"};
  std::vector<std::string> out;
  for (const auto& w : words) out.push_back(m + w);
  for (const char* cont : {"related", "ing", "ed", "s", ".", ",", "!", "?", ":", ";", "'", "-"}) {
    out.push_back(cont);
  }
  for (const char* p : {".", ",", "!", "?", "\"", "(", ")"}) out.push_back(m + p);
  return out;
}

/// Builds a toy vocabulary: base pieces, then the most frequent segments
/// of `texts` (ties lexicographic) until `capacity` ids are used, then any
/// label words still not coverable.
inline ToyTokenizer build_toy_tokenizer(const std::vector<std::string>& texts,
                                        const std::vector<std::string>& labels,
                                        std::size_t capacity = 512) {
  const std::string m(ToyTokenizer::kMarker);
  std::vector<std::string> pieces = base_toy_pieces();
  ToyTokenizer probe(pieces);
  std::vector<std::string> label_pieces;
  for (const auto& l : labels) {
    for (const auto& seg : text::segment(text::lower(l))) {
      const std::string s = seg.word_initial ? m + seg.text : seg.text;
      std::vector<TokenId> ids = probe.tokenize(seg.word_initial ? " " + seg.text : seg.text,
                                                seg.word_initial);
      if (std::find(ids.begin(), ids.end(), probe.specials().unk) != ids.end()) {
        label_pieces.push_back(s);
      }
    }
  }
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    for (const auto& seg : text::segment(text::lower(t))) {
      ++freq[seg.word_initial ? m + seg.text : seg.text];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::set<std::string> present(pieces.begin(), pieces.end());
  for (const auto& l : label_pieces) present.insert(l);
  const std::size_t reserved = 5 + present.size();
  std::size_t room = capacity > reserved ? capacity - reserved : 0;
  for (const auto& [p, _] : ranked) {
    if (room == 0) break;
    if (present.count(p)) continue;
    pieces.push_back(p);
    present.insert(p);
    --room;
  }
  for (const auto& l : label_pieces) pieces.push_back(l);
  return ToyTokenizer(pieces);
}

}  // namespace stance
