#pragma once

// Masked-language-model backbone contract and the deterministic toy
// encoder used by tests, the acceptance suite and the CLI.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "stance/autodiff.hpp"
#include "stance/error.hpp"
#include "stance/random.hpp"
#include "stance/text.hpp"
#include "stance/tokenizer.hpp"

namespace stance {

struct BackboneOutput {
  ad::Matrix hidden;                     ///< [sequence length x hidden dim]
  std::optional<ad::Matrix> mlm_logits;  ///< [sequence length x vocab size]
};

/// Graph handles produced by Backbone::forward.
struct EncoderGraph {
  ad::Var hidden;
};

/// Abstract masked language model. Adapters for pretrained models must
/// expose the model's genuine input-embedding table via token_embeddings.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::size_t hidden_dim() const = 0;
  virtual std::size_t max_length() const = 0;
  virtual std::size_t vocab_size() const = 0;

  /// Contextual encoder over a token sequence.
  virtual EncoderGraph forward(ad::Tape& tape, std::span<const TokenId> ids) = 0;
  /// MLM logits for the given hidden rows.
  virtual ad::Var mlm_head(ad::Tape& tape, ad::Var hidden_rows) = 0;
  /// Static (non-contextual) token-embedding rows.
  virtual ad::Var token_embeddings(ad::Tape& tape, std::span<const TokenId> ids) = 0;

  virtual std::vector<ad::Parameter*> parameters() = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;
  virtual void save(const std::filesystem::path& dir) const = 0;
  virtual std::string kind() const = 0;

  std::vector<const ad::Parameter*> parameter_view() const {
    auto ps = const_cast<Backbone*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  void check_length(std::size_t n) const {
    if (n == 0) throw NumericError("encode: empty input");
    if (n > max_length()) {
      throw NumericError("encode: input length " + std::to_string(n) + " exceeds max length " +
                         std::to_string(max_length()));
    }
  }

  /// Inference-mode encoding.
  BackboneOutput encode(std::span<const TokenId> ids, bool request_mlm) {
    check_length(ids.size());
    ad::Tape tape;
    EncoderGraph g = forward(tape, ids);
    BackboneOutput out;
    out.hidden = tape.value(g.hidden);
    if (request_mlm) out.mlm_logits = tape.value(mlm_head(tape, g.hidden));
    return out;
  }

  std::vector<double> token_embedding(TokenId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(vocab_size()));
    }
    ad::Tape tape;
    const TokenId ids[] = {id};
    auto row = tape.value(token_embeddings(tape, ids)).row(0);
    return {row.begin(), row.end()};
  }

  /// FNV-1a over every parameter's raw bytes, in parameter order.
  std::uint64_t weights_hash() const {
    std::uint64_t h = text::fnv1a("");
    for (const ad::Parameter* p : parameter_view()) {
      h = text::fnv1a(p->name, h);
      auto v = p->value.values();
      h = text::fnv1a(
          std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)), h);
    }
    return h;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameter_view()) n += p->value.size();
    return n;
  }
};

struct ToyBackboneConfig {
  std::size_t hidden_dim = 32;
  std::size_t ffn_dim = 64;
  std::size_t layers = 2;
  std::size_t max_length = 160;
  std::uint64_t seed = 0;
  double embedding_std = 0.3;
};

/// Pre-norm transformer encoder: learned token + position embeddings,
/// single-head self-attention and a tanh feed-forward block per layer,
/// final layer norm, and an MLM head tied to the token embeddings.
class ToyBackbone final : public Backbone {
 public:
  static constexpr int kFormatVersion = 1;

  ToyBackbone(ToyTokenizer tokenizer, ToyBackboneConfig config)
      : tokenizer_(std::move(tokenizer)), config_(config) {
    if (config_.hidden_dim == 0 || config_.layers == 0) {
      throw ConfigError("toy backbone needs positive hidden dim and layer count");
    }
    init();
  }

  ToyBackbone(const ToyBackbone& o)
      : tokenizer_(o.tokenizer_), config_(o.config_), params_(o.params_) {}
  ToyBackbone& operator=(const ToyBackbone&) = delete;

  const Tokenizer& tokenizer() const override { return tokenizer_; }
  const ToyTokenizer& toy_tokenizer() const { return tokenizer_; }
  const ToyBackboneConfig& config() const { return config_; }
  std::size_t hidden_dim() const override { return config_.hidden_dim; }
  std::size_t max_length() const override { return config_.max_length; }
  std::size_t vocab_size() const override { return tokenizer_.vocab_size(); }
  std::string kind() const override { return "toy"; }

  EncoderGraph forward(ad::Tape& t, std::span<const TokenId> ids) override {
    check_length(ids.size());
    const std::size_t n = ids.size(), d = config_.hidden_dim;
    std::vector<int> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i);
    ad::Var x = ad::add(t, ad::gather_rows(t, tok_emb(), ids),
                        ad::gather_rows(t, param(kPos), positions));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const std::size_t b = kLayerBase + l * kPerLayer;
      ad::Var a = ad::layer_norm(t, x, leaf(t, b + 0), leaf(t, b + 1));
      ad::Var q = ad::matmul(t, a, leaf(t, b + 2));
      ad::Var k = ad::matmul(t, a, leaf(t, b + 3));
      ad::Var v = ad::matmul(t, a, leaf(t, b + 4));
      ad::Var att = ad::softmax_rows(t, ad::scale(t, ad::matmul_nt(t, q, k), inv_sqrt_d));
      x = ad::add(t, x, ad::matmul(t, ad::matmul(t, att, v), leaf(t, b + 5)));
      ad::Var f = ad::layer_norm(t, x, leaf(t, b + 6), leaf(t, b + 7));
      ad::Var h = ad::tanh(t, ad::add_row(t, ad::matmul(t, f, leaf(t, b + 8)), leaf(t, b + 9)));
      x = ad::add(t, x, ad::add_row(t, ad::matmul(t, h, leaf(t, b + 10)), leaf(t, b + 11)));
    }
    const std::size_t fin = kLayerBase + config_.layers * kPerLayer;
    return {ad::layer_norm(t, x, leaf(t, fin), leaf(t, fin + 1))};
  }

  ad::Var mlm_head(ad::Tape& t, ad::Var hidden_rows) override {
    const std::size_t fin = kLayerBase + config_.layers * kPerLayer;
    return ad::add_row(t, ad::matmul_nt(t, hidden_rows, t.leaf(tok_emb())),
                       leaf(t, fin + 2));
  }

  ad::Var token_embeddings(ad::Tape& t, std::span<const TokenId> ids) override {
    return ad::gather_rows(t, tok_emb(), ids);
  }

  std::vector<ad::Parameter*> parameters() override {
    std::vector<ad::Parameter*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::unique_ptr<Backbone> clone() const override { return std::make_unique<ToyBackbone>(*this); }

  void save(const std::filesystem::path& dir) const override {
    std::filesystem::create_directories(dir);
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : params_) {
      params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
    }
    nlohmann::json manifest{{"format_version", kFormatVersion},
                            {"kind", "toy"},
                            {"hidden_dim", config_.hidden_dim},
                            {"ffn_dim", config_.ffn_dim},
                            {"layers", config_.layers},
                            {"max_length", config_.max_length},
                            {"vocab_size", vocab_size()},
                            {"seed", config_.seed},
                            {"embedding_std", config_.embedding_std},
                            {"parameters", params}};
    std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
    tokenizer_.save(dir / "vocab.txt");
    std::ofstream blob(dir / "weights.bin", std::ios::binary);
    for (const auto& p : params_) {
      auto v = p.value.values();
      blob.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!blob) throw DataError("failed writing " + (dir / "weights.bin").string());
  }

  static ToyBackbone load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("no checkpoint manifest in " + dir.string());
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad checkpoint manifest: " + std::string(e.what()));
    }
    if (m.value("format_version", 0) != kFormatVersion || m.value("kind", "") != "toy") {
      throw DataError("unsupported checkpoint format in " + dir.string());
    }
    ToyBackboneConfig cfg;
    cfg.hidden_dim = m.at("hidden_dim").get<std::size_t>();
    cfg.ffn_dim = m.at("ffn_dim").get<std::size_t>();
    cfg.layers = m.at("layers").get<std::size_t>();
    cfg.max_length = m.at("max_length").get<std::size_t>();
    cfg.seed = m.at("seed").get<std::uint64_t>();
    cfg.embedding_std = m.value("embedding_std", cfg.embedding_std);
    ToyTokenizer tok = ToyTokenizer::load(dir / "vocab.txt");
    const auto vocab = m.at("vocab_size").get<std::size_t>();
    if (tok.vocab_size() != vocab) {
      throw DataError("checkpoint vocab size " + std::to_string(vocab) +
                      " does not match vocabulary file size " + std::to_string(tok.vocab_size()));
    }
    ToyBackbone bb(std::move(tok), cfg);
    const auto& plist = m.at("parameters");
    if (plist.size() != bb.params_.size()) {
      throw DataError("checkpoint has " + std::to_string(plist.size()) +
                      " parameters, toy backbone expects " + std::to_string(bb.params_.size()));
    }
    std::ifstream blob(dir / "weights.bin", std::ios::binary);
    if (!blob) throw DataError("missing weights.bin in " + dir.string());
    for (std::size_t i = 0; i < bb.params_.size(); ++i) {
      auto& p = bb.params_[i];
      const auto rows = plist[i].at("rows").get<std::size_t>();
      const auto cols = plist[i].at("cols").get<std::size_t>();
      if (rows != p.value.rows() || cols != p.value.cols()) {
        throw DataError("checkpoint tensor " + p.name + " is " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " but backbone expects " +
                        std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()) +
                        " (hidden dim " + std::to_string(cfg.hidden_dim) + ")");
      }
      auto v = p.value.values();
      blob.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
      if (!blob) throw DataError("truncated weights.bin in " + dir.string());
    }
    return bb;
  }

 private:
  static constexpr std::size_t kTok = 0;
  static constexpr std::size_t kPos = 1;
  static constexpr std::size_t kLayerBase = 2;
  static constexpr std::size_t kPerLayer = 12;

  ad::Parameter& param(std::size_t i) { return params_[i]; }
  ad::Parameter& tok_emb() { return params_[kTok]; }
  ad::Var leaf(ad::Tape& t, std::size_t i) { return t.leaf(params_[i]); }

  void init() {
    Rng rng(config_.seed);
    const std::size_t d = config_.hidden_dim, f = config_.ffn_dim, v = vocab_size();
    auto gaussian = [&](std::size_t r, std::size_t c, double std) {
      ad::Matrix m(r, c);
      for (auto& x : m.values()) x = std * rng.normal();
      return m;
    };
    auto constant = [](std::size_t r, std::size_t c, double x) { return ad::Matrix(r, c, x); };
    ad::Matrix emb = gaussian(v, d, config_.embedding_std);
    for (auto& x : emb.row(static_cast<std::size_t>(tokenizer_.specials().pad))) x = 0.0;
    params_.emplace_back("tok_emb", std::move(emb));
    params_.emplace_back("pos_emb", gaussian(config_.max_length, d, 0.1 * config_.embedding_std));
    const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
    const double fstd = 1.0 / std::sqrt(static_cast<double>(f));
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      params_.emplace_back(pre + "ln1.gain", constant(1, d, 1.0));
      params_.emplace_back(pre + "ln1.bias", constant(1, d, 0.0));
      params_.emplace_back(pre + "attn.q", gaussian(d, d, wstd));
      params_.emplace_back(pre + "attn.k", gaussian(d, d, wstd));
      params_.emplace_back(pre + "attn.v", gaussian(d, d, wstd));
      params_.emplace_back(pre + "attn.out", gaussian(d, d, 0.5 * wstd));
      params_.emplace_back(pre + "ln2.gain", constant(1, d, 1.0));
      params_.emplace_back(pre + "ln2.bias", constant(1, d, 0.0));
      params_.emplace_back(pre + "ffn.in", gaussian(d, f, wstd));
      params_.emplace_back(pre + "ffn.in_bias", constant(1, f, 0.0));
      params_.emplace_back(pre + "ffn.out", gaussian(f, d, 0.5 * fstd));
      params_.emplace_back(pre + "ffn.out_bias", constant(1, d, 0.0));
    }
    params_.emplace_back("final_ln.gain", constant(1, d, 1.0));
    params_.emplace_back("final_ln.bias", constant(1, d, 0.0));
    params_.emplace_back("mlm.bias", constant(1, v, 0.0));
  }

  ToyTokenizer tokenizer_;
  ToyBackboneConfig config_;
  std::vector<ad::Parameter> params_;
};

/// Restores parameter values from another backbone of identical shape.
inline void copy_weights(Backbone& dst, const Backbone& src) {
  auto d = dst.parameters();
  auto s = src.parameter_view();
  if (d.size() != s.size()) throw NumericError("copy_weights: parameter count mismatch");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d[i]->value.same_shape(s[i]->value)) {
      throw NumericError("copy_weights: shape mismatch for " + d[i]->name);
    }
    d[i]->value = s[i]->value;
  }
}

}  // namespace stance
