#pragma once

// Trainable stance classifiers sharing one training loop: the prompt
// model scored by the label encoder, and the sequence-classification
// baseline with a linear head over the BOS position.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stance/backbone.hpp"
#include "stance/data_model.hpp"
#include "stance/fewshot.hpp"
#include "stance/label_encoder.hpp"
#include "stance/pattern.hpp"

namespace stance {

struct Prediction {
  std::string id;
  std::string gold;
  std::string pred;
  std::vector<std::pair<std::string, double>> scores;  ///< label -> logit, inventory order
};

inline nlohmann::json to_json(const Prediction& p) {
  nlohmann::json scores = nlohmann::json::object();
  for (const auto& [l, s] : p.scores) scores[l] = s;
  return {{"id", p.id}, {"gold", p.gold}, {"pred", p.pred}, {"scores", scores}};
}

using ClassWeights = std::map<std::string, double>;

class StanceModel {
 public:
  virtual ~StanceModel() = default;

  virtual std::string name() const = 0;
  virtual Backbone& backbone() = 0;
  virtual std::vector<ad::Parameter*> parameters() = 0;
  /// Per-example training loss; the caller owns the tape.
  virtual ad::Var loss(ad::Tape& tape, const PoolItem& item, Rng& rng) = 0;
  virtual std::vector<Prediction> predict(const std::vector<StanceExample>& examples,
                                          const LabelInventory& inventory) = 0;
  virtual void save(const std::filesystem::path& dir) const = 0;
  /// Allocates any per-inventory parameters before optimisation starts.
  virtual void prepare(const LabelInventory&) {}

  /// Class weights applied to the positive terms of `dataset`'s loss.
  void set_class_weights(const std::string& dataset, ClassWeights w) {
    class_weights_[dataset] = std::move(w);
  }
  const ClassWeights* class_weights(const std::string& dataset) const {
    auto it = class_weights_.find(dataset);
    return it == class_weights_.end() ? nullptr : &it->second;
  }

  std::vector<ad::Matrix> snapshot() {
    std::vector<ad::Matrix> out;
    for (auto* p : parameters()) out.push_back(p->value);
    return out;
  }

  void restore(const std::vector<ad::Matrix>& weights) {
    auto ps = parameters();
    if (ps.size() != weights.size()) throw NumericError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = weights[i];
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 protected:
  std::map<std::string, ClassWeights> class_weights_;
};

/// Prompt-based classifier: label-encoder scores at the mask position.
class PatternModel final : public StanceModel {
 public:
  PatternModel(std::unique_ptr<Backbone> backbone, LossConfig loss,
               LabelRegistry registry = LabelRegistry(),
               PromptTemplate tmpl = PromptTemplate::standard())
      : backbone_(std::move(backbone)),
        loss_(loss),
        registry_(std::move(registry)),
        template_(std::move(tmpl)) {
    loss_.validate();
  }

  std::string name() const override { return "pattern"; }
  Backbone& backbone() override { return *backbone_; }
  std::vector<ad::Parameter*> parameters() override { return backbone_->parameters(); }
  const LossConfig& loss_config() const { return loss_; }
  void set_loss_config(const LossConfig& c) {
    c.validate();
    loss_ = c;
  }
  const PromptTemplate& prompt_template() const { return template_; }
  LabelRegistry& registry() { return registry_; }

  /// Label texts used for an inventory (translated inventories replace the
  /// surface form while keeping gold-label identity).
  void set_label_texts(const std::string& dataset, std::map<std::string, std::string> texts) {
    label_texts_[dataset] = std::move(texts);
  }

  const EncodedPrompt& prompt_for(const StanceExample& ex) {
    const std::string key = ex.dataset + '\x1f' + ex.id;
    auto it = prompts_.find(key);
    if (it != prompts_.end()) return it->second;
    return prompts_.emplace(key, build_prompt(ex, backbone_->tokenizer(), template_))
        .first->second;
  }

  ad::Var loss(ad::Tape& tape, const PoolItem& item, Rng& rng) override {
    const LabelInventory& inv = surface_inventory(*item.inventory);
    StanceExample ex = item.example;
    ex.label = surface(item.inventory->dataset(), ex.label);
    NegativePool pool = NegativePool::from_registry(registry_, &backbone_->tokenizer());
    LossContext ctx{&inv, &pool, class_weights(item.inventory->dataset()), loss_};
    ClassWeights mapped;
    if (ctx.class_weights && label_texts_.count(inv.dataset())) {
      for (const auto& [l, w] : *ctx.class_weights) mapped[surface(inv.dataset(), l)] = w;
      ctx.class_weights = &mapped;
    }
    return total_loss_var(tape, *backbone_, ex, prompt_for(item.example), ctx, rng);
  }

  std::vector<Prediction> predict(const std::vector<StanceExample>& examples,
                                  const LabelInventory& inventory) override {
    const LabelInventory& inv = surface_inventory(inventory);
    // Recomputed from the live embedding table on every evaluation.
    const auto embeddings = encode_labels(inv.labels(), *backbone_);
    std::vector<Prediction> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
      const auto logits = inventory_logits(*backbone_, prompt_for(ex), embeddings);
      Prediction p{ex.id, ex.label, inventory.labels()[argmax_index(logits)], {}};
      for (std::size_t i = 0; i < logits.size(); ++i) {
        p.scores.emplace_back(inventory.labels()[i], logits[i]);
      }
      out.push_back(std::move(p));
    }
    return out;
  }

  void save(const std::filesystem::path& dir) const override {
    backbone_->save(dir);
    nlohmann::json j{{"model", "pattern"}, {"template", template_.source()}};
    std::ofstream(dir / "model.json", std::ios::binary) << j.dump(2) << '\n';
  }

 private:
  std::string surface(const std::string& dataset, const std::string& label) const {
    auto it = label_texts_.find(dataset);
    if (it == label_texts_.end()) return label;
    auto jt = it->second.find(label);
    return jt == it->second.end() ? label : jt->second;
  }

  const LabelInventory& surface_inventory(const LabelInventory& inv) {
    auto it = label_texts_.find(inv.dataset());
    if (it == label_texts_.end()) return inv;
    auto cached = surface_inventories_.find(inv.dataset());
    if (cached != surface_inventories_.end()) return cached->second;
    std::vector<std::string> labels;
    for (const auto& l : inv.labels()) labels.push_back(surface(inv.dataset(), l));
    Lexicon lex;
    for (const auto& [l, syns] : inv.synonyms()) lex[surface(inv.dataset(), l)] = syns;
    return surface_inventories_
        .emplace(inv.dataset(), LabelInventory(inv.dataset(), labels, lex, inv.language()))
        .first->second;
  }

  std::unique_ptr<Backbone> backbone_;
  LossConfig loss_;
  LabelRegistry registry_;
  PromptTemplate template_;
  std::unordered_map<std::string, EncodedPrompt> prompts_;
  std::map<std::string, std::map<std::string, std::string>> label_texts_;
  std::map<std::string, LabelInventory> surface_inventories_;
};

/// "<s> context </s> target" encoding for the sequence-classification model.
inline std::vector<TokenId> cls_encoding(const StanceExample& ex, const Tokenizer& tok,
                                         std::size_t max_length = kMaxSequenceLength) {
  auto [tgt, ctx] = truncate_pair(tok.tokenize(ex.target), tok.tokenize(ex.context),
                                  max_length - 2);
  std::vector<TokenId> ids{tok.specials().bos};
  ids.insert(ids.end(), ctx.begin(), ctx.end());
  ids.push_back(tok.specials().sep);
  ids.insert(ids.end(), tgt.begin(), tgt.end());
  return ids;
}

/// Linear head over the BOS hidden state; one head per inventory.
class ClsModel final : public StanceModel {
 public:
  ClsModel(std::unique_ptr<Backbone> backbone, std::uint64_t seed = 0)
      : backbone_(std::move(backbone)), seed_(seed) {}

  std::string name() const override { return "cls"; }
  Backbone& backbone() override { return *backbone_; }

  void prepare(const LabelInventory& inv) override { add_head(inv); }

  /// Creates the head for `inv` if missing (deterministic per dataset name).
  void add_head(const LabelInventory& inv) {
    if (heads_.count(inv.dataset())) return;
    const std::size_t d = backbone_->hidden_dim();
    Rng rng(derive_seed(seed_, text::fnv1a(inv.dataset())));
    ad::Matrix w(inv.size(), d);
    for (auto& x : w.values()) x = 0.02 * rng.normal();
    Head h{ad::Parameter(inv.dataset() + ".head.weight", std::move(w)),
           ad::Parameter(inv.dataset() + ".head.bias", ad::Matrix(1, inv.size()))};
    heads_.emplace(inv.dataset(), std::move(h));
  }

  std::size_t head_size(const std::string& dataset) const {
    return heads_.at(dataset).weight.value.rows();
  }

  std::vector<ad::Parameter*> parameters() override {
    auto ps = backbone_->parameters();
    for (auto& [_, h] : heads_) {
      ps.push_back(&h.weight);
      ps.push_back(&h.bias);
    }
    return ps;
  }

  ad::Var loss(ad::Tape& tape, const PoolItem& item, Rng&) override {
    const LabelInventory& inv = *item.inventory;
    add_head(inv);
    Head& h = heads_.at(inv.dataset());
    const auto ids = cls_encoding(item.example, backbone_->tokenizer());
    ad::Var bos = ad::take_row(tape, backbone_->forward(tape, ids).hidden, 0);
    ad::Var logits =
        ad::add_row(tape, ad::matmul_nt(tape, bos, tape.leaf(h.weight)), tape.leaf(h.bias));
    const int target[] = {static_cast<int>(inv.index_of(item.example.label))};
    ad::Var ce = ad::cross_entropy_rows(tape, logits, target);
    const ClassWeights* w = class_weights(inv.dataset());
    if (!w) return ce;
    auto it = w->find(item.example.label);
    return it == w->end() ? ce : ad::scale(tape, ce, it->second);
  }

  std::vector<Prediction> predict(const std::vector<StanceExample>& examples,
                                  const LabelInventory& inv) override {
    add_head(inv);
    const Head& h = heads_.at(inv.dataset());
    std::vector<Prediction> out;
    for (const auto& ex : examples) {
      const auto enc = backbone_->encode(cls_encoding(ex, backbone_->tokenizer()), false);
      std::vector<double> logits(inv.size());
      auto bos = enc.hidden.row(0);
      for (std::size_t c = 0; c < inv.size(); ++c) {
        double s = h.bias.value[c];
        auto wr = h.weight.value.row(c);
        for (std::size_t j = 0; j < bos.size(); ++j) s += wr[j] * bos[j];
        logits[c] = s;
      }
      Prediction p{ex.id, ex.label, inv.labels()[argmax_index(logits)], {}};
      for (std::size_t c = 0; c < inv.size(); ++c) p.scores.emplace_back(inv.labels()[c], logits[c]);
      out.push_back(std::move(p));
    }
    return out;
  }

  void save(const std::filesystem::path& dir) const override {
    backbone_->save(dir);
    nlohmann::json heads = nlohmann::json::object();
    for (const auto& [name, h] : heads_) {
      heads[name] = {{"rows", h.weight.value.rows()},
                     {"weight", std::vector<double>(h.weight.value.values().begin(),
                                                    h.weight.value.values().end())},
                     {"bias", std::vector<double>(h.bias.value.values().begin(),
                                                  h.bias.value.values().end())}};
    }
    std::ofstream(dir / "model.json", std::ios::binary)
        << nlohmann::json{{"model", "cls"}, {"heads", heads}}.dump() << '\n';
  }

  void load_heads(const std::filesystem::path& dir) {
    std::ifstream in(dir / "model.json");
    if (!in) return;
    auto j = nlohmann::json::parse(in);
    for (const auto& [name, h] : j.value("heads", nlohmann::json::object()).items()) {
      const auto rows = h.at("rows").get<std::size_t>();
      auto w = h.at("weight").get<std::vector<double>>();
      if (w.size() != rows * backbone_->hidden_dim()) {
        throw DataError("classification head '" + name + "' has dimension " +
                        std::to_string(rows ? w.size() / rows : 0) + " but backbone hidden dim is " +
                        std::to_string(backbone_->hidden_dim()));
      }
      Head hd{ad::Parameter(name + ".head.weight",
                            ad::Matrix(rows, backbone_->hidden_dim(), std::move(w))),
              ad::Parameter(name + ".head.bias",
                            ad::Matrix(1, rows, h.at("bias").get<std::vector<double>>()))};
      heads_.insert_or_assign(name, std::move(hd));
    }
  }

 private:
  struct Head {
    ad::Parameter weight;
    ad::Parameter bias;
  };
  std::unique_ptr<Backbone> backbone_;
  std::uint64_t seed_;
  std::map<std::string, Head> heads_;
};

}  // namespace stance
