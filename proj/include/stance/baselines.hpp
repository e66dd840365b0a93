#pragma once

// Reference baselines: majority class, uniform random, TF-IDF unigram
// logistic regression and the sequence-classification fine-tune.
// Fitting never sees test gold labels: predictors consume StanceInput.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stance/data_model.hpp"
#include "stance/eval.hpp"
#include "stance/metrics.hpp"
#include "stance/model.hpp"
#include "stance/random.hpp"
#include "stance/text.hpp"
#include "stance/trainer.hpp"

namespace stance {

/// Label-free view of an example.
struct StanceInput {
  std::string id;
  std::string target;
  std::string context;
};

inline std::vector<StanceInput> inputs_of(const std::vector<StanceExample>& examples) {
  std::vector<StanceInput> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back({e.id, e.target, e.context});
  return out;
}

inline std::vector<std::string> gold_of(const std::vector<StanceExample>& examples) {
  std::vector<std::string> out;
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

// ---------------------------------------------------------------- majority

enum class PriorSource { test, train };

inline PriorSource parse_prior_source(const std::string& s) {
  if (s == "test") return PriorSource::test;
  if (s == "train") return PriorSource::train;
  throw ConfigError("unknown prior source '" + s + "' (expected test or train)");
}

/// Most frequent label under `counts`; ties go to the lowest inventory index.
inline std::string majority_label(const std::vector<std::size_t>& counts,
                                  const LabelInventory& inventory) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] > counts[best]) best = i;
  }
  return inventory.labels()[best];
}

/// Constant predictor. The prior comes from the test split by default
/// (label distribution only), or from train.
inline F1Result majority_baseline(const std::vector<StanceExample>& train,
                                  const std::vector<StanceExample>& test,
                                  const LabelInventory& inventory,
                                  PriorSource source = PriorSource::test) {
  const auto counts = label_counts(source == PriorSource::test ? test : train, inventory);
  const std::string label = majority_label(counts, inventory);
  const std::vector<std::string> pred(test.size(), label);
  return f1_scores(gold_of(test), pred, inventory);
}

// ------------------------------------------------------------------ random

inline std::vector<std::string> random_predictions(std::size_t n, const LabelInventory& inventory,
                                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(inventory.labels()[rng.index(inventory.size())]);
  return out;
}

/// Mean over `trials` seeded runs of uniform label assignment. Per-class
/// scores are averaged the same way.
inline F1Result random_baseline(const std::vector<StanceExample>& test,
                                const LabelInventory& inventory, std::uint64_t seed,
                                std::size_t trials = 100) {
  if (trials == 0) throw ConfigError("random baseline needs at least one trial");
  const auto gold = gold_of(test);
  F1Result acc;
  for (std::size_t t = 0; t < trials; ++t) {
    const F1Result r =
        f1_scores(gold, random_predictions(test.size(), inventory, derive_seed(seed, t)), inventory);
    if (t == 0) {
      acc = r;
      continue;
    }
    acc.macro_f1 += r.macro_f1;
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
      acc.per_class[c].precision += r.per_class[c].precision;
      acc.per_class[c].recall += r.per_class[c].recall;
      acc.per_class[c].f1 += r.per_class[c].f1;
    }
  }
  const double n = static_cast<double>(trials);
  acc.macro_f1 /= n;
  for (auto& c : acc.per_class) {
    c.precision /= n;
    c.recall /= n;
    c.f1 /= n;
  }
  return acc;
}

// ------------------------------------------------------------------ TF-IDF

using SparseVector = std::vector<std::pair<std::size_t, double>>;

inline std::vector<std::string> unigrams(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& seg : text::segment(text::lower(s))) {
    if (seg.kind == text::CharClass::word) out.push_back(seg.text);
  }
  return out;
}

/// tf = raw count, idf = ln((1+n)/(1+df)) + 1, rows L2-normalised.
class TfidfVectorizer {
 public:
  explicit TfidfVectorizer(std::size_t max_features = 15000) : max_features_(max_features) {}

  /// Keeps the `max_features` most frequent terms (ties: lexicographic).
  void fit(const std::vector<std::string>& docs) {
    std::map<std::string, std::size_t> freq, df;
    for (const auto& d : docs) {
      std::map<std::string, std::size_t> seen;
      for (const auto& w : unigrams(d)) {
        ++freq[w];
        seen[w] = 1;
      }
      for (const auto& [w, _] : seen) ++df[w];
    }
    if (freq.empty()) throw DataError("TF-IDF vocabulary is empty");
    std::vector<std::pair<std::string, std::size_t>> terms(freq.begin(), freq.end());
    std::stable_sort(terms.begin(), terms.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (terms.size() > max_features_) terms.resize(max_features_);
    std::sort(terms.begin(), terms.end());
    vocab_.clear();
    idf_.clear();
    const double n = static_cast<double>(docs.size());
    for (const auto& [w, _] : terms) {
      vocab_.emplace(w, vocab_.size());
      idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(df[w]))) + 1.0);
    }
  }

  SparseVector transform(std::string_view doc) const {
    std::map<std::size_t, double> tf;
    for (const auto& w : unigrams(doc)) {
      auto it = vocab_.find(w);
      if (it != vocab_.end()) tf[it->second] += 1.0;
    }
    SparseVector v;
    double norm = 0.0;
    for (const auto& [i, c] : tf) {
      const double x = c * idf_[i];
      v.emplace_back(i, x);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (auto& [_, x] : v) x /= norm;
    }
    return v;
  }

  std::size_t size() const { return vocab_.size(); }
  const std::unordered_map<std::string, std::size_t>& vocabulary() const { return vocab_; }
  const std::vector<double>& idf() const { return idf_; }

 private:
  std::size_t max_features_;
  std::unordered_map<std::string, std::size_t> vocab_;
  std::vector<double> idf_;
};

// ----------------------------------------------------------------- L-BFGS

struct LbfgsOptions {
  std::size_t history = 10;
  std::size_t max_iterations = 1000;
  double gradient_tolerance = 1e-6;  ///< on the max-abs gradient
  double relative_tolerance = 1e-10;   ///< on the objective change
};

struct LbfgsResult {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Minimises f with two-loop recursion and Armijo backtracking.
/// `fg(x, grad)` returns f(x) and writes its gradient.
inline LbfgsResult lbfgs_minimize(
    std::vector<double>& x,
    const std::function<double(const std::vector<double>&, std::vector<double>&)>& fg,
    const LbfgsOptions& opt = {}) {
  const std::size_t n = x.size();
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  };
  auto max_abs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };
  std::vector<double> g(n), g_new(n), d(n), x_new(n);
  std::deque<std::vector<double>> ss, ys;
  std::deque<double> rhos;
  LbfgsResult res;
  double f = fg(x, g);
  if (!std::isfinite(f)) throw NumericError("L-BFGS: non-finite objective at start");
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (max_abs(g) < opt.gradient_tolerance) {
      res.converged = true;
      break;
    }
    // Two-loop recursion: d = -H g.
    d = g;
    std::vector<double> alpha(ss.size());
    for (std::size_t k = ss.size(); k-- > 0;) {
      alpha[k] = rhos[k] * dot(ss[k], d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * ys[k][i];
    }
    if (!ss.empty()) {
      const double gamma = dot(ss.back(), ys.back()) / dot(ys.back(), ys.back());
      for (double& e : d) e *= gamma;
    }
    for (std::size_t k = 0; k < ss.size(); ++k) {
      const double beta = rhos[k] * dot(ys[k], d);
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - beta) * ss[k][i];
    }
    for (double& e : d) e = -e;
    double slope = dot(g, d);
    if (slope >= 0.0) {  // not a descent direction: restart from steepest descent
      ss.clear();
      ys.clear();
      rhos.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope = dot(g, d);
    }
    double step = ss.empty() ? std::min(1.0, 1.0 / std::max(1e-12, std::sqrt(-slope))) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12) {
      ss.push_back(std::move(s));
      ys.push_back(std::move(y));
      rhos.push_back(1.0 / sy);
      if (ss.size() > opt.history) {
        ss.pop_front();
        ys.pop_front();
        rhos.pop_front();
      }
    }
    const double change = std::abs(f - f_new);
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    if (change <= opt.relative_tolerance * std::max({std::abs(f), std::abs(f_new), 1.0})) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }
  res.value = f;
  return res;
}

// ------------------------------------------------------ logistic regression

/// Multinomial logistic regression with per-example weights and L2
/// penalty 1/(2C)·||W||² on the weights (bias unpenalised).
class LogisticRegression {
 public:
  explicit LogisticRegression(double c = 1.0, LbfgsOptions opt = {}) : c_(c), opt_(opt) {
    if (!(c > 0.0)) throw ConfigError("logistic regression C must be positive");
  }

  LbfgsResult fit(const std::vector<SparseVector>& xs, const std::vector<std::size_t>& ys,
                  const std::vector<double>& weights, std::size_t num_features,
                  std::size_t num_classes) {
    if (xs.size() != ys.size() || xs.size() != weights.size()) {
      throw DataError("logistic regression: inconsistent training arrays");
    }
    d_ = num_features;
    k_ = num_classes;
    std::vector<double> theta(k_ * (d_ + 1), 0.0);
    auto fg = [&](const std::vector<double>& th, std::vector<double>& grad) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double f = 0.0;
      std::vector<double> z(k_);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        logits(th, xs[i], z);
        const double m = *std::max_element(z.begin(), z.end());
        double se = 0.0;
        for (double v : z) se += std::exp(v - m);
        const double lse = m + std::log(se);
        f += weights[i] * (lse - z[ys[i]]);
        for (std::size_t c = 0; c < k_; ++c) {
          const double r = weights[i] * (std::exp(z[c] - lse) - (c == ys[i] ? 1.0 : 0.0));
          double* gc = &grad[c * (d_ + 1)];
          for (const auto& [j, v] : xs[i]) gc[j] += r * v;
          gc[d_] += r;
        }
      }
      const double lam = 1.0 / c_;
      for (std::size_t c = 0; c < k_; ++c) {
        for (std::size_t j = 0; j < d_; ++j) {
          const double w = th[c * (d_ + 1) + j];
          f += 0.5 * lam * w * w;
          grad[c * (d_ + 1) + j] += lam * w;
        }
      }
      return f;
    };
    const auto res = lbfgs_minimize(theta, fg, opt_);
    theta_ = std::move(theta);
    return res;
  }

  std::size_t predict(const SparseVector& x) const {
    std::vector<double> z(k_);
    logits(theta_, x, z);
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }

 private:
  void logits(const std::vector<double>& th, const SparseVector& x, std::vector<double>& z) const {
    for (std::size_t c = 0; c < k_; ++c) {
      const double* wc = &th[c * (d_ + 1)];
      double s = wc[d_];
      for (const auto& [j, v] : x) s += wc[j] * v;
      z[c] = s;
    }
  }

  double c_;
  LbfgsOptions opt_;
  std::size_t d_ = 0, k_ = 0;
  std::vector<double> theta_;
};

/// TF-IDF features: vocabulary fit on "target context", each side
/// transformed separately and concatenated.
class TfidfLogReg {
 public:
  explicit TfidfLogReg(std::size_t max_features = 15000, double c = 1.0)
      : vectorizer_(max_features), model_(c) {}

  LbfgsResult fit(const std::vector<StanceExample>& train, const LabelInventory& inventory) {
    if (train.empty()) throw DataError("logistic regression needs training data");
    inventory_ = &inventory;
    std::vector<std::string> docs;
    for (const auto& e : train) docs.push_back(e.target + " " + e.context);
    vectorizer_.fit(docs);
    const auto cw = class_weights(train, inventory);
    std::vector<SparseVector> xs;
    std::vector<std::size_t> ys;
    std::vector<double> ws;
    for (const auto& e : train) {
      xs.push_back(features({e.id, e.target, e.context}));
      ys.push_back(inventory.index_of(e.label));
      ws.push_back(cw.at(e.label));
    }
    return model_.fit(xs, ys, ws, 2 * vectorizer_.size(), inventory.size());
  }

  SparseVector features(const StanceInput& in) const {
    SparseVector v = vectorizer_.transform(in.target);
    for (const auto& [j, x] : vectorizer_.transform(in.context)) v.emplace_back(j + vectorizer_.size(), x);
    return v;
  }

  std::vector<std::string> predict(const std::vector<StanceInput>& inputs) const {
    std::vector<std::string> out;
    for (const auto& in : inputs) out.push_back(inventory_->labels()[model_.predict(features(in))]);
    return out;
  }

  const TfidfVectorizer& vectorizer() const { return vectorizer_; }

 private:
  TfidfVectorizer vectorizer_;
  LogisticRegression model_;
  const LabelInventory* inventory_ = nullptr;
};

inline F1Result logreg_baseline(const std::vector<StanceExample>& train,
                                const std::vector<StanceExample>& test,
                                const LabelInventory& inventory) {
  TfidfLogReg clf;
  clf.fit(train, inventory);
  return f1_scores(gold_of(test), clf.predict(inputs_of(test)), inventory);
}

// -------------------------------------------------- sequence classification

/// Fine-tunes a linear head over the BOS state with the shared trainer and
/// scores the test split.
inline F1Result cls_finetune_baseline(const Dataset& dataset, std::unique_ptr<Backbone> backbone,
                                      const TrainConfig& config, std::uint64_t seed,
                                      TrainResult* trace = nullptr) {
  ClsModel model(std::move(backbone), seed);
  const auto pool = make_pool(dataset.splits.train, dataset.inventory);
  model.set_class_weights(dataset.name(),
                          class_weights(dataset.splits.train, *dataset.inventory));
  auto res = train(model, pool, dev_sets({dataset}), config, seed);
  if (trace) *trace = std::move(res);
  const auto preds = model.predict(dataset.splits.test, *dataset.inventory);
  std::vector<std::string> pred;
  for (const auto& p : preds) pred.push_back(p.pred);
  return f1_scores(gold_of(dataset.splits.test), pred, *dataset.inventory);
}

}  // namespace stance
