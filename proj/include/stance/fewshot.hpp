#pragma once

// Few-shot subset sampling with per-class coverage, and multi-dataset
// training pools.

#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "stance/data_model.hpp"
#include "stance/error.hpp"
#include "stance/log.hpp"
#include "stance/random.hpp"

namespace stance {

struct ShotSpec {
  std::optional<std::size_t> k;  ///< nullopt means ALL
  std::size_t repeats = 3;
  std::uint64_t seed = 0;

  bool is_all() const { return !k.has_value(); }
  bool is_zero_shot() const { return k.has_value() && *k == 0; }

  static ShotSpec all(std::size_t repeats = 3, std::uint64_t seed = 0) {
    return {std::nullopt, repeats, seed};
  }

  static std::optional<std::size_t> parse_k(const std::string& s) {
    if (s == "all" || s == "ALL") return std::nullopt;
    if (s.empty() || !std::isdigit(static_cast<unsigned char>(s[0]))) {
      throw ConfigError("shots must be a non-negative integer or 'all', got '" + s + "'");
    }
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError("shots must be a non-negative integer or 'all', got '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError("bad shots value '" + s + "'");
    return static_cast<std::size_t>(v);
  }

  std::string k_string() const { return k ? std::to_string(*k) : "all"; }
};

namespace detail {

inline std::vector<StanceExample> sample_one_subset(const std::vector<StanceExample>& train,
                                                    std::size_t k,
                                                    const std::set<std::string>& classes,
                                                    Rng& rng) {
  constexpr int kMaxAttempts = 1000;
  std::vector<std::size_t> picked;
  auto covers = [&](const std::vector<std::size_t>& idx) {
    std::set<std::string> seen;
    for (auto i : idx) seen.insert(train[i].label);
    return seen.size() == classes.size();
  };
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    picked = rng.sample_indices(train.size(), k);
    if (covers(picked)) break;
  }
  if (!covers(picked)) {
    // Repair: swap one random instance of each missing class into a slot
    // whose class is represented more than once.
    std::map<std::string, std::size_t> count;
    std::set<std::size_t> in_subset(picked.begin(), picked.end());
    for (auto i : picked) ++count[train[i].label];
    for (const auto& c : classes) {
      if (count[c] > 0) continue;
      std::vector<std::size_t> donors;
      for (std::size_t i = 0; i < train.size(); ++i) {
        if (train[i].label == c && !in_subset.count(i)) donors.push_back(i);
      }
      std::vector<std::size_t> slots;
      for (std::size_t s = 0; s < picked.size(); ++s) {
        if (count[train[picked[s]].label] > 1) slots.push_back(s);
      }
      const std::size_t donor = donors[rng.index(donors.size())];
      const std::size_t slot = slots[rng.index(slots.size())];
      --count[train[picked[slot]].label];
      in_subset.erase(picked[slot]);
      picked[slot] = donor;
      in_subset.insert(donor);
      ++count[c];
    }
  }
  std::vector<StanceExample> out;
  out.reserve(picked.size());
  for (auto i : picked) out.push_back(train[i]);
  return out;
}

}  // namespace detail

/// `spec.repeats` subsets of exactly k training examples, each covering
/// every class present in `train`. Subsets may overlap. Repeat r is drawn
/// from its own stream derive_seed(seed, r).
inline std::vector<std::vector<StanceExample>> sample_shots(
    const std::vector<StanceExample>& train, const ShotSpec& spec,
    const LabelInventory& inventory) {
  std::vector<std::vector<StanceExample>> out;
  if (spec.repeats == 0) throw ConfigError("repeats must be at least 1");
  if (spec.is_all()) {
    out.assign(spec.repeats, train);
    return out;
  }
  const std::size_t k = *spec.k;
  if (k == 0) {
    out.assign(spec.repeats, {});
    return out;
  }
  if (k > train.size()) {
    throw ConfigError("requested " + std::to_string(k) + " shots but '" + inventory.dataset() +
                      "' has only " + std::to_string(train.size()) + " training examples");
  }
  std::set<std::string> present;
  for (const auto& ex : train) present.insert(ex.label);
  for (const auto& l : inventory.labels()) {
    if (!present.count(l)) {
      log::warn("class '" + l + "' of '" + inventory.dataset() +
                "' has no training instance; sampling over present classes");
    }
  }
  if (k < present.size()) {
    throw ConfigError("k=" + std::to_string(k) + " is smaller than the " +
                      std::to_string(present.size()) + " classes present in '" +
                      inventory.dataset() + "'");
  }
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    Rng rng(derive_seed(spec.seed, r));
    out.push_back(detail::sample_one_subset(train, k, present, rng));
  }
  return out;
}

/// A training example tagged with the inventory its loss must use.
struct PoolItem {
  StanceExample example;
  std::shared_ptr<const LabelInventory> inventory;
};

inline std::vector<PoolItem> make_pool(const std::vector<StanceExample>& examples,
                                       std::shared_ptr<const LabelInventory> inv) {
  std::vector<PoolItem> pool;
  pool.reserve(examples.size());
  for (const auto& ex : examples) pool.push_back({ex, inv});
  return pool;
}

/// Concatenates the repeat-`repeat` shot subset of every dataset and
/// shuffles the result deterministically.
inline std::vector<PoolItem> build_mdl_pool(const std::vector<Dataset>& datasets,
                                            const ShotSpec& spec, std::size_t repeat = 0) {
  std::vector<PoolItem> pool;
  ShotSpec one = spec;
  one.repeats = repeat + 1;
  for (const auto& ds : datasets) {
    auto subsets = sample_shots(ds.splits.train, one, *ds.inventory);
    for (auto& ex : subsets[repeat]) pool.push_back({std::move(ex), ds.inventory});
  }
  Rng rng(derive_seed(spec.seed ^ 0x6d646cULL, repeat));
  rng.shuffle(pool);
  return pool;
}

/// {"dataset", "k", "seed", "repeats": [[ids...], ...]}
inline nlohmann::json shot_manifest(const std::string& dataset, const ShotSpec& spec,
                                    const std::vector<std::vector<StanceExample>>& subsets) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& s : subsets) {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& ex : s) ids.push_back(ex.id);
    reps.push_back(ids);
  }
  return {{"dataset", dataset}, {"k", spec.k_string()}, {"seed", spec.seed}, {"repeats", reps}};
}

}  // namespace stance
