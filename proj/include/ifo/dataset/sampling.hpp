#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ifo/dataset/interaction.hpp"
#include "ifo/error.hpp"
#include "ifo/random.hpp"

namespace ifo::data {

namespace detail {
// Quotas and remainders closer than this are treated as equal, so that values
// that are equal as fractions but differ in the last bit break ties by action id.
inline constexpr double kQuotaTolerance = 1e-9;
}  // namespace detail

/// Action frequencies over every interaction of the set.
inline ActionDistribution empirical_action_distribution(const InteractionSet& set) {
  if (set.empty()) throw ContractError("empirical_action_distribution on an empty set");
  std::vector<double> counts(set.action_count, 0.0);
  for (const auto& it : set.interactions) counts.at(static_cast<std::size_t>(it.action)) += 1.0;
  const double n = static_cast<double>(set.size());
  for (double& c : counts) c /= n;
  return {counts, counts};
}

/// Action frequencies within a single run, P(A | e).
inline std::vector<double> run_action_distribution(const InteractionSet& set, const RunRecord& run) {
  std::vector<double> counts(set.action_count, 0.0);
  if (run.indices.empty()) return counts;
  for (std::size_t idx : run.indices) {
    counts.at(static_cast<std::size_t>(set.interactions.at(idx).action)) += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(run.indices.size());
  return counts;
}

/// Fraction of runs that reached the goal, P(g | E).
inline double win_probability(std::span<const RunRecord> runs) {
  if (runs.empty()) throw ContractError("win_probability needs at least one run");
  const auto wins = std::count_if(runs.begin(), runs.end(), [](const auto& r) { return r.success; });
  return static_cast<double>(wins) / static_cast<double>(runs.size());
}

/// Sum over runs of v_e * P(A | e), divided by the number of runs |E|.
/// `raw_mass` holds that value; `probs` is it renormalised to sum to one, or
/// all zeros when no run succeeded.
inline ActionDistribution post_demo_distribution(const InteractionSet& pos) {
  if (pos.runs.empty()) throw ContractError("post_demo_distribution needs at least one run");
  std::vector<double> mass(pos.action_count, 0.0);
  for (const auto& run : pos.runs) {
    if (!run.success) continue;
    const auto p = run_action_distribution(pos, run);
    for (std::size_t a = 0; a < mass.size(); ++a) mass[a] += p[a];
  }
  for (double& m : mass) m /= static_cast<double>(pos.runs.size());
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  std::vector<double> probs(mass.size(), 0.0);
  if (total > 0.0) {
    for (std::size_t a = 0; a < mass.size(); ++a) probs[a] = mass[a] / total;
  }
  return {probs, mass};
}

/// round(win_probability * total), halves rounded up.
inline std::size_t post_sample_size(double win_probability, std::size_t total) {
  if (!(win_probability >= 0.0 && win_probability <= 1.0)) {
    throw ContractError("win probability " + std::to_string(win_probability) + " outside [0, 1]");
  }
  const double exact = win_probability * static_cast<double>(total);
  const auto n = static_cast<std::size_t>(std::floor(exact + 0.5 + detail::kQuotaTolerance));
  return std::min(n, total);
}

/// Splits `total` into integer quotas proportional to `weights` by the
/// largest-remainder method. Ties go to the lowest index; zero weights never
/// receive a unit.
inline std::vector<std::size_t> allocate_quotas(std::span<const double> weights, std::size_t total) {
  std::vector<std::size_t> quotas(weights.size(), 0);
  if (total == 0) return quotas;
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0)) throw ContractError("cannot allocate a positive total over zero weights");

  std::vector<double> remainder(weights.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    const double whole = std::floor(exact + detail::kQuotaTolerance);
    quotas[i] = static_cast<std::size_t>(whole);
    remainder[i] = exact - whole;
    assigned += quotas[i];
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + detail::kQuotaTolerance;
  });
  for (std::size_t k = 0; assigned < total && k < order.size(); ++k, ++assigned) ++quotas[order[k]];
  return quotas;
}

namespace detail {

// Draws `quota` indices from `stratum`: without replacement when it is large
// enough, otherwise the whole stratum plus the shortfall drawn with replacement.
inline void draw_from_stratum(std::vector<std::size_t> stratum, std::size_t quota, Rng& rng,
                              std::vector<std::size_t>& out) {
  if (quota == 0) return;
  if (stratum.empty()) throw ContractError("positive quota for an empty action stratum");
  if (stratum.size() >= quota) {
    for (std::size_t i = 0; i < quota; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(stratum.size() - i));
      std::swap(stratum[i], stratum[j]);
      out.push_back(stratum[i]);
    }
    return;
  }
  out.insert(out.end(), stratum.begin(), stratum.end());
  for (std::size_t i = stratum.size(); i < quota; ++i) {
    out.push_back(stratum[rng.below(stratum.size())]);
  }
}

inline std::vector<Interaction> stratified_draw(const InteractionSet& set,
                                                const std::vector<std::size_t>& candidates,
                                                std::span<const double> weights, std::size_t total,
                                                Rng& rng) {
  const auto quotas = allocate_quotas(weights, total);
  std::vector<std::vector<std::size_t>> strata(set.action_count);
  for (std::size_t idx : candidates) {
    strata.at(static_cast<std::size_t>(set.interactions[idx].action)).push_back(idx);
  }
  std::vector<std::size_t> picked;
  picked.reserve(total);
  for (std::size_t a = 0; a < strata.size(); ++a) draw_from_stratum(strata[a], quotas[a], rng, picked);
  std::vector<Interaction> out;
  out.reserve(picked.size());
  for (std::size_t idx : picked) out.push_back(set.interactions[idx]);
  return out;
}

}  // namespace detail

/// Draws round(P(g|E) * total) interactions from the successful runs of `pos`,
/// with per-action counts following post_demo_distribution.
inline std::vector<Interaction> sample_post(const InteractionSet& pos, std::size_t total, Rng& rng) {
  const double p_win = win_probability(pos.runs);
  const std::size_t n_pos = post_sample_size(p_win, total);
  if (n_pos == 0) return {};
  const auto dist = post_demo_distribution(pos);
  if (dist.is_zero()) return {};
  std::vector<std::size_t> candidates;
  for (const auto& run : pos.runs) {
    if (run.success) candidates.insert(candidates.end(), run.indices.begin(), run.indices.end());
  }
  return detail::stratified_draw(pos, candidates, dist.probs, n_pos, rng);
}

/// Draws the complement total - round(P(g|E) * total) from `pre`, with
/// per-action counts following its empirical action distribution.
inline std::vector<Interaction> sample_pre(const InteractionSet& pre, double win_prob,
                                           std::size_t total, Rng& rng) {
  const std::size_t n_pre = total - post_sample_size(win_prob, total);
  if (n_pre == 0) return {};
  const auto dist = empirical_action_distribution(pre);
  std::vector<std::size_t> candidates(pre.size());
  std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  return detail::stratified_draw(pre, candidates, dist.probs, n_pre, rng);
}

/// Concatenation of both samples, shuffled.
inline InteractionSet compose_training_set(std::string env_id, std::size_t action_count,
                                           std::vector<Interaction> pre_sample,
                                           std::vector<Interaction> pos_sample, Rng& rng) {
  InteractionSet out;
  out.kind = SetKind::Composed;
  out.env_id = std::move(env_id);
  out.action_count = action_count;
  out.interactions = std::move(pre_sample);
  out.interactions.insert(out.interactions.end(), std::make_move_iterator(pos_sample.begin()),
                          std::make_move_iterator(pos_sample.end()));
  rng.shuffle(std::span(out.interactions));
  return out;
}

}  // namespace ifo::data
