#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "repsim/errors.hpp"
#include "repsim/numerics.hpp"

namespace repsim {

/// How pivot/subset pairs are visited when averaging over label subsets.
struct SubsetPlan {
  enum class Mode { exact, sampled };

  Mode mode = Mode::exact;
  std::size_t subsets_per_pivot = 200;  ///< sampled mode only
  std::uint64_t rng_seed = 0;
  std::uint64_t exact_cap = 10000;      ///< largest C(k-1, m) allowed in exact mode

  static SubsetPlan exact() { return {}; }

  static SubsetPlan sampled(std::size_t per_pivot, std::uint64_t seed) {
    SubsetPlan p;
    p.mode = Mode::sampled;
    p.subsets_per_pivot = per_pivot;
    p.rng_seed = seed;
    return p;
  }

  /// Exact when the enumeration fits under the cap, else 200 random subsets per pivot.
  static SubsetPlan automatic(std::size_t k, std::size_t m, std::uint64_t seed = 0) {
    SubsetPlan p;
    if (binomial(k - 1, m) > p.exact_cap) {
      p.mode = Mode::sampled;
      p.rng_seed = seed;
    }
    return p;
  }

  std::string describe() const {
    return mode == Mode::exact ? std::string("exact")
                               : "sampled(" + std::to_string(subsets_per_pivot) + ")";
  }
};

namespace detail {

inline std::vector<std::size_t> labels_without(std::size_t k, std::size_t pivot) {
  std::vector<std::size_t> out;
  out.reserve(k - 1);
  for (std::size_t i = 0; i < k; ++i) {
    if (i != pivot) {
      out.push_back(i);
    }
  }
  return out;
}

}  // namespace detail

/// All subsets for one pivot in lexicographic order of member labels.
inline std::vector<LabelSubset> enumerate_subsets(std::size_t k, std::size_t m, std::size_t pivot) {
  const auto others = detail::labels_without(k, pivot);
  std::vector<LabelSubset> out;
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  do {
    LabelSubset s{pivot, {}};
    s.members.reserve(m);
    for (std::size_t i : idx) {
      s.members.push_back(others[i]);
    }
    out.push_back(std::move(s));
  } while (next_combination(idx, others.size()));
  return out;
}

/// Ordered list of (pivot, subset) pairs the plan visits; deterministic given the seed.
inline std::vector<LabelSubset> plan_subsets(std::size_t k, std::size_t m, const SubsetPlan& plan) {
  if (m == 0 || k < m + 1) {
    throw ContractViolation("plan_subsets: need k >= m + 1 and m >= 1");
  }
  const std::uint64_t per_pivot_total = binomial(k - 1, m);
  std::vector<LabelSubset> out;
  if (plan.mode == SubsetPlan::Mode::exact) {
    if (per_pivot_total > plan.exact_cap) {
      throw ContractViolation("plan_subsets: C(k-1, m) = " + std::to_string(per_pivot_total) +
                              " exceeds exact-mode cap " + std::to_string(plan.exact_cap));
    }
    for (std::size_t p = 0; p < k; ++p) {
      auto subs = enumerate_subsets(k, m, p);
      out.insert(out.end(), subs.begin(), subs.end());
    }
    return out;
  }
  if (plan.subsets_per_pivot == 0) {
    throw ContractViolation("plan_subsets: sampled mode needs subsets_per_pivot > 0");
  }
  for (std::size_t p = 0; p < k; ++p) {
    if (plan.subsets_per_pivot >= per_pivot_total) {
      auto subs = enumerate_subsets(k, m, p);
      out.insert(out.end(), subs.begin(), subs.end());
      continue;
    }
    std::mt19937_64 rng(mix_seed(plan.rng_seed, p));
    auto others = detail::labels_without(k, p);
    std::set<std::vector<std::size_t>> seen;
    while (seen.size() < plan.subsets_per_pivot) {
      // Partial Fisher-Yates: uniform m-subset of the remaining labels.
      for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
        std::swap(others[i], others[pick(rng)]);
      }
      std::vector<std::size_t> members(others.begin(), others.begin() + static_cast<long>(m));
      std::sort(members.begin(), members.end());
      if (seen.insert(members).second) {
        out.push_back(LabelSubset{p, std::move(members)});
      }
    }
  }
  return out;
}

}  // namespace repsim
