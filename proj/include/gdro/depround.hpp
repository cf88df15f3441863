#pragma once

// Dependent rounding: turns a marginal vector p with integral sum k into a
// random subset of exactly k indices with Pr[i in subset] = p_i.

#include "gdro/error.hpp"
#include "gdro/rng.hpp"
#include "gdro/types.hpp"

#include <cassert>
#include <cmath>
#include <concepts>
#include <span>
#include <vector>

namespace gdro {

inline constexpr double depround_snap = 1e-12;
inline constexpr double depround_sum_tolerance = 1e-9;

/// Source of binary decisions: chooser(prob_first) returns true to take the
/// first branch. Any such callable drives dep_round; tests use this to walk
/// every branch explicitly.
template <typename F>
concept BranchChooser = requires(F f, double p) {
    { f(p) } -> std::convertible_to<bool>;
};

namespace detail {

inline double snap_unit(double x) {
    if (x < depround_snap) return 0.0;
    if (x > 1.0 - depround_snap) return 1.0;
    return x;
}

inline bool fractional(double x) { return x > 0.0 && x < 1.0; }

} // namespace detail

/// Validates p and returns k = round(sum p).
inline std::size_t depround_cardinality(std::span<const double> p) {
    double sum = 0.0;
    for (double x : p) {
        if (!std::isfinite(x) || x < 0.0 || x > 1.0)
            throw InvalidMarginals("dep_round: marginal outside [0,1]");
        sum += x;
    }
    const double k = std::round(sum);
    if (std::abs(sum - k) > depround_sum_tolerance)
        throw InvalidMarginals("dep_round: marginals sum to non-integer " + std::to_string(sum));
    return static_cast<std::size_t>(k);
}

/// Always resolves the two lowest-index fractional entries, so the walk is a
/// single left-to-right pass: `lo` is the lowest fractional entry and each
/// step pairs it with the next fractional one. Returns indices ascending.
template <BranchChooser Chooser>
std::vector<GroupIndex> dep_round(std::span<const double> marginals, Chooser&& choose) {
    const std::size_t k = depround_cardinality(marginals);
    std::vector<double> p(marginals.begin(), marginals.end());
    for (double& x : p) x = detail::snap_unit(x);

    const std::size_t m = p.size();
    std::size_t lo = 0;
    while (lo < m && !detail::fractional(p[lo])) ++lo;
    for (std::size_t j = lo + 1; lo < m && j < m; ++j) {
        if (!detail::fractional(p[j])) continue;
        const double alpha = std::min(1.0 - p[lo], p[j]);
        const double beta = std::min(p[lo], 1.0 - p[j]);
        assert(alpha > 0.0 && beta > 0.0);
        if (choose(beta / (alpha + beta))) {
            p[lo] += alpha;
            p[j] -= alpha;
        } else {
            p[lo] -= beta;
            p[j] += beta;
        }
        p[lo] = detail::snap_unit(p[lo]);
        p[j] = detail::snap_unit(p[j]);
        if (!detail::fractional(p[lo])) {
            lo = j;
            while (lo < m && !detail::fractional(p[lo])) ++lo;
            j = lo;
        }
    }
    // A lone leftover within the sum tolerance of an integer is rounding residue.
    if (lo < m) p[lo] = std::round(p[lo]);

    std::vector<GroupIndex> out;
    out.reserve(k);
    for (std::size_t i = 0; i < m; ++i)
        if (p[i] == 1.0) out.push_back(i);
    assert(out.size() == k);
    return out;
}

inline std::vector<GroupIndex> dep_round(std::span<const double> marginals, RandomStream& rng) {
    return dep_round(marginals, [&rng](double prob_first) { return rng.uniform01() < prob_first; });
}

} // namespace gdro
