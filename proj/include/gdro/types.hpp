#pragma once

// Value types shared by the players, the environment and the orchestrator.
// Every constructor validates its invariant and throws ValidationError;
// nothing is silently renormalized or clipped here.

#include "gdro/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gdro {

using GroupIndex = std::size_t;

inline constexpr double simplex_tolerance = 1e-9;
inline constexpr double ball_tolerance = 1e-9;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// A point of the probability simplex over m groups.
class SimplexWeights {
public:
    explicit SimplexWeights(std::vector<double> weights) : weights_(std::move(weights)) {
        if (weights_.empty()) throw ValidationError("SimplexWeights: need at least one group");
        double sum = 0.0;
        for (double w : weights_) {
            if (!std::isfinite(w) || w < 0.0)
                throw ValidationError("SimplexWeights: negative or non-finite entry");
            sum += w;
        }
        if (std::abs(sum - 1.0) > simplex_tolerance)
            throw ValidationError("SimplexWeights: entries sum to " + std::to_string(sum));
    }

    static SimplexWeights uniform(std::size_t m) {
        if (m == 0) throw ValidationError("SimplexWeights: need at least one group");
        return SimplexWeights(std::vector<double>(m, 1.0 / static_cast<double>(m)));
    }

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](GroupIndex i) const { return weights_[i]; }
    std::span<const double> weights() const noexcept { return weights_; }

    friend bool operator==(const SimplexWeights&, const SimplexWeights&) = default;

private:
    std::vector<double> weights_;
};

/// The w-player's iterate, a member of the Euclidean ball of radius R.
class ModelPoint {
public:
    ModelPoint(std::vector<double> coords, double radius_bound)
        : coords_(std::move(coords)), radius_(radius_bound) {
        if (!(radius_ > 0.0) || !std::isfinite(radius_))
            throw ValidationError("ModelPoint: radius must be positive");
        for (double c : coords_)
            if (!std::isfinite(c)) throw ValidationError("ModelPoint: non-finite coordinate");
        if (norm2(coords_) > radius_ + ball_tolerance)
            throw ValidationError("ModelPoint: outside the ball");
    }

    static ModelPoint origin(std::size_t d, double radius_bound) {
        return ModelPoint(std::vector<double>(d, 0.0), radius_bound);
    }

    std::size_t dim() const noexcept { return coords_.size(); }
    double radius() const noexcept { return radius_; }
    std::span<const double> coords() const noexcept { return coords_; }
    double operator[](std::size_t i) const { return coords_[i]; }

    friend bool operator==(const ModelPoint&, const ModelPoint&) = default;

private:
    std::vector<double> coords_;
    double radius_;
};

/// Number of groups that may be queried in one round, 1 <= r <= m.
class QueryBudget {
public:
    QueryBudget(std::int64_t r, std::size_t m) : r_(r) {
        if (r < 1 || static_cast<std::size_t>(r) > m)
            throw ValidationError("QueryBudget: r=" + std::to_string(r) + " outside [1," +
                                  std::to_string(m) + "]");
    }

    std::size_t r() const noexcept { return static_cast<std::size_t>(r_); }
    bool single() const noexcept { return r_ == 1; }

    friend bool operator==(const QueryBudget&, const QueryBudget&) = default;

private:
    std::int64_t r_;
};

/// The groups queried in one round: the anchor drawn from q plus the extras.
class SelectionRecord {
public:
    SelectionRecord(GroupIndex anchor, std::vector<GroupIndex> extras, QueryBudget budget,
                    std::size_t m)
        : anchor_(anchor), extras_(std::move(extras)), budget_(budget) {
        std::sort(extras_.begin(), extras_.end());
        if (anchor_ >= m) throw ValidationError("SelectionRecord: anchor out of range");
        if (std::adjacent_find(extras_.begin(), extras_.end()) != extras_.end())
            throw ValidationError("SelectionRecord: duplicate extra index");
        for (GroupIndex i : extras_) {
            if (i >= m) throw ValidationError("SelectionRecord: extra index out of range");
            if (i == anchor_) throw ValidationError("SelectionRecord: anchor repeated in extras");
        }
        if (extras_.size() + 1 != budget_.r())
            throw ValidationError("SelectionRecord: |all| != r");
        all_ = extras_;
        all_.insert(std::upper_bound(all_.begin(), all_.end(), anchor_), anchor_);
    }

    GroupIndex anchor() const noexcept { return anchor_; }
    /// Sorted ascending.
    std::span<const GroupIndex> extras() const noexcept { return extras_; }
    /// Anchor and extras, sorted ascending.
    std::span<const GroupIndex> all() const noexcept { return all_; }
    QueryBudget budget() const noexcept { return budget_; }
    bool contains(GroupIndex i) const {
        return std::binary_search(all_.begin(), all_.end(), i);
    }

    friend bool operator==(const SelectionRecord&, const SelectionRecord&) = default;

private:
    GroupIndex anchor_;
    std::vector<GroupIndex> extras_;
    std::vector<GroupIndex> all_;
    QueryBudget budget_;
};

/// Realized stochastic losses s_hat for the queried groups only.
class ObservedLosses {
public:
    struct Entry {
        GroupIndex group;
        double value;
        friend bool operator==(const Entry&, const Entry&) = default;
    };

    ObservedLosses() = default;
    explicit ObservedLosses(std::vector<Entry> entries) : entries_(std::move(entries)) {
        std::sort(entries_.begin(), entries_.end(),
                  [](const Entry& a, const Entry& b) { return a.group < b.group; });
        for (std::size_t k = 0; k < entries_.size(); ++k) {
            const double v = entries_[k].value;
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError("ObservedLosses: value outside [0,1]");
            if (k > 0 && entries_[k - 1].group == entries_[k].group)
                throw ValidationError("ObservedLosses: duplicate group");
        }
    }

    /// Sorted by group index.
    std::span<const Entry> entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    bool covers_exactly(std::span<const GroupIndex> groups) const {
        if (groups.size() != entries_.size()) return false;
        for (std::size_t k = 0; k < groups.size(); ++k)
            if (groups[k] != entries_[k].group) return false;
        return true;
    }

    friend bool operator==(const ObservedLosses&, const ObservedLosses&) = default;

private:
    std::vector<Entry> entries_;
};

/// Dense importance-weighted loss estimate over all m groups.
class EstimatedLossVector {
public:
    explicit EstimatedLossVector(std::vector<double> entries) : entries_(std::move(entries)) {
        for (double e : entries_)
            if (!std::isfinite(e) || e < 0.0)
                throw ValidationError("EstimatedLossVector: negative or non-finite entry");
    }

    std::size_t size() const noexcept { return entries_.size(); }
    double operator[](GroupIndex i) const { return entries_[i]; }
    std::span<const double> entries() const noexcept { return entries_; }

private:
    std::vector<double> entries_;
};

enum class PlaMode { unified, hybrid };

inline std::string to_string(PlaMode mode) {
    return mode == PlaMode::unified ? "unified" : "hybrid";
}

/// Cumulative loss estimates and step-size accumulators of the q-player.
///
/// All counters are kept in both modes: `inv_budget_sum` always equals
/// `single_count + multi_inv_budget_sum`. Only the sums relevant to the
/// mode feed the weights (`cum_loss` for unified, the split pair for hybrid).
struct PlaState {
    PlaMode mode = PlaMode::unified;
    std::vector<double> cum_loss;
    std::vector<double> cum_loss_single;
    std::vector<double> cum_loss_multi;
    double inv_budget_sum = 0.0;
    std::int64_t single_count = 0;
    double multi_inv_budget_sum = 0.0;
    std::int64_t round = 0;

    static PlaState initial(PlaMode mode, std::size_t m) {
        PlaState s;
        s.mode = mode;
        s.cum_loss.assign(m, 0.0);
        s.cum_loss_single.assign(m, 0.0);
        s.cum_loss_multi.assign(m, 0.0);
        return s;
    }

    std::size_t groups() const noexcept { return cum_loss.size(); }

    void validate() const {
        const std::size_t m = cum_loss.size();
        if (cum_loss_single.size() != m || cum_loss_multi.size() != m)
            throw ValidationError("PlaState: dimension mismatch");
        for (const auto* v : {&cum_loss, &cum_loss_single, &cum_loss_multi})
            for (double x : *v)
                if (!std::isfinite(x) || x < 0.0)
                    throw ValidationError("PlaState: negative or non-finite cumulative loss");
        const double split = static_cast<double>(single_count) + multi_inv_budget_sum;
        if (std::abs(inv_budget_sum - split) > 1e-9 * std::max(1.0, inv_budget_sum))
            throw ValidationError("PlaState: budget accumulators out of sync");
    }

    friend bool operator==(const PlaState&, const PlaState&) = default;
};

/// Cumulative stochastic gradient of the w-player.
struct OcoState {
    std::vector<double> cum_grad;
    std::int64_t round = 0;
    double diameter = 1.0;
    double grad_bound = 1.0;

    static OcoState initial(std::size_t d, double diameter, double grad_bound) {
        if (!(diameter > 0.0) || !(grad_bound > 0.0))
            throw ValidationError("OcoState: diameter and gradient bound must be positive");
        return OcoState{std::vector<double>(d, 0.0), 0, diameter, grad_bound};
    }

    void validate() const {
        if (norm2(cum_grad) > static_cast<double>(round) * grad_bound + 1e-6)
            throw ValidationError("OcoState: cumulative gradient exceeds t*G");
    }

    friend bool operator==(const OcoState&, const OcoState&) = default;
};

} // namespace gdro
