#pragma once

// The q-player: prediction with limited advice over m groups.
//
// Each round the environment reveals a budget r_t. The player forms FTRL
// weights q_t (exponential weights on cumulative estimated losses), draws an
// anchor group from q_t and, when r_t >= 2, r_t - 1 further groups uniformly
// without replacement by dependent rounding. Observed losses are turned into
// an importance-weighted estimate, implicit-exploration (IX) shifted when
// r_t = 1 and unbiased when r_t >= 2.
//
// Two strategies share all of this and differ only in bookkeeping:
//   unified  one cumulative estimate, step size from sum_j 1/r_j;
//   hybrid   separate estimates for single- and multi-sample rounds, each
//            with its own step size.

#include "gdro/depround.hpp"
#include "gdro/error.hpp"
#include "gdro/rng.hpp"
#include "gdro/types.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace gdro {

struct StepSizePair {
    double eta_q = 0.0;
    double gamma = 0.0;
};

namespace detail {

inline void require_groups(std::size_t m) {
    if (m < 2) throw DegenerateGroups("q-player needs at least two groups");
}

inline double ftrl_rate(std::size_t m, double budget_weight) {
    return std::sqrt(std::log(static_cast<double>(m)) / (static_cast<double>(m) * budget_weight));
}

} // namespace detail

/// Unified step size for round t. `state` holds rounds 1..t-1; the budget
/// r_t of the current round is folded in here, since it is revealed before
/// q_t is formed.
inline StepSizePair unified_step_size(const PlaState& state, QueryBudget r_t, std::size_t m) {
    detail::require_groups(m);
    if (state.mode != PlaMode::unified) throw ValidationError("unified_step_size: hybrid state");
    const double weight = state.inv_budget_sum + 1.0 / static_cast<double>(r_t.r());
    const double eta = detail::ftrl_rate(m, weight);
    return {eta, 0.5 * eta};
}

/// Hybrid step sizes for round t, same convention as unified_step_size.
/// Multi-sample rounds use the unbiased estimator, which has no IX shift,
/// so gamma is zero there.
inline StepSizePair hybrid_step_sizes(const PlaState& state, QueryBudget r_t, std::size_t m) {
    detail::require_groups(m);
    if (state.mode != PlaMode::hybrid) throw ValidationError("hybrid_step_sizes: unified state");
    if (r_t.single()) {
        const double eta = detail::ftrl_rate(m, static_cast<double>(state.single_count + 1));
        return {eta, 0.5 * eta};
    }
    const double weight = state.multi_inv_budget_sum + 1.0 / static_cast<double>(r_t.r());
    return {detail::ftrl_rate(m, weight), 0.0};
}

inline StepSizePair step_sizes(const PlaState& state, QueryBudget r_t, std::size_t m) {
    return state.mode == PlaMode::unified ? unified_step_size(state, r_t, m)
                                          : hybrid_step_sizes(state, r_t, m);
}

/// Exponential weights exp(-eta * L_i) normalized, computed relative to
/// min L so that large cumulative losses neither overflow nor underflow.
inline SimplexWeights update_weights(std::span<const double> cum_loss, double eta_q) {
    if (cum_loss.empty()) throw ValidationError("update_weights: empty loss vector");
    double lo = std::numeric_limits<double>::infinity();
    for (double l : cum_loss) {
        if (!std::isfinite(l)) throw ValidationError("update_weights: non-finite loss");
        lo = std::min(lo, l);
    }
    std::vector<double> q(cum_loss.size());
    double z = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        q[i] = std::exp(-eta_q * (cum_loss[i] - lo));
        z += q[i];
    }
    for (double& x : q) x /= z;
    return SimplexWeights(std::move(q));
}

/// Weights the state prescribes for a round with budget r_t.
inline SimplexWeights weights_for_round(const PlaState& state, QueryBudget r_t,
                                        const StepSizePair& step) {
    if (state.mode == PlaMode::unified) return update_weights(state.cum_loss, step.eta_q);
    return update_weights(r_t.single() ? state.cum_loss_single : state.cum_loss_multi, step.eta_q);
}

/// Inverse-CDF draw: the smallest i with u < q_1 + ... + q_i. If rounding
/// leaves u beyond the last partial sum, the last positive-weight index wins.
inline GroupIndex sample_anchor(const SimplexWeights& q, double u) {
    double acc = 0.0;
    GroupIndex last_positive = 0;
    for (GroupIndex i = 0; i < q.size(); ++i) {
        if (q[i] > 0.0) last_positive = i;
        acc += q[i];
        if (u < acc && q[i] > 0.0) return i;
    }
    return last_positive;
}

/// Draws r - 1 extras from the groups other than `anchor`, each included
/// with probability (r - 1)/(m - 1).
template <BranchChooser Chooser>
std::vector<GroupIndex> select_extras(GroupIndex anchor, QueryBudget r_t, std::size_t m,
                                      Chooser&& choose) {
    if (r_t.single()) return {};
    const double marginal =
        static_cast<double>(r_t.r() - 1) / static_cast<double>(m - 1);
    const std::vector<double> p(m - 1, marginal);
    std::vector<GroupIndex> picked = dep_round(p, choose);
    for (GroupIndex& i : picked)
        if (i >= anchor) ++i;
    return picked;
}

inline SelectionRecord select_groups(const SimplexWeights& q, QueryBudget r_t,
                                     RandomStream& anchor_rng, RandomStream& depround_rng) {
    const std::size_t m = q.size();
    const GroupIndex anchor = sample_anchor(q, anchor_rng.uniform01());
    auto extras = select_extras(anchor, r_t, m, [&](double prob_first) {
        return depround_rng.uniform01() < prob_first;
    });
    return SelectionRecord(anchor, std::move(extras), r_t, m);
}

/// Probability that group i lands in C_t when r >= 2.
inline double inclusion_probability(double q_i, std::size_t r, std::size_t m) {
    return q_i + (1.0 - q_i) * static_cast<double>(r - 1) / static_cast<double>(m - 1);
}

/// Importance-weighted loss estimate. Unqueried groups are exactly zero.
/// Queried entries are bounded by (m-1)/(r-1) when r >= 2 and by 1/gamma
/// when r = 1.
inline EstimatedLossVector estimate_losses(const ObservedLosses& observed,
                                           const SelectionRecord& sel, const SimplexWeights& q,
                                           const StepSizePair& step, std::size_t m) {
    if (!observed.covers_exactly(sel.all()))
        throw ObservationMismatch("estimate_losses: observed groups differ from the selection");
    if (q.size() != m) throw ValidationError("estimate_losses: weight dimension mismatch");
    const std::size_t r = sel.budget().r();
    std::vector<double> est(m, 0.0);
    for (const auto& [i, s_hat] : observed.entries()) {
        const double denom = r == 1 ? q[i] + step.gamma : inclusion_probability(q[i], r, m);
        if (!(denom > 0.0))
            throw ValidationError("estimate_losses: zero denominator (gamma must be positive when r=1)");
        est[i] = s_hat / denom;
    }
    return EstimatedLossVector(std::move(est));
}

/// Folds one round into the state: adds the estimate to the relevant
/// cumulative loss and advances all counters.
inline PlaState accumulate(PlaState state, const EstimatedLossVector& est, QueryBudget r_t) {
    if (est.size() != state.groups()) throw ValidationError("accumulate: dimension mismatch");
    const double inv_r = 1.0 / static_cast<double>(r_t.r());
    if (state.mode == PlaMode::unified) {
        for (std::size_t i = 0; i < est.size(); ++i) state.cum_loss[i] += est[i];
    } else {
        auto& target = r_t.single() ? state.cum_loss_single : state.cum_loss_multi;
        for (std::size_t i = 0; i < est.size(); ++i) target[i] += est[i];
    }
    state.inv_budget_sum += inv_r;
    if (r_t.single())
        ++state.single_count;
    else
        state.multi_inv_budget_sum += inv_r;
    ++state.round;
    return state;
}

/// Everything the q-player commits to before seeing losses.
struct PlaDecision {
    SimplexWeights weights;
    StepSizePair step;
    SelectionRecord selection;
};

/// Stateful driver of the pure operations above for one run.
class PlaPlayer {
public:
    PlaPlayer(PlaMode mode, std::size_t m) : state_(PlaState::initial(mode, m)) {
        detail::require_groups(m);
    }

    std::size_t groups() const noexcept { return state_.groups(); }
    const PlaState& state() const noexcept { return state_; }

    PlaDecision decide(QueryBudget r_t, RandomStream& anchor_rng, RandomStream& depround_rng) const {
        const StepSizePair step = step_sizes(state_, r_t, groups());
        SimplexWeights q = weights_for_round(state_, r_t, step);
        SelectionRecord sel = select_groups(q, r_t, anchor_rng, depround_rng);
        return {std::move(q), step, std::move(sel)};
    }

    void observe(const PlaDecision& decision, const ObservedLosses& observed) {
        const auto est =
            estimate_losses(observed, decision.selection, decision.weights, decision.step, groups());
        state_ = accumulate(std::move(state_), est, decision.selection.budget());
    }

private:
    PlaState state_;
};

} // namespace gdro
