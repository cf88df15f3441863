#pragma once

// The orchestrator: plays the q-player against the w-player on a group
// environment, keeps the uniformly averaged iterates and reports metrics.
//
// Per round t:
//   r_t      <- schedule                      (budget stream)
//   q_t, C_t <- q-player                      (anchor and depround streams)
//   w_t      <- w-player
//   s_hat    <- environment on C_t            (data stream)
//   gradient <- loss gradient at the anchor's sample, no extra query
//   both players update; averages update
// Evaluation and diagnostics read only their own streams, so the training
// trajectory does not depend on the evaluation cadence or on the horizon.

#include "gdro/env.hpp"
#include "gdro/error.hpp"
#include "gdro/oco.hpp"
#include "gdro/pla.hpp"
#include "gdro/rng.hpp"
#include "gdro/types.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace gdro {

// ---------------------------------------------------------------------------
// Averaged iterates
// ---------------------------------------------------------------------------

struct AveragedIterates {
    std::vector<double> w_bar;
    std::vector<double> q_bar;
    double radius = 1.0;
    std::int64_t count = 0;

    static AveragedIterates empty(std::size_t d, std::size_t m, double radius) {
        return {std::vector<double>(d, 0.0), std::vector<double>(m, 0.0), radius, 0};
    }

    ModelPoint w() const { return ModelPoint(w_bar, radius); }
    SimplexWeights q() const { return SimplexWeights(q_bar); }
};

inline AveragedIterates update_averages(AveragedIterates avg, const ModelPoint& w_t,
                                        const SimplexWeights& q_t) {
    if (w_t.dim() != avg.w_bar.size() || q_t.size() != avg.q_bar.size())
        throw ValidationError("update_averages: dimension mismatch");
    // Same as (n * avg + x) / (n + 1), but a constant stream stays exact.
    const double n1 = static_cast<double>(avg.count) + 1.0;
    for (std::size_t k = 0; k < avg.w_bar.size(); ++k)
        avg.w_bar[k] += (w_t[k] - avg.w_bar[k]) / n1;
    for (std::size_t i = 0; i < avg.q_bar.size(); ++i)
        avg.q_bar[i] += (q_t[i] - avg.q_bar[i]) / n1;
    ++avg.count;
    return avg;
}

// ---------------------------------------------------------------------------
// Risk evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t argmax_lowest(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace detail

/// Empirical risks over fresh draws from `rng`, `samples_per_group` per
/// group; empirical environments use each full group instead.
inline std::vector<double> group_risks(const ModelPoint& w, const GroupEnvironment& env,
                                       std::size_t samples_per_group, RandomStream& rng) {
    if (samples_per_group < 1) throw ValidationError("group_risks: need at least one sample");
    std::vector<double> risks(env.groups(), 0.0);
    for (GroupIndex i = 0; i < env.groups(); ++i) {
        double sum = 0.0;
        std::size_t n = 0;
        if (const auto* emp = std::get_if<EmpiricalGroup>(&env.sampler(i))) {
            for (const auto& z : *emp->rows) sum += env.evaluate(w.coords(), z).value;
            n = emp->rows->size();
        } else {
            for (std::size_t k = 0; k < samples_per_group; ++k)
                sum += env.evaluate(w.coords(), env.draw_sample(i, rng)).value;
            n = samples_per_group;
        }
        risks[i] = sum / static_cast<double>(n);
    }
    return risks;
}

inline double max_risk(const ModelPoint& w, const GroupEnvironment& env,
                       std::size_t samples_per_group, RandomStream& rng) {
    const auto risks = group_risks(w, env, samples_per_group, rng);
    return risks[detail::argmax_lowest(risks)];
}

/// A fixed evaluation sample per group, drawn once from its own seed. Small
/// sets are held in memory; large ones are regenerated from the same seed on
/// every pass, which yields the identical samples.
class EvaluationSet {
public:
    static constexpr std::size_t cache_limit = 20'000'000; // doubles

    EvaluationSet(const GroupEnvironment& env, std::size_t samples_per_group, std::uint64_t seed,
                  std::uint64_t substream = 0)
        : env_(&env), samples_(samples_per_group), seed_(seed), substream_(substream) {
        if (samples_ < 1) throw ValidationError("EvaluationSet: need at least one sample");
        if (env.empirical()) return;
        if (env.groups() * samples_ * env.dim() <= cache_limit) {
            cache_.emplace();
            for (GroupIndex i = 0; i < env.groups(); ++i) {
                RandomStream rng = group_stream(i);
                auto& rows = cache_->emplace_back();
                rows.reserve(samples_);
                for (std::size_t k = 0; k < samples_; ++k) rows.push_back(env.draw_sample(i, rng));
            }
        }
    }

    const GroupEnvironment& env() const noexcept { return *env_; }

    /// Calls f(group, datum) over every evaluation sample.
    template <typename F>
    void for_each(F&& f) const {
        for (GroupIndex i = 0; i < env_->groups(); ++i) {
            if (const auto* emp = std::get_if<EmpiricalGroup>(&env_->sampler(i))) {
                for (const auto& z : *emp->rows) f(i, z);
            } else if (cache_) {
                for (const auto& z : (*cache_)[i]) f(i, z);
            } else {
                RandomStream rng = group_stream(i);
                for (std::size_t k = 0; k < samples_; ++k) f(i, env_->draw_sample(i, rng));
            }
        }
    }

    std::size_t group_size(GroupIndex i) const {
        if (const auto* emp = std::get_if<EmpiricalGroup>(&env_->sampler(i))) return emp->rows->size();
        return samples_;
    }

    std::vector<double> risks(std::span<const double> w) const {
        std::vector<double> sums(env_->groups(), 0.0);
        for_each([&](GroupIndex i, const Datum& z) { sums[i] += env_->evaluate(w, z).value; });
        for (GroupIndex i = 0; i < sums.size(); ++i)
            sums[i] /= static_cast<double>(group_size(i));
        return sums;
    }

    double max_risk(std::span<const double> w) const {
        const auto r = risks(w);
        return r[detail::argmax_lowest(r)];
    }

    /// sum_i weights_i * R_i(w) and its gradient.
    double weighted_risk(std::span<const double> w, std::span<const double> weights,
                         std::vector<double>* gradient) const {
        double value = 0.0;
        if (gradient) gradient->assign(env_->dim(), 0.0);
        for_each([&](GroupIndex i, const Datum& z) {
            const double c = weights[i] / static_cast<double>(group_size(i));
            if (c == 0.0) return;
            value += c * env_->evaluate(w, z).value;
            if (gradient) {
                const auto g = env_->loss_gradient(w, z);
                for (std::size_t k = 0; k < g.size(); ++k) (*gradient)[k] += c * g[k];
            }
        });
        return value;
    }

private:
    RandomStream group_stream(GroupIndex i) const {
        return RandomStream(seed_, Stream::evaluation, (substream_ << 20) + i);
    }

    const GroupEnvironment* env_;
    std::size_t samples_;
    std::uint64_t seed_;
    std::uint64_t substream_;
    std::optional<std::vector<std::vector<Datum>>> cache_;
};

/// Duality-gap estimate for the averaged pair: max_i R_i(w_bar) minus an
/// approximate min_w sum_i q_bar_i R_i(w). The minimum is taken by projected
/// gradient descent with step 1/sqrt(k), started at w_bar and tracking the
/// best iterate, so the result is never negative.
inline double eps_phi_estimate(const AveragedIterates& avg, const EvaluationSet& eval,
                               std::size_t offline_iters) {
    if (offline_iters < 1) throw ValidationError("eps_phi_estimate: offline_iters must be >= 1");
    const double upper = eval.max_risk(avg.w_bar);
    std::vector<double> w = avg.w_bar;
    std::vector<double> grad;
    double best = eval.weighted_risk(w, avg.q_bar, &grad);
    for (std::size_t k = 1; k <= offline_iters; ++k) {
        const double step = 1.0 / std::sqrt(static_cast<double>(k));
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= step * grad[j];
        const ModelPoint projected = project_ball(std::move(w), avg.radius);
        w.assign(projected.coords().begin(), projected.coords().end());
        best = std::min(best, eval.weighted_risk(w, avg.q_bar, &grad));
    }
    return upper - best;
}

// ---------------------------------------------------------------------------
// Regret of the q-player against realized losses
// ---------------------------------------------------------------------------

/// sum_j <q_j, s_j> - min_i sum_j s_{j,i}. `full_losses` is the diagnostic
/// record of s_hat over all groups; nullopt means it was not recorded.
inline double regret_q_prime(std::span<const std::vector<double>> q_history,
                             const std::optional<std::vector<std::vector<double>>>& full_losses) {
    if (!full_losses) throw DiagnosticsDisabled("regret needs diagnostic full-loss recording");
    if (full_losses->size() != q_history.size())
        throw ValidationError("regret_q_prime: history lengths differ");
    if (q_history.empty()) return 0.0;
    const std::size_t m = q_history.front().size();
    double played = 0.0;
    std::vector<double> per_group(m, 0.0);
    for (std::size_t j = 0; j < q_history.size(); ++j) {
        const auto& s = (*full_losses)[j];
        played += dot(q_history[j], s);
        for (std::size_t i = 0; i < m; ++i) per_group[i] += s[i];
    }
    return played - *std::min_element(per_group.begin(), per_group.end());
}

/// Incremental form of regret_q_prime plus the normalizer
/// sqrt(sum_j (m / r_j) ln m).
class RegretTracker {
public:
    explicit RegretTracker(std::size_t m) : per_group_(m, 0.0) {}

    void add(const SimplexWeights& q, std::span<const double> full, QueryBudget r) {
        played_ += dot(q.weights(), full);
        for (std::size_t i = 0; i < per_group_.size(); ++i) per_group_[i] += full[i];
        budget_weight_ += static_cast<double>(per_group_.size()) / static_cast<double>(r.r());
    }

    double regret() const {
        return played_ - *std::min_element(per_group_.begin(), per_group_.end());
    }

    double normalizer() const {
        return std::sqrt(budget_weight_ * std::log(static_cast<double>(per_group_.size())));
    }

    double ratio() const { return regret() / normalizer(); }

private:
    double played_ = 0.0;
    double budget_weight_ = 0.0;
    std::vector<double> per_group_;
};

// ---------------------------------------------------------------------------
// The game
// ---------------------------------------------------------------------------

struct GameConfig {
    PlaMode mode = PlaMode::unified;
    BudgetSchedule schedule = BudgetSchedule::uniform_default();
    std::int64_t horizon = 1000;
    std::int64_t eval_every = 100;
    std::size_t eval_samples = 10'000;
    bool diagnostics = false;
    bool eps_phi = false;
    std::size_t eps_phi_iters = 500;
    std::size_t eps_phi_samples = 1'000;
    /// Gradient bound used by the w-player; defaults to the environment's.
    std::optional<double> grad_bound;
    std::uint64_t seed = 0;
};

struct MetricsRecord {
    std::int64_t t = 0;
    std::int64_t samples_used = 0;
    double max_risk = 0.0;
    std::optional<double> regret_q_prime;
    std::optional<double> regret_ratio;
    std::optional<double> eps_phi_est;
    double wall_time_ms = 0.0;
    std::int64_t clamp_count = 0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

struct RunResult {
    std::vector<MetricsRecord> metrics;
    AveragedIterates averages;
};

inline RunResult run(const GroupEnvironment& env, const GameConfig& cfg,
                     const MetricsSink& sink = {}) {
    const std::size_t m = env.groups();
    if (cfg.horizon < 0) throw ValidationError("run: horizon must be >= 0");
    if (cfg.eval_every < 1) throw ValidationError("run: eval_every must be >= 1");
    cfg.schedule.validate(m);

    const auto start = std::chrono::steady_clock::now();
    RandomStream budget_rng(cfg.seed, Stream::budget);
    RandomStream anchor_rng(cfg.seed, Stream::anchor);
    RandomStream depround_rng(cfg.seed, Stream::depround);
    RandomStream data_rng(cfg.seed, Stream::data);
    RandomStream diag_rng(cfg.seed, Stream::diagnostics);

    PlaPlayer q_player(cfg.mode, m);
    OcoPlayer w_player(env.dim(), env.radius(), cfg.grad_bound.value_or(env.grad_bound()));
    RunResult result{{}, AveragedIterates::empty(env.dim(), m, env.radius())};
    RegretTracker regret(m);
    std::optional<EvaluationSet> eval;
    std::optional<EvaluationSet> eps_eval;
    std::int64_t samples_used = 0;
    std::int64_t clamps = 0;

    for (std::int64_t t = 1; t <= cfg.horizon; ++t) {
        try {
            const QueryBudget r_t = reveal_budget(cfg.schedule, t, budget_rng, m);
            const PlaDecision decision = q_player.decide(r_t, anchor_rng, depround_rng);
            const ModelPoint w_t = w_player.decide();
            const RoundObservation obs = env.observed_losses(w_t, decision.selection, data_rng);
            if (cfg.diagnostics)
                regret.add(decision.weights, env.full_losses(w_t, obs.losses, diag_rng), r_t);
            const auto gradient = env.loss_gradient(w_t, obs.anchor_sample);
            q_player.observe(decision, obs.losses);
            w_player.observe(gradient);
            result.averages = update_averages(std::move(result.averages), w_t, decision.weights);
            samples_used += static_cast<std::int64_t>(r_t.r());
            clamps += obs.clamp_count;

            if (t % cfg.eval_every != 0) continue;
            if (!eval) eval.emplace(env, cfg.eval_samples, cfg.seed, 0);
            MetricsRecord rec;
            rec.t = t;
            rec.samples_used = samples_used;
            rec.max_risk = eval->max_risk(result.averages.w_bar);
            if (cfg.diagnostics) {
                rec.regret_q_prime = regret.regret();
                rec.regret_ratio = regret.ratio();
            }
            if (cfg.eps_phi) {
                if (!eps_eval) eps_eval.emplace(env, cfg.eps_phi_samples, cfg.seed, 1);
                rec.eps_phi_est = eps_phi_estimate(result.averages, *eps_eval, cfg.eps_phi_iters);
            }
            rec.clamp_count = clamps;
            rec.wall_time_ms = std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - start)
                                   .count();
            if (sink) sink(rec);
            result.metrics.push_back(rec);
        } catch (const RoundError&) {
            throw;
        } catch (const std::exception& e) {
            throw RoundError(t, e.what());
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// The q-player alone against an oblivious stochastic loss source
// ---------------------------------------------------------------------------

struct LimitedAdviceResult {
    double regret = 0.0;
    double normalizer = 0.0;
    double ratio = 0.0;
    std::int64_t samples_used = 0;
};

/// Plays the q-player for `horizon` rounds. `draw_losses(rng)` returns the
/// full vector s_t in [0,1]^m for one round, from which only the selected
/// coordinates are revealed.
template <typename LossSource>
LimitedAdviceResult play_limited_advice(PlaMode mode, std::size_t m, const BudgetSchedule& schedule,
                                        std::int64_t horizon, std::uint64_t seed,
                                        LossSource&& draw_losses) {
    schedule.validate(m);
    RandomStream budget_rng(seed, Stream::budget);
    RandomStream anchor_rng(seed, Stream::anchor);
    RandomStream depround_rng(seed, Stream::depround);
    RandomStream data_rng(seed, Stream::data);
    PlaPlayer player(mode, m);
    RegretTracker regret(m);
    LimitedAdviceResult out;
    for (std::int64_t t = 1; t <= horizon; ++t) {
        const QueryBudget r_t = reveal_budget(schedule, t, budget_rng, m);
        const PlaDecision decision = player.decide(r_t, anchor_rng, depround_rng);
        const std::vector<double> s = draw_losses(data_rng);
        std::vector<ObservedLosses::Entry> seen;
        for (GroupIndex i : decision.selection.all()) seen.push_back({i, s[i]});
        player.observe(decision, ObservedLosses(std::move(seen)));
        regret.add(decision.weights, s, r_t);
        out.samples_used += static_cast<std::int64_t>(r_t.r());
    }
    out.regret = regret.regret();
    out.normalizer = regret.normalizer();
    out.ratio = horizon > 0 ? regret.ratio() : 0.0;
    return out;
}

} // namespace gdro
