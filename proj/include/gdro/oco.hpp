#pragma once

// The w-player: follow-the-regularized-leader with the squared Euclidean
// regularizer over the ball of radius R. The FTRL argmin has the closed form
// w_t = proj_ball(-eta_{w,t} * F_{t-1}) where F is the running gradient sum.

#include "gdro/error.hpp"
#include "gdro/types.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace gdro {

/// D for the ball of radius R under nu(w) = |w|^2 / 2: D^2 = R^2 / 2.
inline double ball_diameter(double radius) { return radius / std::sqrt(2.0); }

inline double w_step_size(std::int64_t t, double diameter, double grad_bound) {
    if (t < 1) throw ValidationError("w_step_size: t must be >= 1");
    if (!(diameter > 0.0) || !(grad_bound > 0.0))
        throw ValidationError("w_step_size: D and G must be positive");
    return std::sqrt(2.0) * diameter /
           (std::sqrt(5.0) * grad_bound * std::sqrt(static_cast<double>(t)));
}

inline ModelPoint project_ball(std::vector<double> v, double radius) {
    if (!(radius > 0.0)) throw ValidationError("project_ball: radius must be positive");
    const double n = norm2(v);
    if (n > radius) {
        const double scale = radius / n;
        for (double& x : v) x *= scale;
    }
    return ModelPoint(std::move(v), radius);
}

inline ModelPoint update_model(const OcoState& state, double eta_w, double radius) {
    std::vector<double> v(state.cum_grad.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = -eta_w * state.cum_grad[i];
    return project_ball(std::move(v), radius);
}

inline OcoState accumulate_gradient(OcoState state, std::span<const double> g) {
    if (g.size() != state.cum_grad.size())
        throw ValidationError("accumulate_gradient: dimension mismatch");
    const double n = norm2(g);
    if (!(n <= state.grad_bound * (1.0 + 1e-6)))
        throw GradientBoundViolation("gradient norm " + std::to_string(n) + " exceeds G=" +
                                     std::to_string(state.grad_bound));
    for (std::size_t i = 0; i < g.size(); ++i) state.cum_grad[i] += g[i];
    ++state.round;
    return state;
}

/// Stateful wrapper used by the orchestrator.
class OcoPlayer {
public:
    OcoPlayer(std::size_t d, double radius, double grad_bound)
        : state_(OcoState::initial(d, ball_diameter(radius), grad_bound)), radius_(radius) {}

    const OcoState& state() const noexcept { return state_; }
    double radius() const noexcept { return radius_; }

    /// Iterate for the upcoming round t = rounds played + 1.
    ModelPoint decide() const {
        const double eta = w_step_size(state_.round + 1, state_.diameter, state_.grad_bound);
        return update_model(state_, eta, radius_);
    }

    void observe(std::span<const double> gradient) {
        state_ = accumulate_gradient(std::move(state_), gradient);
    }

private:
    OcoState state_;
    double radius_;
};

} // namespace gdro
