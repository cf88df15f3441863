#include "gdro/pla.hpp"

#include "branch_enumeration.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace gdro;
using gdro::testing::enumerate_branches;

namespace {

// State after the given budgets have been played with zero estimates.
PlaState after_budgets(PlaMode mode, std::size_t m, const std::vector<std::int64_t>& budgets) {
    PlaState s = PlaState::initial(mode, m);
    for (auto r : budgets) s = accumulate(s, EstimatedLossVector(std::vector<double>(m, 0.0)), QueryBudget(r, m));
    return s;
}

struct Outcome {
    double probability;
    SelectionRecord selection;
};

// Every (anchor, extras) outcome of select_groups with its exact probability.
std::vector<Outcome> enumerate_selection(const SimplexWeights& q, QueryBudget r) {
    const std::size_t m = q.size();
    std::vector<Outcome> out;
    for (GroupIndex c = 0; c < m; ++c) {
        if (q[c] == 0.0) continue;
        auto branches = enumerate_branches<std::vector<GroupIndex>>(
            [&](auto& choose) { return select_extras(c, r, m, choose); });
        for (auto& b : branches)
            out.push_back({q[c] * b.probability, SelectionRecord(c, std::move(b.result), r, m)});
    }
    return out;
}

ObservedLosses observe(const SelectionRecord& sel, const std::vector<double>& s_hat) {
    std::vector<ObservedLosses::Entry> e;
    for (GroupIndex i : sel.all()) e.push_back({i, s_hat[i]});
    return ObservedLosses(std::move(e));
}

std::vector<double> expected_estimate(const SimplexWeights& q, QueryBudget r,
                                      const StepSizePair& step, const std::vector<double>& s_hat) {
    const std::size_t m = q.size();
    std::vector<double> mean(m, 0.0);
    for (const auto& o : enumerate_selection(q, r)) {
        const auto est = estimate_losses(observe(o.selection, s_hat), o.selection, q, step, m);
        for (std::size_t i = 0; i < m; ++i) mean[i] += o.probability * est[i];
    }
    return mean;
}

SimplexWeights random_simplex(RandomStream& rng, std::size_t m) {
    std::vector<double> v(m);
    double z = 0.0;
    for (double& x : v) z += (x = -std::log(1.0 - rng.uniform01()));
    for (double& x : v) x /= z;
    return SimplexWeights(std::move(v));
}

} // namespace

TEST(StepSize, UnifiedExamples) {
    const auto s = after_budgets(PlaMode::unified, 4, {1});
    const auto step = unified_step_size(s, QueryBudget(1, 4), 4);
    EXPECT_NEAR(step.eta_q, std::sqrt(std::log(4.0) / 8.0), 1e-15);
    EXPECT_NEAR(step.eta_q, 0.41627, 1e-5);
    EXPECT_NEAR(step.gamma, 0.20814, 1e-5);

    const auto two = unified_step_size(PlaState::initial(PlaMode::unified, 2), QueryBudget(2, 2), 2);
    EXPECT_NEAR(two.eta_q, 0.83255, 1e-5);
}

TEST(StepSize, GammaIsHalfEtaUnified) {
    RandomStream rng(5, 0);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t m = 2 + rng.uniform_index(30);
        std::vector<std::int64_t> budgets;
        for (std::size_t k = rng.uniform_index(20); k > 0; --k) budgets.push_back(rng.uniform_int(1, m));
        const auto s = after_budgets(PlaMode::unified, m, budgets);
        const auto step = unified_step_size(s, QueryBudget(rng.uniform_int(1, m), m), m);
        EXPECT_EQ(step.gamma, step.eta_q / 2.0);
    }
}

TEST(StepSize, HybridExamples) {
    const auto s = after_budgets(PlaMode::hybrid, 4, {1});
    EXPECT_NEAR(hybrid_step_sizes(s, QueryBudget(1, 4), 4).eta_q, 0.41627, 1e-5);

    const auto multi = hybrid_step_sizes(PlaState::initial(PlaMode::hybrid, 4), QueryBudget(3, 4), 4);
    EXPECT_NEAR(multi.eta_q, std::sqrt(std::log(4.0) * 0.75), 1e-15);
    EXPECT_NEAR(multi.eta_q, 1.019667, 1e-6);
    EXPECT_EQ(multi.gamma, 0.0);

    const auto single = hybrid_step_sizes(s, QueryBudget(1, 4), 4);
    EXPECT_EQ(single.gamma, single.eta_q / 2.0);
}

TEST(StepSize, HybridIgnoresOtherRegime) {
    auto s = after_budgets(PlaMode::hybrid, 5, {1, 4, 4, 1, 2});
    const auto single = hybrid_step_sizes(s, QueryBudget(1, 5), 5);
    EXPECT_NEAR(single.eta_q, std::sqrt(std::log(5.0) / (5.0 * 3.0)), 1e-15);
    const auto multi = hybrid_step_sizes(s, QueryBudget(2, 5), 5);
    EXPECT_NEAR(multi.eta_q, std::sqrt(std::log(5.0) / (5.0 * (0.25 + 0.25 + 0.5 + 0.5))), 1e-15);
}

TEST(StepSize, Errors) {
    EXPECT_THROW(unified_step_size(PlaState::initial(PlaMode::unified, 1), QueryBudget(1, 1), 1),
                 DegenerateGroups);
    EXPECT_THROW(unified_step_size(PlaState::initial(PlaMode::hybrid, 3), QueryBudget(1, 3), 3),
                 ValidationError);
    EXPECT_THROW(PlaPlayer(PlaMode::unified, 1), DegenerateGroups);
}

TEST(StepSize, UnifiedNonincreasing) {
    RandomStream rng(11, 0);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t m = 2 + rng.uniform_index(15);
        PlaState s = PlaState::initial(PlaMode::unified, m);
        double prev = std::numeric_limits<double>::infinity();
        for (int t = 0; t < 100; ++t) {
            const QueryBudget r(rng.uniform_int(1, m), m);
            const double eta = unified_step_size(s, r, m).eta_q;
            EXPECT_LE(eta, prev);
            prev = eta;
            s = accumulate(s, EstimatedLossVector(std::vector<double>(m, 0.0)), r);
        }
    }
}

TEST(UpdateWeights, Examples) {
    const std::vector<double> zeros(5, 0.0);
    const auto u = update_weights(zeros, 3.0);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(u[i], 0.2);

    const std::vector<double> l{0.0, std::log(2.0)};
    const auto q = update_weights(l, 1.0);
    EXPECT_NEAR(q[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(q[1], 1.0 / 3.0, 1e-15);
}

TEST(UpdateWeights, ShiftInvariantAndStable) {
    const std::vector<double> a{0.3, 1.7, 0.9};
    std::vector<double> b = a;
    for (double& x : b) x += 1e6;
    const auto qa = update_weights(a, 0.8);
    const auto qb = update_weights(b, 0.8);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(qa[i], qb[i], 1e-9);

    const std::vector<double> huge{1e6, 0.0, 5e5};
    const auto q = update_weights(huge, 1.0);
    EXPECT_DOUBLE_EQ(q[1], 1.0);
    EXPECT_EQ(q[0], 0.0);
}

TEST(UpdateWeights, FavorsSmallerLossTiesEqual) {
    RandomStream rng(3, 0);
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t m = 2 + rng.uniform_index(10);
        std::vector<double> l(m);
        for (double& x : l) x = std::floor(rng.uniform01() * 6.0);  // ties are common
        const auto q = update_weights(l, 0.1 + rng.uniform01());
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                if (l[i] < l[j]) {
                    EXPECT_GT(q[i], q[j]);
                } else if (l[i] == l[j]) {
                    EXPECT_EQ(q[i], q[j]);
                }
            }
    }
}

TEST(SampleAnchor, InverseCdfLowerIndexOnTies) {
    const SimplexWeights q({0.25, 0.25, 0.0, 0.5});
    EXPECT_EQ(sample_anchor(q, 0.0), 0u);
    EXPECT_EQ(sample_anchor(q, 0.2499), 0u);
    EXPECT_EQ(sample_anchor(q, 0.25), 1u);
    EXPECT_EQ(sample_anchor(q, 0.5), 3u);
    EXPECT_EQ(sample_anchor(q, 0.9999999999), 3u);
}

TEST(SelectGroups, BudgetExtremes) {
    RandomStream a(1, 1), d(1, 2);
    const auto q = SimplexWeights::uniform(6);
    for (int rep = 0; rep < 50; ++rep) {
        const auto full = select_groups(q, QueryBudget(6, 6), a, d);
        EXPECT_EQ(full.all().size(), 6u);
        const auto one = select_groups(q, QueryBudget(1, 6), a, d);
        EXPECT_TRUE(one.extras().empty());
        EXPECT_EQ(one.all().size(), 1u);
    }
}

TEST(SelectGroups, PairProbabilitiesUniformThree) {
    std::map<std::vector<GroupIndex>, double> pairs;
    for (const auto& o : enumerate_selection(SimplexWeights::uniform(3), QueryBudget(2, 3)))
        pairs[{o.selection.all().begin(), o.selection.all().end()}] += o.probability;
    ASSERT_EQ(pairs.size(), 3u);
    for (const auto& [pair, p] : pairs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(SelectGroups, InclusionProbabilityMatchesEnumeration) {
    RandomStream rng(21, 0);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t m = 2 + rng.uniform_index(3);
        const auto q = random_simplex(rng, m);
        const QueryBudget r(rng.uniform_int(2, m), m);
        std::vector<double> incl(m, 0.0);
        for (const auto& o : enumerate_selection(q, r)) {
            EXPECT_EQ(o.selection.all().size(), static_cast<std::size_t>(r.r()));
            for (GroupIndex i : o.selection.all()) incl[i] += o.probability;
        }
        for (std::size_t i = 0; i < m; ++i)
            EXPECT_NEAR(incl[i], inclusion_probability(q[i], r.r(), m), 1e-12);
    }
}

TEST(EstimateLosses, Examples) {
    const std::size_t m = 3;
    const auto q = SimplexWeights({0.5, 0.25, 0.25});
    const SelectionRecord one(0, {}, QueryBudget(1, m), m);
    const auto est = estimate_losses(ObservedLosses({{0, 0.6}}), one, q, {0.2, 0.1}, m);
    EXPECT_NEAR(est[0], 1.0, 1e-15);
    EXPECT_EQ(est[1], 0.0);
    EXPECT_EQ(est[2], 0.0);

    const auto u = SimplexWeights::uniform(3);
    const SelectionRecord two(1, {2}, QueryBudget(2, m), m);
    const auto est2 = estimate_losses(ObservedLosses({{1, 1.0}, {2, 1.0}}), two, u, {0.5, 0.0}, m);
    EXPECT_NEAR(est2[1], 1.5, 1e-15);
    EXPECT_NEAR(est2[2], 1.5, 1e-15);
    EXPECT_EQ(est2[0], 0.0);

    const SelectionRecord all(0, {1, 2}, QueryBudget(3, m), m);
    const auto est3 = estimate_losses(ObservedLosses({{0, 0.1}, {1, 0.2}, {2, 0.3}}), all, q, {0.5, 0.0}, m);
    EXPECT_NEAR(est3[0], 0.1, 1e-15);
    EXPECT_NEAR(est3[1], 0.2, 1e-15);
    EXPECT_NEAR(est3[2], 0.3, 1e-15);
}

TEST(EstimateLosses, MismatchRaises) {
    const SelectionRecord sel(0, {1}, QueryBudget(2, 3), 3);
    EXPECT_THROW(estimate_losses(ObservedLosses({{0, 0.5}}), sel, SimplexWeights::uniform(3), {1, 0}, 3),
                 ObservationMismatch);
    EXPECT_THROW(estimate_losses(ObservedLosses({{0, 0.5}, {2, 0.5}}), sel, SimplexWeights::uniform(3),
                                 {1, 0}, 3),
                 ObservationMismatch);
}

TEST(EstimateLosses, UnbiasedForMultiSample) {
    RandomStream rng(8, 0);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t m = 2 + rng.uniform_index(3);
        const auto q = random_simplex(rng, m);
        const QueryBudget r(rng.uniform_int(2, m), m);
        std::vector<double> s_hat(m);
        for (double& x : s_hat) x = rng.uniform01();
        const auto mean = expected_estimate(q, r, {0.3, 0.0}, s_hat);
        for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(mean[i], s_hat[i], 1e-12);
    }
}

TEST(EstimateLosses, ImplicitExplorationBiasesDown) {
    RandomStream rng(9, 0);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t m = 2 + rng.uniform_index(3);
        const auto q = random_simplex(rng, m);
        const double gamma = 0.01 + 0.5 * rng.uniform01();
        std::vector<double> s_hat(m);
        for (double& x : s_hat) x = rng.uniform01();
        const auto mean = expected_estimate(q, QueryBudget(1, m), {2 * gamma, gamma}, s_hat);
        for (std::size_t i = 0; i < m; ++i) {
            EXPECT_NEAR(mean[i], s_hat[i] * q[i] / (q[i] + gamma), 1e-12);
            EXPECT_LE(mean[i], s_hat[i] + 1e-15);
        }
    }
}

TEST(EstimateLosses, SeldinInequality) {
    RandomStream rng(10, 0);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t m = 2 + rng.uniform_index(7);
        const auto q = random_simplex(rng, m);
        const std::size_t r = static_cast<std::size_t>(rng.uniform_int(2, m));
        double sum = 0.0;
        for (std::size_t i = 0; i < m; ++i) sum += q[i] / inclusion_probability(q[i], r, m);
        EXPECT_LE(sum, static_cast<double>(m) / static_cast<double>(r) + 1e-9);

        const auto u = SimplexWeights::uniform(m);
        double usum = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double term = u[i] / inclusion_probability(u[i], r, m);
            EXPECT_NEAR(term, 1.0 / static_cast<double>(r), 1e-12);
            usum += term;
        }
        EXPECT_NEAR(usum, static_cast<double>(m) / static_cast<double>(r), 1e-9);
    }
}

TEST(Accumulate, Examples) {
    auto s = PlaState::initial(PlaMode::unified, 2);
    s.cum_loss = {1.0, 2.0};
    const auto zero = accumulate(s, EstimatedLossVector({0.0, 0.0}), QueryBudget(2, 2));
    EXPECT_EQ(zero.cum_loss, s.cum_loss);
    EXPECT_EQ(zero.round, 1u);
    EXPECT_DOUBLE_EQ(zero.inv_budget_sum, 0.5);
    const auto next = accumulate(s, EstimatedLossVector({0.5, 0.0}), QueryBudget(1, 2));
    EXPECT_EQ(next.cum_loss, (std::vector<double>{1.5, 2.0}));

    const auto h = accumulate(PlaState::initial(PlaMode::hybrid, 4), EstimatedLossVector({0, 1, 0, 0}),
                              QueryBudget(3, 4));
    EXPECT_EQ(h.cum_loss_multi, (std::vector<double>{0, 1, 0, 0}));
    EXPECT_EQ(h.cum_loss_single, (std::vector<double>(4, 0.0)));
    EXPECT_DOUBLE_EQ(h.multi_inv_budget_sum, 1.0 / 3.0);
    EXPECT_EQ(h.single_count, 0u);
}

TEST(Accumulate, HybridUnifiedPartition) {
    RandomStream rng(12, 0);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t m = 2 + rng.uniform_index(10);
        auto u = PlaState::initial(PlaMode::unified, m);
        auto h = PlaState::initial(PlaMode::hybrid, m);
        for (int t = 0; t < 60; ++t) {
            const QueryBudget r(rng.uniform_int(1, m), m);
            std::vector<double> e(m);
            for (double& x : e) x = rng.uniform01();
            u = accumulate(u, EstimatedLossVector(e), r);
            h = accumulate(h, EstimatedLossVector(e), r);
        }
        EXPECT_NEAR(u.inv_budget_sum, static_cast<double>(h.single_count) + h.multi_inv_budget_sum, 1e-9);
        for (std::size_t i = 0; i < m; ++i)
            EXPECT_NEAR(u.cum_loss[i], h.cum_loss_single[i] + h.cum_loss_multi[i], 1e-9);
        EXPECT_NO_THROW(u.validate());
        EXPECT_NO_THROW(h.validate());
    }
}

TEST(PlaPlayer, HybridUsesRegimeCumulativeLoss) {
    PlaPlayer p(PlaMode::hybrid, 3);
    RandomStream a(1, 1), d(1, 2);
    const auto dec = p.decide(QueryBudget(1, 3), a, d);
    p.observe(dec, ObservedLosses({{dec.selection.anchor(), 1.0}}));
    // A multi-sample round starts from L^m = 0 and must be uniform.
    const auto multi = p.decide(QueryBudget(2, 3), a, d);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(multi.weights[i], 1.0 / 3.0);
    const auto single = p.decide(QueryBudget(1, 3), a, d);
    EXPECT_LT(single.weights[dec.selection.anchor()], 1.0 / 3.0);
}

TEST(PlaPlayer, DeterministicGivenSeeds) {
    auto play = [] {
        PlaPlayer p(PlaMode::unified, 5);
        RandomStream a(4, 1), d(4, 2), budget(4, 0);
        std::vector<GroupIndex> trace;
        for (int t = 0; t < 200; ++t) {
            const QueryBudget r(budget.uniform_int(1, 5), 5);
            const auto dec = p.decide(r, a, d);
            std::vector<ObservedLosses::Entry> e;
            for (GroupIndex i : dec.selection.all()) {
                e.push_back({i, 0.1 * static_cast<double>(i)});
                trace.push_back(i);
            }
            p.observe(dec, ObservedLosses(std::move(e)));
        }
        return std::make_pair(trace, p.state().cum_loss);
    };
    EXPECT_EQ(play(), play());
}
