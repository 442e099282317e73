#include <doctest.h>

#include <cmath>
#include <vector>

#include "prl/baselines.hpp"
#include "prl/oracle.hpp"
#include "prl/pomdp.hpp"

using namespace prl;

namespace {

Trajectory make_traj(int o0, std::vector<Step> steps) {
    Trajectory tr;
    tr.o0 = o0;
    tr.steps = std::move(steps);
    return tr;
}

// fully observed two-state chain: obs = state, action 0 stays, action 1 swaps;
// reward is 1 in state 0 and 0 in state 1
TabularPOMDP two_state_mdp(int horizon) {
    TabularPOMDP m;
    m.n_states = 2;
    m.n_actions = 2;
    m.n_obs = 2;
    m.horizon = horizon;
    m.r_max = 1.0;
    m.time_homogeneous = true;
    m.transition = {{{Dist{1.0, 0.0}, Dist{0.0, 1.0}}, {Dist{0.0, 1.0}, Dist{1.0, 0.0}}}};
    m.reward = {{{1.0, 1.0}, {0.0, 0.0}}};
    m.obs_kernel = {{Dist{1.0, 0.0}, Dist{0.0, 1.0}}};
    m.prior_state = {0.5, 0.5};
    m.prior_action = {Dist{0.5, 0.5}, Dist{0.5, 0.5}};
    return m;
}

BehaviorPolicy uniform_behavior(int n_states, int n_actions) {
    BehaviorPolicy b;
    b.time_homogeneous = true;
    b.probs = {std::vector<Dist>(n_states, Dist(n_actions, 1.0 / n_actions))};
    return b;
}

}  // namespace

TEST_CASE("mean_r: discounted average return") {
    std::vector<Trajectory> data = {
        make_traj(0, {Step{0, 0, 1.0}, Step{0, 0, 2.0}, Step{0, 0, 3.0}}),
        make_traj(0, {Step{0, 0, 4.0}, Step{0, 0, 5.0}, Step{0, 0, 6.0}}),
    };
    CHECK(mean_r(data, 1.0) == doctest::Approx(10.5).epsilon(1e-14));
    CHECK(mean_r(data, 0.5) == doctest::Approx((2.75 + 8.0) / 2).epsilon(1e-14));
    CHECK_THROWS_AS(mean_r({}, 1.0), std::invalid_argument);
}

TEST_CASE("mdp_dp: recovers the exact value of a fully observed chain") {
    TabularPOMDP m = two_state_mdp(3);
    BehaviorPolicy b = uniform_behavior(2, 2);
    EvalPolicy stay;
    stay.kind = EvalPolicy::Kind::CurrentObs;
    stay.table = {0, 0};

    // under always-stay: from state 0 collect 3, from state 1 collect 0; prior 0.5
    CHECK(exact_policy_value(m, stay, 1.0) == doctest::Approx(1.5).epsilon(1e-12));

    auto data = sample_dataset(m, b, 20000, 121, false);
    MdpDiag diag;
    double est = mdp_dp(data, stay, 1.0, alphabets_of(m), &diag);
    CHECK(diag.unvisited_reward_cells == 0);
    CHECK(diag.unvisited_transition_cells == 0);
    CHECK(std::abs(est - 1.5) <= 0.05);

    EvalPolicy swap;
    swap.kind = EvalPolicy::Kind::CurrentObs;
    swap.table = {1, 1};
    // always-swap alternates states: from 0 collect 1 + 0 + 1, from 1 collect 0 + 1 + 0
    CHECK(exact_policy_value(m, swap, 1.0) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(std::abs(mdp_dp(data, swap, 1.0, alphabets_of(m)) - 1.5) <= 0.05);
}

TEST_CASE("mdp_dp: consistent on the noiseless benchmark where obs = state") {
    NoisyObs env = build_noisyobs(0.0);
    auto data = sample_dataset(env.pomdp, env.behavior, 20000, 131, false);
    double est = mdp_dp(data, env.easy, 1.0, alphabets_of(env.pomdp));
    CHECK(std::abs(est - 5.58) <= 0.1);
    double opt = mdp_dp(data, env.optim, 1.0, alphabets_of(env.pomdp));
    CHECK(std::abs(opt - 9.0) <= 0.1);
}

TEST_CASE("mdp_dp: unvisited cells are counted") {
    // one trajectory visits at most 3 of the 6 pooled (obs, action) cells
    NoisyObs env = build_noisyobs(0.2);
    auto data = sample_dataset(env.pomdp, env.behavior, 1, 141, false);
    MdpDiag diag;
    mdp_dp(data, env.easy, 1.0, alphabets_of(env.pomdp), &diag);
    CHECK(diag.unvisited_reward_cells >= 3);
    CHECK(diag.unvisited_transition_cells >= 4);
}

TEST_CASE("baselines require current-observation policies") {
    NoisyObs env = build_noisyobs(0.2);
    auto data = sample_dataset(env.pomdp, env.behavior, 10, 151, false);
    EvalPolicy hist;
    hist.kind = EvalPolicy::Kind::History;
    hist.history_scores = [](const std::vector<int>&, const std::vector<int>&) {
        return std::vector<double>{1.0, 0.0};
    };
    CHECK_THROWS_AS(mdp_dp(data, hist, 1.0, alphabets_of(env.pomdp)), std::invalid_argument);
    CHECK_THROWS_AS(tis(data, hist, 1.0, alphabets_of(env.pomdp)), std::invalid_argument);
}

TEST_CASE("tis: factorized evaluation equals the brute-force sum") {
    // the brute force is O(n^{H+1}); keep n small and check many draws
    NoisyObs env3 = build_noisyobs(0.2);
    TabularPOMDP short_m = env3.pomdp;
    short_m.horizon = 2;  // time-homogeneous slices reuse cleanly
    CHECK_NOTHROW(short_m.validate());
    Alphabets alph2 = alphabets_of(short_m);

    for (int n = 2; n <= 6; ++n) {
        for (int seed = 0; seed < 8; ++seed) {
            auto data = sample_dataset(short_m, env3.behavior, n, 1000 + 17 * seed + n, false);
            TisDiag d1, d2;
            double fac = tis(data, env3.easy, 1.0, alph2, &d1);
            double bru = tis_brute_force(data, env3.easy, 1.0, alph2, &d2);
            CHECK(std::abs(fac - bru) <= 1e-12);
            CHECK(d1.singular_q == d2.singular_q);
        }
    }

    // full horizon stays affordable at tiny n
    Alphabets alph3 = alphabets_of(env3.pomdp);
    for (int seed = 0; seed < 4; ++seed) {
        auto data = sample_dataset(env3.pomdp, env3.behavior, 5, 2000 + seed, false);
        double fac = tis(data, env3.optim, 1.0, alph3);
        double bru = tis_brute_force(data, env3.optim, 1.0, alph3);
        CHECK(std::abs(fac - bru) <= 1e-12);
    }
}

TEST_CASE("tis: brute force refuses oversized datasets") {
    NoisyObs env = build_noisyobs(0.2);
    auto data = sample_dataset(env.pomdp, env.behavior, 400, 161, false);
    CHECK_THROWS_AS(tis_brute_force(data, env.easy, 1.0, alphabets_of(env.pomdp)),
                    EnumerationTooLarge);
}

TEST_CASE("tis: one-stage chain reduces to a hand-computable ratio form") {
    // H = 1, single observation and action: the functional is the mean reward
    TabularPOMDP m;
    m.n_states = 1;
    m.n_actions = 1;
    m.n_obs = 1;
    m.horizon = 1;
    m.r_max = 2.0;
    m.transition = {{{Dist{1.0}}}};
    m.reward = {{{2.0}}};
    m.obs_kernel = {{Dist{1.0}}};
    m.prior_state = {1.0};
    m.prior_action = {Dist{1.0}};
    BehaviorPolicy b;
    b.probs = {{Dist{1.0}}};
    EvalPolicy pol;
    pol.kind = EvalPolicy::Kind::CurrentObs;
    pol.table = {0};
    auto data = sample_dataset(m, b, 12, 171, false);
    TisDiag diag;
    CHECK(tis(data, pol, 1.0, alphabets_of(m), &diag) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(!diag.singular_q);
    CHECK(tis_brute_force(data, pol, 1.0, alphabets_of(m)) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("tis: rank deficiency of the stock benchmark operators is flagged") {
    // on the exact law the one-step operator is singular by construction; a
    // finite sample only blurs it with O(n^-1/2) noise, so the deterministic
    // population check is the sharp one
    NoisyObs env = build_noisyobs(0.2);
    auto law = group_observables(enumerate_law(env.pomdp, env.behavior, env.easy, 1));
    TisDiag diag;
    tis_from_atoms(tis_atoms_from_law(law, alphabets_of(env.pomdp)), env.easy, 1.0,
                   alphabets_of(env.pomdp), &diag);
    CHECK(diag.singular_q);
    REQUIRE(!diag.min_singular_ratio.empty());
    double worst = 1.0;
    for (double r : diag.min_singular_ratio) worst = std::min(worst, r);
    CHECK(worst <= 1e-8);
}
