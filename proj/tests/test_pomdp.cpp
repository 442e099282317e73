#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "prl/oracle.hpp"
#include "prl/pomdp.hpp"

using namespace prl;

namespace {

// one state, one action, one observation, unit reward; value is sum_t gamma^(t-1)
TabularPOMDP unit_chain(int horizon, double reward = 1.0) {
    TabularPOMDP m;
    m.n_states = 1;
    m.n_actions = 1;
    m.n_obs = 1;
    m.horizon = horizon;
    m.r_max = std::abs(reward);
    m.time_homogeneous = true;
    m.transition = {{{Dist{1.0}}}};
    m.reward = {{{reward}}};
    m.obs_kernel = {{Dist{1.0}}};
    m.prior_state = {1.0};
    m.prior_action = {Dist{1.0}};
    return m;
}

BehaviorPolicy unit_behavior() {
    BehaviorPolicy b;
    b.time_homogeneous = true;
    b.probs = {{Dist{1.0}}};
    return b;
}

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
    if (a.o0 != b.o0 || a.steps.size() != b.steps.size()) return false;
    for (size_t i = 0; i < a.steps.size(); ++i)
        if (a.steps[i].o != b.steps[i].o || a.steps[i].a != b.steps[i].a ||
            a.steps[i].r != b.steps[i].r)
            return false;
    if (a.hidden.has_value() != b.hidden.has_value()) return false;
    if (a.hidden) {
        if (a.hidden->s0 != b.hidden->s0 || a.hidden->a0 != b.hidden->a0 ||
            a.hidden->states != b.hidden->states)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("benchmark construction: shapes, kernel values, target policies") {
    NoisyObs env = build_noisyobs(0.2);
    const TabularPOMDP& m = env.pomdp;
    CHECK(m.n_states == 3);
    CHECK(m.n_actions == 2);
    CHECK(m.n_obs == 3);
    CHECK(m.horizon == 3);
    CHECK_NOTHROW(m.validate());
    CHECK_NOTHROW(env.behavior.validate(m));

    // observation kernel: 1 - eps on the diagonal, eps/2 off
    for (int t = 0; t <= m.horizon; ++t)
        for (int s = 0; s < 3; ++s)
            for (int o = 0; o < 3; ++o)
                CHECK(m.obs_dist(t, s)[o] == doctest::Approx(s == o ? 0.8 : 0.1).epsilon(1e-12));

    NoisyObs clean = build_noisyobs(0.0);
    CHECK_NOTHROW(clean.pomdp.validate());
    for (int s = 0; s < 3; ++s)
        for (int o = 0; o < 3; ++o)
            CHECK(clean.pomdp.obs_dist(0, s)[o] == doctest::Approx(s == o ? 1.0 : 0.0));

    // deterministic observation-to-action tables
    CHECK(env.easy.kind == EvalPolicy::Kind::CurrentObs);
    CHECK(env.easy.table == std::vector<int>{0, 0, 1});
    CHECK(env.hard.table == std::vector<int>{1, 1, 0});
    CHECK(env.optim.table == std::vector<int>{0, 1, 0});
}

TEST_CASE("exact_policy_value: hand-checked chain") {
    TabularPOMDP m = unit_chain(3);
    EvalPolicy pol;
    pol.kind = EvalPolicy::Kind::CurrentObs;
    pol.table = {0};
    CHECK(exact_policy_value(m, pol, 1.0) == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(exact_policy_value(m, pol, 0.5) == doctest::Approx(1.75).epsilon(1e-14));
}

TEST_CASE("exact_policy_value: benchmark values") {
    // pinned against an independent enumeration of the discrete law
    for (auto [eps, e, h, o] : {std::tuple{0.0, 5.58, 3.84, 9.0},
                                std::tuple{0.2, 4.6947, 2.8605, 6.82228}}) {
        NoisyObs env = build_noisyobs(eps);
        CHECK(exact_policy_value(env.pomdp, env.easy, 1.0) == doctest::Approx(e).epsilon(1e-10));
        CHECK(exact_policy_value(env.pomdp, env.hard, 1.0) == doctest::Approx(h).epsilon(1e-10));
        CHECK(exact_policy_value(env.pomdp, env.optim, 1.0) == doctest::Approx(o).epsilon(1e-10));
    }
}

TEST_CASE("enumeration budget guard") {
    TabularPOMDP m;
    m.n_states = 10;
    m.n_actions = 1;
    m.n_obs = 50;
    m.horizon = 4;
    m.r_max = 1.0;
    m.time_homogeneous = true;
    m.transition = {std::vector<std::vector<Dist>>(10, {Dist(10, 0.1)})};
    m.reward = {std::vector<std::vector<double>>(10, {1.0})};
    m.obs_kernel = {std::vector<Dist>(10, Dist(50, 0.02))};
    m.prior_state = Dist(10, 0.1);
    m.prior_action = std::vector<Dist>(10, Dist{1.0});
    EvalPolicy pol;
    pol.kind = EvalPolicy::Kind::CurrentObs;
    pol.table.assign(50, 0);
    CHECK_THROWS_AS(exact_policy_value(m, pol, 1.0), EnumerationTooLarge);
}

TEST_CASE("sampling: determinism and seed sensitivity") {
    NoisyObs env = build_noisyobs(0.2);
    auto d1 = sample_dataset(env.pomdp, env.behavior, 64, 901, true);
    auto d2 = sample_dataset(env.pomdp, env.behavior, 64, 901, true);
    REQUIRE(d1.size() == 64);
    for (size_t i = 0; i < d1.size(); ++i) CHECK(same_trajectory(d1[i], d2[i]));

    auto d3 = sample_dataset(env.pomdp, env.behavior, 64, 902, true);
    bool any_diff = false;
    for (size_t i = 0; i < d1.size(); ++i)
        if (!same_trajectory(d1[i], d3[i])) any_diff = true;
    CHECK(any_diff);

    // with_hidden=false drops hidden state but keeps the observable stream identical
    auto d4 = sample_dataset(env.pomdp, env.behavior, 64, 901, false);
    for (size_t i = 0; i < d4.size(); ++i) {
        CHECK(!d4[i].hidden.has_value());
        CHECK(d4[i].o0 == d1[i].o0);
        for (size_t t = 0; t < d4[i].steps.size(); ++t) {
            CHECK(d4[i].steps[t].o == d1[i].steps[t].o);
            CHECK(d4[i].steps[t].a == d1[i].steps[t].a);
        }
    }
}

TEST_CASE("sampling: S_1 frequencies match the closed-form marginal") {
    // P(S_1) under the stock logger is (0.38, 0.56, 0.06); chi-square with
    // df = 2 at the 0.999 level
    NoisyObs env = build_noisyobs(0.2);
    const int n = 50000;
    auto data = sample_dataset(env.pomdp, env.behavior, n, 777, true);
    std::vector<int> counts(3, 0);
    for (const auto& tr : data) {
        REQUIRE(tr.hidden.has_value());
        REQUIRE(tr.hidden->states.size() == 3);
        ++counts[tr.hidden->states[0]];
    }
    const double expected[3] = {0.38 * n, 0.56 * n, 0.06 * n};
    double stat = 0.0;
    for (int s = 0; s < 3; ++s) {
        double d = counts[s] - expected[s];
        stat += d * d / expected[s];
    }
    CHECK(stat <= 13.8155105579643);
}

TEST_CASE("sampling: mean return agrees with the exact behavior law") {
    NoisyObs env = build_noisyobs(0.2);
    auto law = group_observables(enumerate_law(env.pomdp, env.behavior, env.easy, 1));
    double pop = population_expectation(law, [](const Trajectory& tr) {
        double s = 0.0;
        for (const Step& st : tr.steps) s += st.r;
        return s;
    });

    const int n = 40000;
    auto data = sample_dataset(env.pomdp, env.behavior, n, 313, false);
    double mean = 0.0, m2 = 0.0;
    for (const auto& tr : data) {
        double s = 0.0;
        for (const Step& st : tr.steps) s += st.r;
        mean += s;
        m2 += s * s;
    }
    mean /= n;
    m2 /= n;
    double se = std::sqrt((m2 - mean * mean) / n);
    CHECK(std::abs(mean - pop) <= 3.5 * se);
}

TEST_CASE("jsonl round trip preserves trajectories exactly") {
    NoisyObs env = build_noisyobs(0.2);
    auto data = sample_dataset(env.pomdp, env.behavior, 50, 404, true);
    auto extra = sample_dataset(env.pomdp, env.behavior, 5, 405, false);
    data.insert(data.end(), extra.begin(), extra.end());
    std::stringstream ss;
    write_trajectories_jsonl(ss, data);
    auto back = read_trajectories_jsonl(ss);
    REQUIRE(back.size() == data.size());
    for (size_t i = 0; i < data.size(); ++i) CHECK(same_trajectory(data[i], back[i]));
}

TEST_CASE("pomdp json round trip") {
    NoisyObs env = build_noisyobs(0.2);
    std::string s = pomdp_to_json(env.pomdp);
    TabularPOMDP back = pomdp_from_json(s);
    CHECK_NOTHROW(back.validate());
    CHECK(back.n_states == env.pomdp.n_states);
    CHECK(back.n_actions == env.pomdp.n_actions);
    CHECK(back.n_obs == env.pomdp.n_obs);
    CHECK(back.horizon == env.pomdp.horizon);
    CHECK(back.time_homogeneous == env.pomdp.time_homogeneous);
    CHECK(back.trans(0, 0, 0) == env.pomdp.trans(0, 0, 0));
    CHECK(back.obs_dist(0, 2) == env.pomdp.obs_dist(0, 2));
    CHECK(back.reward_at(1, 1, 1) == env.pomdp.reward_at(1, 1, 1));
    CHECK(back.prior_state == env.pomdp.prior_state);
    CHECK(back.prior_action == env.pomdp.prior_action);
}

TEST_CASE("validation rejects broken models") {
    NoisyObs env = build_noisyobs(0.2);

    TabularPOMDP bad = env.pomdp;
    bad.transition[0][0][0][0] += 0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = env.pomdp;
    bad.prior_state[0] = -0.1;
    bad.prior_state[1] += 0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = env.pomdp;
    bad.obs_kernel[0][1].pop_back();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    BehaviorPolicy bb = env.behavior;
    bb.probs[0][0] = {0.4, 0.4};
    CHECK_THROWS_AS(bb.validate(env.pomdp), std::invalid_argument);
}

TEST_CASE("history policies: scores with lowest-index tie break") {
    EvalPolicy pol;
    pol.kind = EvalPolicy::Kind::History;
    pol.history_scores = [](const std::vector<int>& obs, const std::vector<int>&) {
        // favors action 1 after two observations, ties before that
        if (obs.size() >= 2) return std::vector<double>{0.0, 2.0};
        return std::vector<double>{1.0, 1.0};
    };
    CHECK(pol.act_history({2}, {}) == 0);
    CHECK(pol.act_history({2, 0}, {1}) == 1);
}

TEST_CASE("unit chain sampling matches the model mechanically") {
    TabularPOMDP m = unit_chain(3, 2.5);
    BehaviorPolicy b = unit_behavior();
    CHECK_NOTHROW(m.validate());
    auto tr = sample_trajectory(m, b, 99, true);
    CHECK(tr.o0 == 0);
    REQUIRE(tr.steps.size() == 3);
    for (const Step& st : tr.steps) {
        CHECK(st.o == 0);
        CHECK(st.a == 0);
        CHECK(st.r == 2.5);
    }
}
