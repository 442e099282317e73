#include "prl/pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace prl {

namespace {

void check_dist(const Dist& d, int card, const char* what) {
    if (static_cast<int>(d.size()) != card)
        throw std::invalid_argument(std::string(what) + ": wrong cardinality");
    double s = 0.0;
    for (double p : d) {
        if (p < 0.0) throw std::invalid_argument(std::string(what) + ": negative probability");
        s += p;
    }
    if (std::abs(s - 1.0) > 1e-12)
        throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
}

}  // namespace

void TabularPOMDP::validate() const {
    if (horizon < 1) throw std::invalid_argument("horizon: must be >= 1");
    if (n_states < 1 || n_actions < 1 || n_obs < 1)
        throw std::invalid_argument("alphabets: must be positive");
    const int nt = time_homogeneous ? 1 : horizon;      // transition slices
    const int nr = time_homogeneous ? 1 : horizon;      // reward slices
    const int no = time_homogeneous ? 1 : horizon + 1;  // obs slices
    if (static_cast<int>(transition.size()) != nt) throw std::invalid_argument("transition: wrong slice count");
    if (static_cast<int>(reward.size()) != nr) throw std::invalid_argument("reward: wrong slice count");
    if (static_cast<int>(obs_kernel.size()) != no) throw std::invalid_argument("obs_kernel: wrong slice count");
    for (const auto& slice : transition) {
        if (static_cast<int>(slice.size()) != n_states) throw std::invalid_argument("transition: wrong state count");
        for (const auto& row : slice) {
            if (static_cast<int>(row.size()) != n_actions) throw std::invalid_argument("transition: wrong action count");
            for (const auto& d : row) check_dist(d, n_states, "transition");
        }
    }
    for (const auto& slice : reward) {
        if (static_cast<int>(slice.size()) != n_states) throw std::invalid_argument("reward: wrong state count");
        for (const auto& row : slice) {
            if (static_cast<int>(row.size()) != n_actions) throw std::invalid_argument("reward: wrong action count");
            for (double r : row)
                if (std::abs(r) > r_max + 1e-12) throw std::invalid_argument("reward: exceeds r_max");
        }
    }
    for (const auto& slice : obs_kernel) {
        if (static_cast<int>(slice.size()) != n_states) throw std::invalid_argument("obs_kernel: wrong state count");
        for (const auto& d : slice) check_dist(d, n_obs, "obs_kernel");
    }
    check_dist(prior_state, n_states, "prior_state");
    if (static_cast<int>(prior_action.size()) != n_states)
        throw std::invalid_argument("prior_action: wrong state count");
    for (const auto& d : prior_action) check_dist(d, n_actions, "prior_action");
}

void BehaviorPolicy::validate(const TabularPOMDP& pomdp) const {
    const int ns = time_homogeneous ? 1 : pomdp.horizon + 1;
    if (static_cast<int>(probs.size()) != ns) throw std::invalid_argument("behavior: wrong slice count");
    for (const auto& slice : probs) {
        if (static_cast<int>(slice.size()) != pomdp.n_states)
            throw std::invalid_argument("behavior: wrong state count");
        for (const auto& d : slice) check_dist(d, pomdp.n_actions, "behavior");
    }
}

int EvalPolicy::act_history(const std::vector<int>& obs_1t, const std::vector<int>& acts_prev) const {
    if (kind == Kind::CurrentObs) return table[obs_1t.back()];
    std::vector<double> scores = history_scores(obs_1t, acts_prev);
    int best = 0;
    for (int a = 1; a < static_cast<int>(scores.size()); ++a)
        if (scores[a] > scores[best]) best = a;  // ties keep the lowest index
    return best;
}

NoisyObs build_noisyobs(double eps_noise) {
    if (eps_noise < 0.0 || eps_noise > 1.0)
        throw std::invalid_argument("eps_noise: must be in [0,1]");
    NoisyObs out;
    TabularPOMDP& m = out.pomdp;
    m.n_states = 3;
    m.n_actions = 2;
    m.n_obs = 3;
    m.horizon = 3;
    m.r_max = 8.0;
    m.time_homogeneous = true;

    // a1 cycles s1->s2->s1 and drains s3; a2 holds s1 and swaps s2<->s3
    auto det = [](int s) {
        Dist d(3, 0.0);
        d[s] = 1.0;
        return d;
    };
    std::vector<std::vector<Dist>> trans(3, std::vector<Dist>(2));
    trans[0][0] = det(1);
    trans[1][0] = det(0);
    trans[2][0] = det(0);
    trans[0][1] = det(0);
    trans[1][1] = det(2);
    trans[2][1] = det(1);
    m.transition = {trans};

    std::vector<std::vector<double>> rew = {{3.0, 0.0}, {1.0, -2.0}, {8.0, -2.0}};
    m.reward = {rew};

    std::vector<Dist> obs(3);
    for (int s = 0; s < 3; ++s) {
        obs[s] = Dist(3, eps_noise / 2.0);
        obs[s][s] = 1.0 - eps_noise;
    }
    m.obs_kernel = {obs};

    m.prior_state = {0.5, 0.3, 0.2};

    std::vector<Dist> pib = {{0.8, 0.2}, {0.8, 0.2}, {0.2, 0.8}};
    m.prior_action = pib;

    out.behavior.time_homogeneous = true;
    out.behavior.probs = {pib};

    out.easy.kind = EvalPolicy::Kind::CurrentObs;
    out.easy.table = {0, 0, 1};
    out.hard.kind = EvalPolicy::Kind::CurrentObs;
    out.hard.table = {1, 1, 0};
    out.optim.kind = EvalPolicy::Kind::CurrentObs;
    out.optim.table = {0, 1, 0};

    m.validate();
    out.behavior.validate(m);
    return out;
}

Trajectory sample_trajectory(const TabularPOMDP& pomdp, const BehaviorPolicy& behavior,
                             std::uint64_t rng_seed, bool with_hidden) {
    Rng rng(rng_seed);
    Trajectory traj;
    const int H = pomdp.horizon;
    int s = rng.categorical(pomdp.prior_state);
    traj.o0 = rng.categorical(pomdp.obs_dist(0, s));
    int a0 = rng.categorical(behavior.at(0, s));
    if (with_hidden) traj.hidden = Hidden{s, a0, {}};
    s = rng.categorical(pomdp.trans(0, s, a0));
    traj.steps.resize(H);
    for (int t = 1; t <= H; ++t) {
        Step& step = traj.steps[t - 1];
        step.o = rng.categorical(pomdp.obs_dist(t, s));
        step.a = rng.categorical(behavior.at(t, s));
        step.r = pomdp.reward_at(t, s, step.a);
        if (with_hidden) traj.hidden->states.push_back(s);
        if (t < H) s = rng.categorical(pomdp.trans(t, s, step.a));
    }
    return traj;
}

std::vector<Trajectory> sample_dataset(const TabularPOMDP& pomdp, const BehaviorPolicy& behavior,
                                       int n, std::uint64_t seed, bool with_hidden) {
    std::vector<Trajectory> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i)
        out.push_back(sample_trajectory(pomdp, behavior, derive_seed(seed, i), with_hidden));
    return out;
}

double exact_policy_value(const TabularPOMDP& pomdp, const EvalPolicy& eval, double gamma) {
    const int H = pomdp.horizon;
    const double budget =
        std::pow(static_cast<double>(pomdp.n_obs), H) * std::pow(static_cast<double>(pomdp.n_states), H + 1);
    if (budget > 1e7)
        throw EnumerationTooLarge("exact_policy_value: n_obs^H * n_states^(H+1) exceeds 1e7");

    // O_0 never influences actions or rewards, so it is not branched on
    double value = 0.0;
    std::vector<int> obs_hist, act_hist;
    obs_hist.reserve(H);
    act_hist.reserve(H);

    auto step = [&](auto&& self, int t, int s, double p, double disc) -> void {
        if (t > H) return;
        const Dist& od = pomdp.obs_dist(t, s);
        for (int o = 0; o < pomdp.n_obs; ++o) {
            if (od[o] == 0.0) continue;
            obs_hist.push_back(o);
            int a = eval.kind == EvalPolicy::Kind::CurrentObs ? eval.act_current(o)
                                                              : eval.act_history(obs_hist, act_hist);
            double pb = p * od[o];
            value += pb * disc * pomdp.reward_at(t, s, a);
            if (t < H) {
                act_hist.push_back(a);
                const Dist& td = pomdp.trans(t, s, a);
                for (int s2 = 0; s2 < pomdp.n_states; ++s2)
                    if (td[s2] > 0.0) self(self, t + 1, s2, pb * td[s2], disc * gamma);
                act_hist.pop_back();
            }
            obs_hist.pop_back();
        }
    };

    for (int s0 = 0; s0 < pomdp.n_states; ++s0) {
        if (pomdp.prior_state[s0] == 0.0) continue;
        for (int a0 = 0; a0 < pomdp.n_actions; ++a0) {
            double pa0 = pomdp.prior_action[s0][a0];
            if (pa0 == 0.0) continue;
            const Dist& td = pomdp.trans(0, s0, a0);
            for (int s1 = 0; s1 < pomdp.n_states; ++s1)
                if (td[s1] > 0.0) step(step, 1, s1, pomdp.prior_state[s0] * pa0 * td[s1], 1.0);
        }
    }
    return value;
}

void write_trajectories_jsonl(std::ostream& os, const std::vector<Trajectory>& data) {
    for (const Trajectory& t : data) {
        nlohmann::json j;
        j["o0"] = t.o0;
        auto& steps = j["steps"] = nlohmann::json::array();
        for (const Step& s : t.steps) steps.push_back({{"o", s.o}, {"a", s.a}, {"r", s.r}});
        if (t.hidden)
            j["hidden"] = {{"s0", t.hidden->s0}, {"a0", t.hidden->a0}, {"states", t.hidden->states}};
        os << j.dump() << "\n";
    }
}

std::vector<Trajectory> read_trajectories_jsonl(std::istream& is) {
    std::vector<Trajectory> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Trajectory t;
        t.o0 = j.at("o0").get<int>();
        for (const auto& js : j.at("steps"))
            t.steps.push_back(Step{js.at("o").get<int>(), js.at("a").get<int>(), js.at("r").get<double>()});
        if (j.contains("hidden")) {
            Hidden h;
            h.s0 = j["hidden"].at("s0").get<int>();
            h.a0 = j["hidden"].at("a0").get<int>();
            h.states = j["hidden"].at("states").get<std::vector<int>>();
            t.hidden = h;
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::string pomdp_to_json(const TabularPOMDP& m) {
    nlohmann::json j;
    j["n_states"] = m.n_states;
    j["n_actions"] = m.n_actions;
    j["n_obs"] = m.n_obs;
    j["horizon"] = m.horizon;
    j["r_max"] = m.r_max;
    j["time_homogeneous"] = m.time_homogeneous;
    j["transition"] = m.transition;
    j["reward"] = m.reward;
    j["obs_kernel"] = m.obs_kernel;
    j["prior_state"] = m.prior_state;
    j["prior_action"] = m.prior_action;
    return j.dump(2);
}

TabularPOMDP pomdp_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    TabularPOMDP m;
    m.n_states = j.at("n_states").get<int>();
    m.n_actions = j.at("n_actions").get<int>();
    m.n_obs = j.at("n_obs").get<int>();
    m.horizon = j.at("horizon").get<int>();
    m.r_max = j.at("r_max").get<double>();
    m.time_homogeneous = j.at("time_homogeneous").get<bool>();
    m.transition = j.at("transition").get<decltype(m.transition)>();
    m.reward = j.at("reward").get<decltype(m.reward)>();
    m.obs_kernel = j.at("obs_kernel").get<decltype(m.obs_kernel)>();
    m.prior_state = j.at("prior_state").get<Dist>();
    m.prior_action = j.at("prior_action").get<decltype(m.prior_action)>();
    m.validate();
    return m;
}

}  // namespace prl
