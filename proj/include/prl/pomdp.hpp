#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prl/errors.hpp"
#include "prl/rng.hpp"

namespace prl {

using Dist = std::vector<double>;

// Episode layout: S_0 ~ prior_state, O_0 ~ P_O(.|S_0), A_0 ~ prior_action(.|S_0),
// S_1 ~ P_T(.|S_0,A_0), then for t = 1..H: O_t, A_t, R_t = reward(t,S_t,A_t), S_{t+1}.
// The prior action is part of the environment's initial mechanism: evaluated policies
// control A_1..A_H only, so every trajectory law shares the same S_1 distribution map.
struct TabularPOMDP {
    int n_states = 0;
    int n_actions = 0;
    int n_obs = 0;
    int horizon = 0;
    double r_max = 0.0;
    bool time_homogeneous = true;

    // slice layout: one slice when time_homogeneous, else per-t slices
    // transition[t][s][a] -> dist over s', t in [0, H-1]
    // reward[t][s][a] -> deterministic mean reward, t in [1, H] stored at t-1
    // obs_kernel[t][s] -> dist over o, t in [0, H]
    std::vector<std::vector<std::vector<Dist>>> transition;
    std::vector<std::vector<std::vector<double>>> reward;
    std::vector<std::vector<Dist>> obs_kernel;
    Dist prior_state;
    std::vector<Dist> prior_action;  // [s] -> dist over a, the A_0 mechanism

    const Dist& trans(int t, int s, int a) const {
        return transition[time_homogeneous ? 0 : t][s][a];
    }
    double reward_at(int t, int s, int a) const {
        return reward[time_homogeneous ? 0 : t - 1][s][a];
    }
    const Dist& obs_dist(int t, int s) const {
        return obs_kernel[time_homogeneous ? 0 : t][s];
    }

    // throws std::invalid_argument naming the offending field
    void validate() const;
};

struct BehaviorPolicy {
    bool time_homogeneous = true;
    std::vector<std::vector<Dist>> probs;  // [t][s] -> dist over a, t in [0, H]

    const Dist& at(int t, int s) const { return probs[time_homogeneous ? 0 : t][s]; }
    void validate(const TabularPOMDP& pomdp) const;
};

// Deterministic target policy. CurrentObs looks up table[O_t]; History scores actions
// from (O_{1:t}, A_{1:t-1}) and ties resolve to the lowest action index.
struct EvalPolicy {
    enum class Kind { CurrentObs, History };
    Kind kind = Kind::CurrentObs;
    std::vector<int> table;
    std::function<std::vector<double>(const std::vector<int>&, const std::vector<int>&)> history_scores;

    int act_current(int o_t) const { return table[o_t]; }
    int act_history(const std::vector<int>& obs_1t, const std::vector<int>& acts_prev) const;
};

struct Step {
    int o = 0;
    int a = 0;
    double r = 0.0;
};

struct Hidden {
    int s0 = 0;
    int a0 = 0;
    std::vector<int> states;  // s_1..s_H
};

struct Trajectory {
    int o0 = 0;
    std::vector<Step> steps;  // length H
    std::optional<Hidden> hidden;
};

// observable view; reduction code consumes this so it cannot read hidden states
struct ObservableTrajectory {
    int o0;
    const std::vector<Step>* steps;
    ObservableTrajectory(const Trajectory& t) : o0(t.o0), steps(&t.steps) {}
};

struct Alphabets {
    int n_obs = 0;
    int n_actions = 0;
    int horizon = 0;
};

inline Alphabets alphabets_of(const TabularPOMDP& m) {
    return Alphabets{m.n_obs, m.n_actions, m.horizon};
}

struct NoisyObs {
    TabularPOMDP pomdp;
    BehaviorPolicy behavior;
    EvalPolicy easy;
    EvalPolicy hard;
    EvalPolicy optim;
};

// 3 states, 2 actions, 3 observations, H = 3; P(o_i|s_i) = 1-eps, eps/2 off-diagonal
NoisyObs build_noisyobs(double eps_noise);

Trajectory sample_trajectory(const TabularPOMDP& pomdp, const BehaviorPolicy& behavior,
                             std::uint64_t rng_seed, bool with_hidden);

// trajectory i uses seed derive_seed(seed, i) so subsets are reproducible
std::vector<Trajectory> sample_dataset(const TabularPOMDP& pomdp, const BehaviorPolicy& behavior,
                                       int n, std::uint64_t seed, bool with_hidden = false);

// exact v_gamma(pi_e) by path enumeration; refuses when n_obs^H * n_states^(H+1) > 1e7
double exact_policy_value(const TabularPOMDP& pomdp, const EvalPolicy& eval, double gamma);

// JSONL persistence, one trajectory per line
void write_trajectories_jsonl(std::ostream& os, const std::vector<Trajectory>& data);
std::vector<Trajectory> read_trajectories_jsonl(std::istream& is);

// single-document model persistence
std::string pomdp_to_json(const TabularPOMDP& pomdp);
TabularPOMDP pomdp_from_json(const std::string& text);

}  // namespace prl
