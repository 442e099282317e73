#pragma once

// Baseline estimators that ignore confounding: behavior mean return, an MDP
// model fit on observables, and time-varying importance sampling built from
// one-step observation operators.

#include <string>
#include <vector>

#include "prl/pomdp.hpp"

namespace prl {

// (1/n) sum_i sum_t gamma^{t-1} R_t^i
double mean_r(const std::vector<Trajectory>& data, double gamma);

struct MdpDiag {
    long unvisited_reward_cells = 0;
    long unvisited_transition_cells = 0;
};

// Treats observations as Markov states: empirical transitions/rewards pooled
// over time, then finite-horizon DP under the (current-observation) policy.
// Unvisited cells fall back to reward 0 and a uniform next-observation law.
double mdp_dp(const std::vector<Trajectory>& data, const EvalPolicy& eval, double gamma,
              const Alphabets& alph, MdpDiag* diag = nullptr);

// One atom of the discrete law over (Z_t, W_t, X_t, A_t, R_t); x = -1 at the
// final step, where no lead observation exists.
struct TisAtom {
    int z = 0, w = 0, x = 0, a = 0;
    double r = 0.0;
    double p = 0.0;
};

struct TisAtoms {
    int horizon = 0;
    std::vector<double> omega0;             // marginal of O_1 (the t=0 lead coordinate)
    std::vector<std::vector<TisAtom>> per_t;  // per_t[t-1] holds the step-t atoms
};

TisAtoms tis_atoms_from_data(const std::vector<Trajectory>& data, const Alphabets& alph);
// Law entries are (trajectory, probability) pairs; see oracle.hpp producers.
TisAtoms tis_atoms_from_law(const std::vector<std::pair<Trajectory, double>>& law,
                            const Alphabets& alph);

struct TisDiag {
    bool singular_q = false;      // some one-step operator was rank-deficient
    long zero_prob_cells = 0;     // (z,a) cells with no mass, ratio forced to 0
    std::vector<double> min_singular_ratio;  // per step: sigma_min / sigma_max of Q
};

// Factorized evaluation of the importance-sampling functional: messages over
// the lead coordinate are propagated forward one step at a time, so cost is
// linear in the number of atoms rather than exponential in horizon.
double tis_from_atoms(const TisAtoms& atoms, const EvalPolicy& eval, double gamma,
                      const Alphabets& alph, TisDiag* diag = nullptr);

double tis(const std::vector<Trajectory>& data, const EvalPolicy& eval, double gamma,
           const Alphabets& alph, TisDiag* diag = nullptr);

// Direct sum over all index tuples; O(n^{H+1}), for cross-checking only.
double tis_brute_force(const std::vector<Trajectory>& data, const EvalPolicy& eval, double gamma,
                       const Alphabets& alph, TisDiag* diag = nullptr);

}  // namespace prl
