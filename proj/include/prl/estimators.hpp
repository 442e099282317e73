#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prl/pci.hpp"
#include "prl/pomdp.hpp"
#include "prl/vmm.hpp"

namespace prl {

enum class ScoreKind { IS, Reg, DR };

const char* score_kind_name(ScoreKind k);

// eta_1..eta_{H+1}: eta_1 = 1, eta_{t+1} = eta_t * 1{A_t = E_t} * q^(t)(Z_t, A_t)
std::vector<double> eta_weights(const std::vector<ControlTuple>& tuples, const NuisanceSet& ns);

double score_from_tuples(const std::vector<ControlTuple>& tuples, const NuisanceSet& ns,
                         double gamma, ScoreKind kind);

double score(const Trajectory& traj, const EvalPolicy& eval, const PciScheme& scheme,
             const NuisanceSet& ns, double gamma, ScoreKind kind);

struct EstimateReport {
    double estimate = 0.0;
    std::vector<double> fold_estimates;
    double sigma2 = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    int n = 0;
    ScoreKind score = ScoreKind::DR;
    double max_abs_eta = 0.0;
    double matched_share = 0.0;  // mean over (i, t) of 1{A_t = E_t}
    int k_folds = 0;
    std::uint64_t seed = 0;
    std::vector<int> fold_of;  // fold id per original trajectory index
    bool non_standard_folds = false;  // k_folds == 1, no cross-fitting
    std::string to_json() const;
};

// Cross-fitted plug-in estimate: seeded index shuffle, contiguous equal-size folds,
// nuisances fit on each fold's complement, v = mean of out-of-fold scores,
// sigma2 = (1/n) sum (psi - v)^2, ci95 = v +/- 1.96 sqrt(sigma2/n).
EstimateReport estimate_value(const std::vector<Trajectory>& data, const EvalPolicy& eval,
                              const PciScheme& scheme, const Alphabets& alph, const VmmConfig& cfg,
                              double gamma, ScoreKind kind, int k_folds, std::uint64_t seed);

// same fold fits shared across several score kinds
std::vector<EstimateReport> estimate_multi(const std::vector<Trajectory>& data, const EvalPolicy& eval,
                                           const PciScheme& scheme, const Alphabets& alph,
                                           const VmmConfig& cfg, double gamma,
                                           const std::vector<ScoreKind>& kinds, int k_folds,
                                           std::uint64_t seed);

}  // namespace prl
