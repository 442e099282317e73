#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prl/pci.hpp"
#include "prl/pomdp.hpp"

namespace prl {

// Mixture of three Gaussians on embedded (control, action) vectors:
// K(x,y) = (1/3) sum_i exp(-|x-y|^2 / (2 c_i sigma2)), sigma2 calibrated from data
struct KernelSpec {
    std::array<double, 3> scale_multipliers{0.25, 1.0, 4.0};
    double variance_floor = 1e-6;
};

// one-hot of control ++ one-hot of action; Real controls embed the raw value
std::vector<double> embed(const ControlValue& c, int a, const ControlSpace& space, int n_actions);

// mean per-dimension variance of the weighted point set, floored
double calibrate_sigma2(const std::vector<std::vector<double>>& points,
                        const std::vector<double>& weights, double floor_value);

double kernel_value(const KernelSpec& spec, double sigma2, const std::vector<double>& x,
                    const std::vector<double>& y);

std::vector<std::vector<double>> gram(const KernelSpec& spec, double sigma2,
                                      const std::vector<std::vector<double>>& xs,
                                      const std::vector<std::vector<double>>& ys);

struct TabularKey {
    ControlValue c;
    int a = 0;
    friend bool operator==(const TabularKey& l, const TabularKey& r) { return l.c == r.c && l.a == r.a; }
    friend bool operator<(const TabularKey& l, const TabularKey& r) {
        if (l.c == r.c) return l.a < r.a;
        return l.c < r.c;
    }
};

// value map over an ordered unique support; unseen lookups return default_value and count up
struct TabularFn {
    std::vector<TabularKey> support;
    std::vector<double> values;
    double default_value = 0.0;
    mutable long unseen_count = 0;

    int find(const ControlValue& c, int a) const;
    double operator()(const ControlValue& c, int a) const {
        int idx = find(c, a);
        if (idx < 0) {
            ++unseen_count;
            return default_value;
        }
        return values[idx];
    }
    static TabularFn constant(double v) {
        TabularFn f;
        f.default_value = v;
        return f;
    }
};

struct VmmConfig {
    double alpha = 1e-4;
    double lambda = 1e-4;
    int outer_iterations = 2;
    double jitter = 1e-8;
    KernelSpec kernel;
};

struct VmmDiagnostics {
    struct Entry {
        int t = 0;
        char which = 'q';      // 'q' or 'h'
        int outer = 0;
        double residual = 0.0;  // normal-equation relative residual
        double gram_min_eig = 0.0;
        double cond = 0.0;      // condition estimate of the solved system
        double obj_prior = 0.0;
        double obj_solution = 0.0;
    };
    std::vector<Entry> entries;
    std::string to_json() const;
};

struct NuisanceSet {
    std::vector<TabularFn> q;  // index t-1 for t = 1..H
    std::vector<TabularFn> h;
    int n_actions = 0;  // action alphabet size, needed by scores summing h over actions
    VmmDiagnostics diagnostics;
};

// per-step view of the reduced dataset (fixed t), one entry per trajectory
struct StepData {
    std::vector<ControlValue> z;
    std::vector<ControlValue> w;
    std::vector<int> a;
    std::vector<int> e;
    std::vector<double> r;
    ControlSpace zspace;
    ControlSpace wspace;
    int n_actions = 0;
    int n() const { return static_cast<int>(a.size()); }
};

StepData step_data(const std::vector<std::vector<ControlTuple>>& reduced, int t,
                   const PciScheme& scheme, const Alphabets& alph);

// One VMM solve for q^(t): moment rows tested against the S(W_t; A) cross support,
// unknowns on the observed S(Z_t, A_t) support. Follows the sequential VMM pseudocode;
// the discrete fast path aggregates trajectories into (z, w, a) groups so assembly is O(n).
TabularFn compute_q(const StepData& d, const VmmConfig& cfg, const TabularFn& prior_q,
                    const std::vector<double>& eta, int t, int outer, VmmDiagnostics* diag);

// Mirror for h^(t): rows on S(Z_t, A_t), unknowns on S(W_t, A_t);
// mu_i = 1{A_t = E_t} (R_t + gamma * omega_i) supplied by the caller
TabularFn compute_h(const StepData& d, const VmmConfig& cfg, const TabularFn& prior_h,
                    const std::vector<double>& eta, const std::vector<double>& mu, int t, int outer,
                    VmmDiagnostics* diag);

// forward pass q^(1..H) with eta recursion, backward pass h^(H..1) with the DR backup;
// outer iterations warm-start the priors (first pass: q ~ 1, h ~ 0)
NuisanceSet fit_nuisances(const std::vector<Trajectory>& data, const EvalPolicy& eval,
                          const PciScheme& scheme, const Alphabets& alph, const VmmConfig& cfg,
                          double gamma);

}  // namespace prl
