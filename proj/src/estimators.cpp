#include "prl/estimators.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace prl {

const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::IS: return "is";
        case ScoreKind::Reg: return "reg";
        case ScoreKind::DR: return "dr";
    }
    return "";
}

std::vector<double> eta_weights(const std::vector<ControlTuple>& tuples, const NuisanceSet& ns) {
    const int H = static_cast<int>(tuples.size());
    std::vector<double> eta(H + 1);
    eta[0] = 1.0;
    for (int t = 1; t <= H; ++t) {
        const ControlTuple& ct = tuples[t - 1];
        double ind = ct.a == ct.e ? 1.0 : 0.0;
        eta[t] = eta[t - 1] * ind * ns.q[t - 1](ct.z, ct.a);
    }
    return eta;
}

double score_from_tuples(const std::vector<ControlTuple>& tuples, const NuisanceSet& ns,
                         double gamma, ScoreKind kind) {
    const int H = static_cast<int>(tuples.size());
    if (kind == ScoreKind::Reg) {
        double s = 0.0;
        for (int a = 0; a < ns.n_actions; ++a) s += ns.h[0](tuples[0].w, a);
        return s;
    }
    std::vector<double> eta = eta_weights(tuples, ns);
    double value = 0.0;
    double disc = 1.0;
    for (int t = 1; t <= H; ++t) {
        const ControlTuple& ct = tuples[t - 1];
        if (kind == ScoreKind::IS) {
            value += disc * eta[t] * ct.r;
        } else {  // DR
            double hsum = 0.0;
            for (int a = 0; a < ns.n_actions; ++a) hsum += ns.h[t - 1](ct.w, a);
            value += disc * (eta[t] * ct.r +
                             eta[t - 1] * (hsum - ns.q[t - 1](ct.z, ct.a) * ns.h[t - 1](ct.w, ct.a)));
        }
        disc *= gamma;
    }
    return value;
}

double score(const Trajectory& traj, const EvalPolicy& eval, const PciScheme& scheme,
             const NuisanceSet& ns, double gamma, ScoreKind kind) {
    return score_from_tuples(control_tuples(traj, eval, scheme), ns, gamma, kind);
}

std::vector<EstimateReport> estimate_multi(const std::vector<Trajectory>& data, const EvalPolicy& eval,
                                           const PciScheme& scheme, const Alphabets& alph,
                                           const VmmConfig& cfg, double gamma,
                                           const std::vector<ScoreKind>& kinds, int k_folds,
                                           std::uint64_t seed) {
    const int n = static_cast<int>(data.size());
    if (k_folds < 1) throw std::invalid_argument("estimate_value: k_folds must be >= 1");
    if (n < k_folds) throw std::invalid_argument("estimate_value: n < k_folds");

    // index-based fold split: seeded Fisher-Yates shuffle, then contiguous blocks,
    // so a data permutation plus the matching seed permutation reproduces the folds
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (int i = n - 1; i >= 1; --i) {
        int j = static_cast<int>(rng.uniform() * (i + 1));
        if (j > i) j = i;
        std::swap(order[i], order[j]);
    }
    std::vector<int> fold_of(n, 0);
    const int base = n / k_folds, rem = n % k_folds;
    {
        int pos = 0;
        for (int f = 0; f < k_folds; ++f) {
            int size = base + (f < rem ? 1 : 0);
            for (int u = 0; u < size; ++u) fold_of[order[pos++]] = f;
        }
    }

    std::vector<std::vector<ControlTuple>> reduced(n);
    for (int i = 0; i < n; ++i) reduced[i] = control_tuples(data[i], eval, scheme);

    std::vector<std::vector<double>> psis(kinds.size(), std::vector<double>(n, 0.0));
    double max_abs_eta = 0.0;
    double matched = 0.0;
    const int H = alph.horizon;

    for (int f = 0; f < k_folds; ++f) {
        NuisanceSet ns;
        try {
            if (k_folds == 1) {
                ns = fit_nuisances(data, eval, scheme, alph, cfg, gamma);
            } else {
                std::vector<Trajectory> train;
                train.reserve(n);
                for (int i = 0; i < n; ++i)
                    if (fold_of[i] != f) train.push_back(data[i]);
                ns = fit_nuisances(train, eval, scheme, alph, cfg, gamma);
            }
        } catch (const SingularSystem& e) {
            throw SingularSystem("fold " + std::to_string(f) + ": " + e.what());
        }
        for (int i = 0; i < n; ++i) {
            if (k_folds > 1 && fold_of[i] != f) continue;
            std::vector<double> eta = eta_weights(reduced[i], ns);
            for (double v : eta) max_abs_eta = std::max(max_abs_eta, std::abs(v));
            for (size_t k = 0; k < kinds.size(); ++k)
                psis[k][i] = score_from_tuples(reduced[i], ns, gamma, kinds[k]);
        }
    }
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < H; ++t)
            if (reduced[i][t].a == reduced[i][t].e) matched += 1.0;
    matched /= static_cast<double>(n) * H;

    std::vector<EstimateReport> reports;
    for (size_t k = 0; k < kinds.size(); ++k) {
        EstimateReport rep;
        rep.n = n;
        rep.score = kinds[k];
        rep.k_folds = k_folds;
        rep.seed = seed;
        rep.fold_of = fold_of;
        rep.non_standard_folds = k_folds == 1;
        rep.max_abs_eta = max_abs_eta;
        rep.matched_share = matched;

        double v = 0.0;
        for (double p : psis[k]) v += p;
        v /= n;
        double s2 = 0.0;
        for (double p : psis[k]) s2 += (p - v) * (p - v);
        s2 /= n;
        rep.estimate = v;
        rep.sigma2 = s2;
        double half = 1.96 * std::sqrt(s2 / n);
        rep.ci_lo = v - half;
        rep.ci_hi = v + half;
        rep.fold_estimates.assign(k_folds, 0.0);
        std::vector<int> fold_n(k_folds, 0);
        for (int i = 0; i < n; ++i) {
            rep.fold_estimates[fold_of[i]] += psis[k][i];
            ++fold_n[fold_of[i]];
        }
        for (int f = 0; f < k_folds; ++f)
            if (fold_n[f] > 0) rep.fold_estimates[f] /= fold_n[f];
        reports.push_back(std::move(rep));
    }
    return reports;
}

EstimateReport estimate_value(const std::vector<Trajectory>& data, const EvalPolicy& eval,
                              const PciScheme& scheme, const Alphabets& alph, const VmmConfig& cfg,
                              double gamma, ScoreKind kind, int k_folds, std::uint64_t seed) {
    return estimate_multi(data, eval, scheme, alph, cfg, gamma, {kind}, k_folds, seed)[0];
}

std::string EstimateReport::to_json() const {
    nlohmann::json j;
    j["estimate"] = estimate;
    j["fold_estimates"] = fold_estimates;
    j["sigma2"] = sigma2;
    j["ci95"] = {ci_lo, ci_hi};
    j["n"] = n;
    j["score"] = score_kind_name(score);
    j["max_abs_eta"] = max_abs_eta;
    j["matched_share"] = matched_share;
    j["k_folds"] = k_folds;
    j["seed"] = seed;
    j["non_standard_folds"] = non_standard_folds;
    return j.dump();
}

}  // namespace prl
