#include "prl/vmm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include <Eigen/Dense>
#include <json.hpp>

namespace prl {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd to_eigen(const std::vector<std::vector<double>>& rows) {
    MatrixXd m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    return m;
}

double min_eigenvalue(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// solve the SPD-ish system A x = rhs; lambda > 0 keeps A positive definite, otherwise the
// minimum-norm solution is taken so the ridge-free fit matches a pseudo-inverse GMM solve
VectorXd solve_normal(const MatrixXd& A, const VectorXd& rhs, double lambda, const char* what) {
    VectorXd x;
    if (lambda > 0.0) {
        Eigen::LLT<MatrixXd> llt(A);
        if (llt.info() == Eigen::Success) {
            x = llt.solve(rhs);
        } else {
            Eigen::LDLT<MatrixXd> ldlt(A);
            if (ldlt.info() != Eigen::Success)
                throw SingularSystem(std::string(what) + ": normal equations not factorizable");
            x = ldlt.solve(rhs);
        }
    } else {
        Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);
        x = cod.solve(rhs);
    }
    if (!x.allFinite()) throw SingularSystem(std::string(what) + ": non-finite solution");
    return x;
}

double condition_estimate(const MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(A, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

}  // namespace

std::vector<double> embed(const ControlValue& c, int a, const ControlSpace& space, int n_actions) {
    std::vector<double> v(space.dim() + n_actions, 0.0);
    switch (c.kind) {
        case ControlValue::Kind::Obs: v[c.i] = 1.0; break;
        case ControlValue::Kind::Real: v[0] = c.x; break;
        case ControlValue::Kind::Pair:
            v[c.i] = 1.0;
            v[space.card + c.j] = 1.0;
            break;
    }
    v[space.dim() + a] = 1.0;
    return v;
}

double calibrate_sigma2(const std::vector<std::vector<double>>& points,
                        const std::vector<double>& weights, double floor_value) {
    if (points.empty()) return floor_value;
    const int dim = static_cast<int>(points[0].size());
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (wsum <= 0.0) return floor_value;
    double total = 0.0;
    for (int d = 0; d < dim; ++d) {
        double m = 0.0, m2 = 0.0;
        for (size_t i = 0; i < points.size(); ++i) {
            m += weights[i] * points[i][d];
            m2 += weights[i] * points[i][d] * points[i][d];
        }
        m /= wsum;
        m2 /= wsum;
        total += std::max(m2 - m * m, 0.0);
    }
    return std::max(total / dim, floor_value);
}

double kernel_value(const KernelSpec& spec, double sigma2, const std::vector<double>& x,
                    const std::vector<double>& y) {
    double d2 = 0.0;
    for (size_t d = 0; d < x.size(); ++d) {
        double diff = x[d] - y[d];
        d2 += diff * diff;
    }
    double k = 0.0;
    for (double c : spec.scale_multipliers) k += std::exp(-d2 / (2.0 * c * sigma2));
    return k / static_cast<double>(spec.scale_multipliers.size());
}

std::vector<std::vector<double>> gram(const KernelSpec& spec, double sigma2,
                                      const std::vector<std::vector<double>>& xs,
                                      const std::vector<std::vector<double>>& ys) {
    std::vector<std::vector<double>> g(xs.size(), std::vector<double>(ys.size()));
    for (size_t i = 0; i < xs.size(); ++i)
        for (size_t j = 0; j < ys.size(); ++j) g[i][j] = kernel_value(spec, sigma2, xs[i], ys[j]);
    return g;
}

int TabularFn::find(const ControlValue& c, int a) const {
    TabularKey key{c, a};
    auto it = std::lower_bound(support.begin(), support.end(), key);
    if (it == support.end() || !(*it == key)) return -1;
    return static_cast<int>(it - support.begin());
}

StepData step_data(const std::vector<std::vector<ControlTuple>>& reduced, int t,
                   const PciScheme& scheme, const Alphabets& alph) {
    StepData d;
    const int n = static_cast<int>(reduced.size());
    d.z.reserve(n);
    d.w.reserve(n);
    d.a.reserve(n);
    d.e.reserve(n);
    d.r.reserve(n);
    for (const auto& tuples : reduced) {
        const ControlTuple& ct = tuples[t - 1];
        d.z.push_back(ct.z);
        d.w.push_back(ct.w);
        d.a.push_back(ct.a);
        d.e.push_back(ct.e);
        d.r.push_back(ct.r);
    }
    d.zspace = z_space(scheme, t, alph.n_obs);
    d.wspace = w_space(scheme, t, alph.n_obs);
    d.n_actions = alph.n_actions;
    return d;
}

TabularFn compute_q(const StepData& d, const VmmConfig& cfg, const TabularFn& prior_q,
                    const std::vector<double>& eta, int t, int outer, VmmDiagnostics* diag) {
    const int n = d.n();
    const int nA = d.n_actions;

    // cross support S(W_t; A) drives the test space; q lives on observed S(Z_t, A_t)
    std::vector<ControlValue> wvals(d.w.begin(), d.w.end());
    std::sort(wvals.begin(), wvals.end());
    wvals.erase(std::unique(wvals.begin(), wvals.end()), wvals.end());
    const int nw = static_cast<int>(wvals.size());
    const int mW = nw * nA;

    std::vector<TabularKey> zsupp;
    for (int i = 0; i < n; ++i) zsupp.push_back(TabularKey{d.z[i], d.a[i]});
    std::sort(zsupp.begin(), zsupp.end());
    zsupp.erase(std::unique(zsupp.begin(), zsupp.end()), zsupp.end());
    const int mq = static_cast<int>(zsupp.size());

    auto w_index = [&](const ControlValue& w) {
        return static_cast<int>(std::lower_bound(wvals.begin(), wvals.end(), w) - wvals.begin());
    };
    auto z_index = [&](const ControlValue& z, int a) {
        TabularKey key{z, a};
        return static_cast<int>(std::lower_bound(zsupp.begin(), zsupp.end(), key) - zsupp.begin());
    };

    std::vector<std::vector<double>> cross_embeds(mW);
    for (int wi = 0; wi < nw; ++wi)
        for (int a = 0; a < nA; ++a) cross_embeds[wi * nA + a] = embed(wvals[wi], a, d.wspace, nA);

    // bandwidth from the observed (W_t, A_t) sample, multiplicities included
    std::vector<std::vector<double>> sample_points(mW);
    std::vector<double> sample_weights(mW, 0.0);
    for (int j = 0; j < mW; ++j) sample_points[j] = cross_embeds[j];
    for (int i = 0; i < n; ++i) sample_weights[w_index(d.w[i]) * nA + d.a[i]] += 1.0;
    const double sigma2 = calibrate_sigma2(sample_points, sample_weights, cfg.kernel.variance_floor);

    MatrixXd G = to_eigen(gram(cfg.kernel, sigma2, cross_embeds, cross_embeds));
    MatrixXd Lt(nw, mW);  // row w: sum over actions of the Gram rows for (w, a)
    for (int wi = 0; wi < nw; ++wi) {
        Lt.row(wi).setZero();
        for (int a = 0; a < nA; ++a) Lt.row(wi) += G.row(wi * nA + a);
    }

    // group trajectories by (z-support index, w index); the action is part of the z key
    struct Agg {
        double cnt = 0.0, s1 = 0.0, s2 = 0.0;
    };
    std::map<std::pair<int, int>, Agg> groups;
    for (int i = 0; i < n; ++i) {
        Agg& g = groups[{z_index(d.z[i], d.a[i]), w_index(d.w[i])}];
        g.cnt += 1.0;
        g.s1 += eta[i];
        g.s2 += eta[i] * eta[i];
    }

    MatrixXd Q = cfg.alpha * G + cfg.jitter * MatrixXd::Identity(mW, mW);
    MatrixXd B = MatrixXd::Zero(mW, mq);
    VectorXd b = VectorXd::Zero(mW);
    VectorXd counts = VectorXd::Zero(mq);
    for (const auto& [key, g] : groups) {
        const auto [zi, wi] = key;
        const int cw = wi * nA + zsupp[zi].a;
        const double qtilde = prior_q(zsupp[zi].c, zsupp[zi].a);
        VectorXd v = qtilde * G.row(cw).transpose() - Lt.row(wi).transpose();
        Q.noalias() += (g.s2 / n) * v * v.transpose();
        B.col(zi).noalias() += (g.s1 / n) * G.row(cw).transpose();
        b.noalias() += (g.s1 / n) * Lt.row(wi).transpose();
        counts(zi) += g.cnt;
    }

    Eigen::LLT<MatrixXd> qllt(Q);
    if (qllt.info() != Eigen::Success)
        throw SingularSystem("compute_q: weighting matrix not positive definite at t=" + std::to_string(t));
    MatrixXd QiB = qllt.solve(B);
    VectorXd Qib = qllt.solve(b);
    MatrixXd A = B.transpose() * QiB;
    for (int j = 0; j < mq; ++j) A(j, j) += cfg.lambda * counts(j) / n;
    VectorXd rhs = B.transpose() * Qib;
    VectorXd x = solve_normal(A, rhs, cfg.lambda, "compute_q");

    TabularFn fn;
    fn.support = zsupp;
    fn.values.assign(x.data(), x.data() + mq);
    fn.default_value = 1.0;

    if (diag) {
        auto objective = [&](const VectorXd& vals) {
            VectorXd rho = B * vals - b;
            double ridge = 0.0;
            for (int j = 0; j < mq; ++j) ridge += cfg.lambda * counts(j) / n * vals(j) * vals(j);
            return rho.dot(qllt.solve(rho)) + ridge;
        };
        VectorXd prior_vals(mq);
        for (int j = 0; j < mq; ++j) prior_vals(j) = prior_q(zsupp[j].c, zsupp[j].a);
        VmmDiagnostics::Entry e;
        e.t = t;
        e.which = 'q';
        e.outer = outer;
        e.residual = (A * x - rhs).norm() / std::max(rhs.norm(), 1e-30);
        e.gram_min_eig = min_eigenvalue(G);
        e.cond = condition_estimate(A);
        e.obj_prior = objective(prior_vals);
        e.obj_solution = objective(x);
        diag->entries.push_back(e);
    }
    return fn;
}

TabularFn compute_h(const StepData& d, const VmmConfig& cfg, const TabularFn& prior_h,
                    const std::vector<double>& eta, const std::vector<double>& mu, int t, int outer,
                    VmmDiagnostics* diag) {
    const int n = d.n();
    const int nA = d.n_actions;

    std::vector<TabularKey> zsupp, wsupp;
    for (int i = 0; i < n; ++i) {
        zsupp.push_back(TabularKey{d.z[i], d.a[i]});
        wsupp.push_back(TabularKey{d.w[i], d.a[i]});
    }
    std::sort(zsupp.begin(), zsupp.end());
    zsupp.erase(std::unique(zsupp.begin(), zsupp.end()), zsupp.end());
    std::sort(wsupp.begin(), wsupp.end());
    wsupp.erase(std::unique(wsupp.begin(), wsupp.end()), wsupp.end());
    const int mZ = static_cast<int>(zsupp.size());
    const int mh = static_cast<int>(wsupp.size());

    auto z_index = [&](const ControlValue& z, int a) {
        TabularKey key{z, a};
        return static_cast<int>(std::lower_bound(zsupp.begin(), zsupp.end(), key) - zsupp.begin());
    };
    auto w_index = [&](const ControlValue& w, int a) {
        TabularKey key{w, a};
        return static_cast<int>(std::lower_bound(wsupp.begin(), wsupp.end(), key) - wsupp.begin());
    };

    std::vector<std::vector<double>> z_embeds(mZ);
    for (int j = 0; j < mZ; ++j) z_embeds[j] = embed(zsupp[j].c, zsupp[j].a, d.zspace, nA);

    std::vector<double> z_weights(mZ, 0.0);
    for (int i = 0; i < n; ++i) z_weights[z_index(d.z[i], d.a[i])] += 1.0;
    const double sigma2 = calibrate_sigma2(z_embeds, z_weights, cfg.kernel.variance_floor);

    MatrixXd G = to_eigen(gram(cfg.kernel, sigma2, z_embeds, z_embeds));

    struct Agg {
        double cnt = 0.0, s1 = 0.0, c2 = 0.0, sm = 0.0;
    };
    std::map<std::pair<int, int>, Agg> groups;
    for (int i = 0; i < n; ++i) {
        const int zi = z_index(d.z[i], d.a[i]);
        const int wi = w_index(d.w[i], d.a[i]);
        const double htilde = prior_h(d.w[i], d.a[i]);
        Agg& g = groups[{zi, wi}];
        g.cnt += 1.0;
        g.s1 += eta[i];
        g.c2 += eta[i] * eta[i] * (htilde - mu[i]) * (htilde - mu[i]);
        g.sm += eta[i] * mu[i];
    }

    MatrixXd Q = cfg.alpha * G + cfg.jitter * MatrixXd::Identity(mZ, mZ);
    MatrixXd B = MatrixXd::Zero(mZ, mh);
    VectorXd b = VectorXd::Zero(mZ);
    VectorXd counts = VectorXd::Zero(mh);
    for (const auto& [key, g] : groups) {
        const auto [zi, wi] = key;
        Q.noalias() += (g.c2 / n) * G.row(zi).transpose() * G.row(zi);
        B.col(wi).noalias() += (g.s1 / n) * G.row(zi).transpose();
        b.noalias() += (g.sm / n) * G.row(zi).transpose();
        counts(wi) += g.cnt;
    }

    Eigen::LLT<MatrixXd> qllt(Q);
    if (qllt.info() != Eigen::Success)
        throw SingularSystem("compute_h: weighting matrix not positive definite at t=" + std::to_string(t));
    MatrixXd QiB = qllt.solve(B);
    VectorXd Qib = qllt.solve(b);
    MatrixXd A = B.transpose() * QiB;
    for (int j = 0; j < mh; ++j) A(j, j) += cfg.lambda * counts(j) / n;
    VectorXd rhs = B.transpose() * Qib;
    VectorXd x = solve_normal(A, rhs, cfg.lambda, "compute_h");

    TabularFn fn;
    fn.support = wsupp;
    fn.values.assign(x.data(), x.data() + mh);
    fn.default_value = 0.0;

    if (diag) {
        auto objective = [&](const VectorXd& vals) {
            VectorXd rho = B * vals - b;
            double ridge = 0.0;
            for (int j = 0; j < mh; ++j) ridge += cfg.lambda * counts(j) / n * vals(j) * vals(j);
            return rho.dot(qllt.solve(rho)) + ridge;
        };
        VectorXd prior_vals(mh);
        for (int j = 0; j < mh; ++j) prior_vals(j) = prior_h(wsupp[j].c, wsupp[j].a);
        VmmDiagnostics::Entry e;
        e.t = t;
        e.which = 'h';
        e.outer = outer;
        e.residual = (A * x - rhs).norm() / std::max(rhs.norm(), 1e-30);
        e.gram_min_eig = min_eigenvalue(G);
        e.cond = condition_estimate(A);
        e.obj_prior = objective(prior_vals);
        e.obj_solution = objective(x);
        diag->entries.push_back(e);
    }
    return fn;
}

NuisanceSet fit_nuisances(const std::vector<Trajectory>& data, const EvalPolicy& eval,
                          const PciScheme& scheme, const Alphabets& alph, const VmmConfig& cfg,
                          double gamma) {
    if (data.empty()) throw std::invalid_argument("fit_nuisances: empty dataset");
    if (cfg.outer_iterations < 1) throw std::invalid_argument("fit_nuisances: outer_iterations must be >= 1");
    const int H = alph.horizon;
    const int n = static_cast<int>(data.size());

    std::vector<std::vector<ControlTuple>> reduced(n);
    for (int i = 0; i < n; ++i) reduced[i] = control_tuples(data[i], eval, scheme);
    std::vector<StepData> sd;
    sd.reserve(H);
    for (int t = 1; t <= H; ++t) sd.push_back(step_data(reduced, t, scheme, alph));

    NuisanceSet ns;
    ns.n_actions = alph.n_actions;
    ns.q.assign(H, TabularFn::constant(1.0));
    ns.h.assign(H, TabularFn::constant(0.0));
    std::vector<TabularFn> prior_q(H, TabularFn::constant(1.0));
    std::vector<TabularFn> prior_h(H, TabularFn::constant(0.0));

    std::vector<std::vector<double>> etas(H, std::vector<double>(n, 1.0));

    for (int outer = 1; outer <= cfg.outer_iterations; ++outer) {
        for (int t = 1; t <= H; ++t) {
            if (t > 1) {
                const StepData& prev = sd[t - 2];
                for (int i = 0; i < n; ++i) {
                    double ind = prev.a[i] == prev.e[i] ? 1.0 : 0.0;
                    etas[t - 1][i] = etas[t - 2][i] * ind * ns.q[t - 2](prev.z[i], prev.a[i]);
                }
            } else {
                std::fill(etas[0].begin(), etas[0].end(), 1.0);
            }
            try {
                ns.q[t - 1] = compute_q(sd[t - 1], cfg, prior_q[t - 1], etas[t - 1], t, outer,
                                        &ns.diagnostics);
            } catch (const SingularSystem& e) {
                throw SingularSystem("fit_nuisances q^(" + std::to_string(t) + "): " + e.what());
            }
        }
        std::vector<double> mu_next;
        for (int t = H; t >= 1; --t) {
            const StepData& cur = sd[t - 1];
            std::vector<double> mu(n);
            for (int i = 0; i < n; ++i) {
                double omega = 0.0;
                if (t < H) {
                    const StepData& nxt = sd[t];
                    double hsum = 0.0;
                    for (int a = 0; a < alph.n_actions; ++a) hsum += ns.h[t](nxt.w[i], a);
                    omega = hsum + ns.q[t](nxt.z[i], nxt.a[i]) * (mu_next[i] - ns.h[t](nxt.w[i], nxt.a[i]));
                }
                double ind = cur.a[i] == cur.e[i] ? 1.0 : 0.0;
                mu[i] = ind * (cur.r[i] + gamma * omega);
            }
            try {
                ns.h[t - 1] = compute_h(sd[t - 1], cfg, prior_h[t - 1], etas[t - 1], mu, t, outer,
                                        &ns.diagnostics);
            } catch (const SingularSystem& e) {
                throw SingularSystem("fit_nuisances h^(" + std::to_string(t) + "): " + e.what());
            }
            mu_next = std::move(mu);
        }
        prior_q = ns.q;
        prior_h = ns.h;
    }
    return ns;
}

std::string VmmDiagnostics::to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const Entry& e : entries) {
        j.push_back({{"t", e.t},
                     {"which", std::string(1, e.which)},
                     {"outer", e.outer},
                     {"residual", e.residual},
                     {"gram_min_eig", e.gram_min_eig},
                     {"cond", e.cond},
                     {"obj_prior", e.obj_prior},
                     {"obj_solution", e.obj_solution}});
    }
    return j.dump();
}

}  // namespace prl
