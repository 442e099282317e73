#include "prl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include <Eigen/Dense>

#include "prl/errors.hpp"

namespace prl {

double mean_r(const std::vector<Trajectory>& data, double gamma) {
    if (data.empty()) throw std::invalid_argument("mean_r: empty dataset");
    double total = 0.0;
    for (const Trajectory& traj : data) {
        double disc = 1.0;
        for (const Step& st : traj.steps) {
            total += disc * st.r;
            disc *= gamma;
        }
    }
    return total / data.size();
}

double mdp_dp(const std::vector<Trajectory>& data, const EvalPolicy& eval, double gamma,
              const Alphabets& alph, MdpDiag* diag) {
    if (data.empty()) throw std::invalid_argument("mdp_dp: empty dataset");
    if (eval.kind != EvalPolicy::Kind::CurrentObs)
        throw std::invalid_argument("mdp_dp: requires a current-observation policy");
    const int no = alph.n_obs, na = alph.n_actions, H = alph.horizon;

    // counts pooled over time (time-homogeneous fit)
    std::vector<double> trans_cnt(no * na * no, 0.0);
    std::vector<double> cell_cnt(no * na, 0.0), rew_cnt(no * na, 0.0), rew_sum(no * na, 0.0);
    std::vector<double> init(no, 0.0);
    for (const Trajectory& traj : data) {
        init[traj.steps[0].o] += 1.0;
        for (int t = 1; t <= H; ++t) {
            const Step& st = traj.steps[t - 1];
            rew_cnt[st.o * na + st.a] += 1.0;
            rew_sum[st.o * na + st.a] += st.r;
            if (t < H) {
                cell_cnt[st.o * na + st.a] += 1.0;
                trans_cnt[(st.o * na + st.a) * no + traj.steps[t].o] += 1.0;
            }
        }
    }
    for (double& v : init) v /= data.size();

    MdpDiag local;
    auto reward_hat = [&](int o, int a) {
        double c = rew_cnt[o * na + a];
        if (c == 0.0) {
            ++local.unvisited_reward_cells;
            return 0.0;
        }
        return rew_sum[o * na + a] / c;
    };

    std::vector<double> v_next(no, 0.0), v_cur(no, 0.0);
    for (int t = H; t >= 1; --t) {
        for (int o = 0; o < no; ++o) {
            int a = eval.table[o];
            double val = reward_hat(o, a);
            if (t < H) {
                double c = cell_cnt[o * na + a];
                double cont = 0.0;
                if (c == 0.0) {
                    ++local.unvisited_transition_cells;
                    for (int o2 = 0; o2 < no; ++o2) cont += v_next[o2] / no;
                } else {
                    for (int o2 = 0; o2 < no; ++o2)
                        cont += trans_cnt[(o * na + a) * no + o2] / c * v_next[o2];
                }
                val += gamma * cont;
            }
            v_cur[o] = val;
        }
        std::swap(v_cur, v_next);
    }
    double value = 0.0;
    for (int o = 0; o < no; ++o) value += init[o] * v_next[o];
    if (diag) *diag = local;
    return value;
}

namespace {

using AtomKey = std::tuple<int, int, int, int, double>;

TisAtoms atoms_from_entries(const std::vector<std::pair<Trajectory, double>>& entries,
                            const Alphabets& alph) {
    if (entries.empty()) throw std::invalid_argument("tis: empty dataset");
    const int H = alph.horizon;
    TisAtoms atoms;
    atoms.horizon = H;
    atoms.omega0.assign(alph.n_obs, 0.0);
    atoms.per_t.resize(H);
    std::vector<std::map<AtomKey, double>> grouped(H);
    for (const auto& [traj, p] : entries) {
        if (static_cast<int>(traj.steps.size()) != H)
            throw std::invalid_argument("tis: trajectory horizon mismatch");
        atoms.omega0[traj.steps[0].o] += p;
        for (int t = 1; t <= H; ++t) {
            const Step& st = traj.steps[t - 1];
            int z = t == 1 ? traj.o0 : traj.steps[t - 2].o;
            int x = t < H ? traj.steps[t].o : -1;
            grouped[t - 1][{z, st.o, x, st.a, st.r}] += p;
        }
    }
    for (int t = 0; t < H; ++t) {
        atoms.per_t[t].reserve(grouped[t].size());
        for (const auto& [key, p] : grouped[t]) {
            const auto& [z, w, x, a, r] = key;
            atoms.per_t[t].push_back(TisAtom{z, w, x, a, r, p});
        }
    }
    return atoms;
}

// rho[t-1][(z*na + a)*k + x]; built from the per-step one-step operators
// Q^{(t,a)}[x,y] = P(O_t = x | A_t = a, O_{t-1} = y) via SVD pseudoinverse.
struct TisNuisance {
    std::vector<std::vector<double>> rho;
};

constexpr double kSvdCut = 1e-10;

TisNuisance build_tis_nuisance(const TisAtoms& atoms, const Alphabets& alph, TisDiag* diag) {
    const int k = alph.n_obs, na = alph.n_actions, H = atoms.horizon;
    TisNuisance nu;
    nu.rho.assign(H, std::vector<double>(k * na * k, 0.0));
    if (diag) diag->min_singular_ratio.assign(H, 1.0);
    for (int t = 1; t <= H; ++t) {
        std::vector<double> mass(k * na * k, 0.0);  // (z,a,w)
        for (const TisAtom& at : atoms.per_t[t - 1]) mass[(at.z * na + at.a) * k + at.w] += at.p;
        for (int a = 0; a < na; ++a) {
            Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(k, k);
            for (int z = 0; z < k; ++z) {
                double col = 0.0;
                for (int w = 0; w < k; ++w) col += mass[(z * na + a) * k + w];
                if (col > 0.0)
                    for (int w = 0; w < k; ++w) Q(w, z) = mass[(z * na + a) * k + w] / col;
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(Q, Eigen::ComputeFullU | Eigen::ComputeFullV);
            const Eigen::VectorXd& sv = svd.singularValues();
            double smax = sv.size() > 0 ? sv(0) : 0.0;
            double smin = sv.size() > 0 ? sv(sv.size() - 1) : 0.0;
            double cut = kSvdCut * smax;
            if (diag) {
                double ratio = smax > 0.0 ? smin / smax : 0.0;
                diag->min_singular_ratio[t - 1] = std::min(diag->min_singular_ratio[t - 1], ratio);
                if (smax == 0.0 || smin < cut) diag->singular_q = true;
            }
            Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
            for (int i = 0; i < sv.size(); ++i)
                if (sv(i) > cut) inv_sv(i) = 1.0 / sv(i);
            Eigen::MatrixXd qinv =
                svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
            for (int z = 0; z < k; ++z) {
                double marg = 0.0;
                for (int w = 0; w < k; ++w) marg += mass[(z * na + a) * k + w];
                if (marg == 0.0) {
                    if (diag) ++diag->zero_prob_cells;
                    continue;
                }
                for (int x = 0; x < k; ++x)
                    nu.rho[t - 1][(z * na + a) * k + x] = qinv(z, x) / marg;
            }
        }
    }
    return nu;
}

}  // namespace

TisAtoms tis_atoms_from_data(const std::vector<Trajectory>& data, const Alphabets& alph) {
    std::vector<std::pair<Trajectory, double>> entries;
    entries.reserve(data.size());
    double p = 1.0 / data.size();
    for (const Trajectory& traj : data) entries.emplace_back(traj, p);
    return atoms_from_entries(entries, alph);
}

TisAtoms tis_atoms_from_law(const std::vector<std::pair<Trajectory, double>>& law,
                            const Alphabets& alph) {
    return atoms_from_entries(law, alph);
}

double tis_from_atoms(const TisAtoms& atoms, const EvalPolicy& eval, double gamma,
                      const Alphabets& alph, TisDiag* diag) {
    if (eval.kind != EvalPolicy::Kind::CurrentObs)
        throw std::invalid_argument("tis: requires a current-observation policy");
    const int k = alph.n_obs, na = alph.n_actions, H = atoms.horizon;
    TisNuisance nu = build_tis_nuisance(atoms, alph, diag);

    // forward messages over the lead-observation coordinate
    std::vector<double> m_prev = atoms.omega0;
    double value = 0.0, disc = 1.0;
    for (int t = 1; t <= H; ++t) {
        std::vector<double> agg(k, 0.0);
        double step_mean = 0.0;
        const std::vector<double>& rho = nu.rho[t - 1];
        for (const TisAtom& at : atoms.per_t[t - 1]) {
            if (eval.table[at.w] != at.a) continue;
            double flow = 0.0;
            for (int x = 0; x < k; ++x) flow += m_prev[x] * rho[(at.z * na + at.a) * k + x];
            double mass = at.p * flow;
            step_mean += mass * at.r;
            if (t < H) agg[at.x] += mass;
        }
        value += disc * step_mean;
        disc *= gamma;
        m_prev = std::move(agg);
    }
    return value;
}

double tis(const std::vector<Trajectory>& data, const EvalPolicy& eval, double gamma,
           const Alphabets& alph, TisDiag* diag) {
    return tis_from_atoms(tis_atoms_from_data(data, alph), eval, gamma, alph, diag);
}

double tis_brute_force(const std::vector<Trajectory>& data, const EvalPolicy& eval, double gamma,
                       const Alphabets& alph, TisDiag* diag) {
    if (eval.kind != EvalPolicy::Kind::CurrentObs)
        throw std::invalid_argument("tis: requires a current-observation policy");
    const int n = static_cast<int>(data.size());
    const int k = alph.n_obs, na = alph.n_actions, H = alph.horizon;
    if (std::pow(static_cast<double>(n), H + 1) > 1e7)
        throw EnumerationTooLarge("tis_brute_force: n^(H+1) exceeds budget");
    TisNuisance nu = build_tis_nuisance(tis_atoms_from_data(data, alph), alph, diag);

    // one independent draw per block: index i_0 supplies the lead coordinate,
    // indices i_1..i_H supply the per-step tuples
    std::vector<int> idx(H + 1, 0);
    double grand = 0.0;
    while (true) {
        int x_prev = data[idx[0]].steps[0].o;
        double cum = 1.0, total = 0.0, disc = 1.0;
        for (int t = 1; t <= H; ++t) {
            const Trajectory& traj = data[idx[t]];
            const Step& st = traj.steps[t - 1];
            int z = t == 1 ? traj.o0 : traj.steps[t - 2].o;
            if (eval.table[st.o] != st.a)
                cum = 0.0;
            else
                cum *= nu.rho[t - 1][(z * na + st.a) * k + x_prev];
            total += disc * st.r * cum;
            disc *= gamma;
            x_prev = t < H ? traj.steps[t].o : -1;
        }
        grand += total;
        int pos = H;
        while (pos >= 0 && ++idx[pos] == n) idx[pos--] = 0;
        if (pos < 0) break;
    }
    return grand / std::pow(static_cast<double>(n), H + 1);
}

}  // namespace prl
