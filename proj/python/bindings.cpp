#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prl/baselines.hpp"
#include "prl/experiment.hpp"
#include "prl/version.hpp"

namespace py = pybind11;

namespace {

prl::ScoreKind kind_from(const std::string& name) {
    if (name == "is") return prl::ScoreKind::IS;
    if (name == "reg") return prl::ScoreKind::Reg;
    if (name == "dr") return prl::ScoreKind::DR;
    throw std::invalid_argument("score kind must be one of is, reg, dr");
}

}  // namespace

PYBIND11_MODULE(prl, m) {
    m.doc() = "off-policy evaluation for confounded sequential decision data";
    m.attr("__version__") = prl::kVersion;

    py::class_<prl::Step>(m, "Step")
        .def_readonly("o", &prl::Step::o)
        .def_readonly("a", &prl::Step::a)
        .def_readonly("r", &prl::Step::r);

    py::class_<prl::Trajectory>(m, "Trajectory")
        .def_readonly("o0", &prl::Trajectory::o0)
        .def_readonly("steps", &prl::Trajectory::steps);

    py::class_<prl::TabularPOMDP>(m, "TabularPOMDP")
        .def_readonly("n_states", &prl::TabularPOMDP::n_states)
        .def_readonly("n_actions", &prl::TabularPOMDP::n_actions)
        .def_readonly("n_obs", &prl::TabularPOMDP::n_obs)
        .def_readonly("horizon", &prl::TabularPOMDP::horizon)
        .def_readonly("r_max", &prl::TabularPOMDP::r_max);

    py::class_<prl::BehaviorPolicy>(m, "BehaviorPolicy");

    py::class_<prl::EvalPolicy>(m, "EvalPolicy").def_readonly("table", &prl::EvalPolicy::table);

    py::class_<prl::NoisyObs>(m, "NoisyObs")
        .def_readonly("pomdp", &prl::NoisyObs::pomdp)
        .def_readonly("behavior", &prl::NoisyObs::behavior)
        .def_readonly("easy", &prl::NoisyObs::easy)
        .def_readonly("hard", &prl::NoisyObs::hard)
        .def_readonly("optim", &prl::NoisyObs::optim);

    m.def("build_noisyobs", &prl::build_noisyobs, py::arg("eps_noise"));

    m.def("sample_dataset", &prl::sample_dataset, py::arg("pomdp"), py::arg("behavior"),
          py::arg("n"), py::arg("seed"), py::arg("with_hidden") = false);

    m.def("exact_policy_value", &prl::exact_policy_value, py::arg("pomdp"), py::arg("eval"),
          py::arg("gamma"));

    m.def("mean_r", &prl::mean_r, py::arg("data"), py::arg("gamma"));

    m.def(
        "mdp_dp",
        [](const std::vector<prl::Trajectory>& data, const prl::EvalPolicy& eval, double gamma,
           const prl::TabularPOMDP& pomdp) {
            return prl::mdp_dp(data, eval, gamma, prl::alphabets_of(pomdp));
        },
        py::arg("data"), py::arg("eval"), py::arg("gamma"), py::arg("pomdp"));

    m.def(
        "tis",
        [](const std::vector<prl::Trajectory>& data, const prl::EvalPolicy& eval, double gamma,
           const prl::TabularPOMDP& pomdp) {
            prl::TisDiag diag;
            double v = prl::tis(data, eval, gamma, prl::alphabets_of(pomdp), &diag);
            py::dict out;
            out["estimate"] = v;
            out["singular_q"] = diag.singular_q;
            return out;
        },
        py::arg("data"), py::arg("eval"), py::arg("gamma"), py::arg("pomdp"));

    m.def(
        "estimate_value",
        [](const std::vector<prl::Trajectory>& data, const prl::EvalPolicy& eval,
           const prl::TabularPOMDP& pomdp, double gamma, const std::string& kind, int k_folds,
           std::uint64_t seed, double alpha, double lambda, int outer_iterations,
           const std::string& scheme) {
            prl::VmmConfig cfg;
            cfg.alpha = alpha;
            cfg.lambda = lambda;
            cfg.outer_iterations = outer_iterations;
            prl::EstimateReport rep =
                prl::estimate_value(data, eval, prl::PciScheme::parse(scheme),
                                    prl::alphabets_of(pomdp), cfg, gamma, kind_from(kind),
                                    k_folds, seed);
            py::dict out;
            out["estimate"] = rep.estimate;
            out["sigma2"] = rep.sigma2;
            out["ci_lo"] = rep.ci_lo;
            out["ci_hi"] = rep.ci_hi;
            out["n"] = rep.n;
            out["score"] = prl::score_kind_name(rep.score);
            out["max_abs_eta"] = rep.max_abs_eta;
            out["matched_share"] = rep.matched_share;
            out["k_folds"] = rep.k_folds;
            out["fold_estimates"] = rep.fold_estimates;
            return out;
        },
        py::arg("data"), py::arg("eval"), py::arg("pomdp"), py::arg("gamma"), py::arg("kind"),
        py::arg("k_folds") = 5, py::arg("seed") = 1, py::arg("alpha") = 1e-4,
        py::arg("lambda") = 1e-4, py::arg("outer_iterations") = 2,
        py::arg("scheme") = "prev_obs");

    m.def(
        "fit_oracle_nuisances_identity_gap",
        [](double eps, const std::string& policy, double gamma, const std::string& scheme,
           bool bridge_complete) {
            prl::NoisyObs env = prl::build_noisyobs(eps);
            if (bridge_complete) {
                // stock logging policy is rank-deficient at stage 1; see oracle.hpp
                env.behavior.probs[0][2] = {0.5, 0.5};
                env.pomdp.prior_action[2] = {0.5, 0.5};
            }
            const prl::EvalPolicy& pol =
                policy == "easy" ? env.easy : (policy == "hard" ? env.hard : env.optim);
            prl::PciScheme sch = prl::PciScheme::parse(scheme);
            prl::NuisanceSet ns =
                prl::fit_oracle_nuisances(env.pomdp, env.behavior, pol, sch, gamma);
            auto law = prl::group_observables(prl::enumerate_law(env.pomdp, env.behavior, pol, 1));
            double est = prl::population_expectation(law, [&](const prl::Trajectory& traj) {
                return prl::score(traj, pol, sch, ns, gamma, prl::ScoreKind::DR);
            });
            return std::abs(est - prl::exact_policy_value(env.pomdp, pol, gamma));
        },
        py::arg("eps"), py::arg("policy"), py::arg("gamma") = 1.0,
        py::arg("scheme") = "prev_obs", py::arg("bridge_complete") = true,
        "absolute population identification gap of the doubly robust score; with "
        "bridge_complete=False the stock benchmark is used and the solve raises NoSolution");

    m.def(
        "run_certificates",
        [](double eps, const std::string& scheme, double gamma, std::uint64_t seed) {
            prl::CertificateReport rep =
                prl::run_certificates(eps, prl::PciScheme::parse(scheme), gamma, seed);
            py::list items;
            for (const auto& it : rep.items) {
                py::dict d;
                d["name"] = it.name;
                d["pass"] = it.pass;
                d["value"] = it.value;
                d["tol"] = it.tol;
                d["detail"] = it.detail;
                d["enforced"] = it.enforced;
                items.append(d);
            }
            py::dict out;
            out["items"] = items;
            out["all_pass"] = rep.all_pass();
            return out;
        },
        py::arg("eps"), py::arg("scheme") = "prev_obs", py::arg("gamma") = 1.0,
        py::arg("seed") = 1);
}
