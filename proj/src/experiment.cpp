#include "prl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <thread>

#include <json.hpp>

#include "prl/baselines.hpp"
#include "prl/errors.hpp"
#include "prl/rng.hpp"
#include "prl/version.hpp"

namespace prl {

namespace {

const std::set<std::string> kMethods = {"dr", "is", "reg", "mdp", "mean_r", "tis"};
const std::set<std::string> kPolicies = {"easy", "hard", "optim"};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

nlohmann::json config_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["scenario"] = c.scenario;
    j["eps_noise"] = c.eps_noise;
    j["bridge_complete"] = c.bridge_complete;
    j["policy"] = c.policy;
    j["gamma"] = c.gamma;
    j["horizon"] = c.horizon;
    j["n_grid"] = c.n_grid;
    j["replications"] = c.replications;
    j["base_seed"] = c.base_seed;
    j["methods"] = c.methods;
    j["k_folds"] = c.k_folds;
    j["alpha"] = c.alpha;
    j["lambda"] = c.lambda;
    j["outer_iterations"] = c.outer_iterations;
    j["scheme"] = c.scheme;
    j["output_dir"] = c.output_dir;
    return j;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    ExperimentConfig c;
    auto want = [&](const char* field, const char* type, bool ok) {
        if (!ok) throw ConfigError(std::string(field) + ": expected " + type);
    };
    if (j.contains("scenario")) {
        want("scenario", "string", j["scenario"].is_string());
        c.scenario = j["scenario"].get<std::string>();
    }
    if (j.contains("eps_noise")) {
        want("eps_noise", "number", j["eps_noise"].is_number());
        c.eps_noise = j["eps_noise"].get<double>();
    }
    if (j.contains("bridge_complete")) {
        want("bridge_complete", "boolean", j["bridge_complete"].is_boolean());
        c.bridge_complete = j["bridge_complete"].get<bool>();
    }
    if (j.contains("policy")) {
        want("policy", "string", j["policy"].is_string());
        c.policy = j["policy"].get<std::string>();
    }
    if (j.contains("gamma")) {
        want("gamma", "number", j["gamma"].is_number());
        c.gamma = j["gamma"].get<double>();
    }
    if (j.contains("horizon")) {
        want("horizon", "integer", j["horizon"].is_number_integer());
        c.horizon = j["horizon"].get<int>();
    }
    if (j.contains("n_grid")) {
        want("n_grid", "array of integers", j["n_grid"].is_array());
        c.n_grid.clear();
        for (const auto& v : j["n_grid"]) {
            want("n_grid", "array of integers", v.is_number_integer());
            c.n_grid.push_back(v.get<int>());
        }
    }
    if (j.contains("replications")) {
        want("replications", "integer", j["replications"].is_number_integer());
        c.replications = j["replications"].get<int>();
    }
    if (j.contains("base_seed")) {
        want("base_seed", "integer", j["base_seed"].is_number_integer());
        c.base_seed = j["base_seed"].get<std::uint64_t>();
    }
    if (j.contains("methods")) {
        want("methods", "array of strings", j["methods"].is_array());
        c.methods.clear();
        for (const auto& v : j["methods"]) {
            want("methods", "array of strings", v.is_string());
            c.methods.push_back(v.get<std::string>());
        }
    }
    if (j.contains("k_folds")) {
        want("k_folds", "integer", j["k_folds"].is_number_integer());
        c.k_folds = j["k_folds"].get<int>();
    }
    if (j.contains("alpha")) {
        want("alpha", "number", j["alpha"].is_number());
        c.alpha = j["alpha"].get<double>();
    }
    if (j.contains("lambda")) {
        want("lambda", "number", j["lambda"].is_number());
        c.lambda = j["lambda"].get<double>();
    }
    if (j.contains("outer_iterations")) {
        want("outer_iterations", "integer", j["outer_iterations"].is_number_integer());
        c.outer_iterations = j["outer_iterations"].get<int>();
    }
    if (j.contains("scheme")) {
        want("scheme", "string", j["scheme"].is_string());
        c.scheme = j["scheme"].get<std::string>();
    }
    if (j.contains("output_dir")) {
        want("output_dir", "string", j["output_dir"].is_string());
        c.output_dir = j["output_dir"].get<std::string>();
    }
    return c;
}

std::string ExperimentConfig::to_json() const { return config_json(*this).dump(2); }

void ExperimentConfig::validate() const {
    if (scenario != "noisyobs") throw ConfigError("scenario: only \"noisyobs\" is supported");
    if (!(eps_noise >= 0.0 && eps_noise <= 1.0)) throw ConfigError("eps_noise: must be in [0, 1]");
    if (kPolicies.find(policy) == kPolicies.end())
        throw ConfigError("policy: must be one of easy, hard, optim");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma: must be in (0, 1]");
    if (horizon != 3) throw ConfigError("horizon: the noisyobs scenario has horizon 3");
    if (n_grid.empty()) throw ConfigError("n_grid: must be nonempty");
    for (size_t i = 0; i < n_grid.size(); ++i) {
        if (n_grid[i] < 1) throw ConfigError("n_grid: entries must be >= 1");
        if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ConfigError("n_grid: must be ascending");
    }
    if (replications < 1) throw ConfigError("replications: must be >= 1");
    if (methods.empty()) throw ConfigError("methods: must be nonempty");
    std::set<std::string> seen;
    bool any_scored = false;
    for (const std::string& m : methods) {
        if (kMethods.find(m) == kMethods.end())
            throw ConfigError("methods: unknown method \"" + m + "\"");
        if (!seen.insert(m).second) throw ConfigError("methods: duplicate \"" + m + "\"");
        if (m == "dr" || m == "is" || m == "reg") any_scored = true;
    }
    if (k_folds < 1) throw ConfigError("k_folds: must be >= 1");
    if (any_scored && n_grid.front() < k_folds)
        throw ConfigError("k_folds: exceeds the smallest n in n_grid");
    if (alpha < 0.0) throw ConfigError("alpha: must be >= 0");
    if (lambda < 0.0) throw ConfigError("lambda: must be >= 0");
    if (outer_iterations < 1) throw ConfigError("outer_iterations: must be >= 1");
    try {
        PciScheme::parse(scheme);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("scheme: ") + e.what());
    }
    if (output_dir.empty()) throw ConfigError("output_dir: must be nonempty");
}

namespace {

struct RawRow {
    std::string method;
    std::string score_kind;
    int n = 0;
    std::uint64_t seed = 0;
    double estimate = 0.0, sigma2 = 0.0, ci_lo = 0.0, ci_hi = 0.0, max_eta = 0.0;
    long long runtime_ms = 0;

    std::string csv() const {
        char buf[512];
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%lld",
                      method.c_str(), score_kind.c_str(), n,
                      static_cast<unsigned long long>(seed), estimate, sigma2, ci_lo, ci_hi,
                      max_eta, runtime_ms);
        return buf;
    }
};

int thread_cap(size_t n_tasks) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("PRL_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1 && static_cast<unsigned>(v) < hw) hw = static_cast<unsigned>(v);
    }
    return static_cast<int>(std::min<size_t>(hw, std::max<size_t>(n_tasks, 1)));
}

}  // namespace

NoisyObs scenario_env(const ExperimentConfig& cfg) {
    NoisyObs env = build_noisyobs(cfg.eps_noise);
    if (cfg.bridge_complete) {
        env.behavior.probs[0][2] = {0.5, 0.5};
        env.pomdp.prior_action[2] = {0.5, 0.5};
    }
    return env;
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const double qnan = std::numeric_limits<double>::quiet_NaN();
    NoisyObs env = scenario_env(cfg);
    const EvalPolicy& pol =
        cfg.policy == "easy" ? env.easy : (cfg.policy == "hard" ? env.hard : env.optim);
    Alphabets alph = alphabets_of(env.pomdp);
    PciScheme scheme = PciScheme::parse(cfg.scheme);
    VmmConfig vmm;
    vmm.alpha = cfg.alpha;
    vmm.lambda = cfg.lambda;
    vmm.outer_iterations = cfg.outer_iterations;
    const double truth = exact_policy_value(env.pomdp, pol, cfg.gamma);

    struct Task {
        int n, rep;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (int n : cfg.n_grid)
        for (int rep = 0; rep < cfg.replications; ++rep)
            tasks.push_back({n, rep, derive_seed(cfg.base_seed, static_cast<std::uint64_t>(n),
                                                 static_cast<std::uint64_t>(rep))});

    struct TaskOut {
        std::vector<RawRow> rows;
        std::vector<std::string> errors;
    };
    std::vector<TaskOut> outs(tasks.size());

    auto run_task = [&](size_t ti) {
        const Task& tk = tasks[ti];
        std::vector<Trajectory> data = sample_dataset(env.pomdp, env.behavior, tk.n, tk.seed);
        for (const std::string& m : cfg.methods) {
            RawRow row;
            row.method = m;
            row.n = tk.n;
            row.seed = tk.seed;
            row.estimate = row.sigma2 = row.ci_lo = row.ci_hi = row.max_eta = qnan;
            auto t0 = std::chrono::steady_clock::now();
            try {
                if (m == "dr" || m == "is" || m == "reg") {
                    ScoreKind kind = m == "dr" ? ScoreKind::DR
                                               : (m == "is" ? ScoreKind::IS : ScoreKind::Reg);
                    row.score_kind = m;
                    EstimateReport er = estimate_value(data, pol, scheme, alph, vmm, cfg.gamma,
                                                       kind, cfg.k_folds, tk.seed);
                    row.estimate = er.estimate;
                    row.sigma2 = er.sigma2;
                    row.ci_lo = er.ci_lo;
                    row.ci_hi = er.ci_hi;
                    row.max_eta = er.max_abs_eta;
                } else if (m == "mean_r") {
                    std::vector<double> rets(data.size());
                    for (size_t i = 0; i < data.size(); ++i) {
                        double disc = 1.0, g = 0.0;
                        for (const Step& st : data[i].steps) {
                            g += disc * st.r;
                            disc *= cfg.gamma;
                        }
                        rets[i] = g;
                    }
                    double mean = 0.0;
                    for (double g : rets) mean += g;
                    mean /= rets.size();
                    double var = 0.0;
                    for (double g : rets) var += (g - mean) * (g - mean);
                    var /= rets.size();
                    row.estimate = mean;
                    row.sigma2 = var;
                    double half = 1.96 * std::sqrt(var / rets.size());
                    row.ci_lo = mean - half;
                    row.ci_hi = mean + half;
                } else if (m == "mdp") {
                    row.estimate = mdp_dp(data, pol, cfg.gamma, alph);
                } else {  // tis
                    row.estimate = tis(data, pol, cfg.gamma, alph);
                }
            } catch (const std::exception& e) {
                row.estimate = row.sigma2 = row.ci_lo = row.ci_hi = row.max_eta = qnan;
                outs[ti].errors.push_back(m + " n=" + std::to_string(tk.n) +
                                          " rep=" + std::to_string(tk.rep) + ": " + e.what());
            }
            row.runtime_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
            outs[ti].rows.push_back(std::move(row));
        }
    };

    const int n_threads = thread_cap(tasks.size());
    if (n_threads <= 1) {
        for (size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int w = 0; w < n_threads; ++w)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
                    run_task(i);
            });
        for (std::thread& th : pool) th.join();
    }

    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    RunSummary summary;
    summary.truth = truth;
    summary.raw_path = (fs::path(cfg.output_dir) / "raw.csv").string();
    summary.summary_path = (fs::path(cfg.output_dir) / "summary.csv").string();
    summary.manifest_path = (fs::path(cfg.output_dir) / "manifest.json").string();

    {
        std::ofstream raw(summary.raw_path, std::ios::binary);
        if (!raw) throw PrlError("run: cannot open " + summary.raw_path);
        raw << "method,score_kind,n,seed,estimate,sigma2,ci_lo,ci_hi,max_eta,runtime_ms\n";
        for (const TaskOut& out : outs)
            for (const RawRow& row : out.rows) {
                raw << row.csv() << "\n";
                ++summary.rows;
            }
    }

    // aggregate per (method, n); rows carry everything the summary needs
    const std::set<std::string> with_ci = {"dr", "is", "reg", "mean_r"};
    for (const std::string& m : cfg.methods) {
        for (int n : cfg.n_grid) {
            SummaryCell cell;
            cell.method = m;
            cell.score_kind = (m == "dr" || m == "is" || m == "reg") ? m : "";
            cell.n = n;
            cell.truth = truth;
            std::vector<const RawRow*> rows;
            for (const TaskOut& out : outs)
                for (const RawRow& row : out.rows)
                    if (row.method == m && row.n == n) rows.push_back(&row);
            cell.reps = static_cast<int>(rows.size());
            double run_total = 0.0;
            std::vector<const RawRow*> good;
            for (const RawRow* r : rows) {
                run_total += static_cast<double>(r->runtime_ms);
                if (std::isfinite(r->estimate)) good.push_back(r);
            }
            cell.excluded = cell.reps - static_cast<int>(good.size());
            cell.mean_runtime_ms = cell.reps > 0 ? run_total / cell.reps : qnan;
            if (good.empty()) {
                cell.mean = cell.sd = cell.se = cell.bias = cell.mse = cell.coverage = qnan;
            } else {
                const double gn = static_cast<double>(good.size());
                double mean = 0.0;
                for (const RawRow* r : good) mean += r->estimate;
                mean /= gn;
                double var = 0.0, mse = 0.0;
                for (const RawRow* r : good) {
                    var += (r->estimate - mean) * (r->estimate - mean);
                    mse += (r->estimate - truth) * (r->estimate - truth);
                }
                var /= gn;
                mse /= gn;
                cell.mean = mean;
                cell.sd = std::sqrt(var);
                cell.se = cell.sd / std::sqrt(gn);
                cell.bias = mean - truth;
                cell.mse = mse;
                if (with_ci.count(m)) {
                    double hits = 0.0;
                    for (const RawRow* r : good)
                        if (r->ci_lo <= truth && truth <= r->ci_hi) hits += 1.0;
                    cell.coverage = hits / gn;
                } else {
                    cell.coverage = qnan;
                }
            }
            summary.cells.push_back(std::move(cell));
        }
    }

    {
        std::ofstream sf(summary.summary_path, std::ios::binary);
        if (!sf) throw PrlError("run: cannot open " + summary.summary_path);
        sf << "method,score_kind,n,reps,excluded,mean,sd,se,bias,mse,coverage,truth,"
              "mean_runtime_ms\n";
        for (const SummaryCell& c : summary.cells) {
            sf << c.method << ',' << c.score_kind << ',' << c.n << ',' << c.reps << ','
               << c.excluded << ',' << fmt17(c.mean) << ',' << fmt17(c.sd) << ',' << fmt17(c.se)
               << ',' << fmt17(c.bias) << ',' << fmt17(c.mse) << ',' << fmt17(c.coverage) << ','
               << fmt17(c.truth) << ',' << fmt17(c.mean_runtime_ms) << "\n";
        }
    }

    {
        nlohmann::json man;
        man["config"] = config_json(cfg);
        man["truth"] = truth;
        man["version"] = kVersion;
        man["rows"] = summary.rows;
        nlohmann::json per;
        for (const std::string& m : cfg.methods) {
            double total = 0.0;
            long rows_m = 0, fail_m = 0;
            for (const TaskOut& out : outs)
                for (const RawRow& row : out.rows)
                    if (row.method == m) {
                        total += static_cast<double>(row.runtime_ms);
                        ++rows_m;
                        if (!std::isfinite(row.estimate)) ++fail_m;
                    }
            nlohmann::json jm;
            jm["rows"] = rows_m;
            jm["failures"] = fail_m;
            jm["total_runtime_ms"] = total;
            per[m] = jm;
        }
        man["per_method"] = per;
        nlohmann::json errs = nlohmann::json::array();
        for (const TaskOut& out : outs)
            for (const std::string& e : out.errors) errs.push_back(e);
        man["failures"] = errs;
        std::ofstream mf(summary.manifest_path, std::ios::binary);
        if (!mf) throw PrlError("run: cannot open " + summary.manifest_path);
        mf << man.dump(2) << "\n";
    }
    return summary;
}

CertificateReport verify_experiment(const ExperimentConfig& cfg, double corrupt_q) {
    cfg.validate();
    PciScheme scheme = PciScheme::parse(cfg.scheme);
    return run_certificates(cfg.eps_noise, scheme, cfg.gamma, cfg.base_seed, corrupt_q);
}

}  // namespace prl
