#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prl/errors.hpp"
#include "prl/experiment.hpp"
#include "prl/version.hpp"

namespace {

prl::ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw prl::ConfigError("config: cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return prl::ExperimentConfig::from_json(ss.str());
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

const prl::EvalPolicy& pick_policy(const prl::NoisyObs& env, const std::string& name) {
    if (name == "easy") return env.easy;
    if (name == "hard") return env.hard;
    return env.optim;
}

int cmd_run(const prl::ExperimentConfig& cfg) {
    prl::RunSummary rs = prl::run_experiment(cfg);
    std::printf("truth %.17g\n", rs.truth);
    std::printf("%lld rows -> %s\n", rs.rows, rs.raw_path.c_str());
    std::printf("%-7s %-5s %7s %5s %5s %12s %12s %12s %9s\n", "method", "score", "n", "reps",
                "excl", "mean", "bias", "mse", "coverage");
    for (const prl::SummaryCell& c : rs.cells)
        std::printf("%-7s %-5s %7d %5d %5d %12.6g %12.6g %12.6g %9.3g\n", c.method.c_str(),
                    c.score_kind.c_str(), c.n, c.reps, c.excluded, c.mean, c.bias, c.mse,
                    c.coverage);
    std::printf("summary -> %s\nmanifest -> %s\n", rs.summary_path.c_str(),
                rs.manifest_path.c_str());
    return 0;
}

int cmd_verify(const prl::ExperimentConfig& cfg, double corrupt_q, const std::string& out_path) {
    prl::CertificateReport rep = prl::verify_experiment(cfg, corrupt_q);
    if (!rep.notes.empty()) std::printf("note: %s\n", rep.notes.c_str());
    for (const auto& it : rep.items) {
        const char* tag = it.enforced ? (it.pass ? "PASS" : "FAIL") : "info";
        std::printf("[%s] %-28s value %.3g tol %.3g  %s\n", tag, it.name.c_str(), it.value,
                    it.tol, it.detail.c_str());
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw prl::PrlError("verify: cannot open " + out_path);
        out << rep.to_json() << "\n";
        std::printf("certificate -> %s\n", out_path.c_str());
    }
    bool ok = rep.all_pass();
    std::printf("%s\n", ok ? "all certificates pass" : "certificate FAILURES present");
    return ok ? 0 : 2;
}

int cmd_truth(const prl::ExperimentConfig& cfg) {
    cfg.validate();
    prl::NoisyObs env = prl::scenario_env(cfg);
    double v = prl::exact_policy_value(env.pomdp, pick_policy(env, cfg.policy), cfg.gamma);
    std::printf("%.17g\n", v);
    return 0;
}

int cmd_sample(const prl::ExperimentConfig& cfg, int n, const std::string& out_path,
               bool with_hidden) {
    cfg.validate();
    prl::NoisyObs env = prl::scenario_env(cfg);
    if (n <= 0) n = cfg.n_grid.front();
    std::vector<prl::Trajectory> data =
        prl::sample_dataset(env.pomdp, env.behavior, n, cfg.base_seed, with_hidden);
    if (out_path.empty()) {
        prl::write_trajectories_jsonl(std::cout, data);
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw prl::PrlError("sample: cannot open " + out_path);
        prl::write_trajectories_jsonl(out, data);
        std::printf("%d trajectories -> %s\n", n, out_path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"off-policy evaluation for confounded sequential decision data"};
    app.set_version_flag("--version", prl::kVersion);
    app.require_subcommand(1);

    std::string config_path, out_override, methods_override;
    std::uint64_t seed_override = 0;
    int reps_override = 0;

    auto add_common = [&](CLI::App* sub, bool with_methods) {
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--seed", seed_override, "override base_seed");
        sub->add_option("--out", out_override, "override output location");
        if (with_methods) {
            sub->add_option("--methods", methods_override, "comma-separated method override");
            sub->add_option("--reps", reps_override, "override replications");
        }
    };

    CLI::App* run = app.add_subcommand("run", "run the experiment grid");
    add_common(run, true);

    double corrupt_q = 0.0;
    CLI::App* verify = app.add_subcommand("verify", "population identification certificates");
    add_common(verify, false);
    verify->add_option("--corrupt-q", corrupt_q,
                       "perturb a fitted bridge value to exercise the failure path");

    CLI::App* truth = app.add_subcommand("truth", "print the exact policy value");
    add_common(truth, false);

    int sample_n = 0;
    bool with_hidden = false;
    CLI::App* sample = app.add_subcommand("sample", "emit JSONL trajectories");
    add_common(sample, false);
    sample->add_option("--n", sample_n, "number of trajectories (default: first n_grid entry)");
    sample->add_flag("--hidden", with_hidden, "include hidden states in the output");

    CLI11_PARSE(app, argc, argv);

    try {
        prl::ExperimentConfig cfg = load_config(config_path);
        auto apply_overrides = [&](CLI::App* sub, bool with_methods) {
            if (sub->count("--seed")) cfg.base_seed = seed_override;
            if (with_methods && sub->count("--methods")) cfg.methods = split_csv(methods_override);
            if (with_methods && sub->count("--reps")) cfg.replications = reps_override;
        };
        if (app.got_subcommand(run)) {
            apply_overrides(run, true);
            if (run->count("--out")) cfg.output_dir = out_override;
            return cmd_run(cfg);
        }
        if (app.got_subcommand(verify)) {
            apply_overrides(verify, false);
            return cmd_verify(cfg, corrupt_q, verify->count("--out") ? out_override : "");
        }
        if (app.got_subcommand(truth)) {
            apply_overrides(truth, false);
            return cmd_truth(cfg);
        }
        apply_overrides(sample, false);
        return cmd_sample(cfg, sample_n, sample->count("--out") ? out_override : "", with_hidden);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
