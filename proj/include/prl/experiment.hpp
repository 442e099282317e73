#pragma once

// Batch experiment runner: JSON config, seeded replication grid over sample
// sizes and methods, raw/summary CSV plus a JSON manifest, and the population
// certificate wrapper behind the `verify` command.

#include <cstdint>
#include <string>
#include <vector>

#include "prl/oracle.hpp"

namespace prl {

struct ExperimentConfig {
    std::string scenario = "noisyobs";
    double eps_noise = 0.2;
    bool bridge_complete = false;  // nudge the logging policy at s3 to 0.5/0.5
    std::string policy = "easy";
    double gamma = 1.0;
    int horizon = 3;
    std::vector<int> n_grid{200, 500, 1000, 2000, 5000, 10000};
    int replications = 20;
    std::uint64_t base_seed = 1;
    std::vector<std::string> methods{"dr", "is", "reg", "mdp", "mean_r", "tis"};
    int k_folds = 5;
    double alpha = 1e-4;
    double lambda = 1e-4;
    int outer_iterations = 2;
    std::string scheme = "prev_obs";
    std::string output_dir = "out";

    static ExperimentConfig from_json(const std::string& text);
    std::string to_json() const;
    void validate() const;  // throws ConfigError naming the offending field
};

// Scenario model for a config: the stock benchmark, or with bridge_complete
// the variant whose logging policy has full-rank one-step structure (the
// stock policy is rank-deficient at stage 1; see oracle.hpp).
NoisyObs scenario_env(const ExperimentConfig& cfg);

struct SummaryCell {
    std::string method;
    std::string score_kind;
    int n = 0;
    int reps = 0;
    int excluded = 0;  // NaN replications, dropped from the statistics
    double mean = 0.0;
    double sd = 0.0;   // population form, so mse = bias^2 + sd^2
    double se = 0.0;
    double bias = 0.0;
    double mse = 0.0;
    double coverage = 0.0;  // NaN for methods without confidence intervals
    double truth = 0.0;
    double mean_runtime_ms = 0.0;
};

struct RunSummary {
    double truth = 0.0;
    long long rows = 0;
    std::vector<SummaryCell> cells;
    std::string raw_path;
    std::string summary_path;
    std::string manifest_path;
};

// Samples each (n, rep) cell with seed derived from (base_seed, n, rep), runs
// every requested method, and persists raw.csv / summary.csv / manifest.json
// under output_dir. Method failures become NaN rows; the run continues.
RunSummary run_experiment(const ExperimentConfig& cfg);

// Population certificates for the configured scenario; corrupt_q != 0 injects
// an error so the failure path can be demonstrated.
CertificateReport verify_experiment(const ExperimentConfig& cfg, double corrupt_q = 0.0);

}  // namespace prl
