#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sqmc/filter.hpp"
#include "sqmc/model.hpp"

namespace sqmc {

// Shared configuration for the experiment subcommands.  Defaults here are
// artifact choices (the source material fixes no experimental parameters);
// every summary echoes the values actually used.
struct ExperimentConfig {
    ModelParams model;

    std::vector<std::size_t> n_ladder{512};
    std::vector<int> t_ladder{1000};
    int replicates = 200;
    double kappa = 0.2;
    double q = 0.1;

    enum class Mode { IID, Scrambled, Both };
    Mode mode = Mode::Both;

    std::uint64_t master_seed = 1;
    double interval_a = -0.1;
    double interval_b = 0.1;

    std::string out_dir = "out";
    enum class Format { Csv, JsonLines };
    Format format = Format::Csv;
    int workers = 0;  // 0: PFEXP_WORKERS env var, else hardware concurrency

    int scramble_keys = 20;   // scramble replicates (sqmc-uniform, qmc-verify envelope)
    int net_keys = 100;       // keys for net-preservation checks
    int marginal_keys = 200;  // keys pooled in the marginal-uniformity test
    int iid_compare = 5;      // IID side-by-side runs in sqmc-uniform
    int window_split = 1000;  // early/late boundary for the flatness check
    std::size_t envelope_max = 1024;  // envelope checked for every N <= this
    int dkw_steps = 200;      // steps per replicate when collecting one-step errors
    std::vector<double> delta_ladder{0.1, 0.03, 0.01, 0.003};
    std::vector<double> kappa_grid{0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0};

    void validate() const;
    [[nodiscard]] StreamKey root_key() const { return StreamKey{master_seed, {}}; }
    [[nodiscard]] int effective_workers() const;
};

// Flat key=value config file; '#' starts a comment.  Unknown keys throw
// with the offending name.
ExperimentConfig load_config_file(const std::string& path);
void apply_config_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Runs `count` tasks across `workers` threads; task order is observable only
// through pre-indexed result slots, so the merge is order-independent.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

// ---- run ----------------------------------------------------------------
struct RunModeResult {
    std::string mode;
    double sup_filter = 0.0;
    double sup_pred = 0.0;
    double envelope_ratio = 0.0;  // sup / (delta^(1/2) log(1+delta^(-1/2))), scrambled only
    std::string table_path;
};
struct RunResult {
    std::vector<RunModeResult> modes;
    std::string summary_path;
};
RunResult cmd_run(const ExperimentConfig& cfg);

// ---- extinction ----------------------------------------------------------
struct ExtinctionResult {
    double rho_bound = 0.0;   // min(1 - Phi(2(b-a)/sigma), 1/2)
    double rho_pow_n = 0.0;
    double per_step_freq = 0.0;
    double per_step_se = 0.0;
    std::uint64_t step_events = 0;
    std::uint64_t step_obs = 0;
    double frac_extinct_by_t = 0.0;
    double a_kappa = 0.0;
    int t_kappa = 0;
    double rho_kappa = 0.0;
    double prop3_ceiling = 0.0;
    bool bound_respected = false;  // per-step freq >= rho^N - 3 SE
    std::string summary_path;
};
ExtinctionResult cmd_extinction(const ExperimentConfig& cfg);

// ---- sweep ---------------------------------------------------------------
struct SweepRow {
    std::size_t n = 0;
    int t = 0;
    int replicates = 0;
    double p_hat = 0.0;
    double ci_half = 0.0;
    bool minimal_ci = false;     // first ladder N with p_hat + ci <= q
    bool minimal_point = false;  // first ladder N with p_hat <= q
};
struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::pair<int, std::size_t>> min_n_point;  // (T, minimal N), when attained
    double fit_slope = 0.0;
    double fit_intercept = 0.0;
    double fit_r2 = 0.0;
    std::string summary_path;
};
SweepResult cmd_sweep(const ExperimentConfig& cfg);

// ---- sqmc-uniform ----------------------------------------------------------
struct SqmcLadderRow {
    std::size_t n = 0;
    double max_sup_filter = 0.0;
    double max_sup_pred = 0.0;
    double sup_early_max = 0.0;
    double sup_late_max = 0.0;
    double early_spread_sd = 0.0;
    double late_spread_sd = 0.0;
    double envelope_arg = 0.0;
    double c_hat = 0.0;
    double iid_max_sup_filter = 0.0;
};
struct SqmcUniformResult {
    std::vector<SqmcLadderRow> rows;
    bool sup_strictly_decreasing = false;
    bool c_hat_non_increasing = false;
    bool flat_in_t = false;
    std::string summary_path;
};
SqmcUniformResult cmd_sqmc_uniform(const ExperimentConfig& cfg);

// ---- dkw -------------------------------------------------------------------
struct DkwRow {
    double kappa = 0.0;
    double bound = 0.0;  // min(1, 2 exp(-2 N kappa^2))
    double p_hat = 0.0;
    double se = 0.0;
    bool pass = false;
};
struct DkwResult {
    std::vector<DkwRow> rows;
    std::uint64_t samples = 0;
    bool all_pass = false;
    std::string summary_path;
};
DkwResult cmd_dkw(const ExperimentConfig& cfg);

// ---- perturb ----------------------------------------------------------------
struct PerturbRow {
    double delta = 0.0;
    std::string pattern;  // "alternating" or "same"
    double sup_err = 0.0;
    double c_hat = 0.0;  // sup / (delta log(1 + 1/delta))
};
struct PerturbResult {
    std::vector<PerturbRow> rows;
    double ratio_alternating = 0.0;  // max/min c_hat across the ladder
    double ratio_same = 0.0;
    std::string summary_path;
};
PerturbResult cmd_perturb(const ExperimentConfig& cfg);

// ---- qmc-verify ----------------------------------------------------------
struct QmcVerifyResult {
    bool nets_ok = false;
    bool envelope_ok = false;
    bool marginals_ok = false;
    std::uint64_t envelope_checked = 0;
    std::vector<std::string> violations;
    std::string summary_path;
};
QmcVerifyResult cmd_qmc_verify(const ExperimentConfig& cfg);

}  // namespace sqmc
