#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sqmc/experiments.hpp"
#include "sqmc/rng.hpp"

using namespace sqmc;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("config file parsing with overrides and errors") {
    TempDir dir("pfexp_test_cfg");
    const fs::path cfg_path = dir.path / "exp.cfg";
    {
        std::ofstream out(cfg_path);
        out << "# comment\n";
        out << "rho = 0.8\n";
        out << "N = 32,64\n";
        out << "T=100\n";
        out << "mode = scrambled\n";
        out << "kappa = 0.25\n";
    }
    ExperimentConfig cfg = load_config_file(cfg_path.string());
    CHECK(cfg.model.rho == 0.8);
    REQUIRE(cfg.n_ladder.size() == 2);
    CHECK(cfg.n_ladder[1] == 64);
    CHECK(cfg.t_ladder.front() == 100);
    CHECK(cfg.mode == ExperimentConfig::Mode::Scrambled);
    CHECK(cfg.kappa == 0.25);

    apply_config_kv(cfg, "q", "0.05");
    CHECK(cfg.q == 0.05);
    CHECK_THROWS_AS(apply_config_kv(cfg, "bogus", "1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_config_kv(cfg, "mode", "wild"), std::invalid_argument);

    cfg.kappa = 1.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("cmd_run writes deterministic tables") {
    TempDir dir("pfexp_test_run");
    ExperimentConfig cfg;
    cfg.n_ladder = {64};
    cfg.t_ladder = {40};
    cfg.out_dir = (dir.path / "a").string();
    cfg.master_seed = 9;
    const RunResult first = cmd_run(cfg);
    REQUIRE(first.modes.size() == 2);
    CHECK(first.modes[0].mode == "iid");
    CHECK(first.modes[1].mode == "scrambled");
    CHECK(first.modes[1].envelope_ratio > 0.0);

    cfg.out_dir = (dir.path / "b").string();
    const RunResult second = cmd_run(cfg);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(slurp(first.modes[i].table_path) == slurp(second.modes[i].table_path));
        CHECK(first.modes[i].sup_filter == second.modes[i].sup_filter);
    }
    // five columns, T+1 lines
    std::stringstream ss(slurp(first.modes[0].table_path));
    std::string line;
    int lines = 0;
    while (std::getline(ss, line)) ++lines;
    CHECK(lines == 41);
}

TEST_CASE("cmd_run honors the jsonl format") {
    TempDir dir("pfexp_test_jsonl");
    ExperimentConfig cfg;
    cfg.n_ladder = {16};
    cfg.t_ladder = {5};
    cfg.mode = ExperimentConfig::Mode::IID;
    cfg.format = ExperimentConfig::Format::JsonLines;
    cfg.out_dir = dir.path.string();
    const RunResult r = cmd_run(cfg);
    const std::string body = slurp(r.modes[0].table_path);
    CHECK(body.find("\"kol_filter\"") != std::string::npos);
    CHECK(r.modes[0].table_path.ends_with(".jsonl"));
}

TEST_CASE("cmd_extinction is worker-count independent") {
    ExperimentConfig base;
    base.n_ladder = {4};
    base.t_ladder = {80};
    base.replicates = 30;
    base.mode = ExperimentConfig::Mode::IID;
    base.master_seed = 77;

    TempDir dir("pfexp_test_ext");
    base.out_dir = (dir.path / "w1").string();
    base.workers = 1;
    const ExtinctionResult one = cmd_extinction(base);
    base.out_dir = (dir.path / "w4").string();
    base.workers = 4;
    const ExtinctionResult four = cmd_extinction(base);
    CHECK(one.step_events == four.step_events);
    CHECK(one.per_step_freq == four.per_step_freq);
    CHECK(one.frac_extinct_by_t == four.frac_extinct_by_t);
    CHECK(one.rho_bound == doctest::Approx(0.34457825838967583).epsilon(1e-13));
    CHECK(one.rho_pow_n == doctest::Approx(0.014097804587173848).epsilon(1e-12));
    CHECK(one.t_kappa >= 1);
    CHECK(one.prop3_ceiling > 0.0);
    CHECK(one.prop3_ceiling <= 1.0);
}

TEST_CASE("cmd_extinction degenerate interval sees no events") {
    TempDir dir("pfexp_test_ext0");
    ExperimentConfig cfg;
    cfg.n_ladder = {1};
    cfg.t_ladder = {50};
    cfg.replicates = 5;
    cfg.interval_a = -10.0;
    cfg.interval_b = 10.0;
    cfg.out_dir = dir.path.string();
    const ExtinctionResult r = cmd_extinction(cfg);
    CHECK(r.rho_bound <= 1e-300);  // 1 - Phi(40)
    CHECK(r.step_events == 0);
    CHECK(r.frac_extinct_by_t == 0.0);
}

TEST_CASE("cmd_sweep: degenerate kappa = 1 never fails") {
    TempDir dir("pfexp_test_sweep1");
    ExperimentConfig cfg;
    cfg.n_ladder = {8, 16};
    cfg.t_ladder = {20, 50};
    cfg.replicates = 10;
    cfg.kappa = 1.0;
    cfg.out_dir = dir.path.string();
    const SweepResult r = cmd_sweep(cfg);
    for (const SweepRow& row : r.rows) {
        CHECK(row.p_hat == 0.0);
        if (row.n == 8) CHECK(row.minimal_point == true);
    }
    REQUIRE(r.min_n_point.size() == 2);
    CHECK(r.min_n_point[0].second == 8);
}

TEST_CASE("cmd_sweep produces a full grid with sane estimates") {
    TempDir dir("pfexp_test_sweep");
    ExperimentConfig cfg;
    cfg.n_ladder = {8, 24};
    cfg.t_ladder = {50, 200};
    cfg.replicates = 40;
    cfg.kappa = 0.25;
    cfg.out_dir = dir.path.string();
    cfg.master_seed = 5;
    const SweepResult r = cmd_sweep(cfg);
    REQUIRE(r.rows.size() == 4);
    for (const SweepRow& row : r.rows) {
        CHECK(row.p_hat >= 0.0);
        CHECK(row.p_hat <= 1.0);
        CHECK(row.ci_half >= 0.0);
    }
    // prefix sups cannot decrease with T
    CHECK(r.rows[1].p_hat >= r.rows[0].p_hat);
    CHECK(r.rows[3].p_hat >= r.rows[2].p_hat);
}

TEST_CASE("cmd_dkw tails stay under the bound on a small run") {
    TempDir dir("pfexp_test_dkw");
    ExperimentConfig cfg;
    cfg.n_ladder = {64};
    cfg.replicates = 6;
    cfg.dkw_steps = 40;
    cfg.out_dir = dir.path.string();
    const DkwResult r = cmd_dkw(cfg);
    CHECK(r.samples == 240);
    CHECK(r.all_pass);
    REQUIRE(!r.rows.empty());
    CHECK(r.rows.back().kappa == 1.0);
    CHECK(r.rows.back().p_hat == 0.0);
    // sample-size formula at (kappa, gamma) = (0.1, 0.05): log(40)/0.02
    const double needed = std::log(2.0 / 0.05) / (2.0 * 0.1 * 0.1);
    CHECK(needed == doctest::Approx(184.44397270569681).epsilon(1e-13));
    CHECK(std::ceil(needed) == 185.0);
}

TEST_CASE("cmd_perturb: zero perturbation tracks the exact flow") {
    TempDir dir("pfexp_test_pert");
    ExperimentConfig cfg;
    cfg.t_ladder = {100};
    cfg.delta_ladder = {0.0, 0.1};
    cfg.out_dir = dir.path.string();
    const PerturbResult r = cmd_perturb(cfg);
    REQUIRE(r.rows.size() == 4);
    for (const PerturbRow& row : r.rows)
        if (row.delta == 0.0) CHECK(row.sup_err <= 1e-14);
    // calibration: per-step perturbation is exactly delta, so sup >= delta
    for (const PerturbRow& row : r.rows)
        if (row.delta > 0.0) CHECK(row.sup_err >= row.delta - 1e-12);
    // shift size at delta = 0.1, unit post-step std (bisection oracle value)
    CHECK(2.0 * sqmc::gauss_quantile(0.55) ==
          doctest::Approx(0.25132269371014807).epsilon(1e-12));
}

TEST_CASE("cmd_qmc_verify small configuration passes all checks") {
    TempDir dir("pfexp_test_qmc");
    ExperimentConfig cfg;
    cfg.scramble_keys = 3;
    cfg.net_keys = 5;
    cfg.marginal_keys = 60;
    cfg.envelope_max = 64;
    cfg.out_dir = dir.path.string();
    const QmcVerifyResult r = cmd_qmc_verify(cfg);
    CHECK(r.nets_ok);
    CHECK(r.envelope_ok);
    CHECK(r.marginals_ok);
    CHECK(r.violations.empty());
    CHECK(r.envelope_checked == 64 * 3);
}

TEST_CASE("cmd_sqmc_uniform tiny ladder produces coherent aggregates") {
    TempDir dir("pfexp_test_sqmc");
    ExperimentConfig cfg;
    cfg.n_ladder = {32, 64};
    cfg.t_ladder = {400};
    cfg.scramble_keys = 3;
    cfg.iid_compare = 1;
    cfg.window_split = 100;
    cfg.out_dir = dir.path.string();
    cfg.mode = ExperimentConfig::Mode::Scrambled;
    const SqmcUniformResult r = cmd_sqmc_uniform(cfg);
    REQUIRE(r.rows.size() == 2);
    for (const SqmcLadderRow& row : r.rows) {
        CHECK(row.max_sup_filter > 0.0);
        CHECK(row.max_sup_filter <= 1.0);
        CHECK(row.c_hat > 0.0);
        CHECK(row.envelope_arg > 0.0);
        CHECK(row.iid_max_sup_filter > 0.0);
        CHECK(row.sup_early_max <= row.max_sup_filter + 1e-15);
        CHECK(row.sup_late_max <= row.max_sup_filter + 1e-15);
    }
    CHECK_THROWS_AS(
        [&] {
            ExperimentConfig bad = cfg;
            bad.n_ladder = {48};
            cmd_sqmc_uniform(bad);
        }(),
        std::invalid_argument);
}

}  // TEST_SUITE
