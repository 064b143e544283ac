// pfexp: experiment harness for the zero-observation linear Gaussian
// filtering problem.  One subcommand per study; results go to CSV/JSON
// files under --out.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sqmc/experiments.hpp"

namespace {

using sqmc::ExperimentConfig;

struct CliState {
    std::string config_path;
    std::string mode;
    std::string format;
    std::string n_list, t_list, delta_list, kappa_list;
    ExperimentConfig cfg;
};

void add_common(CLI::App* cmd, CliState& st) {
    cmd->add_option("--config", st.config_path, "flat key=value config file");
    cmd->add_option("--seed", st.cfg.master_seed, "master seed");
    cmd->add_option("--mode", st.mode, "iid | scrambled | both");
    cmd->add_option("--out", st.cfg.out_dir, "output directory");
    cmd->add_option("--format", st.format, "csv | jsonl");
    cmd->add_option("--workers", st.cfg.workers, "worker threads (0 = auto)");
    cmd->add_option("--N", st.n_list, "particle count or comma ladder");
    cmd->add_option("--T", st.t_list, "horizon or comma ladder");
    cmd->add_option("--replicates", st.cfg.replicates, "independent replicates");
    cmd->add_option("--kappa", st.cfg.kappa, "error threshold in (0,1]");
    cmd->add_option("--q", st.cfg.q, "failure probability in (0,1)");
    cmd->add_option("--a", st.cfg.interval_a, "interval left end");
    cmd->add_option("--b", st.cfg.interval_b, "interval right end");
    cmd->add_option("--rho", st.cfg.model.rho, "state coefficient");
    cmd->add_option("--sigma", st.cfg.model.sigma, "state noise scale");
    cmd->add_option("--c", st.cfg.model.c, "observation precision");
    cmd->add_option("--mu1", st.cfg.model.mu1, "initial mean");
    cmd->add_option("--sigma1-sq", st.cfg.model.sigma1_sq, "initial variance");
    cmd->add_option("--keys", st.cfg.scramble_keys, "scramble keys");
    cmd->add_option("--net-keys", st.cfg.net_keys, "keys for net checks");
    cmd->add_option("--marginal-keys", st.cfg.marginal_keys, "keys pooled in chi^2 test");
    cmd->add_option("--iid-compare", st.cfg.iid_compare, "IID comparison runs");
    cmd->add_option("--window-split", st.cfg.window_split, "early/late split step");
    cmd->add_option("--envelope-max", st.cfg.envelope_max, "largest envelope-checked N");
    cmd->add_option("--dkw-steps", st.cfg.dkw_steps, "steps per replicate (dkw)");
    cmd->add_option("--delta-ladder", st.delta_list, "comma list of per-step perturbations");
    cmd->add_option("--kappa-grid", st.kappa_list, "comma list of tail thresholds (dkw)");
}

// Config file first, then explicit flags on top.
void finalize(CliState& st, const ExperimentConfig& defaults, CLI::App* cmd) {
    ExperimentConfig cfg =
        st.config_path.empty() ? defaults : sqmc::load_config_file(st.config_path);

    const auto touched = [&](const std::string& name) { return cmd->count(name) > 0; };
    if (touched("--seed")) cfg.master_seed = st.cfg.master_seed;
    if (touched("--out")) cfg.out_dir = st.cfg.out_dir;
    if (touched("--workers")) cfg.workers = st.cfg.workers;
    if (touched("--replicates")) cfg.replicates = st.cfg.replicates;
    if (touched("--kappa")) cfg.kappa = st.cfg.kappa;
    if (touched("--q")) cfg.q = st.cfg.q;
    if (touched("--a")) cfg.interval_a = st.cfg.interval_a;
    if (touched("--b")) cfg.interval_b = st.cfg.interval_b;
    if (touched("--rho")) cfg.model.rho = st.cfg.model.rho;
    if (touched("--sigma")) cfg.model.sigma = st.cfg.model.sigma;
    if (touched("--c")) cfg.model.c = st.cfg.model.c;
    if (touched("--mu1")) cfg.model.mu1 = st.cfg.model.mu1;
    if (touched("--sigma1-sq")) cfg.model.sigma1_sq = st.cfg.model.sigma1_sq;
    if (touched("--keys")) cfg.scramble_keys = st.cfg.scramble_keys;
    if (touched("--net-keys")) cfg.net_keys = st.cfg.net_keys;
    if (touched("--marginal-keys")) cfg.marginal_keys = st.cfg.marginal_keys;
    if (touched("--iid-compare")) cfg.iid_compare = st.cfg.iid_compare;
    if (touched("--window-split")) cfg.window_split = st.cfg.window_split;
    if (touched("--envelope-max")) cfg.envelope_max = st.cfg.envelope_max;
    if (touched("--dkw-steps")) cfg.dkw_steps = st.cfg.dkw_steps;
    if (!st.mode.empty()) sqmc::apply_config_kv(cfg, "mode", st.mode);
    if (!st.format.empty()) sqmc::apply_config_kv(cfg, "format", st.format);
    if (!st.n_list.empty()) sqmc::apply_config_kv(cfg, "N", st.n_list);
    if (!st.t_list.empty()) sqmc::apply_config_kv(cfg, "T", st.t_list);
    if (!st.delta_list.empty()) sqmc::apply_config_kv(cfg, "delta_ladder", st.delta_list);
    if (!st.kappa_list.empty()) sqmc::apply_config_kv(cfg, "kappa_grid", st.kappa_list);
    st.cfg = cfg;
}

ExperimentConfig defaults_run() {
    ExperimentConfig c;
    c.n_ladder = {512};
    c.t_ladder = {1000};
    c.mode = ExperimentConfig::Mode::Both;
    return c;
}

ExperimentConfig defaults_extinction() {
    ExperimentConfig c;
    c.n_ladder = {4};
    c.t_ladder = {500};
    c.replicates = 250;
    c.mode = ExperimentConfig::Mode::IID;
    return c;
}

ExperimentConfig defaults_sweep() {
    ExperimentConfig c;
    c.n_ladder = {24, 32, 48, 64, 96, 128, 192, 256, 384, 512};
    c.t_ladder = {100, 1000, 10000};
    c.replicates = 200;
    c.kappa = 0.2;
    c.q = 0.1;
    c.mode = ExperimentConfig::Mode::IID;
    return c;
}

ExperimentConfig defaults_sqmc() {
    ExperimentConfig c;
    c.n_ladder = {256, 512, 1024, 2048, 4096};
    c.t_ladder = {100000};
    c.scramble_keys = 20;
    c.mode = ExperimentConfig::Mode::Scrambled;
    return c;
}

ExperimentConfig defaults_dkw() {
    ExperimentConfig c;
    c.n_ladder = {500};
    c.t_ladder = {200};
    c.replicates = 100;
    c.dkw_steps = 200;
    c.mode = ExperimentConfig::Mode::IID;
    return c;
}

ExperimentConfig defaults_perturb() {
    ExperimentConfig c;
    c.t_ladder = {200};
    return c;
}

ExperimentConfig defaults_qmc_verify() {
    ExperimentConfig c;
    c.n_ladder = {16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
    c.scramble_keys = 20;
    c.net_keys = 100;
    c.marginal_keys = 200;
    c.envelope_max = 1024;
    c.mode = ExperimentConfig::Mode::Scrambled;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"particle filtering experiments on the zero-observation linear Gaussian model"};
    app.require_subcommand(1);

    CliState st_run, st_ext, st_sweep, st_sqmc, st_dkw, st_pert, st_qmc;
    CLI::App* c_run = app.add_subcommand("run", "single filter run, per-step error traces");
    CLI::App* c_ext = app.add_subcommand("extinction", "all-particles-outside-interval frequencies");
    CLI::App* c_sweep = app.add_subcommand("sweep", "failure probability over an (N,T) grid");
    CLI::App* c_sqmc = app.add_subcommand("sqmc-uniform", "uniform-in-time error of the scrambled driver");
    CLI::App* c_dkw = app.add_subcommand("dkw", "one-step error tails against the DKW bound");
    CLI::App* c_pert = app.add_subcommand("perturb", "exact perturbation growth law");
    CLI::App* c_qmc = app.add_subcommand("qmc-verify", "net, envelope and uniformity checks");
    add_common(c_run, st_run);
    add_common(c_ext, st_ext);
    add_common(c_sweep, st_sweep);
    add_common(c_sqmc, st_sqmc);
    add_common(c_dkw, st_dkw);
    add_common(c_pert, st_pert);
    add_common(c_qmc, st_qmc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    }

    try {
        if (c_run->parsed()) {
            finalize(st_run, defaults_run(), c_run);
            const auto r = sqmc::cmd_run(st_run.cfg);
            std::cout << "summary: " << r.summary_path << "\n";
        } else if (c_ext->parsed()) {
            finalize(st_ext, defaults_extinction(), c_ext);
            const auto r = sqmc::cmd_extinction(st_ext.cfg);
            std::cout << "summary: " << r.summary_path << "\n";
        } else if (c_sweep->parsed()) {
            finalize(st_sweep, defaults_sweep(), c_sweep);
            const auto r = sqmc::cmd_sweep(st_sweep.cfg);
            std::cout << "summary: " << r.summary_path << "\n";
        } else if (c_sqmc->parsed()) {
            finalize(st_sqmc, defaults_sqmc(), c_sqmc);
            const auto r = sqmc::cmd_sqmc_uniform(st_sqmc.cfg);
            std::cout << "summary: " << r.summary_path << "\n";
        } else if (c_dkw->parsed()) {
            finalize(st_dkw, defaults_dkw(), c_dkw);
            const auto r = sqmc::cmd_dkw(st_dkw.cfg);
            std::cout << "summary: " << r.summary_path << "\n";
        } else if (c_pert->parsed()) {
            finalize(st_pert, defaults_perturb(), c_pert);
            const auto r = sqmc::cmd_perturb(st_pert.cfg);
            std::cout << "summary: " << r.summary_path << "\n";
        } else if (c_qmc->parsed()) {
            finalize(st_qmc, defaults_qmc_verify(), c_qmc);
            const auto r = sqmc::cmd_qmc_verify(st_qmc.cfg);
            std::cout << "summary: " << r.summary_path << "\n";
            if (!r.violations.empty()) {
                for (const auto& v : r.violations) std::cerr << "violation: " << v << "\n";
                return 2;
            }
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
