#include "sqmc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <optional>
#include <variant>

#include <json.hpp>

#include "sqmc/digital_net.hpp"
#include "sqmc/metrics.hpp"
#include "sqmc/output.hpp"

namespace sqmc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kExpRun = 1, kExpExtinction = 2, kExpSweep = 3, kExpSqmc = 4,
                        kExpDkw = 5, kExpQmcVerify = 7;

// Upper 1% critical value of chi^2 with 15 degrees of freedom.
constexpr double kChi2Crit15 = 30.577914166892494;

double envelope_arg(std::size_t n) {
    const double d = delta_envelope(n);
    const double r = std::sqrt(d);
    return r * std::log1p(1.0 / r);
}

double binom_se(double p, double n) { return n > 0 ? std::sqrt(p * (1.0 - p) / n) : 0.0; }

std::string mode_name(DriverMode m) { return m == DriverMode::IID ? "iid" : "scrambled"; }

json config_json(const ExperimentConfig& cfg) {
    json j;
    j["model"] = {{"rho", cfg.model.rho},
                  {"sigma", cfg.model.sigma},
                  {"c", cfg.model.c},
                  {"mu1", cfg.model.mu1},
                  {"sigma1_sq", cfg.model.sigma1_sq}};
    j["N"] = cfg.n_ladder;
    j["T"] = cfg.t_ladder;
    j["replicates"] = cfg.replicates;
    j["kappa"] = cfg.kappa;
    j["q"] = cfg.q;
    j["mode"] = cfg.mode == ExperimentConfig::Mode::IID        ? "iid"
                : cfg.mode == ExperimentConfig::Mode::Scrambled ? "scrambled"
                                                                : "both";
    j["seed"] = cfg.master_seed;
    j["interval"] = {cfg.interval_a, cfg.interval_b};
    j["format"] = cfg.format == ExperimentConfig::Format::Csv ? "csv" : "jsonl";
    j["scramble_keys"] = cfg.scramble_keys;
    j["net_keys"] = cfg.net_keys;
    j["marginal_keys"] = cfg.marginal_keys;
    j["iid_compare"] = cfg.iid_compare;
    j["window_split"] = cfg.window_split;
    j["envelope_max"] = cfg.envelope_max;
    j["dkw_steps"] = cfg.dkw_steps;
    j["delta_ladder"] = cfg.delta_ladder;
    j["kappa_grid"] = cfg.kappa_grid;
    return j;
}

std::string write_summary(const ExperimentConfig& cfg, const std::string& name, json results) {
    json j;
    j["experiment"] = name;
    j["schema"] = "pfexp." + name + ".v1";
    j["seed"] = cfg.master_seed;
    j["config"] = config_json(cfg);
    j["results"] = std::move(results);
    fs::create_directories(cfg.out_dir);
    const fs::path p = fs::path(cfg.out_dir) / (name + "_summary.json");
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    return p.string();
}

// Writes rows either as CSV or JSON lines depending on the configured
// format.  All values are carried as doubles (exact for the integer ranges
// the tables hold) or strings.
class TableWriter {
  public:
    using Val = std::variant<double, std::string>;

    TableWriter(const ExperimentConfig& cfg, const std::string& stem,
                std::vector<std::string> cols)
        : cols_(std::move(cols)), fmt_(cfg.format) {
        fs::create_directories(cfg.out_dir);
        if (fmt_ == ExperimentConfig::Format::Csv) {
            path_ = (fs::path(cfg.out_dir) / (stem + ".csv")).string();
            csv_.emplace(path_);
            for (const auto& c : cols_) csv_->field(c);
            csv_->end_row();
        } else {
            path_ = (fs::path(cfg.out_dir) / (stem + ".jsonl")).string();
            jsonl_.open(path_, std::ios::binary | std::ios::trunc);
            if (!jsonl_) throw std::runtime_error("cannot open output file: " + path_);
        }
    }

    void row(const std::vector<Val>& vals) {
        if (vals.size() != cols_.size()) throw std::logic_error("TableWriter: column mismatch");
        if (fmt_ == ExperimentConfig::Format::Csv) {
            for (const auto& v : vals)
                std::visit([&](const auto& x) { csv_->field(x); }, v);
            csv_->end_row();
        } else {
            json j;
            for (std::size_t i = 0; i < vals.size(); ++i)
                std::visit([&](const auto& x) { j[cols_[i]] = x; }, vals[i]);
            jsonl_ << j.dump() << '\n';
        }
    }

    [[nodiscard]] const std::string& path() const noexcept { return path_; }

  private:
    std::vector<std::string> cols_;
    ExperimentConfig::Format fmt_;
    std::string path_;
    std::optional<CsvWriter> csv_;
    std::ofstream jsonl_;
};

struct LinFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};
LinFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    LinFit f;
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cov = sxy - sx * sy / n;
    if (vx <= 0) return f;
    f.slope = cov / vx;
    f.intercept = (sy - f.slope * sx) / n;
    f.r2 = vy > 0 ? cov * cov / (vx * vy) : 1.0;
    return f;
}

void progress(const std::string& what, std::size_t done, std::size_t total) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[" << what << "] " << done << "/" << total << "\n";
}

}  // namespace

void ExperimentConfig::validate() const {
    model.validate();
    if (n_ladder.empty() || t_ladder.empty()) throw std::invalid_argument("config: empty N or T ladder");
    for (std::size_t n : n_ladder)
        if (n == 0) throw std::invalid_argument("config: N must be >= 1");
    for (int t : t_ladder)
        if (t < 1) throw std::invalid_argument("config: T must be >= 1");
    if (replicates < 1) throw std::invalid_argument("config: replicates must be >= 1");
    if (!(kappa > 0.0 && kappa <= 1.0)) throw std::invalid_argument("config: kappa must lie in (0,1]");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("config: q must lie in (0,1)");
    if (!(interval_a < interval_b)) throw std::invalid_argument("config: interval needs a < b");
}

int ExperimentConfig::effective_workers() const {
    if (workers > 0) return workers;
    if (const char* env = std::getenv("PFEXP_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return w;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    const int w = std::min<std::size_t>(std::max(workers, 1), count);
    if (w == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(w));
    for (int k = 0; k < w; ++k) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    return out;
}

}  // namespace

void apply_config_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const auto as_d = [&] { return std::stod(value); };
    const auto as_i = [&] { return std::stoi(value); };
    if (key == "rho") cfg.model.rho = as_d();
    else if (key == "sigma") cfg.model.sigma = as_d();
    else if (key == "c") cfg.model.c = as_d();
    else if (key == "mu1") cfg.model.mu1 = as_d();
    else if (key == "sigma1_sq") cfg.model.sigma1_sq = as_d();
    else if (key == "N") {
        cfg.n_ladder.clear();
        for (const auto& tok : split_csv(value)) cfg.n_ladder.push_back(std::stoull(tok));
    } else if (key == "T") {
        cfg.t_ladder.clear();
        for (const auto& tok : split_csv(value)) cfg.t_ladder.push_back(std::stoi(tok));
    } else if (key == "replicates") cfg.replicates = as_i();
    else if (key == "kappa") cfg.kappa = as_d();
    else if (key == "q") cfg.q = as_d();
    else if (key == "mode") {
        if (value == "iid") cfg.mode = ExperimentConfig::Mode::IID;
        else if (value == "scrambled") cfg.mode = ExperimentConfig::Mode::Scrambled;
        else if (value == "both") cfg.mode = ExperimentConfig::Mode::Both;
        else throw std::invalid_argument("config: bad mode '" + value + "'");
    } else if (key == "seed") cfg.master_seed = std::stoull(value);
    else if (key == "a") cfg.interval_a = as_d();
    else if (key == "b") cfg.interval_b = as_d();
    else if (key == "out") cfg.out_dir = value;
    else if (key == "format") {
        if (value == "csv") cfg.format = ExperimentConfig::Format::Csv;
        else if (value == "jsonl") cfg.format = ExperimentConfig::Format::JsonLines;
        else throw std::invalid_argument("config: bad format '" + value + "'");
    } else if (key == "workers") cfg.workers = as_i();
    else if (key == "keys") cfg.scramble_keys = as_i();
    else if (key == "net_keys") cfg.net_keys = as_i();
    else if (key == "marginal_keys") cfg.marginal_keys = as_i();
    else if (key == "iid_compare") cfg.iid_compare = as_i();
    else if (key == "window_split") cfg.window_split = as_i();
    else if (key == "envelope_max") cfg.envelope_max = std::stoull(value);
    else if (key == "dkw_steps") cfg.dkw_steps = as_i();
    else if (key == "delta_ladder") {
        cfg.delta_ladder.clear();
        for (const auto& tok : split_csv(value)) cfg.delta_ladder.push_back(std::stod(tok));
    } else if (key == "kappa_grid") {
        cfg.kappa_grid.clear();
        for (const auto& tok : split_csv(value)) cfg.kappa_grid.push_back(std::stod(tok));
    } else throw std::invalid_argument("config: unknown key '" + key + "'");
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

// ---- run -------------------------------------------------------------------

RunResult cmd_run(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.n_ladder.front();
    const int horizon = cfg.t_ladder.front();
    std::vector<DriverMode> modes;
    if (cfg.mode != ExperimentConfig::Mode::Scrambled) modes.push_back(DriverMode::IID);
    if (cfg.mode != ExperimentConfig::Mode::IID) modes.push_back(DriverMode::Scrambled);

    RunResult result;
    json jm = json::array();
    for (const DriverMode mode : modes) {
        const StreamKey key = cfg.root_key()
                                  .child(StreamKey::Role::Experiment, kExpRun)
                                  .child(StreamKey::Role::Purpose, mode == DriverMode::IID ? 0 : 1)
                                  .child(StreamKey::Role::Replicate, 0);
        const ErrorTrace trace = run_filter(cfg.model, n, horizon, mode, key);
        TableWriter table(cfg, "run_" + mode_name(mode),
                          {"t", "kol_filter", "kol_pred", "sup_kol_filter", "sup_kol_pred"});
        double sup_f = 0.0, sup_p = 0.0;
        for (std::size_t t = 0; t < trace.horizon(); ++t) {
            sup_f = std::max(sup_f, trace.kol_filter[t]);
            sup_p = std::max(sup_p, trace.kol_pred[t]);
            table.row({static_cast<double>(t + 1), trace.kol_filter[t], trace.kol_pred[t],
                       sup_f, sup_p});
        }
        RunModeResult mr;
        mr.mode = mode_name(mode);
        mr.sup_filter = sup_f;
        mr.sup_pred = sup_p;
        mr.envelope_ratio =
            (mode == DriverMode::Scrambled) ? sup_f / envelope_arg(n) : 0.0;
        mr.table_path = table.path();
        result.modes.push_back(mr);
        jm.push_back({{"mode", mr.mode},
                      {"sup_kol_filter", mr.sup_filter},
                      {"sup_kol_pred", mr.sup_pred},
                      {"envelope_ratio", mr.envelope_ratio},
                      {"table", mr.table_path}});
    }
    result.summary_path = write_summary(cfg, "run", {{"modes", jm}});
    return result;
}

// ---- extinction -------------------------------------------------------------

ExtinctionResult cmd_extinction(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.n_ladder.front();
    const int horizon = cfg.t_ladder.front();
    const auto reps = static_cast<std::size_t>(cfg.replicates);
    const double a = cfg.interval_a, b = cfg.interval_b;

    ExtinctionResult res;
    res.rho_bound = std::min(1.0 - gauss_cdf(2.0 * (b - a) / cfg.model.sigma), 0.5);
    res.rho_pow_n = std::pow(res.rho_bound, static_cast<double>(n));

    struct Slot {
        std::uint64_t events = 0;
        int first_t = 0;  // 0: never extinct within horizon
    };
    std::vector<Slot> slots(reps);
    const StreamKey root = cfg.root_key().child(StreamKey::Role::Experiment, kExpExtinction);
    parallel_for(reps, cfg.effective_workers(), [&](std::size_t r) {
        FilterEngine engine(cfg.model, n, DriverMode::IID,
                            root.child(StreamKey::Role::Replicate, r));
        engine.init();
        Slot& s = slots[r];
        for (int t = 2; t <= horizon; ++t) {
            engine.advance();
            if (engine.all_outside(a, b)) {
                ++s.events;
                if (s.first_t == 0) s.first_t = t;
            }
        }
    });

    res.step_obs = reps * static_cast<std::uint64_t>(horizon - 1);
    std::size_t extinct_reps = 0;
    std::vector<std::pair<int, std::uint64_t>> hist;  // (first_t, count)
    {
        std::vector<int> firsts;
        for (const Slot& s : slots) {
            res.step_events += s.events;
            if (s.first_t > 0) {
                ++extinct_reps;
                firsts.push_back(s.first_t);
            }
        }
        std::sort(firsts.begin(), firsts.end());
        for (std::size_t i = 0; i < firsts.size();) {
            std::size_t j = i;
            while (j < firsts.size() && firsts[j] == firsts[i]) ++j;
            hist.emplace_back(firsts[i], j - i);
            i = j;
        }
    }
    res.per_step_freq =
        res.step_obs > 0 ? static_cast<double>(res.step_events) / static_cast<double>(res.step_obs)
                         : 0.0;
    res.per_step_se = binom_se(res.per_step_freq, static_cast<double>(res.step_obs));
    res.frac_extinct_by_t = static_cast<double>(extinct_reps) / static_cast<double>(reps);
    res.bound_respected = res.per_step_freq >= res.rho_pow_n - 3.0 * res.per_step_se;

    // Prop-3 style ceiling at the configured kappa: half-width with limiting
    // mass (1+kappa)/2, first time the exact filtering mass exceeds kappa.
    const StationaryQuantities st = stationary(cfg.model);
    const double target = (1.0 + cfg.kappa) / 2.0;
    res.a_kappa = std::sqrt(st.sigma_inf_sq) * gauss_quantile((1.0 + target) / 2.0);
    const FilterTrajectory traj = kalman_exact(cfg.model, std::max(horizon, 1000));
    res.t_kappa = 0;
    for (std::size_t t = 0; t < traj.filtering.size(); ++t) {
        const GaussianLaw& law = traj.filtering[t];
        const double sd = std::sqrt(law.var);
        const double mass =
            gauss_cdf((res.a_kappa - law.mean) / sd) - gauss_cdf((-res.a_kappa - law.mean) / sd);
        if (mass > cfg.kappa) {
            res.t_kappa = static_cast<int>(t + 1);
            break;
        }
    }
    res.rho_kappa = std::min(1.0 - gauss_cdf(4.0 * res.a_kappa / cfg.model.sigma), 0.5);
    if (res.t_kappa >= 1 && horizon >= res.t_kappa)
        res.prop3_ceiling = std::pow(1.0 - std::pow(res.rho_kappa, static_cast<double>(n)),
                                     static_cast<double>(horizon - res.t_kappa + 1));
    else
        res.prop3_ceiling = 1.0;

    TableWriter table(cfg, "extinction_first_time", {"first_extinction_t", "count"});
    for (const auto& [t, c] : hist)
        table.row({static_cast<double>(t), static_cast<double>(c)});

    res.summary_path = write_summary(
        cfg, "extinction",
        {{"N", n},
         {"T", horizon},
         {"replicates", cfg.replicates},
         {"interval", {a, b}},
         {"rho_bound", res.rho_bound},
         {"rho_pow_n", res.rho_pow_n},
         {"per_step_freq", res.per_step_freq},
         {"per_step_se", res.per_step_se},
         {"step_events", res.step_events},
         {"step_observations", res.step_obs},
         {"frac_extinct_by_T", res.frac_extinct_by_t},
         {"bound_respected", res.bound_respected},
         {"a_kappa", res.a_kappa},
         {"T_kappa", res.t_kappa},
         {"rho_kappa", res.rho_kappa},
         {"prop3_ceiling", res.prop3_ceiling},
         {"first_time_table", table.path()}});
    return res;
}

// ---- sweep -------------------------------------------------------------------

SweepResult cmd_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!std::is_sorted(cfg.n_ladder.begin(), cfg.n_ladder.end()) ||
        !std::is_sorted(cfg.t_ladder.begin(), cfg.t_ladder.end()))
        throw std::invalid_argument("sweep: N and T ladders must be ascending");
    const auto reps = static_cast<std::size_t>(cfg.replicates);
    const int t_max = *std::max_element(cfg.t_ladder.begin(), cfg.t_ladder.end());
    const std::size_t n_count = cfg.n_ladder.size(), t_count = cfg.t_ladder.size();

    // exceed[(ni*reps + r)*t_count + ti] = 1 if sup_{t<=T_i} error >= kappa
    std::vector<std::uint8_t> exceed(n_count * reps * t_count, 0);
    const StreamKey root = cfg.root_key().child(StreamKey::Role::Experiment, kExpSweep);
    std::atomic<std::size_t> done{0};
    parallel_for(n_count * reps, cfg.effective_workers(), [&](std::size_t task) {
        const std::size_t ni = task / reps, r = task % reps;
        const StreamKey key =
            root.child(StreamKey::Role::Purpose, ni).child(StreamKey::Role::Replicate, r);
        const ErrorTrace trace =
            run_filter(cfg.model, cfg.n_ladder[ni], t_max, DriverMode::IID, key);
        double run_max = 0.0;
        std::size_t ti = 0;
        for (int t = 1; t <= t_max && ti < t_count; ++t) {
            run_max = std::max(run_max, trace.kol_filter[static_cast<std::size_t>(t - 1)]);
            while (ti < t_count && cfg.t_ladder[ti] == t) {
                exceed[(ni * reps + r) * t_count + ti] = run_max >= cfg.kappa ? 1 : 0;
                ++ti;
            }
        }
        const std::size_t d = done.fetch_add(1) + 1;
        if (d % 64 == 0 || d == n_count * reps) progress("sweep", d, n_count * reps);
    });

    SweepResult res;
    std::vector<std::vector<double>> p(n_count, std::vector<double>(t_count));
    for (std::size_t ni = 0; ni < n_count; ++ni)
        for (std::size_t ti = 0; ti < t_count; ++ti) {
            std::size_t cnt = 0;
            for (std::size_t r = 0; r < reps; ++r) cnt += exceed[(ni * reps + r) * t_count + ti];
            p[ni][ti] = static_cast<double>(cnt) / static_cast<double>(reps);
        }

    std::vector<std::size_t> min_ci(t_count, 0), min_point(t_count, 0);
    for (std::size_t ti = 0; ti < t_count; ++ti) {
        for (std::size_t ni = 0; ni < n_count; ++ni) {
            const double ci = 3.0 * binom_se(p[ni][ti], static_cast<double>(reps));
            if (min_ci[ti] == 0 && p[ni][ti] + ci <= cfg.q) min_ci[ti] = cfg.n_ladder[ni];
            if (min_point[ti] == 0 && p[ni][ti] <= cfg.q) min_point[ti] = cfg.n_ladder[ni];
        }
    }

    TableWriter table(cfg, "sweep",
                      {"N", "T", "replicates", "p_hat", "ci_half", "minimal_ci", "minimal_point"});
    for (std::size_t ni = 0; ni < n_count; ++ni)
        for (std::size_t ti = 0; ti < t_count; ++ti) {
            SweepRow row;
            row.n = cfg.n_ladder[ni];
            row.t = cfg.t_ladder[ti];
            row.replicates = cfg.replicates;
            row.p_hat = p[ni][ti];
            row.ci_half = 3.0 * binom_se(row.p_hat, static_cast<double>(reps));
            row.minimal_ci = min_ci[ti] == row.n;
            row.minimal_point = min_point[ti] == row.n;
            res.rows.push_back(row);
            table.row({static_cast<double>(row.n), static_cast<double>(row.t),
                       static_cast<double>(row.replicates), row.p_hat, row.ci_half,
                       row.minimal_ci ? 1.0 : 0.0, row.minimal_point ? 1.0 : 0.0});
        }

    std::vector<double> xs, ys;
    for (std::size_t ti = 0; ti < t_count; ++ti)
        if (min_point[ti] > 0) {
            res.min_n_point.emplace_back(cfg.t_ladder[ti], min_point[ti]);
            xs.push_back(std::log(static_cast<double>(cfg.t_ladder[ti]) / cfg.q));
            ys.push_back(static_cast<double>(min_point[ti]));
        }
    if (xs.size() >= 2) {
        const LinFit fit = least_squares(xs, ys);
        res.fit_slope = fit.slope;
        res.fit_intercept = fit.intercept;
        res.fit_r2 = fit.r2;
    }

    json jm = json::array();
    for (const auto& [t, nmin] : res.min_n_point) jm.push_back({{"T", t}, {"min_N", nmin}});
    res.summary_path = write_summary(cfg, "sweep",
                                     {{"kappa", cfg.kappa},
                                      {"q", cfg.q},
                                      {"min_N_point", jm},
                                      {"fit_slope", res.fit_slope},
                                      {"fit_intercept", res.fit_intercept},
                                      {"fit_r2", res.fit_r2},
                                      {"table", table.path()}});
    return res;
}

// ---- sqmc-uniform -------------------------------------------------------------

SqmcUniformResult cmd_sqmc_uniform(const ExperimentConfig& cfg) {
    cfg.validate();
    for (const std::size_t n : cfg.n_ladder)
        if (n < 2 || (n & (n - 1)) != 0)
            throw std::invalid_argument("sqmc-uniform: N ladder must be powers of 2");
    const int horizon = *std::max_element(cfg.t_ladder.begin(), cfg.t_ladder.end());
    const auto keys = static_cast<std::size_t>(cfg.scramble_keys);
    const auto iid_runs = static_cast<std::size_t>(std::max(cfg.iid_compare, 0));
    const std::size_t n_count = cfg.n_ladder.size();
    const auto split = static_cast<std::size_t>(cfg.window_split);

    struct PerRun {
        double sup_f = 0.0, sup_p = 0.0, early = 0.0, late = 0.0;
    };
    std::vector<PerRun> scr(n_count * keys);
    std::vector<double> iid_sup(n_count * iid_runs, 0.0);
    const StreamKey root = cfg.root_key().child(StreamKey::Role::Experiment, kExpSqmc);

    const std::size_t total = n_count * (keys + iid_runs);
    std::atomic<std::size_t> done{0};
    parallel_for(total, cfg.effective_workers(), [&](std::size_t task) {
        const std::size_t ni = task % n_count;
        const std::size_t k = task / n_count;
        if (k < keys) {
            const StreamKey key =
                root.child(StreamKey::Role::Purpose, ni).child(StreamKey::Role::Replicate, k);
            const ErrorTrace trace =
                run_filter(cfg.model, cfg.n_ladder[ni], horizon, DriverMode::Scrambled, key);
            PerRun& out = scr[ni * keys + k];
            out.sup_f = trace.sup_filter();
            out.sup_p = trace.sup_pred();
            out.early = trace.sup_filter(1, split);
            out.late = trace.sup_filter(split);  // windows share the split step
        } else {
            const std::size_t i = k - keys;
            const StreamKey key = root.child(StreamKey::Role::Purpose, 1000 + ni)
                                      .child(StreamKey::Role::Replicate, i);
            const ErrorTrace trace =
                run_filter(cfg.model, cfg.n_ladder[ni], horizon, DriverMode::IID, key);
            iid_sup[ni * iid_runs + i] = trace.sup_filter();
        }
        const std::size_t d = done.fetch_add(1) + 1;
        progress("sqmc-uniform", d, total);
    });

    SqmcUniformResult res;
    TableWriter runs_table(cfg, "sqmc_uniform_runs",
                           {"N", "key", "sup_kol_filter", "sup_kol_pred", "sup_early", "sup_late"});
    for (std::size_t ni = 0; ni < n_count; ++ni) {
        SqmcLadderRow row;
        row.n = cfg.n_ladder[ni];
        double early_sum = 0.0, early_sq = 0.0, late_sum = 0.0, late_sq = 0.0;
        for (std::size_t k = 0; k < keys; ++k) {
            const PerRun& pr = scr[ni * keys + k];
            runs_table.row({static_cast<double>(row.n), static_cast<double>(k), pr.sup_f,
                            pr.sup_p, pr.early, pr.late});
            row.max_sup_filter = std::max(row.max_sup_filter, pr.sup_f);
            row.max_sup_pred = std::max(row.max_sup_pred, pr.sup_p);
            row.sup_early_max = std::max(row.sup_early_max, pr.early);
            row.sup_late_max = std::max(row.sup_late_max, pr.late);
            early_sum += pr.early;
            early_sq += pr.early * pr.early;
            late_sum += pr.late;
            late_sq += pr.late * pr.late;
        }
        const double kn = static_cast<double>(keys);
        const auto spread = [kn](double sum, double sq) {
            return kn > 1 ? std::sqrt(std::max(0.0, (sq - sum * sum / kn) / (kn - 1.0))) : 0.0;
        };
        row.early_spread_sd = spread(early_sum, early_sq);
        row.late_spread_sd = spread(late_sum, late_sq);
        row.envelope_arg = envelope_arg(row.n);
        row.c_hat = row.max_sup_filter / row.envelope_arg;
        for (std::size_t i = 0; i < iid_runs; ++i)
            row.iid_max_sup_filter = std::max(row.iid_max_sup_filter, iid_sup[ni * iid_runs + i]);
        res.rows.push_back(row);
    }

    res.sup_strictly_decreasing = true;
    res.c_hat_non_increasing = true;
    res.flat_in_t = true;
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
        if (i > 0) {
            if (!(res.rows[i].max_sup_filter < res.rows[i - 1].max_sup_filter))
                res.sup_strictly_decreasing = false;
            if (res.rows[i].c_hat > res.rows[i - 1].c_hat * (1.0 + 1e-12))
                res.c_hat_non_increasing = false;
        }
        // the two window sups are distinct max statistics; each contributes
        // its own replicate spread to the tolerance
        if (res.rows[i].sup_late_max - res.rows[i].sup_early_max >
            3.0 * (res.rows[i].early_spread_sd + res.rows[i].late_spread_sd))
            res.flat_in_t = false;
    }

    TableWriter table(cfg, "sqmc_uniform",
                      {"N", "max_sup_filter", "max_sup_pred", "sup_early_max", "sup_late_max",
                       "early_spread_sd", "late_spread_sd", "envelope_arg", "c_hat",
                       "iid_max_sup_filter"});
    json jr = json::array();
    for (const SqmcLadderRow& r : res.rows) {
        table.row({static_cast<double>(r.n), r.max_sup_filter, r.max_sup_pred, r.sup_early_max,
                   r.sup_late_max, r.early_spread_sd, r.late_spread_sd, r.envelope_arg, r.c_hat,
                   r.iid_max_sup_filter});
        jr.push_back({{"N", r.n},
                      {"max_sup_filter", r.max_sup_filter},
                      {"c_hat", r.c_hat},
                      {"sup_early_max", r.sup_early_max},
                      {"sup_late_max", r.sup_late_max},
                      {"early_spread_sd", r.early_spread_sd},
                      {"late_spread_sd", r.late_spread_sd},
                      {"iid_max_sup_filter", r.iid_max_sup_filter}});
    }
    res.summary_path = write_summary(cfg, "sqmc_uniform",
                                     {{"T", horizon},
                                      {"keys", cfg.scramble_keys},
                                      {"window_split", cfg.window_split},
                                      {"ladder", jr},
                                      {"sup_strictly_decreasing", res.sup_strictly_decreasing},
                                      {"c_hat_non_increasing", res.c_hat_non_increasing},
                                      {"flat_in_t", res.flat_in_t},
                                      {"runs_table", runs_table.path()},
                                      {"table", table.path()}});
    return res;
}

// ---- dkw -----------------------------------------------------------------------

DkwResult cmd_dkw(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.n_ladder.front();
    const auto reps = static_cast<std::size_t>(cfg.replicates);
    const int steps = cfg.dkw_steps;
    const StreamKey root = cfg.root_key().child(StreamKey::Role::Experiment, kExpDkw);

    std::vector<std::vector<double>> errs(reps);
    parallel_for(reps, cfg.effective_workers(), [&](std::size_t r) {
        FilterEngine engine(cfg.model, n, DriverMode::IID,
                            root.child(StreamKey::Role::Replicate, r));
        std::vector<double>& out = errs[r];
        out.reserve(static_cast<std::size_t>(steps));
        engine.init();
        const std::vector<double> uniform_cum =
            cumulative_weights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
        // t = 1: one-step error against eta_1 itself.
        out.push_back(kolmogorov_sorted_vs_gauss(engine.states(), uniform_cum,
                                                 {cfg.model.mu1, cfg.model.sigma1_sq}, nullptr));
        std::vector<double> prev_states, prev_weights;
        ParticleSystem pred;
        for (int t = 2; t <= steps; ++t) {
            prev_states.assign(engine.states().begin(), engine.states().end());
            prev_weights.assign(engine.filt_weights().begin(), engine.filt_weights().end());
            engine.advance();
            for (double& s : prev_states) s *= cfg.model.rho;
            pred.states.assign(engine.states().begin(), engine.states().end());
            pred.weights.assign(n, 1.0 / static_cast<double>(n));
            out.push_back(
                kolmogorov_emp_mixture(pred, prev_weights, prev_states, cfg.model.sigma));
        }
    });

    DkwResult res;
    std::uint64_t samples = 0;
    for (const auto& v : errs) samples += v.size();
    res.samples = samples;
    res.all_pass = true;
    TableWriter table(cfg, "dkw", {"kappa", "bound", "p_hat", "se", "pass"});
    for (const double kappa : cfg.kappa_grid) {
        DkwRow row;
        row.kappa = kappa;
        row.bound = std::min(1.0, 2.0 * std::exp(-2.0 * static_cast<double>(n) * kappa * kappa));
        std::uint64_t cnt = 0;
        for (const auto& v : errs)
            for (const double e : v)
                if (e > kappa) ++cnt;
        row.p_hat = static_cast<double>(cnt) / static_cast<double>(samples);
        row.se = binom_se(row.p_hat, static_cast<double>(samples));
        row.pass = row.p_hat <= row.bound + 3.0 * row.se;
        if (!row.pass) res.all_pass = false;
        res.rows.push_back(row);
        table.row({row.kappa, row.bound, row.p_hat, row.se, row.pass ? 1.0 : 0.0});
    }
    res.summary_path = write_summary(
        cfg, "dkw",
        {{"N", n},
         {"steps", steps},
         {"replicates", cfg.replicates},
         {"samples", res.samples},
         {"all_pass", res.all_pass},
         {"n_needed_kappa_0p1_gamma_0p05", std::log(2.0 / 0.05) / (2.0 * 0.1 * 0.1)},
         {"table", table.path()}});
    return res;
}

// ---- perturb --------------------------------------------------------------------

PerturbResult cmd_perturb(const ExperimentConfig& cfg) {
    cfg.validate();
    const int horizon = cfg.t_ladder.front();
    const FilterTrajectory exact = kalman_exact(cfg.model, horizon);

    PerturbResult res;
    TableWriter table(cfg, "perturb", {"delta", "pattern", "sup_err", "c_hat"});
    for (int pattern = 0; pattern < 2; ++pattern) {
        const std::string name = pattern == 0 ? "alternating" : "same";
        double cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
        for (const double delta : cfg.delta_ladder) {
            GaussianLaw mu{0.0, 1.0};
            double sup_err = 0.0;
            for (int t = 1; t <= horizon; ++t) {
                const GaussianLaw phi =
                    (t == 1) ? GaussianLaw{cfg.model.mu1, cfg.model.sigma1_sq}
                             : gaussian_phi_step(mu, cfg.model);
                const double s = std::sqrt(phi.var);
                const double d = 2.0 * s * gauss_quantile((1.0 + delta) / 2.0);
                const double sign = (pattern == 0 && (t % 2 == 0)) ? -1.0 : 1.0;
                mu = {phi.mean + sign * d, phi.var};
                sup_err = std::max(
                    sup_err, kolmogorov_gauss_gauss(mu, exact.predictive[static_cast<std::size_t>(t - 1)]));
            }
            PerturbRow row;
            row.delta = delta;
            row.pattern = name;
            row.sup_err = sup_err;
            row.c_hat = delta > 0.0 ? sup_err / (delta * std::log1p(1.0 / delta)) : 0.0;
            res.rows.push_back(row);
            table.row({row.delta, row.pattern, row.sup_err, row.c_hat});
            if (delta > 0.0) {
                cmin = std::min(cmin, row.c_hat);
                cmax = std::max(cmax, row.c_hat);
            }
        }
        const double ratio = (cmin > 0.0 && std::isfinite(cmin)) ? cmax / cmin : 0.0;
        if (pattern == 0)
            res.ratio_alternating = ratio;
        else
            res.ratio_same = ratio;
    }
    res.summary_path = write_summary(cfg, "perturb",
                                     {{"T", horizon},
                                      {"delta_ladder", cfg.delta_ladder},
                                      {"ratio_alternating", res.ratio_alternating},
                                      {"ratio_same", res.ratio_same},
                                      {"table", table.path()}});
    return res;
}

// ---- qmc-verify -----------------------------------------------------------------

QmcVerifyResult cmd_qmc_verify(const ExperimentConfig& cfg) {
    cfg.validate();
    QmcVerifyResult res;
    std::mutex mu;
    const StreamKey root = cfg.root_key().child(StreamKey::Role::Experiment, kExpQmcVerify);

    // Net preservation: every dyadic prefix of a 4096-point scrambled block.
    const int max_m = 12;
    std::atomic<bool> nets_ok{true};
    parallel_for(static_cast<std::size_t>(cfg.net_keys), cfg.effective_workers(), [&](std::size_t k) {
        const auto block = scrambled_block(std::size_t{1} << max_m,
                                           root.child(StreamKey::Role::Purpose, 0)
                                               .child(StreamKey::Role::Replicate, k));
        for (int m = 0; m <= max_m; ++m) {
            if (!is_net(std::span(block.data(), std::size_t{1} << m), m, 0)) {
                nets_ok = false;
                std::lock_guard lock(mu);
                res.violations.push_back("net check failed: m=" + std::to_string(m) +
                                         " key=" + std::to_string(k));
            }
        }
    });
    res.nets_ok = nets_ok;

    // Envelope: exact star discrepancy of every prefix length N <= envelope_max.
    const std::size_t n_max = cfg.envelope_max;
    std::vector<double> max_ratio(n_max, 0.0);
    std::vector<double> max_disc(n_max, 0.0);
    std::atomic<bool> env_ok{true};
    parallel_for(static_cast<std::size_t>(cfg.scramble_keys), cfg.effective_workers(),
                 [&](std::size_t k) {
                     const auto block = scrambled_block(n_max, root.child(StreamKey::Role::Purpose, 1)
                                                                   .child(StreamKey::Role::Replicate, k));
                     std::vector<double> disc(n_max);
                     for (std::size_t n = 1; n <= n_max; ++n)
                         disc[n - 1] = star_discrepancy_2d(std::span(block.data(), n));
                     std::lock_guard lock(mu);
                     for (std::size_t n = 1; n <= n_max; ++n) {
                         const double env = delta_envelope(n);
                         max_disc[n - 1] = std::max(max_disc[n - 1], disc[n - 1]);
                         max_ratio[n - 1] = std::max(max_ratio[n - 1], disc[n - 1] / env);
                         if (disc[n - 1] > env) {
                             env_ok = false;
                             res.violations.push_back("envelope exceeded: N=" + std::to_string(n) +
                                                      " key=" + std::to_string(k));
                         }
                     }
                 });
    res.envelope_ok = env_ok;
    res.envelope_checked = n_max * static_cast<std::uint64_t>(cfg.scramble_keys);

    // Marginal uniformity: chi^2 over 16 bins, both coordinates pooled
    // across keys at N = 64.
    {
        constexpr std::size_t kBins = 16, kBlockN = 64;
        std::vector<std::uint64_t> bins[2];
        bins[0].assign(kBins, 0);
        bins[1].assign(kBins, 0);
        for (int k = 0; k < cfg.marginal_keys; ++k) {
            const auto block = scrambled_block(kBlockN, root.child(StreamKey::Role::Purpose, 2)
                                                            .child(StreamKey::Role::Replicate,
                                                                   static_cast<std::uint64_t>(k)));
            for (const Point2& p : block) {
                ++bins[0][std::min(kBins - 1, static_cast<std::size_t>(p.x * kBins))];
                ++bins[1][std::min(kBins - 1, static_cast<std::size_t>(p.y * kBins))];
            }
        }
        const double total = static_cast<double>(cfg.marginal_keys) * kBlockN;
        const double expect = total / kBins;
        res.marginals_ok = true;
        for (int c = 0; c < 2; ++c) {
            double chi2 = 0.0;
            for (std::size_t b = 0; b < kBins; ++b) {
                const double d = static_cast<double>(bins[c][b]) - expect;
                chi2 += d * d / expect;
            }
            if (chi2 > kChi2Crit15) {
                res.marginals_ok = false;
                res.violations.push_back("marginal chi2 too large: coord=" + std::to_string(c + 1) +
                                         " chi2=" + format_double(chi2));
            }
        }
    }

    TableWriter table(cfg, "qmc_verify", {"N", "max_star_disc", "delta_envelope", "ratio"});
    for (std::size_t n = 1; n <= n_max; ++n)
        table.row({static_cast<double>(n), max_disc[n - 1], delta_envelope(n), max_ratio[n - 1]});

    res.summary_path = write_summary(cfg, "qmc_verify",
                                     {{"nets_ok", res.nets_ok},
                                      {"envelope_ok", res.envelope_ok},
                                      {"marginals_ok", res.marginals_ok},
                                      {"envelope_checked", res.envelope_checked},
                                      {"net_keys", cfg.net_keys},
                                      {"violations", res.violations},
                                      {"table", table.path()}});
    return res;
}

}  // namespace sqmc
