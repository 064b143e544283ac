#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "sqmc/metrics.hpp"
#include "sqmc/model.hpp"
#include "sqmc/particles.hpp"

namespace sqmc {

enum class DriverMode { IID, Scrambled };

// Per-step Kolmogorov errors of the particle approximations against the
// exact laws, t = 1..T (0-based storage).
struct ErrorTrace {
    std::vector<double> kol_filter;
    std::vector<double> kol_pred;
    std::vector<double> disc_filter;  // filled only when requested
    std::vector<double> disc_pred;

    [[nodiscard]] std::size_t horizon() const noexcept { return kol_filter.size(); }

    // Sup over t in [t_lo, t_hi] (1-based, inclusive; t_hi clamped to T).
    [[nodiscard]] static double window_sup(std::span<const double> a, std::size_t t_lo,
                                           std::size_t t_hi) noexcept;
    [[nodiscard]] double sup_filter(std::size_t t_lo = 1,
                                    std::size_t t_hi = std::numeric_limits<std::size_t>::max()) const noexcept {
        return window_sup(kol_filter, t_lo, t_hi);
    }
    [[nodiscard]] double sup_pred(std::size_t t_lo = 1,
                                  std::size_t t_hi = std::numeric_limits<std::size_t>::max()) const noexcept {
        return window_sup(kol_pred, t_lo, t_hi);
    }
};

// Algorithm-1 engine over a uniform source; the bootstrap filter and SQMC
// differ only in where the per-step block comes from.  One block of N points
// in (0,1)^2 is consumed per step (2N uniforms in IID mode).
class FilterEngine {
  public:
    FilterEngine(const ModelParams& params, std::size_t n_particles, DriverMode mode,
                 const StreamKey& key);

    // Step t=1: draw initial states from eta_1 with the block's first
    // coordinates and weight by the potential.
    void init();
    // One resample/mutate/reweight step (t -> t+1).
    void advance();

    [[nodiscard]] int t() const noexcept { return t_; }
    [[nodiscard]] std::size_t size() const noexcept { return n_; }
    [[nodiscard]] std::span<const double> states() const noexcept { return states_; }
    [[nodiscard]] std::span<const double> filt_weights() const noexcept { return weights_; }
    [[nodiscard]] std::span<const double> filt_cum() const noexcept { return cum_; }
    // The point set consumed at the current step.  Empty in IID mode, where
    // the 2N uniforms are drawn pairwise inline instead of materialized.
    [[nodiscard]] const UniformBlock& block() const noexcept { return block_; }

    [[nodiscard]] ParticleSystem filtering_system() const;
    [[nodiscard]] ParticleSystem predictive_system() const;

    // No particle inside [a,b]?  (states are sorted)
    [[nodiscard]] bool all_outside(double a, double b) const noexcept;

  private:
    void fill_block();
    void reweight();

    ModelParams params_;
    std::size_t n_;
    DriverMode mode_;
    StreamKey key_;
    ScrambledBlockGen gen_;
    UniformBlock block_;
    std::vector<double> states_;
    std::vector<double> weights_;
    std::vector<double> cum_;
    std::vector<double> scratch_;
    int t_ = 0;
};

// Observer hook invoked after each step's metrics are recorded.
struct StepView {
    int t = 0;
    std::span<const double> states;
    std::span<const double> filt_weights;
    std::span<const double> filt_cum;
    const UniformBlock* block = nullptr;
    double kol_filter = 0.0;
    double kol_pred = 0.0;
    const FilterEngine* engine = nullptr;
};
using StepSink = std::function<void(const StepView&)>;

struct RunFilterOptions {
    bool with_discrepancy = false;
    StepSink sink;
};

// Runs init + T-1 steps and records per-step Kolmogorov errors against the
// Kalman laws.  Deterministic in (params, N, T, mode, key).
ErrorTrace run_filter(const ModelParams& params, std::size_t n_particles, int horizon,
                      DriverMode mode, const StreamKey& key,
                      const RunFilterOptions& options = {});

}  // namespace sqmc
