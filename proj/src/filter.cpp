#include "sqmc/filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "radix_sort.hpp"

namespace sqmc {

namespace {

// Branch-free generalized-inverse lookup: smallest i with cum[i] >= u.
inline std::size_t inverse_cdf_index(const double* cum, std::size_t n, double u) noexcept {
    std::size_t lo = 0, len = n;
    while (len > 1) {
        const std::size_t half = len / 2;
        lo += (cum[lo + half - 1] < u) ? half : 0;
        len -= half;
    }
    return lo;
}

}  // namespace

double ErrorTrace::window_sup(std::span<const double> a, std::size_t t_lo,
                              std::size_t t_hi) noexcept {
    if (a.empty() || t_lo < 1) return 0.0;
    const std::size_t hi = std::min(t_hi, a.size());
    double s = 0.0;
    for (std::size_t t = t_lo; t <= hi; ++t) s = std::max(s, a[t - 1]);
    return s;
}

FilterEngine::FilterEngine(const ModelParams& params, std::size_t n_particles, DriverMode mode,
                           const StreamKey& key)
    : params_(params), n_(n_particles), mode_(mode), key_(key) {
    params_.validate();
    if (n_ == 0) throw std::invalid_argument("FilterEngine: N must be >= 1");
    states_.resize(n_);
    weights_.resize(n_);
    cum_.resize(n_);
    scratch_.resize(n_);
}

void FilterEngine::fill_block() {
    // IID steps consume their 2N uniforms inline; only the scrambled driver
    // materializes a point set.
    block_.source = UniformBlock::Source::Scrambled;
    gen_.generate_sorted_by_x(n_, key_.child(StreamKey::Role::Step, static_cast<std::uint64_t>(t_)),
                              block_.pts);
}

void FilterEngine::reweight() {
    double max_log = -std::numeric_limits<double>::infinity();
    const double half_c = 0.5 * params_.c;
    for (std::size_t i = 0; i < n_; ++i) {
        const double lw = -half_c * states_[i] * states_[i];
        scratch_[i] = lw;
        if (lw > max_log) max_log = lw;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        weights_[i] = std::exp(scratch_[i] - max_log);
        total += weights_[i];
    }
    const double inv = 1.0 / total;
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        weights_[i] *= inv;
        acc += weights_[i];
        cum_[i] = acc;
    }
    cum_[n_ - 1] = 1.0;
}

void FilterEngine::init() {
    t_ = 1;
    const double sd1 = std::sqrt(params_.sigma1_sq);
    if (mode_ == DriverMode::Scrambled) {
        fill_block();
        // sorted by the first coordinate, so states come out sorted
        for (std::size_t i = 0; i < n_; ++i)
            states_[i] = params_.mu1 + sd1 * detail::normal_quantile_fast(block_.pts[i].x);
    } else {
        UniformStream stream(key_.derive_child(StreamKey::Role::Step, 1));
        for (std::size_t i = 0; i < n_; ++i) {
            states_[i] = params_.mu1 + sd1 * detail::normal_quantile_fast(stream.next_double());
            (void)stream.next_double();  // the pair's unused second coordinate
        }
        detail::radix_sort(states_, scratch_);
    }
    reweight();
}

void FilterEngine::advance() {
    if (t_ < 1) throw std::logic_error("FilterEngine: advance before init");
    ++t_;
    if (mode_ == DriverMode::Scrambled) {
        fill_block();
        std::size_t j = 0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double u1 = block_.pts[i].x;
            while (j + 1 < n_ && cum_[j] < u1) ++j;
            scratch_[i] =
                params_.rho * states_[j] + params_.sigma * detail::normal_quantile_fast(block_.pts[i].y);
        }
        std::swap(states_, scratch_);
    } else {
        UniformStream stream(key_.derive_child(StreamKey::Role::Step, static_cast<std::uint64_t>(t_)));
        const double* cum = cum_.data();
        for (std::size_t i = 0; i < n_; ++i) {
            const double u1 = stream.next_double();
            const double u2 = stream.next_double();
            const std::size_t j = inverse_cdf_index(cum, n_, u1);
            scratch_[i] = params_.rho * states_[j] + params_.sigma * detail::normal_quantile_fast(u2);
        }
        std::swap(states_, scratch_);
    }
    detail::radix_sort(states_, scratch_);
    reweight();
}

ParticleSystem FilterEngine::filtering_system() const {
    return {states_, weights_};
}

ParticleSystem FilterEngine::predictive_system() const {
    ParticleSystem s;
    s.states = states_;
    s.weights.assign(n_, 1.0 / static_cast<double>(n_));
    return s;
}

bool FilterEngine::all_outside(double a, double b) const noexcept {
    const auto it = std::lower_bound(states_.begin(), states_.end(), a);
    return it == states_.end() || *it > b;
}

ErrorTrace run_filter(const ModelParams& params, std::size_t n_particles, int horizon,
                      DriverMode mode, const StreamKey& key, const RunFilterOptions& options) {
    if (horizon < 1) throw std::invalid_argument("run_filter: horizon must be >= 1");
    const FilterTrajectory exact = kalman_exact(params, horizon);
    FilterEngine engine(params, n_particles, mode, key);

    ErrorTrace trace;
    const auto T = static_cast<std::size_t>(horizon);
    trace.kol_filter.resize(T);
    trace.kol_pred.resize(T);
    if (options.with_discrepancy) {
        trace.disc_filter.resize(T);
        trace.disc_pred.resize(T);
    }

    const std::vector<double> uniform_cum =
        cumulative_weights(std::vector<double>(n_particles, 1.0 / static_cast<double>(n_particles)));

    for (int t = 1; t <= horizon; ++t) {
        if (t == 1)
            engine.init();
        else
            engine.advance();
        const auto ti = static_cast<std::size_t>(t - 1);
        const GaussianLaw& law_f = exact.filtering[ti];
        const GaussianLaw& law_p = exact.predictive[ti];
        trace.kol_filter[ti] =
            kolmogorov_sorted_vs_gauss(engine.states(), engine.filt_cum(), law_f, nullptr);
        trace.kol_pred[ti] = kolmogorov_sorted_vs_gauss(engine.states(), uniform_cum, law_p, nullptr);
        if (options.with_discrepancy) {
            trace.disc_filter[ti] = discrepancy_emp_gauss(engine.filtering_system(), law_f);
            trace.disc_pred[ti] = discrepancy_emp_gauss(engine.predictive_system(), law_p);
        }
        if (options.sink) {
            StepView view;
            view.t = t;
            view.states = engine.states();
            view.filt_weights = engine.filt_weights();
            view.filt_cum = engine.filt_cum();
            view.block = &engine.block();
            view.kol_filter = trace.kol_filter[ti];
            view.kol_pred = trace.kol_pred[ti];
            view.engine = &engine;
            options.sink(view);
        }
    }
    return trace;
}

}  // namespace sqmc
