#pragma once

#include <optional>
#include <span>

#include "sqmc/model.hpp"
#include "sqmc/particles.hpp"

namespace sqmc {

// Exact Kolmogorov distance between a weighted empirical law and a Gaussian.
// The sup over the step CDF is attained at particle positions, evaluated
// from the left (cumulative weight below) and right (cumulative including).
double kolmogorov_emp_gauss(const ParticleSystem& system, const GaussianLaw& law);

// Exact discrepancy metric (sup over closed intervals [a,b]) between a
// weighted empirical law and a Gaussian.
double discrepancy_emp_gauss(const ParticleSystem& system, const GaussianLaw& law);

// Exact Kolmogorov distance between two Gaussians: candidate extrema are the
// density-equality roots.  Stable down to distances ~1e-300 for equal-mean
// pairs (needed to resolve geometric decay over long horizons).
double kolmogorov_gauss_gauss(const GaussianLaw& a, const GaussianLaw& b);

// Exact Kolmogorov distance between a weighted empirical law and a finite
// Gaussian mixture sum_j w_j N(mean_j, var_j); drives the one-step error
// ||eta_t^N - eta_hat_{t-1}^N M||.
double kolmogorov_emp_mixture(const ParticleSystem& system,
                              std::span<const double> mix_weights,
                              std::span<const double> mix_means, double common_sd);

// Exact sup over B2 = {(-inf,a1] x (-inf,a2]} of |empirical - mu(B)| for
// samples produced by sample_mixture on the same spec.
double rect_discrepancy_b2(std::span<const MixtureSample> samples, const MixtureSpec& spec);

struct MetricReport {
    double kolmogorov = 0.0;
    std::optional<double> discrepancy;
    double argmax = 0.0;  // state where the Kolmogorov sup is attained
};
MetricReport metric_report(const ParticleSystem& system, const GaussianLaw& law,
                           bool with_discrepancy = false);

// Internal fast paths, shared with the filter loop ------------------------

// Phi(a) - Phi(b), evaluated without cancellation when a and b are close.
double gauss_cdf_diff(double a, double b) noexcept;

// Kolmogorov distance between N(mean_gap, var + var_gap) and N(0, var),
// with the gaps carried as separate inputs so distances far below one ulp
// of `var` keep full relative precision (the Kalman recursion converges to
// its fixed point in double precision long before the distances do).
double kolmogorov_gauss_gap(double var, double mean_gap, double var_gap);

// Exact sup_i max(c_i - F(x_i), F(x_i) - c_{i-1}) for an arbitrary monotone
// CDF via branch-and-bound on the sorted states; `cum` are cumulative
// weights with cum.back() == 1.  Returns the sup; argmax_out (optional)
// receives the attaining state.
double kolmogorov_sorted_vs_gauss(std::span<const double> states, std::span<const double> cum,
                                  const GaussianLaw& law, double* argmax_out = nullptr);

}  // namespace sqmc
