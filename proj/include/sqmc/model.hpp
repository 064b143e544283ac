#pragma once

#include <cstdint>
#include <vector>

#include "sqmc/rng.hpp"

namespace sqmc {

// Linear Gaussian state-space model with all observations pinned at zero:
//   Y_t = X_t + c^{-1/2} Z_t,  X_{t+1} = rho X_t + sigma W_{t+1},
//   X_1 ~ N(mu1, sigma1_sq).
struct ModelParams {
    double rho = 0.9;
    double sigma = 1.0;      // state noise scale, > 0
    double c = 1.0;          // observation precision, > 0
    double mu1 = 0.0;
    double sigma1_sq = 1.0;  // initial variance, > 0

    void validate() const;
};

struct GaussianLaw {
    double mean = 0.0;
    double var = 1.0;

    [[nodiscard]] double cdf(double x) const noexcept;
    [[nodiscard]] double quantile(double p) const;
};

// Exact predictive (eta_t) and filtering (eta_hat_t) laws, t = 1..T;
// predictive[0] is the initial law.
struct FilterTrajectory {
    std::vector<GaussianLaw> predictive;
    std::vector<GaussianLaw> filtering;
};

// Closed-form parameters of the k-step unnormalised kernel
// Q^k(x',dx) ∝ G_{c_k}(x') M_{rho_k, sigma_sq_k}(x',dx), k = 0..K.
struct QkSchedule {
    std::vector<double> c_k;
    std::vector<double> rho_k;
    std::vector<double> sigma_sq_k;
};

struct StationaryQuantities {
    double c_star = 0.0;        // fixed point of x -> (c+x) rho^2 / (1 + (c+x) sigma^2)
    double sigma_inf_sq = 0.0;  // limit filtering variance
    double pred_var_inf = 0.0;  // rho^2 sigma_inf_sq + sigma^2
    double rate_estimate = 0.0; // empirical geometric decay rate; 0 until fitted
};

// Kalman recursion with y_t = 0: exact filtering/predictive laws for t <= T.
FilterTrajectory kalman_exact(const ModelParams& params, int horizon);

// The three kernel-composition recursions, arrays for k = 0..K.
QkSchedule qk_schedule(const ModelParams& params, int depth);

// Closed-form c_star plus the variance limit computed two independent ways
// (Lemma-Q series and Kalman fixed point); the two must agree to 1e-10.
StationaryQuantities stationary(const ModelParams& params);

// Filtering law at time t >= 2 via the Q^k route: reweight the first
// filtering law by G_{c_{t-1}}, then push through the affine/noise map
// (rho_{t-1}, sigma_sq_{t-1}).  Must match kalman_exact.
GaussianLaw filter_via_qk(const ModelParams& params, int t);

// One step of the exact measure recursion: Phi(N(m,v)) = Bayes update by
// G then kernel push-forward.
GaussianLaw gaussian_phi_step(const GaussianLaw& law, const ModelParams& params);

// h_{a,r,s}(x) = Phi((a - r x)/s) - Phi(a/s); bounded test function with
// total variation at most 1.
double h_eval(double a, double r, double s, double x);

// One trajectory of states and observations.
struct SsmPath {
    std::vector<double> states;
    std::vector<double> observations;
};
SsmPath simulate_ssm(const ModelParams& params, int horizon, const StreamKey& key);

// Least-squares fit of log Kolmogorov distance to the limit law against t
// over [t_lo, t_hi]; returns slope, intercept and R^2, and the implied
// per-step rate exp(slope).
struct StabilityFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double rate = 0.0;
};
StabilityFit fit_stability_rate(const ModelParams& params, int t_lo = 10, int t_hi = 60);

}  // namespace sqmc
