#include "sqmc/model.hpp"

#include <cmath>
#include <stdexcept>

#include "sqmc/metrics.hpp"

namespace sqmc {

void ModelParams::validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("ModelParams: sigma must be > 0");
    if (!(c > 0.0)) throw std::invalid_argument("ModelParams: c must be > 0");
    if (!(sigma1_sq > 0.0)) throw std::invalid_argument("ModelParams: sigma1_sq must be > 0");
}

double GaussianLaw::cdf(double x) const noexcept {
    return gauss_cdf((x - mean) / std::sqrt(var));
}

double GaussianLaw::quantile(double p) const {
    return mean + std::sqrt(var) * gauss_quantile(p);
}

FilterTrajectory kalman_exact(const ModelParams& params, int horizon) {
    params.validate();
    if (horizon < 1) throw std::invalid_argument("kalman_exact: horizon must be >= 1");
    FilterTrajectory out;
    out.predictive.reserve(static_cast<std::size_t>(horizon));
    out.filtering.reserve(static_cast<std::size_t>(horizon));
    GaussianLaw pred{params.mu1, params.sigma1_sq};
    for (int t = 1; t <= horizon; ++t) {
        out.predictive.push_back(pred);
        // y_t = 0 Bayes update with observation precision c
        const double denom = 1.0 + params.c * pred.var;
        const GaussianLaw filt{pred.mean / denom, pred.var / denom};
        out.filtering.push_back(filt);
        pred = {params.rho * filt.mean,
                params.rho * params.rho * filt.var + params.sigma * params.sigma};
    }
    return out;
}

QkSchedule qk_schedule(const ModelParams& params, int depth) {
    params.validate();
    if (depth < 1) throw std::invalid_argument("qk_schedule: depth must be >= 1");
    QkSchedule s;
    const auto k_max = static_cast<std::size_t>(depth);
    s.c_k.resize(k_max + 1);
    s.rho_k.resize(k_max + 1);
    s.sigma_sq_k.resize(k_max + 1);
    s.c_k[0] = 0.0;
    s.rho_k[0] = 1.0;
    s.sigma_sq_k[0] = 0.0;
    const double rho2 = params.rho * params.rho;
    const double sig2 = params.sigma * params.sigma;
    for (std::size_t k = 1; k <= k_max; ++k) {
        const double denom = 1.0 + (params.c + s.c_k[k - 1]) * sig2;
        s.c_k[k] = (params.c + s.c_k[k - 1]) * rho2 / denom;
        s.sigma_sq_k[k] = s.sigma_sq_k[k - 1] + s.rho_k[k - 1] * s.rho_k[k - 1] * sig2 / denom;
        s.rho_k[k] = s.rho_k[k - 1] * params.rho / denom;
    }
    return s;
}

StationaryQuantities stationary(const ModelParams& params) {
    params.validate();
    StationaryQuantities q;
    const double rho2 = params.rho * params.rho;
    const double sig2 = params.sigma * params.sigma;
    const double a = 1.0 + params.c * sig2;
    q.c_star = (rho2 - a + std::sqrt((a - rho2) * (a - rho2) + 4.0 * params.c * sig2 * rho2)) /
               (2.0 * sig2);

    // Lemma-Q series limit of sigma_sq_k.
    double ck = 0.0, rk = 1.0, sk2 = 0.0;
    for (int k = 0; k < 200000; ++k) {
        const double denom = 1.0 + (params.c + ck) * sig2;
        const double next = sk2 + rk * rk * sig2 / denom;
        const double delta = next - sk2;
        ck = (params.c + ck) * rho2 / denom;
        rk = rk * params.rho / denom;
        sk2 = next;
        if (k > 2 && delta < 1e-14) break;
    }
    q.sigma_inf_sq = sk2;

    // Kalman filtering-variance fixed point, the independent cross-check.
    double v = params.sigma1_sq;
    for (int k = 0; k < 200000; ++k) {
        const double p = rho2 * v + sig2;
        const double next = p / (1.0 + params.c * p);
        if (std::fabs(next - v) < 1e-15 && k > 2) {
            v = next;
            break;
        }
        v = next;
    }
    if (std::fabs(v - q.sigma_inf_sq) > 1e-10)
        throw std::logic_error("stationary: Lemma-Q series and Kalman fixed point disagree");

    q.pred_var_inf = rho2 * q.sigma_inf_sq + sig2;
    q.rate_estimate = 0.0;
    return q;
}

GaussianLaw filter_via_qk(const ModelParams& params, int t) {
    params.validate();
    if (t < 2) throw std::invalid_argument("filter_via_qk: t must be >= 2");
    // First filtering law.
    const double denom1 = 1.0 + params.c * params.sigma1_sq;
    const GaussianLaw filt1{params.mu1 / denom1, params.sigma1_sq / denom1};
    const int k = t - 1;
    const QkSchedule s = qk_schedule(params, k);
    // Reweight by G_{c_k}: Gaussian times exp(-c_k x^2/2) stays Gaussian.
    const double d = 1.0 + s.c_k[k] * filt1.var;
    const double m = filt1.mean / d;
    const double v = filt1.var / d;
    // Affine/noise push-forward through M_{rho_k, sigma_sq_k}.
    return {s.rho_k[k] * m, s.rho_k[k] * s.rho_k[k] * v + s.sigma_sq_k[k]};
}

GaussianLaw gaussian_phi_step(const GaussianLaw& law, const ModelParams& params) {
    const double denom = 1.0 + params.c * law.var;
    return {params.rho * law.mean / denom,
            params.rho * params.rho * law.var / denom + params.sigma * params.sigma};
}

double h_eval(double a, double r, double s, double x) {
    if (!(s > 0.0)) throw std::invalid_argument("h_eval: s must be > 0");
    return gauss_cdf((a - r * x) / s) - gauss_cdf(a / s);
}

SsmPath simulate_ssm(const ModelParams& params, int horizon, const StreamKey& key) {
    params.validate();
    if (horizon < 1) throw std::invalid_argument("simulate_ssm: horizon must be >= 1");
    SsmPath path;
    path.states.resize(static_cast<std::size_t>(horizon));
    path.observations.resize(static_cast<std::size_t>(horizon));
    UniformStream stream(key);
    const double obs_sd = 1.0 / std::sqrt(params.c);
    double x = params.mu1 + std::sqrt(params.sigma1_sq) * gauss_quantile(stream.next_double());
    for (int t = 0; t < horizon; ++t) {
        path.states[static_cast<std::size_t>(t)] = x;
        path.observations[static_cast<std::size_t>(t)] =
            x + obs_sd * gauss_quantile(stream.next_double());
        x = params.rho * x + params.sigma * gauss_quantile(stream.next_double());
    }
    return path;
}

StabilityFit fit_stability_rate(const ModelParams& params, int t_lo, int t_hi) {
    if (t_lo < 1 || t_hi <= t_lo) throw std::invalid_argument("fit_stability_rate: bad range");
    const StationaryQuantities st = stationary(params);
    const double v_inf = st.sigma_inf_sq;
    const double rho2 = params.rho * params.rho;
    const double sig2 = params.sigma * params.sigma;
    const double p_inf = rho2 * v_inf + sig2;

    // The filtering law converges to its double-precision fixed point long
    // before the distances reach the fit window's lower end, so propagate
    // the mean/variance gaps to the limit law directly; both satisfy exact
    // product-form recursions with no cancellation.
    const double d1 = 1.0 + params.c * params.sigma1_sq;
    double mean_gap = params.mu1 / d1;
    double var_gap = params.sigma1_sq / d1 - v_inf;

    StabilityFit fit;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int n = 0;
    for (int t = 1; t <= t_hi; ++t) {
        if (t >= t_lo) {
            const double k = kolmogorov_gauss_gap(v_inf, mean_gap, var_gap);
            if (k > 0.0) {
                const double y = std::log(k);
                const double x = static_cast<double>(t);
                sx += x; sy += y; sxx += x * x; sxy += x * y; syy += y * y;
                ++n;
            }
        }
        const double p_t = p_inf + rho2 * var_gap;
        var_gap *= rho2 / ((1.0 + params.c * p_t) * (1.0 + params.c * p_inf));
        mean_gap *= params.rho / (1.0 + params.c * p_t);
    }
    if (n < 3) throw std::runtime_error("fit_stability_rate: too few usable points");
    const double dn = n;
    const double cov = sxy - sx * sy / dn;
    const double vx = sxx - sx * sx / dn;
    const double vy = syy - sy * sy / dn;
    fit.slope = cov / vx;
    fit.intercept = (sy - fit.slope * sx) / dn;
    fit.r_squared = (vy > 0.0) ? (cov * cov) / (vx * vy) : 1.0;
    fit.rate = std::exp(fit.slope);
    return fit;
}

}  // namespace sqmc
