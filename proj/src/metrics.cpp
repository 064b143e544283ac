#include "sqmc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace sqmc {

// Density mass over the band of width d centered at m, signed by d.
static double phi_band(double m, double d) noexcept {
    if (d == 0.0) return 0.0;
    if (std::fabs(d) < 1e-4) {
        // Midpoint quadrature of the density; relative error O(d^6).
        const double m2 = m * m;
        const double d2 = d * d;
        const double corr =
            1.0 + d2 * (m2 - 1.0) / 24.0 + d2 * d2 * ((m2 - 6.0) * m2 + 3.0) / 1920.0;
        return d * gauss_pdf(m) * corr;
    }
    const double a = m + 0.5 * d, b = m - 0.5 * d;
    // Work on the negative side where the CDF carries full relative
    // precision, flipping by symmetry if needed.
    if (m > 0.0) return gauss_cdf(-b) - gauss_cdf(-a);
    return gauss_cdf(a) - gauss_cdf(b);
}

double gauss_cdf_diff(double a, double b) noexcept {
    return phi_band(0.5 * (a + b), a - b);
}

namespace {

// Exact sup_i max(c_i - F(x_i), F(x_i) - c_{i-1}) over sorted states with an
// arbitrary monotone CDF, by branch and bound: a segment whose outer bounds
// cannot beat the current best is never evaluated pointwise.
template <class CumFn, class CumPrevFn, class CdfFn>
double kolmogorov_bb(std::size_t n, const CumFn& cum, const CumPrevFn& cum_prev, const CdfFn& cdf,
                     std::span<const double> states, double* argmax_out) {
    double best = -1.0;
    double arg = states[0];
    const auto leaf = [&](std::size_t i, double p) {
        const double hi = cum(i) - p;
        const double lo = p - cum_prev(i);
        const double v = hi > lo ? hi : lo;
        if (v > best) {
            best = v;
            arg = states[i];
        }
    };
    const double p_first = cdf(states[0]);
    leaf(0, p_first);
    if (n > 1) {
        struct Seg {
            std::uint32_t lo, hi;
            double p_lo, p_hi;  // exact CDF at both endpoints
        };
        std::vector<Seg> stack;
        stack.reserve(96);
        // Anchor pass: exact evaluations on a coarse index grid give a
        // near-optimal incumbent before any segment is opened.
        const std::uint32_t last = static_cast<std::uint32_t>(n - 1);
        const std::uint32_t anchors = static_cast<std::uint32_t>(std::min<std::size_t>(32, n - 1));
        std::uint32_t prev_i = 0;
        double prev_p = p_first;
        for (std::uint32_t k = 1; k <= anchors; ++k) {
            const std::uint32_t i =
                static_cast<std::uint32_t>((static_cast<std::uint64_t>(last) * k) / anchors);
            if (i == prev_i) continue;
            const double p = cdf(states[i]);
            leaf(i, p);
            stack.push_back({prev_i, i, prev_p, p});
            prev_i = i;
            prev_p = p;
        }
        while (!stack.empty()) {
            const Seg s = stack.back();
            stack.pop_back();
            if (s.hi - s.lo < 2) continue;
            // Interior indices lo+1 .. hi-1.
            const double ub_pos = cum(s.hi - 1) - s.p_lo;
            const double ub_neg = s.p_hi - cum_prev(s.lo + 1);
            if ((ub_pos > ub_neg ? ub_pos : ub_neg) <= best) continue;
            const std::uint32_t mid = s.lo + (s.hi - s.lo) / 2;
            const double p_mid = cdf(states[mid]);
            leaf(mid, p_mid);
            stack.push_back({s.lo, mid, s.p_lo, p_mid});
            stack.push_back({mid, s.hi, p_mid, s.p_hi});
        }
    }
    if (argmax_out) *argmax_out = arg;
    return best;
}

void require_valid(const ParticleSystem& system) {
    if (system.states.empty()) throw std::invalid_argument("metrics: empty particle system");
    if (system.states.size() != system.weights.size())
        throw std::invalid_argument("metrics: states/weights size mismatch");
}

}  // namespace

double kolmogorov_sorted_vs_gauss(std::span<const double> states, std::span<const double> cum,
                                  const GaussianLaw& law, double* argmax_out) {
    const double mean = law.mean;
    const double inv_sd = 1.0 / std::sqrt(law.var);
    return kolmogorov_bb(
        states.size(), [&](std::size_t i) { return cum[i]; },
        [&](std::size_t i) { return i == 0 ? 0.0 : cum[i - 1]; },
        [&](double x) { return gauss_cdf((x - mean) * inv_sd); }, states, argmax_out);
}

double kolmogorov_emp_gauss(const ParticleSystem& system, const GaussianLaw& law) {
    require_valid(system);
    const std::vector<double> cum = cumulative_weights(system.weights);
    return kolmogorov_sorted_vs_gauss(system.states, cum, law, nullptr);
}

double discrepancy_emp_gauss(const ParticleSystem& system, const GaussianLaw& law) {
    require_valid(system);
    const std::vector<double> cum = cumulative_weights(system.weights);
    const std::size_t n = system.states.size();
    double best = 0.0;
    double l_min = 0.0, l_max = 0.0;  // a -> -inf contributes 0
    std::size_t i = 0;
    while (i < n) {
        const double x = system.states[i];
        const double cb = (i == 0) ? 0.0 : cum[i - 1];
        std::size_t j = i;
        while (j + 1 < n && system.states[j + 1] == x) ++j;
        const double ca = cum[j];
        const double f = law.cdf(x);
        // b just below the atom: only left endpoints strictly to the left.
        const double r_exc = cb - f;
        best = std::max({best, r_exc - l_min, l_max - r_exc});
        // a at the atom (mass included) becomes available, then b at the atom.
        const double l_inc = cb - f;
        l_min = std::min(l_min, l_inc);
        l_max = std::max(l_max, l_inc);
        const double r_inc = ca - f;
        best = std::max({best, r_inc - l_min, l_max - r_inc});
        // a just above the atom, for later right endpoints.
        const double l_exc = ca - f;
        l_min = std::min(l_min, l_exc);
        l_max = std::max(l_max, l_exc);
        i = j + 1;
    }
    // b -> +inf.
    best = std::max({best, -l_min, l_max});
    return best;
}

double kolmogorov_gauss_gauss(const GaussianLaw& a, const GaussianLaw& b) {
    if (a.mean == b.mean && a.var == b.var) return 0.0;
    const double sa = std::sqrt(a.var), sb = std::sqrt(b.var);
    if (a.var == b.var) {
        // Single crossing halfway between the means.
        const double z = std::fabs(a.mean - b.mean) / (2.0 * sa);
        return gauss_cdf_diff(z, -z);
    }
    if (a.mean == b.mean) {
        // Symmetric crossings; x*^2 = va*vb*log(vb/va)/(vb-va), computed in a
        // form stable as vb -> va.  The two CDF arguments x/s collide in
        // double precision for tiny variance gaps, so their midpoint and
        // difference are formed analytically instead of by subtraction.
        const GaussianLaw& lo = (a.var < b.var) ? a : b;
        const GaussianLaw& hi = (a.var < b.var) ? b : a;
        const double r = (hi.var - lo.var) / lo.var;
        const double x2 = hi.var * std::log1p(r) / r;
        const double x = std::sqrt(x2);
        const double s_lo = std::sqrt(lo.var), s_hi = std::sqrt(hi.var);
        const double mid = 0.5 * x * (s_lo + s_hi) / (s_lo * s_hi);
        const double diff = x * (hi.var - lo.var) / (s_lo * s_hi * (s_lo + s_hi));
        return std::fabs(phi_band(mid, diff));
    }
    // General case: density equality is a quadratic in x.
    const double qa = 1.0 / b.var - 1.0 / a.var;
    const double qb = 2.0 * (a.mean / a.var - b.mean / b.var);
    const double qc = b.mean * b.mean / b.var - a.mean * a.mean / a.var +
                      std::log1p((b.var - a.var) / a.var);
    double best = 0.0;
    const auto consider = [&](double x) {
        if (!std::isfinite(x)) return;
        best = std::max(best, std::fabs(gauss_cdf_diff((x - a.mean) / sa, (x - b.mean) / sb)));
    };
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
        const double root = std::sqrt(disc);
        const double q = -0.5 * (qb + std::copysign(root, qb));
        consider(q / qa);
        if (q != 0.0) consider(qc / q);
    } else {
        consider(-qb / (2.0 * qa));  // numerical guard; true crossings always exist
    }
    return best;
}

double kolmogorov_gauss_gap(double var, double mean_gap, double var_gap) {
    if (!(var > 0.0) || !(var + var_gap > 0.0))
        throw std::invalid_argument("kolmogorov_gauss_gap: variances must be positive");
    if (mean_gap == 0.0 && var_gap == 0.0) return 0.0;
    const double s0 = std::sqrt(var);
    const double s1 = std::sqrt(var + var_gap);
    // D(x) = Phi((x - m)/s1) - Phi(x/s0); the argument difference is formed
    // from the gaps, never by subtracting near-equal quantities.
    const auto diff_at = [&](double x) {
        const double d = -x * var_gap / (s0 * s1 * (s0 + s1)) - mean_gap / s1;
        const double mid = 0.5 * (x / s0 + (x - mean_gap) / s1);
        return std::fabs(phi_band(mid, d));
    };
    const double lo = -10.0 * s0, hi = 10.0 * s0;
    double best = 0.0, arg = 0.0;
    for (int i = 0; i <= 400; ++i) {
        const double x = lo + (hi - lo) * i / 400.0;
        const double v = diff_at(x);
        if (v > best) {
            best = v;
            arg = x;
        }
    }
    double a = arg - (hi - lo) / 400.0, b = arg + (hi - lo) / 400.0;
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = b - kInvPhi * (b - a), x2 = a + kInvPhi * (b - a);
    double f1 = diff_at(x1), f2 = diff_at(x2);
    for (int it = 0; it < 120; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = diff_at(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = diff_at(x1);
        }
    }
    return std::max(best, std::max(f1, f2));
}

double kolmogorov_emp_mixture(const ParticleSystem& system, std::span<const double> mix_weights,
                              std::span<const double> mix_means, double common_sd) {
    require_valid(system);
    if (mix_weights.size() != mix_means.size())
        throw std::invalid_argument("kolmogorov_emp_mixture: component size mismatch");
    const std::vector<double> cum = cumulative_weights(system.weights);
    const double inv_sd = 1.0 / common_sd;
    const auto cdf = [&](double x) {
        double f = 0.0;
        for (std::size_t j = 0; j < mix_weights.size(); ++j)
            f += mix_weights[j] * gauss_cdf((x - mix_means[j]) * inv_sd);
        return f;
    };
    return kolmogorov_bb(
        system.states.size(), [&](std::size_t i) { return cum[i]; },
        [&](std::size_t i) { return i == 0 ? 0.0 : cum[i - 1]; }, cdf, system.states, nullptr);
}

double rect_discrepancy_b2(std::span<const MixtureSample> samples, const MixtureSpec& spec) {
    spec.validate();
    if (samples.empty()) throw std::invalid_argument("rect_discrepancy_b2: no samples");
    const std::size_t n = samples.size();
    const std::size_t m = spec.comps.size();
    for (const MixtureSample& s : samples)
        if (s.atom_index >= m)
            throw std::invalid_argument("rect_discrepancy_b2: sample atom outside spec");
    const double inv_n = 1.0 / static_cast<double>(n);

    double best = 0.0;
    std::vector<double> vals;
    vals.reserve(n);
    double w_sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        // a1 at atom j: samples and mass of atoms 0..j participate.
        for (const MixtureSample& s : samples)
            if (s.atom_index == j) vals.push_back(s.value);
        std::sort(vals.begin(), vals.end());
        w_sum += spec.comps[j].weight;
        const auto true_mass = [&](double a2) {
            double t = 0.0;
            for (std::size_t q = 0; q <= j; ++q) t += spec.comps[q].weight * spec.comps[q].law.cdf(a2);
            return t;
        };
        for (std::size_t k = 0; k < vals.size(); ++k) {
            const double t = true_mass(vals[k]);
            const double right = static_cast<double>(k + 1) * inv_n - t;
            const double left = static_cast<double>(k) * inv_n - t;
            best = std::max({best, std::fabs(right), std::fabs(left)});
        }
        // a2 -> +inf.
        best = std::max(best, std::fabs(static_cast<double>(vals.size()) * inv_n - w_sum));
    }
    return best;
}

MetricReport metric_report(const ParticleSystem& system, const GaussianLaw& law,
                           bool with_discrepancy) {
    require_valid(system);
    MetricReport r;
    const std::vector<double> cum = cumulative_weights(system.weights);
    r.kolmogorov = kolmogorov_sorted_vs_gauss(system.states, cum, law, &r.argmax);
    if (with_discrepancy) r.discrepancy = discrepancy_emp_gauss(system, law);
    return r;
}

}  // namespace sqmc
