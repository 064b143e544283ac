#pragma once

// Test-side oracles, deliberately independent of the library implementations
// they check: long-double series/continued-fraction normal CDF, bisection
// quantiles, brute-force discrepancies, adaptive quadrature.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sqmc/digital_net.hpp"
#include "sqmc/metrics.hpp"
#include "sqmc/particles.hpp"

namespace oracle {

inline long double phi_density(long double x) {
    constexpr long double two_pi = 6.283185307179586476925286766559L;
    return std::exp(-0.5L * x * x) / std::sqrt(two_pi);
}

// Series in the bulk; Mills-ratio continued fraction in the tails, with the
// small tail carried directly so nothing cancels.
inline long double normal_cdf(long double x) {
    const long double ax = std::fabs(x);
    if (ax <= 4.0L) {
        // Phi(ax) = 1/2 + phi(ax) * sum_{n>=0} ax^(2n+1) / (1*3*...*(2n+1))
        long double term = ax, sum = 0.0L;
        for (int n = 0; n < 500; ++n) {
            sum += term;
            term *= ax * ax / (2.0L * n + 3.0L);
            if (term < 1e-30L * sum) break;
        }
        const long double result = 0.5L + phi_density(ax) * sum;
        return x >= 0 ? result : 1.0L - result;
    }
    long double cf = 0.0L;
    for (int k = 300; k >= 1; --k) cf = static_cast<long double>(k) / (ax + cf);
    const long double tail = phi_density(ax) / (ax + cf);
    return x >= 0 ? 1.0L - tail : tail;
}

inline long double normal_quantile(long double p) {
    // work on the lower half so the bisection always compares small tail
    // values at full relative precision
    if (p > 0.5L) return -normal_quantile(1.0L - p);
    long double lo = -45.0L, hi = 0.0L;
    for (int i = 0; i < 200; ++i) {
        const long double mid = 0.5L * (lo + hi);
        if (normal_cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5L * (lo + hi);
}

// O(N^3) star discrepancy from the definition: candidate corners at point
// coordinates and 1, open and closed counts.
inline double brute_star_disc(std::span<const sqmc::Point2> pts) {
    const double n = static_cast<double>(pts.size());
    std::vector<double> ax, ay;
    for (const auto& p : pts) {
        ax.push_back(p.x);
        ay.push_back(p.y);
    }
    ax.push_back(1.0);
    ay.push_back(1.0);
    double best = 0.0;
    for (const double a1 : ax)
        for (const double a2 : ay) {
            int strict = 0, closed = 0;
            for (const auto& p : pts) {
                if (p.x < a1 && p.y < a2) ++strict;
                if (p.x <= a1 && p.y <= a2) ++closed;
            }
            best = std::max(best, a1 * a2 - strict / n);
            best = std::max(best, closed / n - a1 * a2);
        }
    return best;
}

// 1-D star discrepancy of a point multiset in [0,1).
inline double star_disc_1d(std::vector<double> u) {
    std::sort(u.begin(), u.end());
    const double n = static_cast<double>(u.size());
    double best = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        best = std::max(best, std::fabs((i + 1.0) / n - u[i]));
        best = std::max(best, std::fabs(static_cast<double>(i) / n - u[i]));
    }
    return best;
}

// Adaptive Simpson quadrature.
template <class F>
double simpson(const F& f, double a, double b, double fa, double fm, double fb, double tol,
               int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, tol / 2, depth - 1) +
           simpson(f, m, b, fm, frm, fb, tol / 2, depth - 1);
}

template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-10) {
    const double m = 0.5 * (a + b);
    return simpson(f, a, b, f(a), f(m), f(b), tol, 40);
}

// Dense grid with local bisection refinement for the Kolmogorov distance of
// two Gaussians.
inline double grid_kol_gauss_gauss(double ma, double va, double mb, double vb) {
    const double sa = std::sqrt(va), sb = std::sqrt(vb);
    const auto g = [&](long double x) {
        return std::fabs(static_cast<double>(normal_cdf((x - ma) / sa) - normal_cdf((x - mb) / sb)));
    };
    const double lo = std::min(ma - 12 * sa, mb - 12 * sb);
    const double hi = std::max(ma + 12 * sa, mb + 12 * sb);
    const int grid = 200000;
    double best = 0.0, arg = lo;
    for (int i = 0; i <= grid; ++i) {
        const double x = lo + (hi - lo) * i / grid;
        const double v = g(x);
        if (v > best) {
            best = v;
            arg = x;
        }
    }
    // golden-section refinement around the coarse argmax
    double a = arg - 2 * (hi - lo) / grid, b = arg + 2 * (hi - lo) / grid;
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = b - kInvPhi * (b - a), x2 = a + kInvPhi * (b - a);
    double f1 = g(x1), f2 = g(x2);
    for (int it = 0; it < 200; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = g(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = g(x1);
        }
    }
    return std::max(best, std::max(f1, f2));
}

// Grid oracle per the stated derivation: 1e6 points over +-10 sd, with
// two-sided evaluation at the jump positions.
inline double grid_kolmogorov(const sqmc::ParticleSystem& s, const sqmc::GaussianLaw& law, int grid = 1000000) {
    const double sd = std::sqrt(law.var);
    const double lo = law.mean - 10.0 * sd, hi = law.mean + 10.0 * sd;
    const auto cum = sqmc::cumulative_weights(s.weights);
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(grid) + s.states.size() + 1);
    for (int i = 0; i <= grid; ++i) xs.push_back(lo + (hi - lo) * i / grid);
    xs.insert(xs.end(), s.states.begin(), s.states.end());
    std::sort(xs.begin(), xs.end());
    double best = 0.0;
    std::size_t above = 0, below = 0;  // counts with state <= x and state < x
    for (const double x : xs) {
        while (above < s.states.size() && s.states[above] <= x) ++above;
        while (below < s.states.size() && s.states[below] < x) ++below;
        const double f = law.cdf(x);
        best = std::max(best, std::fabs((above == 0 ? 0.0 : cum[above - 1]) - f));
        best = std::max(best, std::fabs((below == 0 ? 0.0 : cum[below - 1]) - f));
    }
    return best;
}

// Brute force over closed intervals with endpoints at particles +- eps.
inline double brute_discrepancy(const sqmc::ParticleSystem& s, const sqmc::GaussianLaw& law) {
    constexpr double eps = 1e-9;
    std::vector<double> cand;
    for (const double x : s.states) {
        cand.push_back(x - eps);
        cand.push_back(x);
        cand.push_back(x + eps);
    }
    cand.push_back(law.mean - 12.0 * std::sqrt(law.var));
    cand.push_back(law.mean + 12.0 * std::sqrt(law.var));
    std::sort(cand.begin(), cand.end());
    double best = 0.0;
    for (std::size_t i = 0; i < cand.size(); ++i)
        for (std::size_t j = i; j < cand.size(); ++j) {
            const double a = cand[i], b = cand[j];
            double emp = 0.0;
            for (std::size_t k = 0; k < s.states.size(); ++k)
                if (s.states[k] >= a && s.states[k] <= b) emp += s.weights[k];
            const double truth = law.cdf(b) - law.cdf(a);
            best = std::max(best, std::fabs(emp - truth));
        }
    return best;
}

}  // namespace oracle
