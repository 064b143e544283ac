#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sqmc/metrics.hpp"
#include "sqmc/particles.hpp"

using namespace sqmc;

namespace {

ParticleSystem random_system(std::mt19937_64& rng, std::size_t max_n = 64) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 1 + rng() % max_n;
    std::vector<double> states(n), weights(n);
    for (std::size_t i = 0; i < n; ++i) {
        states[i] = -3.0 + 6.0 * u(rng);
        weights[i] = 0.05 + u(rng);
    }
    return make_system(std::move(states), std::move(weights));
}

// Direct evaluation of the sup at every jump, no pruning.
double naive_kolmogorov(const ParticleSystem& s, const GaussianLaw& law) {
    const auto cum = cumulative_weights(s.weights);
    double best = 0.0;
    for (std::size_t i = 0; i < s.states.size(); ++i) {
        const double f = law.cdf(s.states[i]);
        best = std::max(best, std::fabs(cum[i] - f));
        best = std::max(best, std::fabs((i == 0 ? 0.0 : cum[i - 1]) - f));
    }
    return best;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("kolmogorov empirical vs Gaussian: hand values") {
    const ParticleSystem two = make_system({-1.0, 1.0}, {0.5, 0.5});
    // |0.5 - Phi(1)|
    CHECK(kolmogorov_emp_gauss(two, {0.0, 1.0}) ==
          doctest::Approx(0.34134474606854295).epsilon(1e-13));
    const ParticleSystem one = make_system({0.0}, {1.0});
    CHECK(kolmogorov_emp_gauss(one, {0.0, 1.0}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("branch-and-bound equals the naive jump scan exactly") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 400; ++trial) {
        const ParticleSystem s = random_system(rng, 200);
        const GaussianLaw law{-0.5 + 0.001 * static_cast<double>(trial), 0.5 + (trial % 7) * 0.3};
        CHECK(kolmogorov_emp_gauss(s, law) == doctest::Approx(naive_kolmogorov(s, law)).epsilon(1e-15));
    }
}

TEST_CASE("kolmogorov matches the dense-grid oracle") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        const ParticleSystem s = random_system(rng);
        const GaussianLaw law{0.2, 1.3};
        CHECK(std::fabs(kolmogorov_emp_gauss(s, law) - oracle::grid_kolmogorov(s, law)) <= 1e-6);
    }
}

TEST_CASE("discrepancy metric: hand value attained between the atoms") {
    const ParticleSystem two = make_system({-1.0, 1.0}, {0.5, 0.5});
    // Phi(1) - Phi(-1): mass of the open gap between the atoms
    CHECK(discrepancy_emp_gauss(two, {0.0, 1.0}) ==
          doctest::Approx(0.68268949213708585).epsilon(1e-13));
}

TEST_CASE("discrepancy equals the quadratic brute force") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 40; ++trial) {
        const ParticleSystem s = random_system(rng, 32);
        const GaussianLaw law{-0.1, 0.9};
        CHECK(std::fabs(discrepancy_emp_gauss(s, law) - oracle::brute_discrepancy(s, law)) <= 1e-7);
    }
}

TEST_CASE("sandwich inequality holds exactly") {
    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 300; ++trial) {
        const ParticleSystem s = random_system(rng);
        const GaussianLaw law{0.3, 0.8};
        const MetricReport r = metric_report(s, law, true);
        REQUIRE(r.discrepancy.has_value());
        CHECK(r.kolmogorov <= *r.discrepancy + 1e-15);
        CHECK(*r.discrepancy <= 2.0 * r.kolmogorov + 1e-15);
    }
}

TEST_CASE("Gaussian-Gaussian distance: hand values and the grid oracle") {
    CHECK(kolmogorov_gauss_gauss({0.0, 1.0}, {0.0, 1.0}) == 0.0);
    CHECK(kolmogorov_gauss_gauss({0.0, 1.0}, {1.0, 1.0}) ==
          doctest::Approx(0.38292492254802621).epsilon(1e-13));
    std::mt19937_64 rng(35);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        const GaussianLaw a{-2.0 + 4.0 * u(rng), 0.2 + 2.0 * u(rng)};
        const GaussianLaw b{-2.0 + 4.0 * u(rng), 0.2 + 2.0 * u(rng)};
        const double want = oracle::grid_kol_gauss_gauss(a.mean, a.var, b.mean, b.var);
        CHECK(std::fabs(kolmogorov_gauss_gauss(a, b) - want) <= 1e-9);
    }
}

TEST_CASE("Gaussian-Gaussian distance keeps relative accuracy for tiny gaps") {
    // K(var = 1 + eps) is linear in eps down to the smallest gaps; compare
    // against the actually stored variance differences.
    const double v10 = 1.0 + 1e-10, v12 = 1.0 + 1e-12, v14 = 1.0 + 1e-14;
    const double k10 = kolmogorov_gauss_gauss({0.0, 1.0}, {0.0, v10});
    const double k12 = kolmogorov_gauss_gauss({0.0, 1.0}, {0.0, v12});
    const double k14 = kolmogorov_gauss_gauss({0.0, 1.0}, {0.0, v14});
    CHECK(k10 / k12 == doctest::Approx((v10 - 1.0) / (v12 - 1.0)).epsilon(1e-9));
    CHECK(k12 / k14 == doctest::Approx((v12 - 1.0) / (v14 - 1.0)).epsilon(1e-9));
    // magnitude: eps/(2 sqrt(2 pi e)) to first order
    CHECK(k10 == doctest::Approx((v10 - 1.0) / (2.0 * std::sqrt(2.0 * M_PI * M_E))).epsilon(1e-6));
}

TEST_CASE("gap-based Gaussian distance matches the direct form for visible gaps") {
    std::mt19937_64 rng(38);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double var = 0.3 + 2.0 * u(rng);
        const double mean_gap = (u(rng) - 0.5) * 0.2;
        const double var_gap = (u(rng) - 0.5) * 0.2;
        const double via_gap = kolmogorov_gauss_gap(var, mean_gap, var_gap);
        const double direct = kolmogorov_gauss_gauss({mean_gap, var + var_gap}, {0.0, var});
        CHECK(via_gap == doctest::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("empirical vs mixture reduces to the Gaussian case at M = 1") {
    std::mt19937_64 rng(36);
    for (int trial = 0; trial < 50; ++trial) {
        const ParticleSystem s = random_system(rng);
        const double mean[] = {0.4};
        const double w[] = {1.0};
        const double got = kolmogorov_emp_mixture(s, w, mean, 1.1);
        const double want = kolmogorov_emp_gauss(s, {0.4, 1.21});
        CHECK(got == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("rect discrepancy reduces to 1-D star discrepancy at M = 1") {
    MixtureSpec spec;
    spec.comps.push_back({0.0, 1.0, GaussianLaw{0.0, 1.0}});
    DigitalNet2D net;
    std::vector<Point2> pts;
    std::vector<double> u2;
    for (std::uint64_t n = 0; n < 64; ++n) {
        Point2 p = net.raw_point(n);
        if (p.y == 0.0) p.y = 0.5 / 64.0;  // keep quantiles finite
        if (p.x == 0.0) p.x = 0.5 / 64.0;
        pts.push_back(p);
        u2.push_back(p.y);
    }
    const auto samples = sample_mixture(spec, pts);
    const double got = rect_discrepancy_b2(samples, spec);
    CHECK(got == doctest::Approx(oracle::star_disc_1d(u2)).epsilon(1e-12));
}

TEST_CASE("rect discrepancy equals the full-grid brute force") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t m = 1 + rng() % 4;
        MixtureSpec spec;
        double wsum = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double w = 0.2 + u(rng);
            spec.comps.push_back({static_cast<double>(j) + u(rng) * 0.5, w,
                                  GaussianLaw{0.8 * static_cast<double>(j), 0.5 + u(rng)}});
            wsum += w;
        }
        for (auto& comp : spec.comps) comp.weight /= wsum;
        std::vector<Point2> pts(1 + rng() % 64);
        for (auto& p : pts) p = {u(rng), u(rng)};
        for (auto& p : pts) {
            p.x = std::min(std::max(p.x, 1e-12), 1.0 - 1e-12);
            p.y = std::min(std::max(p.y, 1e-12), 1.0 - 1e-12);
        }
        const auto samples = sample_mixture(spec, pts);

        // brute force: every (atom, sampled value left/right/inf) corner
        const double n = static_cast<double>(samples.size());
        double want = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double wcum = 0.0;
            for (std::size_t qq = 0; qq <= j; ++qq) wcum += spec.comps[qq].weight;
            const auto truth = [&](double a2) {
                double tv = 0.0;
                for (std::size_t qq = 0; qq <= j; ++qq)
                    tv += spec.comps[qq].weight * spec.comps[qq].law.cdf(a2);
                return tv;
            };
            for (const MixtureSample& sv : samples) {
                int le = 0, lt = 0;
                for (const MixtureSample& other : samples) {
                    if (other.atom_index <= j && other.value <= sv.value) ++le;
                    if (other.atom_index <= j && other.value < sv.value) ++lt;
                }
                want = std::max(want, std::fabs(le / n - truth(sv.value)));
                want = std::max(want, std::fabs(lt / n - truth(sv.value)));
            }
            int all = 0;
            for (const MixtureSample& other : samples)
                if (other.atom_index <= j) ++all;
            want = std::max(want, std::fabs(all / n - wcum));
        }
        CHECK(rect_discrepancy_b2(samples, spec) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("rect discrepancy validates sample/spec consistency") {
    MixtureSpec spec;
    spec.comps.push_back({0.0, 1.0, GaussianLaw{0.0, 1.0}});
    std::vector<MixtureSample> bad{{3, 0.5}};
    CHECK_THROWS_AS(rect_discrepancy_b2(bad, spec), std::invalid_argument);
}

}  // TEST_SUITE
