#include "sqmc/particles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sqmc {

ParticleSystem make_system(std::vector<double> states, std::vector<double> weights) {
    if (states.empty() || states.size() != weights.size())
        throw std::invalid_argument("make_system: bad sizes");
    double total = 0.0;
    for (const double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("make_system: negative weight");
        total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("make_system: weights sum to zero");

    std::vector<std::size_t> order(states.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return states[a] < states[b]; });
    ParticleSystem out;
    out.states.resize(states.size());
    out.weights.resize(states.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        out.states[i] = states[order[i]];
        out.weights[i] = weights[order[i]] / total;
    }
    return out;
}

std::vector<double> cumulative_weights(std::span<const double> weights) {
    std::vector<double> cum(weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        cum[i] = acc;
    }
    if (!cum.empty()) cum.back() = 1.0;
    return cum;
}

UniformBlock iid_block(std::size_t n, const StreamKey& key) {
    if (n == 0) throw std::invalid_argument("iid_block: N must be >= 1");
    UniformBlock b;
    b.source = UniformBlock::Source::IID;
    b.pts.resize(n);
    UniformStream stream(key);
    for (Point2& p : b.pts) {
        p.x = stream.next_double();
        p.y = stream.next_double();
    }
    std::sort(b.pts.begin(), b.pts.end(), [](const Point2& a, const Point2& c) {
        return a.x != c.x ? a.x < c.x : a.y < c.y;
    });
    return b;
}

UniformBlock scrambled_uniform_block(std::size_t n, const StreamKey& key) {
    if (n == 0) throw std::invalid_argument("scrambled_uniform_block: N must be >= 1");
    UniformBlock b;
    b.source = UniformBlock::Source::Scrambled;
    ScrambledBlockGen gen;
    gen.generate_sorted_by_x(n, key, b.pts);
    return b;
}

namespace {

// Log-space potential weights: w_n ∝ exp(-c x_n^2 / 2), normalized after
// subtracting the max exponent so no finite state underflows to zero mass.
void potential_weights(std::span<const double> states, double c, std::vector<double>& out) {
    out.resize(states.size());
    double max_log = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < states.size(); ++i) {
        out[i] = -0.5 * c * states[i] * states[i];
        if (out[i] > max_log) max_log = out[i];
    }
    double total = 0.0;
    for (double& w : out) {
        w = std::exp(w - max_log);
        total += w;
    }
    const double inv = 1.0 / total;
    for (double& w : out) w *= inv;
}

}  // namespace

ParticleSystem init_system(const ModelParams& params, const UniformBlock& block) {
    params.validate();
    if (block.pts.empty()) throw std::invalid_argument("init_system: empty block");
    ParticleSystem sys;
    sys.states.resize(block.pts.size());
    const double sd1 = std::sqrt(params.sigma1_sq);
    for (std::size_t i = 0; i < block.pts.size(); ++i)
        sys.states[i] = params.mu1 + sd1 * gauss_quantile(block.pts[i].x);
    if (!std::is_sorted(sys.states.begin(), sys.states.end()))
        std::sort(sys.states.begin(), sys.states.end());
    potential_weights(sys.states, params.c, sys.weights);
    return sys;
}

double resample_one(const ParticleSystem& system, double u) {
    if (system.states.empty()) throw std::invalid_argument("resample_one: empty system");
    const std::vector<double> cum = cumulative_weights(system.weights);
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const std::size_t idx = (it == cum.end()) ? cum.size() - 1
                                              : static_cast<std::size_t>(it - cum.begin());
    return system.states[idx];
}

double mutate_one(double x_hat, double u, const ModelParams& params) {
    return params.rho * x_hat + params.sigma * gauss_quantile(u);
}

StepResult step(const ParticleSystem& filtering, const UniformBlock& block,
                const ModelParams& params) {
    params.validate();
    const std::size_t n = filtering.size();
    if (n == 0) throw std::invalid_argument("step: empty system");
    if (block.pts.size() != n) throw std::invalid_argument("step: block size != system size");

    const std::vector<double> cum = cumulative_weights(filtering.weights);
    std::vector<double> states(n);
    // Block points are sorted by u1, so the inverse-CDF resampling is a
    // single merge over the cumulative weights.
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u1 = block.pts[i].x;
        while (j + 1 < n && cum[j] < u1) ++j;
        states[i] = params.rho * filtering.states[j] +
                    params.sigma * gauss_quantile(block.pts[i].y);
    }
    std::sort(states.begin(), states.end());

    StepResult out;
    out.predictive.states = states;
    out.predictive.weights.assign(n, 1.0 / static_cast<double>(n));
    out.filtering.states = std::move(states);
    potential_weights(out.filtering.states, params.c, out.filtering.weights);
    return out;
}

void MixtureSpec::validate() const {
    if (comps.empty()) throw std::invalid_argument("MixtureSpec: no components");
    double total = 0.0;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        if (!(comps[i].weight >= 0.0)) throw std::invalid_argument("MixtureSpec: negative weight");
        if (!(comps[i].law.var > 0.0)) throw std::invalid_argument("MixtureSpec: bad component law");
        if (i > 0 && !(comps[i].atom > comps[i - 1].atom))
            throw std::invalid_argument("MixtureSpec: atoms must be strictly ascending");
        total += comps[i].weight;
    }
    if (std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("MixtureSpec: weights must sum to 1");
}

std::vector<MixtureSample> sample_mixture(const MixtureSpec& spec,
                                          std::span<const Point2> points) {
    spec.validate();
    std::vector<double> cum(spec.comps.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.comps.size(); ++i) {
        acc += spec.comps[i].weight;
        cum[i] = acc;
    }
    cum.back() = 1.0;
    std::vector<MixtureSample> out;
    out.reserve(points.size());
    for (const Point2& p : points) {
        const auto it = std::lower_bound(cum.begin(), cum.end(), p.x);
        const std::size_t idx = (it == cum.end()) ? cum.size() - 1
                                                  : static_cast<std::size_t>(it - cum.begin());
        out.push_back({idx, spec.comps[idx].law.quantile(p.y)});
    }
    return out;
}

}  // namespace sqmc
