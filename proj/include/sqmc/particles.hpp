#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sqmc/digital_net.hpp"
#include "sqmc/model.hpp"
#include "sqmc/rng.hpp"

namespace sqmc {

// Weighted particle approximation of a law on R.  States are kept sorted
// ascending (ties in original order) so the weighted empirical CDF can be
// inverted directly; weights are non-negative and sum to 1 within 1e-12.
struct ParticleSystem {
    std::vector<double> states;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const noexcept { return states.size(); }
};

// Stable-sorts by state (original index breaks ties), normalizes weights.
ParticleSystem make_system(std::vector<double> states, std::vector<double> weights);

// Prefix sums of the weights; the final entry is forced to exactly 1.
std::vector<double> cumulative_weights(std::span<const double> weights);

// The N points of (0,1)^2 consumed by one filter step, sorted by first
// coordinate.  IID blocks hold 2N fresh stream uniforms; scrambled blocks
// are net prefixes from the lowdisc machinery.
struct UniformBlock {
    enum class Source { IID, Scrambled };
    Source source = Source::IID;
    std::vector<Point2> pts;
};

UniformBlock iid_block(std::size_t n, const StreamKey& key);
UniformBlock scrambled_uniform_block(std::size_t n, const StreamKey& key);

// Initial filtering system: states mu1 + sigma1 * PhiInv(u1), weights
// proportional to G(x) = exp(-c x^2 / 2), normalized in log space.
ParticleSystem init_system(const ModelParams& params, const UniformBlock& block);

// Generalized inverse of the weighted empirical CDF: the state at the
// smallest index i with cumulative weight c_i >= u.
double resample_one(const ParticleSystem& system, double u);

// Kernel quantile: rho * x_hat + sigma * PhiInv(u).
double mutate_one(double x_hat, double u, const ModelParams& params);

// One Algorithm-1 step: resample with u1, mutate with u2.  Predictive system
// carries uniform weights 1/N, filtering system the G-normalized weights;
// both share the same (sorted) mutated states.
struct StepResult {
    ParticleSystem predictive;
    ParticleSystem filtering;
};
StepResult step(const ParticleSystem& filtering, const UniformBlock& block,
                const ModelParams& params);

// Discrete-atom mixture with one Gaussian component per atom.  In filter use
// the component means are rho * atom with common variance sigma^2, which
// keeps x -> F_{mu_x}(a) monotone in the atom.
struct MixtureComponent {
    double atom = 0.0;
    double weight = 0.0;
    GaussianLaw law;
};
struct MixtureSpec {
    std::vector<MixtureComponent> comps;  // atoms ascending

    void validate() const;
};

struct MixtureSample {
    std::size_t atom_index = 0;
    double value = 0.0;
};

// phi_mu applied pointwise: u1 picks the atom through the weighted inverse
// CDF (resample_one convention), u2 drives the component quantile.
std::vector<MixtureSample> sample_mixture(const MixtureSpec& spec,
                                          std::span<const Point2> points);

}  // namespace sqmc
