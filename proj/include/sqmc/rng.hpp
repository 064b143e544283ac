#pragma once

#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

namespace sqmc {

// SplitMix64 finalizer; full-avalanche bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// Philox2x64-10 block cipher (Salmon et al. counter-based generator).
// Maps a 128-bit counter to 128 pseudo-random bits under a 64-bit key.
struct Philox2x64 {
    static constexpr std::uint64_t kMul = 0xD2B74407B1CE6E93ULL;
    static constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;

    static void block(std::uint64_t key, std::uint64_t ctr0, std::uint64_t ctr1,
                      std::uint64_t& out0, std::uint64_t& out1) noexcept {
        std::uint64_t x0 = ctr0, x1 = ctr1, k = key;
        for (int round = 0; round < 10; ++round) {
            const unsigned __int128 prod = static_cast<unsigned __int128>(x0) * kMul;
            const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
            const std::uint64_t lo = static_cast<std::uint64_t>(prod);
            x0 = hi ^ k ^ x1;
            x1 = lo;
            k += kWeyl;
        }
        out0 = x0;
        out1 = x1;
    }
};

// Identifies a sub-stream: a master seed plus a path of (role, index) pairs,
// e.g. {(Role::Replicate, r), (Role::Step, t)}.  Distinct paths under one
// master seed map to distinct Philox keys, so the streams never share a
// counter sequence.
struct StreamKey {
    enum class Role : std::uint64_t {
        Replicate = 1,
        Step = 2,
        Purpose = 3,
        Coordinate = 4,
        Experiment = 5,
    };

    std::uint64_t master_seed = 0;
    std::vector<std::pair<Role, std::uint64_t>> path;

    StreamKey() = default;
    StreamKey(std::uint64_t seed,
              std::initializer_list<std::pair<Role, std::uint64_t>> p)
        : master_seed(seed), path(p) {}

    [[nodiscard]] StreamKey child(Role role, std::uint64_t index) const {
        StreamKey k(*this);
        k.path.emplace_back(role, index);
        return k;
    }

    // Collapses (master_seed, path) into the 64-bit Philox key.  Each path
    // element is absorbed with its role tag and position so that prefixes of
    // different lengths cannot collide by extension.
    [[nodiscard]] std::uint64_t derive() const noexcept {
        return finish(chain(), path.size());
    }

    // Equals child(role, index).derive() without building the child.
    [[nodiscard]] std::uint64_t derive_child(Role role, std::uint64_t index) const noexcept {
        return finish(absorb(chain(), role, index), path.size() + 1);
    }

  private:
    static std::uint64_t absorb(std::uint64_t h, Role role, std::uint64_t index) noexcept {
        h = mix64((h ^ static_cast<std::uint64_t>(role)) * Philox2x64::kWeyl + 0x1D8E4E27C47D124FULL);
        return mix64((h ^ index) * Philox2x64::kWeyl + 0x9216D5D98979FB1BULL);
    }
    static std::uint64_t finish(std::uint64_t h, std::size_t length) noexcept {
        return mix64(h + (static_cast<std::uint64_t>(length) << 32));
    }
    [[nodiscard]] std::uint64_t chain() const noexcept {
        std::uint64_t h = mix64(master_seed ^ 0x243F6A8885A308D3ULL);
        for (const auto& [role, index] : path) h = absorb(h, role, index);
        return h;
    }
};

// Deterministic uniform stream over (0,1).  Counter-based: draw i depends
// only on (key, i), so replicates can be generated in any order or on any
// worker with identical results.
class UniformStream {
  public:
    UniformStream() = default;
    explicit UniformStream(const StreamKey& key) : key_(key.derive()) {}
    explicit UniformStream(std::uint64_t raw_key) : key_(raw_key) {}

    std::uint64_t next_u64() noexcept {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        std::uint64_t w0;
        Philox2x64::block(key_, counter_++, 0, w0, spare_);
        have_spare_ = true;
        return w0;
    }

    // Mid-cell uniform (k + 1/2) / 2^52 from 52 random bits; every value is
    // exactly representable and lies strictly inside (0,1).
    double next_double() noexcept { return to_unit(next_u64()); }

    static double to_unit(std::uint64_t bits) noexcept {
        return (static_cast<double>(bits >> 12) + 0.5) * 0x1p-52;
    }

    [[nodiscard]] std::uint64_t raw_key() const noexcept { return key_; }

  private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    std::uint64_t spare_ = 0;
    bool have_spare_ = false;
};

inline UniformStream derive_stream(const StreamKey& key) { return UniformStream(key); }

// Standard normal CDF.  Absolute error well below 1e-12 on |x| <= 8.
double gauss_cdf(double x) noexcept;

// Standard normal density.
double gauss_pdf(double x) noexcept;

// Inverse standard normal CDF.  Wichura's AS241 rational approximation
// polished with one Newton step against gauss_cdf; |error| <= 1e-9 for
// p in [1e-300, 1 - 1e-16].  Throws std::domain_error outside (0,1).
double gauss_quantile(double p);

namespace detail {
// Unpolished AS241 for the per-particle mutation loop; same accuracy class
// (absolute error around 1e-13), no domain check.
double normal_quantile_fast(double p) noexcept;
}  // namespace detail

}  // namespace sqmc
