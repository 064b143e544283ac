#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sqmc/rng.hpp"

namespace sqmc {

// A point of the unit square.  Raw sequence points live in [0,1)^2;
// scrambled points are strictly interior.
struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// Base-2 digital (0,2)-sequence over GF(2), depth 64.  Coordinate 1 uses the
// identity generator matrix (van der Corput radical inverse), coordinate 2
// the upper-triangular Pascal matrix mod 2.
class DigitalNet2D {
  public:
    static constexpr int kDepth = 64;
    using Columns = std::array<std::uint64_t, kDepth>;

    DigitalNet2D();
    DigitalNet2D(const Columns& c1, const Columns& c2);  // custom matrices (test fixtures)

    // 64 output digits of coordinate `coord` for index n; bit 63 is the
    // leading digit (weight 1/2).
    [[nodiscard]] std::uint64_t digits(int coord, std::uint64_t n) const noexcept;

    [[nodiscard]] Point2 raw_point(std::uint64_t n) const noexcept;

    [[nodiscard]] const Columns& columns(int coord) const noexcept { return col_[coord]; }

  private:
    std::array<Columns, 2> col_;
};

// Nested uniform (Owen) scrambling state for one block: two independent
// permutation trees, one per coordinate, with node bits drawn lazily from a
// counter-based stream keyed by the node address.
class ScrambleState {
  public:
    explicit ScrambleState(const StreamKey& key);

    // Random bit of the tree node reached after `depth-1` digits with prefix
    // value `prefix` (depth >= 1).
    [[nodiscard]] int node_bit(int coord, int depth, std::uint64_t prefix) const noexcept;

    // 64 independent tail bits for point n (bit 63 first); one word per
    // coordinate, used below the block's shared tree depth.
    [[nodiscard]] std::uint64_t tail_bits(int coord, std::uint64_t n) const noexcept;

    // Both coordinates' tail words from a single generator call.
    void tail_words(std::uint64_t n, std::uint64_t& w0, std::uint64_t& w1) const noexcept;

    [[nodiscard]] std::uint64_t key_value(int coord) const noexcept { return key_[coord]; }

  private:
    std::uint64_t key_[2];
    std::uint64_t tail_key_;
};

// Generates scrambled blocks of the canonical sequence.  Holds scratch
// tables so repeated per-step generation does not allocate.
class ScrambledBlockGen {
  public:
    ScrambledBlockGen() = default;

    // First N scrambled points in point order n = 0..N-1.
    void generate(std::size_t n_points, const StreamKey& key, std::vector<Point2>& out);

    // Same N pairs (x_n, y_n), emitted in ascending x order.
    void generate_sorted_by_x(std::size_t n_points, const StreamKey& key,
                              std::vector<Point2>& out);

  private:
    void build_tables(std::size_t n_points, const StreamKey& key);

    DigitalNet2D net_;
    int depth_ = -1;
    std::vector<std::uint32_t> table_[2];    // raw m-bit prefix -> scrambled m-bit prefix
    std::vector<std::uint32_t> inv_x_;       // scrambled x prefix -> raw x prefix
    std::vector<std::uint32_t> scram_y_;     // point index -> scrambled y prefix
    std::uint64_t tail_key_ = 0;
};

// First N points of a freshly scrambled copy of the canonical sequence.
std::vector<Point2> scrambled_block(std::size_t n_points, const StreamKey& key);

// True iff the 2^m points form a (t,m,2)-net in base 2: every 2-ary box of
// volume 2^(t-m) holds exactly 2^t points, over all shape splits
// d1 + d2 = m - t.  Throws std::invalid_argument on wrong cardinality.
bool is_net(std::span<const Point2> points, int m, int t = 0);

// Exact 2-D star discrepancy, N <= 4096.  Sup over anchored half-open boxes
// [0,b), evaluated on the critical grid of point coordinates with open and
// closed corner corrections.
double star_discrepancy_2d(std::span<const Point2> points);

// Almost-sure star-discrepancy envelope delta_N for scrambled
// (0,2)-sequence prefixes: (log N + 3)/(2N) at powers of two, the quadratic
// log branch otherwise.  Natural logarithm.
double delta_envelope(std::uint64_t n_points);

}  // namespace sqmc
