#include "sqmc/digital_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace sqmc {

namespace {

std::uint64_t reverse64(std::uint64_t v) noexcept {
    v = ((v >> 1) & 0x5555555555555555ULL) | ((v & 0x5555555555555555ULL) << 1);
    v = ((v >> 2) & 0x3333333333333333ULL) | ((v & 0x3333333333333333ULL) << 2);
    v = ((v >> 4) & 0x0F0F0F0F0F0F0F0FULL) | ((v & 0x0F0F0F0F0F0F0F0FULL) << 4);
    v = ((v >> 8) & 0x00FF00FF00FF00FFULL) | ((v & 0x00FF00FF00FF00FFULL) << 8);
    v = ((v >> 16) & 0x0000FFFF0000FFFFULL) | ((v & 0x0000FFFF0000FFFFULL) << 16);
    return (v >> 32) | (v << 32);
}

int ceil_log2(std::size_t n) noexcept {
    int m = 0;
    while ((std::size_t{1} << m) < n) ++m;
    return m;
}

constexpr std::uint64_t kTailDomain = 1;
constexpr std::uint64_t kNodeDomain = 2;

// Largest block depth the prefix tables support; well beyond the N <= 4096
// sizes the experiments use.
constexpr int kMaxBlockDepth = 26;

double mid_cell(std::uint64_t top52) noexcept {
    return (static_cast<double>(top52) + 0.5) * 0x1p-52;
}

}  // namespace

DigitalNet2D::DigitalNet2D() {
    for (int j = 0; j < kDepth; ++j) {
        // Coordinate 1: identity matrix = radical inverse (bit reversal).
        col_[0][j] = 1ULL << (63 - j);
        // Coordinate 2: Pascal matrix mod 2; C(j,i) is odd iff i's bits are
        // a subset of j's (Lucas).
        std::uint64_t c = 0;
        for (int i = 0; i <= j; ++i)
            if ((static_cast<unsigned>(i) & static_cast<unsigned>(j)) == static_cast<unsigned>(i))
                c |= 1ULL << (63 - i);
        col_[1][j] = c;
    }
}

DigitalNet2D::DigitalNet2D(const Columns& c1, const Columns& c2) : col_{c1, c2} {}

std::uint64_t DigitalNet2D::digits(int coord, std::uint64_t n) const noexcept {
    std::uint64_t out = 0;
    const Columns& cols = col_[coord];
    while (n != 0) {
        const int j = std::countr_zero(n);
        out ^= cols[j];
        n &= n - 1;
    }
    return out;
}

Point2 DigitalNet2D::raw_point(std::uint64_t n) const noexcept {
    return {static_cast<double>(digits(0, n)) * 0x1p-64,
            static_cast<double>(digits(1, n)) * 0x1p-64};
}

ScrambleState::ScrambleState(const StreamKey& key)
    : key_{key.derive_child(StreamKey::Role::Coordinate, 0),
           key.derive_child(StreamKey::Role::Coordinate, 1)},
      tail_key_(key.derive_child(StreamKey::Role::Coordinate, 2)) {}

int ScrambleState::node_bit(int coord, int depth, std::uint64_t prefix) const noexcept {
    // 128 node bits per Philox block; nodes of one level are packed by
    // prefix value.
    std::uint64_t w0, w1;
    Philox2x64::block(key_[coord], prefix >> 7,
                      kNodeDomain | (static_cast<std::uint64_t>(depth) << 8), w0, w1);
    const unsigned b = static_cast<unsigned>(prefix & 127);
    return static_cast<int>(((b < 64) ? (w0 >> b) : (w1 >> (b - 64))) & 1);
}

void ScrambleState::tail_words(std::uint64_t n, std::uint64_t& w0, std::uint64_t& w1) const noexcept {
    Philox2x64::block(tail_key_, n, kTailDomain, w0, w1);
}

std::uint64_t ScrambleState::tail_bits(int coord, std::uint64_t n) const noexcept {
    std::uint64_t w0, w1;
    tail_words(n, w0, w1);
    return coord == 0 ? w0 : w1;
}

void ScrambledBlockGen::build_tables(std::size_t n_points, const StreamKey& key) {
    const int m = ceil_log2(n_points);
    if (m > kMaxBlockDepth) throw std::invalid_argument("scrambled block too large");
    depth_ = m;
    const ScrambleState state(key);
    tail_key_ = key.derive_child(StreamKey::Role::Coordinate, 2);
    const std::size_t slots = std::size_t{1} << m;

    for (int c = 0; c < 2; ++c) {
        auto& tab = table_[c];
        tab.assign(slots, 0);
        // Grow the permutation tree level by level; children are written
        // behind the parent scan, so one buffer suffices.
        for (int d = 1; d <= m; ++d) {
            const std::uint64_t parents = std::uint64_t{1} << (d - 1);
            std::uint64_t w0 = 0, w1 = 0;
            for (std::uint64_t q = parents; q-- > 0;) {
                if ((q & 127) == 127 || q == parents - 1)
                    Philox2x64::block(state.key_value(c), q >> 7,
                                      kNodeDomain | (static_cast<std::uint64_t>(d) << 8), w0, w1);
                const unsigned b = static_cast<unsigned>(q & 127);
                const std::uint32_t bit =
                    static_cast<std::uint32_t>(((b < 64) ? (w0 >> b) : (w1 >> (b - 64))) & 1);
                const std::uint32_t parent = tab[q];
                tab[2 * q + 1] = (parent << 1) | (1u ^ bit);
                tab[2 * q] = (parent << 1) | bit;
            }
        }
    }
    inv_x_.assign(slots, 0);
    for (std::uint32_t p = 0; p < slots; ++p) inv_x_[table_[0][p]] = p;

    // Scrambled y prefix per point index; digits(1, n+1) differs from
    // digits(1, n) by the prefix-XOR of columns 0..ctz(n+1).
    scram_y_.resize(slots);
    if (m > 0) {
        std::array<std::uint64_t, 64> pre{};
        std::uint64_t acc = 0;
        for (int j = 0; j < kMaxBlockDepth + 1; ++j) {
            acc ^= net_.columns(1)[j];
            pre[static_cast<std::size_t>(j)] = acc;
        }
        std::uint64_t g = 0;
        for (std::uint64_t n = 0; n < slots; ++n) {
            scram_y_[n] = table_[1][g >> (64 - m)];
            g ^= pre[static_cast<std::size_t>(std::countr_zero(n + 1))];
        }
    } else {
        scram_y_[0] = 0;
    }
}

void ScrambledBlockGen::generate(std::size_t n_points, const StreamKey& key,
                                 std::vector<Point2>& out) {
    build_tables(n_points, key);
    const int m = depth_;
    out.resize(n_points);
    for (std::uint64_t n = 0; n < n_points; ++n) {
        std::uint64_t t0, t1;
        Philox2x64::block(tail_key_, n, kTailDomain, t0, t1);
        const std::uint64_t sx = m ? table_[0][reverse64(n) >> (64 - m)] : 0;
        const std::uint64_t sy = scram_y_[n];
        out[n].x = mid_cell((sx << (52 - m)) | (t0 >> (12 + m)));
        out[n].y = mid_cell((sy << (52 - m)) | (t1 >> (12 + m)));
    }
}

void ScrambledBlockGen::generate_sorted_by_x(std::size_t n_points, const StreamKey& key,
                                             std::vector<Point2>& out) {
    build_tables(n_points, key);
    const int m = depth_;
    out.resize(n_points);
    if (m == 0) {
        std::uint64_t t0, t1;
        Philox2x64::block(tail_key_, 0, kTailDomain, t0, t1);
        out[0] = {mid_cell(t0 >> 12), mid_cell(t1 >> 12)};
        return;
    }
    const std::uint64_t slots = std::uint64_t{1} << m;
    const int tail_shift = 12 + m;
    const int head_shift = 52 - m;
    std::size_t idx = 0;
    for (std::uint64_t s = 0; s < slots; ++s) {
        const std::uint64_t n = reverse64(inv_x_[s]) >> (64 - m);  // point owning x-slot s
        if (n >= n_points) continue;
        std::uint64_t t0, t1;
        Philox2x64::block(tail_key_, n, kTailDomain, t0, t1);
        out[idx].x = mid_cell((s << head_shift) | (t0 >> tail_shift));
        out[idx].y = mid_cell((static_cast<std::uint64_t>(scram_y_[n]) << head_shift) |
                              (t1 >> tail_shift));
        ++idx;
    }
}

std::vector<Point2> scrambled_block(std::size_t n_points, const StreamKey& key) {
    if (n_points == 0) throw std::invalid_argument("scrambled_block: N must be >= 1");
    ScrambledBlockGen gen;
    std::vector<Point2> out;
    gen.generate(n_points, key, out);
    return out;
}

bool is_net(std::span<const Point2> points, int m, int t) {
    if (m < 0 || t < 0 || t > m) throw std::invalid_argument("is_net: need m >= t >= 0");
    if (points.size() != (std::size_t{1} << m))
        throw std::invalid_argument("is_net: point count must equal 2^m");
    const int q = m - t;
    const std::uint64_t want = std::uint64_t{1} << t;
    std::vector<std::uint32_t> counts(std::size_t{1} << q);
    for (int d1 = 0; d1 <= q; ++d1) {
        const int d2 = q - d1;
        std::fill(counts.begin(), counts.end(), 0u);
        const double s1 = std::ldexp(1.0, d1), s2 = std::ldexp(1.0, d2);
        for (const Point2& p : points) {
            const double fx = p.x * s1, fy = p.y * s2;
            if (fx < 0 || fx >= s1 || fy < 0 || fy >= s2) return false;
            const auto ix = static_cast<std::uint64_t>(fx);
            const auto iy = static_cast<std::uint64_t>(fy);
            if (++counts[(ix << d2) | iy] > want) return false;
        }
        // total = 2^m and no box above 2^t forces every box to hold 2^t
    }
    return true;
}

double star_discrepancy_2d(std::span<const Point2> points) {
    const std::size_t n = points.size();
    if (n == 0) throw std::invalid_argument("star_discrepancy_2d: empty point set");
    if (n > 4096) throw std::invalid_argument("star_discrepancy_2d: N > 4096 out of contract");
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<Point2> by_x(points.begin(), points.end());
    std::sort(by_x.begin(), by_x.end(),
              [](const Point2& a, const Point2& b) { return a.x < b.x; });

    std::vector<double> ycand(n);
    for (std::size_t i = 0; i < n; ++i) ycand[i] = points[i].y;
    std::sort(ycand.begin(), ycand.end());
    ycand.erase(std::unique(ycand.begin(), ycand.end()), ycand.end());
    ycand.push_back(1.0);

    double best = 0.0;
    std::vector<double> ins;  // sorted y's of points already swept in x
    ins.reserve(n);

    // Open-corner candidates: vol - #{x < a1, y < a2}/N.
    const auto neg_sweep = [&](double a1) {
        std::size_t ptr = 0;
        for (const double a2 : ycand) {
            while (ptr < ins.size() && ins[ptr] < a2) ++ptr;
            best = std::max(best, a1 * a2 - static_cast<double>(ptr) * inv_n);
        }
    };
    // Closed-corner candidates: #{x <= a1, y <= a2}/N - vol.
    const auto pos_sweep = [&](double a1) {
        std::size_t ptr = 0;
        for (const double a2 : ycand) {
            while (ptr < ins.size() && ins[ptr] <= a2) ++ptr;
            best = std::max(best, static_cast<double>(ptr) * inv_n - a1 * a2);
        }
    };

    std::size_t i = 0;
    while (i < n) {
        const double xg = by_x[i].x;
        neg_sweep(xg);
        while (i < n && by_x[i].x == xg) {
            ins.insert(std::upper_bound(ins.begin(), ins.end(), by_x[i].y), by_x[i].y);
            ++i;
        }
        pos_sweep(xg);
    }
    neg_sweep(1.0);
    pos_sweep(1.0);
    return best;
}

double delta_envelope(std::uint64_t n_points) {
    if (n_points == 0) throw std::invalid_argument("delta_envelope: N must be >= 1");
    const double n = static_cast<double>(n_points);
    if (n_points >= 2 && (n_points & (n_points - 1)) == 0) return (std::log(n) + 3.0) / (2.0 * n);
    const double l2 = std::log(2.0), ln = std::log(n);
    return (ln * ln + 11.0 * l2 * ln + 18.0 * l2 * l2) / (n * 8.0 * l2 * l2);
}

}  // namespace sqmc
