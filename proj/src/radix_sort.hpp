#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

namespace sqmc::detail {

// LSD radix sort for finite doubles (stable).  Bytes that are constant over
// the whole array are skipped, which removes most exponent passes for data
// on a common scale.
inline void radix_sort(std::vector<double>& v, std::vector<double>& scratch) {
    const std::size_t n = v.size();
    if (n < 128) {
        std::sort(v.begin(), v.end());
        return;
    }
    scratch.resize(n);
    const auto key = [](double d) {
        std::uint64_t u;
        std::memcpy(&u, &d, 8);
        return (u & 0x8000000000000000ULL) ? ~u : (u ^ 0x8000000000000000ULL);
    };
    double* src = v.data();
    double* dst = scratch.data();
    for (int pass = 0; pass < 8; ++pass) {
        const int shift = pass * 8;
        std::uint32_t hist[256] = {0};
        for (std::size_t i = 0; i < n; ++i) ++hist[(key(src[i]) >> shift) & 255];
        bool constant = false;
        for (int b = 0; b < 256; ++b)
            if (hist[b] == n) {
                constant = true;
                break;
            }
        if (constant) continue;
        std::uint32_t sum = 0;
        for (int b = 0; b < 256; ++b) {
            const std::uint32_t c = hist[b];
            hist[b] = sum;
            sum += c;
        }
        for (std::size_t i = 0; i < n; ++i) dst[hist[(key(src[i]) >> shift) & 255]++] = src[i];
        std::swap(src, dst);
    }
    if (src != v.data()) std::memcpy(v.data(), src, n * 8);
}

}  // namespace sqmc::detail
