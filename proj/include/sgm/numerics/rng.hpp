// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random numbers (Philox4x32-10) with splittable substreams.
//
// A stream is identified by (seed, stream_id). The 128-bit Philox counter is
// (stream_id, block index), the key is the seed, so any (seed, stream_id) pair
// reproduces the same sequence no matter which thread draws it. Substreams are
// derived by hashing the parent stream id with caller-supplied integer tags,
// e.g. rng.substream(path_index) or rng.substream(k, j).
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace sgm {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline constexpr std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                            std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kMulA = 0xD2511F53u;
    constexpr std::uint32_t kMulB = 0xCD9E8D57u;
    constexpr std::uint32_t kWeylA = 0x9E3779B9u;
    constexpr std::uint32_t kWeylB = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeylA;
        key[1] += kWeylB;
    }
    return ctr;
}

}  // namespace detail

class Rng {
public:
    Rng() = default;
    explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0) : seed_(seed), stream_(stream_id) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint64_t stream_id() const noexcept { return stream_; }

    /// Independent child stream keyed by the given tags. Does not advance *this.
    template <typename... Tags>
    [[nodiscard]] Rng substream(Tags... tags) const {
        std::uint64_t id = detail::splitmix64(stream_ ^ 0x5851f42d4c957f2dull);
        ((id = detail::splitmix64(id ^ detail::splitmix64(static_cast<std::uint64_t>(tags) + 0x2545f4914f6cdd1dull))),
         ...);
        return Rng(seed_, id);
    }

    std::uint64_t next_u64() {
        if (lane_ >= 2) refill();
        return buffer_[lane_++];
    }

    /// Uniform on (0, 1], 53-bit resolution. Never returns 0 so log() is safe.
    double uniform() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Lemire's multiply-shift; the tiny bias is irrelevant for n << 2^64.
        const auto wide = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    /// Standard normal via Box-Muller; the second variate of each pair is cached
    /// so stream consumption is exactly one u64 per normal.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double theta = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(std::span<double> out) {
        for (double& v : out) v = normal();
    }

private:
    void refill() {
        const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(stream_),
                                               static_cast<std::uint32_t>(stream_ >> 32),
                                               static_cast<std::uint32_t>(block_),
                                               static_cast<std::uint32_t>(block_ >> 32)};
        const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                               static_cast<std::uint32_t>(seed_ >> 32)};
        const auto out = detail::philox4x32_10(ctr, key);
        buffer_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
        buffer_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
        ++block_;
        lane_ = 0;
    }

    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    unsigned lane_ = 2;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline std::vector<double> sample_standard_gaussian(Rng& rng, std::size_t d) {
    std::vector<double> z(d);
    rng.fill_normal(z);
    return z;
}

}  // namespace sgm
