#pragma once

#include <cstdint>
#include <random>

namespace rbmdc {

/// SplitMix64 finalizer. Used only to decorrelate stream keys before they
/// seed a full generator.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Identifies one independent random substream. Every simulated path draws
/// from the stream keyed by (seed, purpose, block, index) so that results do
/// not depend on how paths are distributed over workers.
struct StreamKey {
    std::uint64_t seed = 0;
    std::uint64_t purpose = 0;  // distinguishes training / evaluation / xi pass
    std::uint64_t block = 0;    // iteration number or grid point
    std::uint64_t index = 0;    // path index within the batch
};

namespace stream_purpose {
inline constexpr std::uint64_t training = 1;
inline constexpr std::uint64_t xi_estimate = 2;
inline constexpr std::uint64_t evaluation = 3;
inline constexpr std::uint64_t initialization = 4;
inline constexpr std::uint64_t simulation = 5;
}  // namespace stream_purpose

/// A seeded generator plus a standard normal sampler for one substream.
class RandomStream {
public:
    explicit RandomStream(const StreamKey& key) {
        const std::uint64_t a = mix64(key.seed ^ mix64(key.purpose));
        const std::uint64_t b = mix64(a ^ mix64(key.block + 0x632be59bd9b4e019ULL));
        const std::uint64_t c = mix64(b ^ mix64(key.index + 0x85157af5ULL));
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                          static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
        engine_.seed(seq);
    }

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace rbmdc
