#pragma once

// Seedable random streams for the agent simulator.
//
// Every stream is a std::mt19937_64 whose state is expanded by
// std::seed_seq from (seed, replica, stream id). Both the engine and
// seed_seq are fully specified by the standard, and bounded integers are
// drawn with our own rejection sampler instead of
// std::uniform_int_distribution, so a given (seed, replica) produces the
// same trajectory on every conforming toolchain.

#include <cstdint>
#include <random>
#include <utility>

namespace yardsale {

enum class Stream : std::uint32_t {
    pairing = 1,  // partner shuffles
    coins = 2,    // transaction signs r = +-1
    sampling = 3, // auxiliary draws (diagnostics, synthetic samples)
};

/// SplitMix64 finalizer; used to advance and combine seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class RandomStream {
public:
    RandomStream(std::uint64_t seed, Stream stream, std::uint64_t replica = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(replica), static_cast<std::uint32_t>(replica >> 32),
                          static_cast<std::uint32_t>(stream)};
        engine_.seed(seq);
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound), bound > 0 (Lemire's multiply-shift
    /// with rejection).
    std::uint64_t below(std::uint64_t bound) {
        __extension__ using wide = unsigned __int128;
        wide product = static_cast<wide>(next()) * bound;
        auto low = static_cast<std::uint64_t>(product);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                product = static_cast<wide>(next()) * bound;
                low = static_cast<std::uint64_t>(product);
            }
        }
        return static_cast<std::uint64_t>(product >> 64);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1].
    double uniform_open_zero() { return 1.0 - uniform(); }

private:
    std::mt19937_64 engine_;
};

/// Fair coins served one bit at a time from 64-bit draws.
class CoinSource {
public:
    explicit CoinSource(RandomStream stream) : stream_(std::move(stream)) {}

    /// +1 or -1 with equal probability.
    int flip() {
        if (remaining_ == 0) {
            bits_ = stream_.next();
            remaining_ = 64;
        }
        const int r = (bits_ & 1u) ? 1 : -1;
        bits_ >>= 1;
        --remaining_;
        return r;
    }

private:
    RandomStream stream_;
    std::uint64_t bits_ = 0;
    int remaining_ = 0;
};

}  // namespace yardsale
