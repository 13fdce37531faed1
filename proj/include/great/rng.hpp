#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace great {

/// FNV-1a over the bytes of `s`.
std::uint64_t fnv1a64(std::string_view s);

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for a named subsystem: mix64(master ^ fnv1a64(name)).
/// Every random stream in the pipeline is rooted in one master seed this way.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Random stream with platform-independent draws. The std distributions are
/// implementation-defined, so only the raw engine output is used.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal (Box-Muller, one value per call).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Index drawn from unnormalized non-negative weights.
    template <typename Range>
    std::size_t categorical(const Range& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        std::size_t i = 0, last = 0;
        for (double w : weights) {
            if (w > 0.0) {
                last = i;
                if (u < w) return i;
                u -= w;
            }
            ++i;
        }
        return last;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace great
