#pragma once

#include <cmath>
#include <cstdint>

namespace kfan {

/// Deterministic random stream (SplitMix64). The sequence is a pure function
/// of the seed and the number of draws consumed, identical on every platform,
/// so training runs and checkpoints are reproducible bit-for-bit.
///
/// Draw-order contract: every sampling helper consumes a fixed number of
/// draws (one uniform per Bernoulli component, two uniforms per Gaussian),
/// and matrix-valued sampling walks columns left to right, rows top to
/// bottom within a column.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 bits of precision.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniform draws.
    double next_gaussian() {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Independent child stream; advances this stream by one draw.
    Rng split() { return Rng(next_u64()); }

private:
    std::uint64_t state_;
};

}  // namespace kfan
