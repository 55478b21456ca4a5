#pragma once

#include <cstdint>
#include <random>

namespace meshdrag {

/// Seeded generator with a fixed, library-independent mapping to doubles:
/// one 64-bit draw per uniform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) from the top 53 bits of one draw.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint32_t next_u32() { return static_cast<std::uint32_t>(engine_() >> 32); }

private:
    std::mt19937_64 engine_;
};

}  // namespace meshdrag
