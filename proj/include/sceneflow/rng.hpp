#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "sceneflow/error.hpp"

namespace sceneflow {

// splitmix64; used to derive independent streams from one master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Seeded RNG with fixed, implementation-independent derivations of bounded
// ints and floats so results only depend on the seed, never on the stdlib.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform integer in [0, n) by rejection; no modulo bias.
    uint32_t bounded(uint32_t n) {
        if (n == 0) throw ContractError("Rng::bounded: n must be positive");
        const uint64_t span = (~uint64_t{0} / n) * n;
        uint64_t v;
        do {
            v = gen_();
        } while (v >= span);
        return static_cast<uint32_t>(v % n);
    }

    // Uniform in [0, 1) with 24 explicit mantissa bits.
    float uniform() {
        return static_cast<float>(gen_() >> 40) * (1.0f / 16777216.0f);
    }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    double uniform_f64() {
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    // Standard normal via Box-Muller (no state cached; deterministic).
    float normal() {
        float u1 = uniform();
        while (u1 <= 1e-12f) u1 = uniform();
        const float u2 = uniform();
        const float r = std::sqrt(-2.0f * std::log(u1));
        return r * std::cos(6.28318530717958647692f * u2);
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace sceneflow
