#pragma once

#include <array>
#include <string>

#include "sceneflow/error.hpp"
#include "sceneflow/geometry.hpp"

namespace sceneflow {

// Pyramid geometry: four scales, scale 0 at full input resolution, scales
// 1..3 at fixed point counts with one feature width per scale.
struct ScaleConfig {
    std::array<int, 3> resolutions{2048, 512, 128};  // scales 1..3
    std::array<int, 4> channels{32, 128, 256, 512};  // scales 0..3
    int k_neighbors = 20;
    Sampler sampler = Sampler::kRandom;

    int resolution(int k) const {
        if (k < 1 || k > 3) throw IndexError("ScaleConfig::resolution: scale must be 1..3");
        return resolutions[static_cast<size_t>(k - 1)];
    }
    int channel(int k) const {
        if (k < 0 || k > 3) throw IndexError("ScaleConfig::channel: scale must be 0..3");
        return channels[static_cast<size_t>(k)];
    }

    // K_p defaults differ per sampler: random sampling needs the larger
    // group to compensate for its less even coverage.
    static ScaleConfig defaults_for(Sampler s) {
        ScaleConfig c;
        c.sampler = s;
        c.k_neighbors = s == Sampler::kRandom ? 20 : 16;
        return c;
    }

    void validate() const {
        if (!(resolutions[0] > resolutions[1] && resolutions[1] > resolutions[2]))
            throw ContractError("ScaleConfig: resolutions must be strictly decreasing");
        if (resolutions[2] < 1) throw ContractError("ScaleConfig: empty coarsest scale");
        for (int c : channels)
            if (c < 1) throw ContractError("ScaleConfig: channel widths must be positive");
        for (size_t k = 1; k < 4; ++k)
            if (channels[k] % 2 != 0)
                throw ContractError("ScaleConfig: widths of scales 1..3 must be even");
        if (k_neighbors < 1) throw ContractError("ScaleConfig: neighbor count must be positive");
        if (k_neighbors > resolutions[2])
            throw ContractError("ScaleConfig: neighbor count exceeds the coarsest resolution");
    }
};

// Scale triples for high input densities: denser inputs get denser pyramids.
// Growth beyond 131072 points is restricted to random sampling; farthest
// point sampling is too expensive there.
inline ScaleConfig adaptive_scale_resolutions(size_t n, Sampler sampler) {
    if (n < 8192)
        throw ResolutionError("adaptive_scale_resolutions: needs at least 8192 points, got " +
                              std::to_string(n));
    ScaleConfig cfg = ScaleConfig::defaults_for(sampler);
    if (n > 131072 && sampler == Sampler::kRandom)
        cfg.resolutions = {8192, 2048, 512};
    else if (n > 32768)
        cfg.resolutions = {4096, 1024, 256};
    else
        cfg.resolutions = {2048, 512, 128};
    return cfg;
}

// Full model description: pyramid geometry plus behavioral switches.
struct ModelConfig {
    ScaleConfig scale;

    // Append absolute neighbor coordinates to the relative spatial encoding
    // (breaks translation invariance; off by default).
    bool include_absolute_xyz = false;
    // Graph features carry only neighbor-minus-center edges, no center copy.
    bool edge_only = false;
    // Second, feature-space embedding stage on top of the first one.
    bool enable_embed2 = true;
    // Mutual-best cosine matching at the coarsest scale (fallback to plain
    // Euclidean grouping when disabled).
    bool enable_bidirectional = true;
    // Flow heads predict a delta on top of the upsampled coarse flow instead
    // of the full vector.
    bool residual_heads = false;
    // Extra head refining the full-resolution flow from upsampled flow
    // features; without it scale 0 is a pure nearest-neighbor copy.
    bool l0_head = false;

    void validate() const { scale.validate(); }

    static ModelConfig defaults_for(Sampler s) {
        ModelConfig m;
        m.scale = ScaleConfig::defaults_for(s);
        return m;
    }
};

}  // namespace sceneflow
