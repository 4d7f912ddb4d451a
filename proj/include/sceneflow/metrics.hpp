#pragma once

#include <cstdint>
#include <vector>

#include "sceneflow/geometry.hpp"

namespace sceneflow {

// Accuracy over all points plus the same numbers restricted to points that
// stay visible in the second frame (suffix `_noc`). When no visibility mask
// is supplied the `_noc` numbers equal the unrestricted ones.
struct MetricsReport {
    double epe3d = 0.0;       // mean endpoint error, metres
    double acc3d_strict = 0.0; // err < 0.05 or relative err < 5%
    double acc3d_relax = 0.0;  // err < 0.1  or relative err < 10%
    double epe3d_noc = 0.0;
    double acc3d_strict_noc = 0.0;
    double acc3d_relax_noc = 0.0;
    size_t count = 0;
    size_t count_noc = 0;
};

// Per-point endpoint error comparison of predicted vs true flow.
// `occluded` may be empty (treat all points as visible) or size n.
MetricsReport compute_metrics(const std::vector<Vec3>& predicted,
                              const std::vector<Vec3>& ground_truth,
                              const std::vector<uint8_t>& occluded);

}  // namespace sceneflow
