#pragma once

#include <cstdint>
#include <span>

#include "sceneflow/geometry.hpp"

namespace sceneflow {

// m distinct ids drawn uniformly from [0, n); O(n) time, seeded.
SampleIndices random_sample(size_t n, size_t m, uint64_t seed);

// Greedy max-min (farthest-point) sampling: the seed selects the start id
// only, every later pick maximizes the distance to the chosen set, ties on
// the maximum resolved toward the lowest id. O(n*m) time.
SampleIndices farthest_point_sample(std::span<const Vec3> points, size_t m, uint64_t seed);

SampleIndices sample_points(std::span<const Vec3> points, size_t m, Sampler method, uint64_t seed);

}  // namespace sceneflow
