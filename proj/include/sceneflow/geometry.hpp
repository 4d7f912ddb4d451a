#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sceneflow/error.hpp"

namespace sceneflow {

struct Vec3 {
    float x = 0.f, y = 0.f, z = 0.f;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(float s) const { return {x * s, y * s, z * s}; }
    float norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Single shared distance expression; every neighbor/sampling decision in the
// library compares exactly these float values, so index ties are broken the
// same way everywhere.
inline float sq_dist(const Vec3& a, const Vec3& b) {
    const float dx = a.x - b.x;
    const float dy = a.y - b.y;
    const float dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<uint8_t> occluded;  // optional per-point mask, empty or size()==points.size()

    size_t size() const { return points.size(); }

    void validate() const {
        if (points.empty()) throw ContractError("PointCloud: must contain at least one point");
        for (const Vec3& p : points)
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
                throw NumericError("PointCloud: non-finite coordinate");
        if (!occluded.empty() && occluded.size() != points.size())
            throw DimensionError("PointCloud: occlusion mask length mismatch");
    }
};

enum class Sampler { kRandom, kFarthest };

inline const char* sampler_name(Sampler s) {
    return s == Sampler::kRandom ? "rs" : "fps";
}

struct SampleIndices {
    std::vector<uint32_t> indices;  // into the sampled cloud, no duplicates
    Sampler method = Sampler::kRandom;
    uint64_t seed = 0;
};

enum class NeighborSpace { kEuclidean, kFeature };

// Rectangular n x k table of neighbor ids, row-major, each row sorted by
// (distance, id) ascending.
struct NeighborTable {
    std::vector<uint32_t> idx;
    int k = 0;
    NeighborSpace space = NeighborSpace::kEuclidean;

    size_t rows() const { return k == 0 ? 0 : idx.size() / static_cast<size_t>(k); }

    uint32_t at(size_t row, int j) const {
        if (k <= 0 || j < 0 || j >= k || row >= rows())
            throw IndexError("NeighborTable: access out of range");
        return idx[row * static_cast<size_t>(k) + static_cast<size_t>(j)];
    }
};

}  // namespace sceneflow
