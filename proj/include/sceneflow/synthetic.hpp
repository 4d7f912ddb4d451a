#pragma once

// Synthetic rigid-motion scenes: a handful of primitive objects (planes,
// boxes, bumpy blobs), each under its own small rigid motion. Ground-truth
// flow is the exact displacement of every first-frame point. The second
// frame either reuses the moved first-frame points (exact correspondences)
// or freshly samples the moved surfaces (no correspondences). Occlusion cuts
// away part of an object in the second frame and flags the first-frame
// points whose targets were removed.

#include <array>
#include <cstdint>
#include <vector>

#include "sceneflow/geometry.hpp"

namespace sceneflow {

struct Mat3 {
    // Row-major.
    std::array<float, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 mul(const Mat3& o) const;

    static Mat3 rot_x(float radians);
    static Mat3 rot_y(float radians);
    static Mat3 rot_z(float radians);
    // R = Rz * Ry * Rx
    static Mat3 euler_xyz(float rx, float ry, float rz);
};

// Affine form of a rigid motion. Stored as R and a precomputed offset so the
// identity motion maps every point to itself exactly, bit for bit.
struct RigidMotion {
    Mat3 rotation;
    Vec3 offset;  // pivot - R*pivot + translation

    Vec3 apply(const Vec3& p) const { return rotation.apply(p) + offset; }

    // Rotation about `pivot` followed by `translation`.
    static RigidMotion about(const Mat3& rot, const Vec3& pivot, const Vec3& translation) {
        return RigidMotion{rot, pivot - rot.apply(pivot) + translation};
    }
};

enum class ObjectKind { kPlane, kBox, kBlob };

struct SyntheticSceneSpec {
    int object_count = 3;
    std::vector<ObjectKind> kinds{ObjectKind::kPlane, ObjectKind::kBox, ObjectKind::kBlob};
    int points_per_object = 1024;
    float rotation_deg = 10.f;       // max |angle| per axis; must stay small (<= 30)
    float translation_range = 0.3f;  // max |offset| per axis
    float occlusion_fraction = 0.f;  // approximate removed fraction per object
    bool resample_independently = false;
    float depth_limit = 35.f;        // drop points with z beyond this

    void validate() const;
};

struct ScenePair {
    PointCloud frame_p;          // occlusion mask lives here when present
    PointCloud frame_q;
    std::vector<Vec3> gt_flow;   // per frame_p point
};

ScenePair generate_pair(const SyntheticSceneSpec& spec, uint64_t seed);

struct AugmentParams {
    float rotation_deg = 2.f;
    float translation_range = 0.2f;
};

// One rigid perturbation applied consistently: p' = Rp + t, q' = Rq + t,
// flow' = R flow.
void augment(ScenePair& pair, const AugmentParams& params, uint64_t seed);

// Independent random subsets of both frames (ground truth and mask follow
// the first frame's subset).
ScenePair subsample_pair(const ScenePair& pair, size_t points_p, size_t points_q, uint64_t seed);

}  // namespace sceneflow
