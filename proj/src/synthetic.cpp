#include "sceneflow/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sceneflow/error.hpp"
#include "sceneflow/rng.hpp"
#include "sceneflow/sampling.hpp"

namespace sceneflow {

namespace {
constexpr float kPi = 3.14159265358979323846f;
constexpr float kDegToRad = kPi / 180.f;
}  // namespace

Mat3 Mat3::mul(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            float acc = 0.f;
            for (int k = 0; k < 3; ++k) acc += m[static_cast<size_t>(i * 3 + k)] * o.m[static_cast<size_t>(k * 3 + j)];
            r.m[static_cast<size_t>(i * 3 + j)] = acc;
        }
    return r;
}

Mat3 Mat3::rot_x(float a) {
    const float c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r.m = {1, 0, 0, 0, c, -s, 0, s, c};
    return r;
}

Mat3 Mat3::rot_y(float a) {
    const float c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r.m = {c, 0, s, 0, 1, 0, -s, 0, c};
    return r;
}

Mat3 Mat3::rot_z(float a) {
    const float c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    return r;
}

Mat3 Mat3::euler_xyz(float rx, float ry, float rz) {
    return rot_z(rz).mul(rot_y(ry)).mul(rot_x(rx));
}

void SyntheticSceneSpec::validate() const {
    if (object_count < 1) throw ContractError("SyntheticSceneSpec: need at least one object");
    if (kinds.empty()) throw ContractError("SyntheticSceneSpec: need at least one object kind");
    if (points_per_object < 8) throw ContractError("SyntheticSceneSpec: too few points per object");
    if (rotation_deg < 0.f || rotation_deg > 30.f)
        throw ContractError("SyntheticSceneSpec: per-axis rotation must stay within [0, 30] degrees");
    if (translation_range < 0.f) throw ContractError("SyntheticSceneSpec: negative translation range");
    if (occlusion_fraction < 0.f || occlusion_fraction >= 1.f)
        throw ContractError("SyntheticSceneSpec: occlusion fraction must lie in [0, 1)");
    if (depth_limit <= 0.f) throw ContractError("SyntheticSceneSpec: depth limit must be positive");
}

namespace {

// A sampleable rigid surface; fresh draws always land on the same surface so
// the second frame can be resampled independently of the first.
struct SceneObject {
    ObjectKind kind = ObjectKind::kPlane;
    Vec3 center;
    Mat3 orient;
    float extent_a = 1.f, extent_b = 1.f, extent_c = 1.f;  // per-kind meaning
    std::array<float, 4> bump{};                           // blob modulation
    RigidMotion motion;
    // Occlusion half-space in *moved* coordinates: cut when dot(p, dir) > off.
    bool has_cut = false;
    Vec3 cut_dir;
    float cut_off = 0.f;

    Vec3 sample_surface(Rng& rng) const {
        switch (kind) {
            case ObjectKind::kPlane: {
                const Vec3 local{rng.uniform(-extent_a, extent_a), rng.uniform(-extent_b, extent_b), 0.f};
                return orient.apply(local) + center;
            }
            case ObjectKind::kBox: {
                // Face picked by area, then a uniform point on it.
                const float ax = extent_b * extent_c, ay = extent_a * extent_c, az = extent_a * extent_b;
                const float total = 2.f * (ax + ay + az);
                float pick = rng.uniform() * total;
                Vec3 local;
                const float sx = rng.uniform(-extent_a, extent_a);
                const float sy = rng.uniform(-extent_b, extent_b);
                const float sz = rng.uniform(-extent_c, extent_c);
                if (pick < 2.f * ax) {
                    local = {pick < ax ? extent_a : -extent_a, sy, sz};
                } else if (pick < 2.f * (ax + ay)) {
                    pick -= 2.f * ax;
                    local = {sx, pick < ay ? extent_b : -extent_b, sz};
                } else {
                    pick -= 2.f * (ax + ay);
                    local = {sx, sy, pick < az ? extent_c : -extent_c};
                }
                return orient.apply(local) + center;
            }
            case ObjectKind::kBlob: {
                // Direction on the sphere, radius modulated by fixed smooth
                // harmonics of the direction angles.
                Vec3 d{rng.normal(), rng.normal(), rng.normal()};
                float n = d.norm();
                while (n < 1e-6f) {
                    d = {rng.normal(), rng.normal(), rng.normal()};
                    n = d.norm();
                }
                d = d * (1.f / n);
                const float theta = std::atan2(d.y, d.x);
                const float phi = std::acos(std::clamp(d.z, -1.f, 1.f));
                const float r = extent_a *
                                (1.f + bump[0] * std::sin(2.f * theta) * std::sin(phi) +
                                 bump[1] * std::cos(3.f * theta) * std::sin(2.f * phi) +
                                 bump[2] * std::cos(2.f * phi) + bump[3] * std::sin(theta) * std::cos(phi));
                return d * std::max(0.1f * extent_a, r) + center;
            }
        }
        throw ContractError("SceneObject: unknown kind");
    }
};

SceneObject make_object(ObjectKind kind, const SyntheticSceneSpec& spec, Rng& rng) {
    SceneObject o;
    o.kind = kind;
    // Keep objects comfortably inside the depth limit so clipping only
    // happens when a spec asks for it via motion or a tight limit.
    o.center = {rng.uniform(-3.f, 3.f), rng.uniform(-3.f, 3.f),
                rng.uniform(2.f, std::min(10.f, spec.depth_limit))};
    o.orient = Mat3::euler_xyz(rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi));
    o.extent_a = rng.uniform(0.5f, 1.5f);
    o.extent_b = rng.uniform(0.5f, 1.5f);
    o.extent_c = rng.uniform(0.3f, 1.0f);
    for (float& b : o.bump) b = rng.uniform(-0.15f, 0.15f);

    const float r = spec.rotation_deg * kDegToRad;
    const Mat3 rot = Mat3::euler_xyz(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r));
    const Vec3 trans{rng.uniform(-spec.translation_range, spec.translation_range),
                     rng.uniform(-spec.translation_range, spec.translation_range),
                     rng.uniform(-spec.translation_range, spec.translation_range)};
    o.motion = RigidMotion::about(rot, o.center, trans);
    return o;
}

}  // namespace

ScenePair generate_pair(const SyntheticSceneSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, 0x5ce11e));

    std::vector<SceneObject> objects;
    objects.reserve(static_cast<size_t>(spec.object_count));
    for (int i = 0; i < spec.object_count; ++i)
        objects.push_back(make_object(spec.kinds[static_cast<size_t>(i) % spec.kinds.size()], spec, rng));

    // First frame points plus their exact moved positions.
    std::vector<Vec3> p_points, moved;
    std::vector<size_t> owner;
    for (size_t oi = 0; oi < objects.size(); ++oi) {
        for (int i = 0; i < spec.points_per_object; ++i) {
            const Vec3 p = objects[oi].sample_surface(rng);
            p_points.push_back(p);
            moved.push_back(objects[oi].motion.apply(p));
            owner.push_back(oi);
        }
    }

    // Occlusion: per object, a random half-space in moved coordinates whose
    // offset is the requested quantile of the object's own moved points.
    if (spec.occlusion_fraction > 0.f) {
        for (size_t oi = 0; oi < objects.size(); ++oi) {
            SceneObject& o = objects[oi];
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            float n = dir.norm();
            if (n < 1e-6f) dir = {0.f, 0.f, 1.f}, n = 1.f;
            o.cut_dir = dir * (1.f / n);
            std::vector<float> proj;
            for (size_t i = 0; i < moved.size(); ++i)
                if (owner[i] == oi)
                    proj.push_back(moved[i].x * o.cut_dir.x + moved[i].y * o.cut_dir.y +
                                   moved[i].z * o.cut_dir.z);
            const size_t kth = static_cast<size_t>(
                static_cast<double>(proj.size()) * (1.0 - static_cast<double>(spec.occlusion_fraction)));
            if (kth >= proj.size()) continue;  // fraction too small to cut anything here
            std::nth_element(proj.begin(), proj.begin() + static_cast<int64_t>(kth), proj.end());
            o.cut_off = proj[kth];
            o.has_cut = true;
        }
    }

    auto removed_from_q = [&](const Vec3& moved_pt, size_t oi) {
        const SceneObject& o = objects[oi];
        if (moved_pt.z > spec.depth_limit) return true;
        if (!o.has_cut) return false;
        const float proj = moved_pt.x * o.cut_dir.x + moved_pt.y * o.cut_dir.y + moved_pt.z * o.cut_dir.z;
        return proj > o.cut_off;
    };

    ScenePair pair;
    for (size_t i = 0; i < p_points.size(); ++i) {
        if (p_points[i].z > spec.depth_limit) continue;  // never existed in frame 1
        pair.frame_p.points.push_back(p_points[i]);
        pair.gt_flow.push_back(moved[i] - p_points[i]);
        pair.frame_p.occluded.push_back(removed_from_q(moved[i], owner[i]) ? 1 : 0);
    }
    if (pair.frame_p.points.empty())
        throw ContractError("generate_pair: depth limit removed every first-frame point");

    if (spec.resample_independently) {
        Rng qrng(mix_seed(seed, 0x0ff5e7));
        for (size_t oi = 0; oi < objects.size(); ++oi) {
            int kept = 0;
            int attempts = 0;
            const int budget = spec.points_per_object * 20;
            while (kept < spec.points_per_object && attempts < budget) {
                ++attempts;
                const Vec3 q = objects[oi].motion.apply(objects[oi].sample_surface(qrng));
                if (removed_from_q(q, oi)) continue;
                pair.frame_q.points.push_back(q);
                ++kept;
            }
        }
    } else {
        // Second frame keeps every moved point the second-frame filters allow,
        // regardless of whether the first frame saw its origin.
        for (size_t i = 0; i < p_points.size(); ++i) {
            if (removed_from_q(moved[i], owner[i])) continue;
            pair.frame_q.points.push_back(moved[i]);
        }
    }
    if (pair.frame_q.points.empty())
        throw ContractError("generate_pair: occlusion/depth removed every second-frame point");

    pair.frame_p.validate();
    pair.frame_q.validate();
    return pair;
}

void augment(ScenePair& pair, const AugmentParams& params, uint64_t seed) {
    if (params.rotation_deg < 0.f || params.translation_range < 0.f)
        throw ContractError("augment: negative perturbation ranges");
    Rng rng(mix_seed(seed, 0xa06));
    const float r = params.rotation_deg * kDegToRad;
    const Mat3 rot = Mat3::euler_xyz(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r));
    const Vec3 t{rng.uniform(-params.translation_range, params.translation_range),
                 rng.uniform(-params.translation_range, params.translation_range),
                 rng.uniform(-params.translation_range, params.translation_range)};
    for (Vec3& p : pair.frame_p.points) p = rot.apply(p) + t;
    for (Vec3& q : pair.frame_q.points) q = rot.apply(q) + t;
    for (Vec3& s : pair.gt_flow) s = rot.apply(s);
}

ScenePair subsample_pair(const ScenePair& pair, size_t points_p, size_t points_q, uint64_t seed) {
    const SampleIndices sp = random_sample(pair.frame_p.size(), points_p, mix_seed(seed, 0x50));
    const SampleIndices sq = random_sample(pair.frame_q.size(), points_q, mix_seed(seed, 0x51));
    ScenePair out;
    out.frame_p.points.reserve(points_p);
    out.gt_flow.reserve(points_p);
    for (uint32_t id : sp.indices) {
        out.frame_p.points.push_back(pair.frame_p.points[id]);
        if (!pair.gt_flow.empty()) out.gt_flow.push_back(pair.gt_flow[id]);
        if (!pair.frame_p.occluded.empty()) out.frame_p.occluded.push_back(pair.frame_p.occluded[id]);
    }
    out.frame_q.points.reserve(points_q);
    for (uint32_t id : sq.indices) out.frame_q.points.push_back(pair.frame_q.points[id]);
    return out;
}

}  // namespace sceneflow
