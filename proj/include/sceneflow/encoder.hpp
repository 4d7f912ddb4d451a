#pragma once

// Hierarchical feature extraction over a point-cloud pyramid.
//
// Scale 0 lifts mean-centered coordinates through a single shared MLP; every
// coarser scale samples its points from the previous one (random or farthest
// point sampling), pools the K nearest previous-scale features by channel
// max, and refines with a local feature aggregation block: two chained
// (spatial encoding -> attentive pooling) units around a linear shortcut.
// All spatial encodings consume relative offsets only, so features are
// invariant to translating the whole cloud.
//
// Both frames of a pair run through the same parameters by construction:
// there is one parameter store and one set of names.

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sceneflow/geometry.hpp"
#include "sceneflow/kdtree.hpp"
#include "sceneflow/model_config.hpp"
#include "sceneflow/params.hpp"
#include "sceneflow/rng.hpp"
#include "sceneflow/sampling.hpp"
#include "sceneflow/tensor.hpp"

namespace sceneflow {

template <typename S>
struct PyramidScaleT {
    std::vector<Vec3> points;
    Var features;                          // [n_k, c_k]
    std::vector<uint32_t> sample_indices;  // into scale k-1; empty at scale 0
    std::vector<uint32_t> origin;          // into the original cloud
    NeighborTable neighbors;               // intra-scale K_p table, self included; empty at scale 0
    std::shared_ptr<const KdTree> tree;    // spatial index over `points`
};

template <typename S>
struct FeaturePyramidT {
    std::array<PyramidScaleT<S>, 4> scale;
};

using FeaturePyramid = FeaturePyramidT<float>;

namespace detail {

// Per-neighbor spatial encoding input: [offset, distance] and optionally the
// absolute neighbor position.
template <typename S>
TensorT<S> relative_position_tensor(std::span<const Vec3> points, const NeighborTable& nbr,
                                    bool include_absolute) {
    const int n = static_cast<int>(nbr.rows());
    const int k = nbr.k;
    const int w = include_absolute ? 7 : 4;
    TensorT<S> rel = TensorT<S>::zeros({n, k, w});
    for (int i = 0; i < n; ++i) {
        const Vec3& pi = points[static_cast<size_t>(i)];
        for (int j = 0; j < k; ++j) {
            const Vec3& pj = points[nbr.at(static_cast<size_t>(i), j)];
            const Vec3 d = pj - pi;
            S* row = rel.data.data() + (static_cast<int64_t>(i) * k + j) * w;
            row[0] = static_cast<S>(d.x);
            row[1] = static_cast<S>(d.y);
            row[2] = static_cast<S>(d.z);
            row[3] = static_cast<S>(d.norm());
            if (include_absolute) {
                row[4] = static_cast<S>(pj.x);
                row[5] = static_cast<S>(pj.y);
                row[6] = static_cast<S>(pj.z);
            }
        }
    }
    return rel;
}

// Spatial encoding -> attentive pooling -> MLP. `activate_out` is false for
// the second unit whose output feeds the residual sum.
template <typename S>
Var lfa_unit(TapeT<S>& t, ParamBinderT<S>& p, const std::string& prefix, Var feats, Var rel,
             const NeighborTable& nbr, bool activate_out) {
    const int n = static_cast<int>(nbr.rows());
    const int k = nbr.k;
    Var enc = leaky_relu(t, mlp_linear(t, p, prefix + ".pos", rel));
    Var gathered = gather_rows(t, feats, nbr.idx, n, k);
    Var cat = concat_lastdim(t, {enc, gathered});
    Var scores = mlp_linear(t, p, prefix + ".att", cat);
    Var weights = softmax_over_neighbors(t, scores);
    Var pooled = sum_over_neighbors(t, mul(t, cat, weights));
    Var out = mlp_linear(t, p, prefix + ".mlp", pooled);
    return activate_out ? leaky_relu(t, out) : out;
}

}  // namespace detail

// Local feature aggregation block at one scale:
//   out = leaky_relu(unit2(unit1(x)) + shortcut(x))
template <typename S>
Var lfa_block(TapeT<S>& t, ParamBinderT<S>& p, const std::string& prefix, std::span<const Vec3> points,
              Var feats, const NeighborTable& nbr, bool include_absolute_xyz) {
    if (nbr.rows() != points.size())
        throw DimensionError("lfa_block: neighbor table does not cover the scale");
    Var rel = t.leaf(detail::relative_position_tensor<S>(points, nbr, include_absolute_xyz));
    Var u1 = detail::lfa_unit(t, p, prefix + ".u1", feats, rel, nbr, /*activate_out=*/true);
    Var u2 = detail::lfa_unit(t, p, prefix + ".u2", u1, rel, nbr, /*activate_out=*/false);
    Var sc = mlp_linear(t, p, prefix + ".sc", feats);
    return leaky_relu(t, add(t, u2, sc));
}

// Sample-and-pool downsampling: keep `m` points of the previous scale, give
// each kept point the channel max over its K nearest previous-scale
// features, then project with an MLP.
template <typename S>
Var downsample_features(TapeT<S>& t, ParamBinderT<S>& p, const std::string& prefix, Var prev_feats,
                        const NeighborTable& prev_nbr) {
    Var gathered = gather_rows(t, prev_feats, prev_nbr.idx, static_cast<int>(prev_nbr.rows()), prev_nbr.k);
    Var pooled = max_over_neighbors(t, gathered);
    return leaky_relu(t, mlp_linear(t, p, prefix, pooled));
}

template <typename S>
FeaturePyramidT<S> extract_pyramid(TapeT<S>& t, ParamBinderT<S>& p, std::span<const Vec3> points,
                                   const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    const ScaleConfig& sc = cfg.scale;
    const size_t n0 = points.size();
    if (n0 < static_cast<size_t>(sc.resolution(1)))
        throw ResolutionError("extract_pyramid: cloud has " + std::to_string(n0) +
                              " points, needs at least " + std::to_string(sc.resolution(1)));
    if (static_cast<size_t>(sc.k_neighbors) > n0)
        throw ResolutionError("extract_pyramid: neighbor count exceeds input size");

    FeaturePyramidT<S> pyr;

    // Scale 0: shared MLP lift of mean-centered coordinates.
    Vec3 centroid{0.f, 0.f, 0.f};
    for (const Vec3& q : points) centroid = centroid + q;
    centroid = centroid * (1.0f / static_cast<float>(n0));
    TensorT<S> xyz = TensorT<S>::zeros({static_cast<int>(n0), 3});
    for (size_t i = 0; i < n0; ++i) {
        const Vec3 c = points[i] - centroid;
        xyz.data[i * 3 + 0] = static_cast<S>(c.x);
        xyz.data[i * 3 + 1] = static_cast<S>(c.y);
        xyz.data[i * 3 + 2] = static_cast<S>(c.z);
    }
    PyramidScaleT<S>& s0 = pyr.scale[0];
    s0.points.assign(points.begin(), points.end());
    s0.features = leaky_relu(t, mlp_linear(t, p, "enc.lift", t.leaf(std::move(xyz))));
    s0.origin.resize(n0);
    for (size_t i = 0; i < n0; ++i) s0.origin[i] = static_cast<uint32_t>(i);
    s0.tree = std::make_shared<KdTree>(std::span<const Vec3>(s0.points));

    for (int k = 1; k <= 3; ++k) {
        const PyramidScaleT<S>& prev = pyr.scale[static_cast<size_t>(k - 1)];
        PyramidScaleT<S>& cur = pyr.scale[static_cast<size_t>(k)];
        const size_t m = static_cast<size_t>(sc.resolution(k));
        const size_t block_start = t.size();

        SampleIndices si = sample_points(std::span<const Vec3>(prev.points), m, sc.sampler,
                                         mix_seed(seed, static_cast<uint64_t>(k)));
        cur.sample_indices = si.indices;
        cur.points.resize(m);
        cur.origin.resize(m);
        for (size_t i = 0; i < m; ++i) {
            cur.points[i] = prev.points[si.indices[i]];
            cur.origin[i] = prev.origin[si.indices[i]];
        }

        // Pool features from the previous scale around each kept point.
        NeighborTable pool_nbr = knn_euclidean(*prev.tree, std::span<const Vec3>(cur.points), sc.k_neighbors);
        Var ds = downsample_features(t, p, "enc.s" + std::to_string(k) + ".ds", prev.features, pool_nbr);

        cur.tree = std::make_shared<KdTree>(std::span<const Vec3>(cur.points));
        cur.neighbors = knn_euclidean(*cur.tree, std::span<const Vec3>(cur.points), sc.k_neighbors);
        cur.features = lfa_block(t, p, "enc.s" + std::to_string(k), std::span<const Vec3>(cur.points), ds,
                                 cur.neighbors, cfg.include_absolute_xyz);
        t.release_values(block_start, {cur.features});
    }
    return pyr;
}

}  // namespace sceneflow
