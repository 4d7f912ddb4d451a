#pragma once

// Coarse-to-fine flow prediction over two feature pyramids.
//
// The coarsest scale estimates flow from matched groups, every finer scale
// upsamples the previous flow (nearest-neighbor copy), warps its points
// forward, regroups against the target frame around the warped positions,
// and re-estimates. Scale 0 receives the upsampled flow directly; an
// optional extra head can refine it from upsampled flow features.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sceneflow/encoder.hpp"
#include "sceneflow/flow_embedding.hpp"
#include "sceneflow/geometry.hpp"
#include "sceneflow/kdtree.hpp"
#include "sceneflow/model_config.hpp"
#include "sceneflow/params.hpp"
#include "sceneflow/tensor.hpp"

namespace sceneflow {

// Per-scale flow regression: two hidden layers then a linear 3-vector output.
template <typename S>
Var flow_head(TapeT<S>& t, ParamBinderT<S>& p, const std::string& prefix, Var flow_feat) {
    Var h1 = leaky_relu(t, mlp_linear(t, p, prefix + ".l1", flow_feat));
    Var h2 = leaky_relu(t, mlp_linear(t, p, prefix + ".l2", h1));
    return mlp_linear(t, p, prefix + ".l3", h2);
}

// For every fine point the id of its nearest coarse point ((distance, id)
// ties to the lowest id, matching every other neighbor search here).
inline std::vector<uint32_t> nearest_coarse_map(std::span<const Vec3> fine, const KdTree& coarse) {
    std::vector<uint32_t> map(fine.size());
    std::vector<uint32_t> row;
    for (size_t i = 0; i < fine.size(); ++i) {
        coarse.knn(fine[i], 1, row);
        map[i] = row[0];
    }
    return map;
}

// Copy each mapped coarse row to its fine position: [m, c] -> [n, c].
template <typename S>
Var upsample_rows(TapeT<S>& t, Var coarse, const std::vector<uint32_t>& map) {
    const int n = static_cast<int>(map.size());
    const int c = t.value(coarse).dim(1);
    Var g = gather_rows(t, coarse, map, n, 1);
    return reshape(t, g, {n, c});
}

// Forward warping: move source points by their current flow estimate.
template <typename S>
std::vector<Vec3> warp_forward(std::span<const Vec3> points, const TensorT<S>& flow) {
    if (flow.rank() != 2 || flow.dim(1) != 3 ||
        static_cast<size_t>(flow.dim(0)) != points.size())
        throw DimensionError("warp_forward: flow must be [n, 3] matching the points");
    std::vector<Vec3> out(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        out[i] = Vec3{points[i].x + static_cast<float>(flow.data[i * 3 + 0]),
                      points[i].y + static_cast<float>(flow.data[i * 3 + 1]),
                      points[i].z + static_cast<float>(flow.data[i * 3 + 2])};
    }
    return out;
}

template <typename S>
struct PredictionT {
    std::array<Var, 4> flow;       // per scale; flow[0] covers the full input
    std::array<Var, 4> flow_feat;  // flow embeddings; [0] only set with the extra head
    CorrespondenceMap coarse_match;
    int fe_modules = 0;
    int warp_layers = 0;
    int heads_applied = 0;
};

using Prediction = PredictionT<float>;

template <typename S>
PredictionT<S> forward_pass(TapeT<S>& t, ParamBinderT<S>& p, const FeaturePyramidT<S>& pyr_p,
                            const FeaturePyramidT<S>& pyr_q, const ModelConfig& cfg) {
    const int K = cfg.scale.k_neighbors;
    PredictionT<S> out;

    // Coarsest scale: groups from mutual-best feature matching (or plain
    // Euclidean neighbors when matching is disabled — also the fallback for
    // unmatched points).
    const PyramidScaleT<S>& p3 = pyr_p.scale[3];
    const PyramidScaleT<S>& q3 = pyr_q.scale[3];
    NeighborTable fallback3 = knn_euclidean(*q3.tree, std::span<const Vec3>(p3.points), K);
    const NeighborTable* groups3 = &fallback3;
    if (cfg.enable_bidirectional) {
        const TensorT<S>& fp = t.value(p3.features);
        const TensorT<S>& fq = t.value(q3.features);
        std::vector<S> sim = detail::cosine_matrix_rows(fp.data.data(), static_cast<size_t>(fp.dim(0)),
                                                        fq.data.data(), static_cast<size_t>(fq.dim(0)),
                                                        static_cast<size_t>(fp.dim(1)), S(1e-8));
        out.coarse_match = bidirectional_match_rows(sim.data(), static_cast<size_t>(fp.dim(0)),
                                                    static_cast<size_t>(fq.dim(0)), fallback3, q3.neighbors);
        groups3 = &out.coarse_match.groups;
    }

    const size_t block3 = t.size();
    FlowEmbeddingInputsT<S> in3{p3.features, q3.features, groups3, &p3.neighbors, Var{}, Var{}};
    out.flow_feat[3] = flow_embedding(t, p, 3, in3, cfg);
    ++out.fe_modules;
    out.flow[3] = flow_head(t, p, "head.s3", out.flow_feat[3]);
    ++out.heads_applied;
    t.release_values(block3, {out.flow_feat[3], out.flow[3]});

    // Finer scales 2 and 1: upsample, warp, regroup, re-embed, re-estimate.
    for (int k = 2; k >= 1; --k) {
        const PyramidScaleT<S>& pk = pyr_p.scale[static_cast<size_t>(k)];
        const PyramidScaleT<S>& qk = pyr_q.scale[static_cast<size_t>(k)];
        const PyramidScaleT<S>& p_coarse = pyr_p.scale[static_cast<size_t>(k + 1)];

        const size_t block_start = t.size();
        const std::vector<uint32_t> up = nearest_coarse_map(std::span<const Vec3>(pk.points), *p_coarse.tree);
        Var sf_up = upsample_rows(t, out.flow_feat[static_cast<size_t>(k + 1)], up);
        Var s_up = upsample_rows(t, out.flow[static_cast<size_t>(k + 1)], up);

        const std::vector<Vec3> warped = warp_forward(std::span<const Vec3>(pk.points), t.value(s_up));
        ++out.warp_layers;
        NeighborTable groups = knn_euclidean(*qk.tree, std::span<const Vec3>(warped), K);

        FlowEmbeddingInputsT<S> ink{pk.features, qk.features, &groups, &pk.neighbors, sf_up, s_up};
        out.flow_feat[static_cast<size_t>(k)] = flow_embedding(t, p, k, ink, cfg);
        ++out.fe_modules;
        Var s = flow_head(t, p, "head.s" + std::to_string(k), out.flow_feat[static_cast<size_t>(k)]);
        ++out.heads_applied;
        out.flow[static_cast<size_t>(k)] = cfg.residual_heads ? add(t, s, s_up) : s;
        t.release_values(block_start,
                         {out.flow_feat[static_cast<size_t>(k)], out.flow[static_cast<size_t>(k)]});
    }

    // Scale 0: nearest-neighbor copy of the scale-1 flow; optionally refined
    // by the fourth head on upsampled flow features.
    const PyramidScaleT<S>& p0 = pyr_p.scale[0];
    const PyramidScaleT<S>& p1 = pyr_p.scale[1];
    const std::vector<uint32_t> up0 = nearest_coarse_map(std::span<const Vec3>(p0.points), *p1.tree);
    Var s0 = upsample_rows(t, out.flow[1], up0);
    if (cfg.l0_head) {
        out.flow_feat[0] = upsample_rows(t, out.flow_feat[1], up0);
        Var h = flow_head(t, p, "head.s0", out.flow_feat[0]);
        ++out.heads_applied;
        s0 = cfg.residual_heads ? add(t, h, s0) : h;
    }
    out.flow[0] = s0;
    return out;
}

// Ground truth gathered onto each prediction scale using the pyramid's own
// sample indices (never an independent resampling).
template <typename S>
std::array<TensorT<S>, 4> gather_gt_pyramid(const FeaturePyramidT<S>& pyr,
                                            std::span<const Vec3> gt_flow) {
    if (gt_flow.size() != pyr.scale[0].points.size())
        throw DimensionError("gather_gt_pyramid: ground truth must cover the full cloud");
    std::array<TensorT<S>, 4> out;
    for (int k = 0; k <= 3; ++k) {
        const std::vector<uint32_t>& origin = pyr.scale[static_cast<size_t>(k)].origin;
        TensorT<S> gt = TensorT<S>::zeros({static_cast<int>(origin.size()), 3});
        for (size_t i = 0; i < origin.size(); ++i) {
            const Vec3& v = gt_flow[origin[i]];
            gt.data[i * 3 + 0] = static_cast<S>(v.x);
            gt.data[i * 3 + 1] = static_cast<S>(v.y);
            gt.data[i * 3 + 2] = static_cast<S>(v.z);
        }
        out[static_cast<size_t>(k)] = std::move(gt);
    }
    return out;
}

inline constexpr std::array<float, 4> kLossWeights{0.02f, 0.04f, 0.08f, 0.16f};

// Weighted multi-scale endpoint loss: per scale the *sum* over points of the
// Euclidean error norm, scaled by that scale's weight, summed over scales.
template <typename S>
Var multiscale_loss(TapeT<S>& t, const std::array<Var, 4>& flows,
                    const std::array<TensorT<S>, 4>& gt,
                    const std::array<float, 4>& weights = kLossWeights) {
    Var total;
    for (int k = 0; k <= 3; ++k) {
        const size_t ki = static_cast<size_t>(k);
        Var diff = sub(t, flows[ki], t.leaf(gt[ki]));
        Var term = scale(t, reduce_sum(t, l2norm_rows(t, diff)), static_cast<S>(weights[ki]));
        total = total.valid() ? add(t, total, term) : term;
    }
    return total;
}

}  // namespace sceneflow
