#pragma once

// Cross-frame flow embedding at one pyramid scale.
//
// Four aggregation steps widen the receptive field without enlarging the
// K-neighbor group itself:
//   1. max over a cross-frame group of per-edge MLP features,
//   2. a second max over the K nearest rows *in feature space* (dilation),
//   3. attention-weighted sum over the intra-frame spatial neighborhood of
//      the fused descriptor,
//   4. the same attention applied again (fresh weights, same neighborhood),
//      plus a residual connection from step 2.
//
// The coarsest scale forms its groups from mutual-best cosine matches
// between frames; unmatched points and all finer scales use Euclidean
// groups (finer scales query with warped points).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sceneflow/geometry.hpp"
#include "sceneflow/kdtree.hpp"
#include "sceneflow/model_config.hpp"
#include "sceneflow/params.hpp"
#include "sceneflow/tensor.hpp"

namespace sceneflow {

namespace detail {

// Row-normalized dot products with an epsilon guard: zero rows match nothing
// and produce similarity 0, never NaN.
template <typename T>
std::vector<T> cosine_matrix_rows(const T* fp, size_t n, const T* fq, size_t m, size_t c, T eps) {
    if (c == 0) throw DimensionError("cosine_similarity_matrix: zero-width features");
    std::vector<T> norm_p(n), norm_q(m);
    for (size_t i = 0; i < n; ++i) {
        T acc = T(0);
        for (size_t j = 0; j < c; ++j) acc += fp[i * c + j] * fp[i * c + j];
        norm_p[i] = std::sqrt(acc);
    }
    for (size_t i = 0; i < m; ++i) {
        T acc = T(0);
        for (size_t j = 0; j < c; ++j) acc += fq[i * c + j] * fq[i * c + j];
        norm_q[i] = std::sqrt(acc);
    }
    std::vector<T> sim(n * m);
    for (size_t i = 0; i < n; ++i) {
        for (size_t t = 0; t < m; ++t) {
            T dot = T(0);
            for (size_t j = 0; j < c; ++j) dot += fp[i * c + j] * fq[t * c + j];
            sim[i * m + t] = dot / (norm_p[i] * norm_q[t] + eps);
        }
    }
    return sim;
}

}  // namespace detail

inline std::vector<float> cosine_similarity_matrix(const float* fp, size_t n, const float* fq,
                                                   size_t m, size_t c, float eps = 1e-8f) {
    return detail::cosine_matrix_rows(fp, n, fq, m, c, eps);
}

struct CorrespondenceMap {
    std::vector<int32_t> match;  // target id per source row, -1 when not mutual
    NeighborTable groups;        // n x K ids into the target frame
    size_t matched_count = 0;
};

// Mutual-best matching on a similarity matrix. Row- and column-argmax ties
// resolve to the lowest index. A matched row's group is its match followed
// by the match's K-1 nearest same-frame neighbors (from q_self, self
// removed); unmatched rows copy their fallback group unchanged.
template <typename T>
CorrespondenceMap bidirectional_match_rows(const T* sim, size_t n, size_t m,
                                           const NeighborTable& fallback,
                                           const NeighborTable& q_self) {
    if (fallback.rows() != n) throw DimensionError("bidirectional_match: fallback table must cover every row");
    if (q_self.rows() != m) throw DimensionError("bidirectional_match: q_self table must cover the target frame");
    const int k = fallback.k;
    if (k <= 0 || q_self.k != k)
        throw DimensionError("bidirectional_match: fallback and q_self group sizes must agree");

    std::vector<uint32_t> row_best(n), col_best(m);
    for (size_t i = 0; i < n; ++i) {
        uint32_t best = 0;
        T bv = sim[i * m];
        for (size_t j = 1; j < m; ++j)
            if (sim[i * m + j] > bv) {
                bv = sim[i * m + j];
                best = static_cast<uint32_t>(j);
            }
        row_best[i] = best;
    }
    for (size_t j = 0; j < m; ++j) {
        uint32_t best = 0;
        T bv = sim[j];
        for (size_t i = 1; i < n; ++i)
            if (sim[i * m + j] > bv) {
                bv = sim[i * m + j];
                best = static_cast<uint32_t>(i);
            }
        col_best[j] = best;
    }

    CorrespondenceMap map;
    map.match.assign(n, -1);
    map.groups.k = k;
    map.groups.space = NeighborSpace::kEuclidean;
    map.groups.idx.resize(n * static_cast<size_t>(k));
    for (size_t i = 0; i < n; ++i) {
        uint32_t* row = map.groups.idx.data() + i * static_cast<size_t>(k);
        const uint32_t j = row_best[i];
        if (col_best[j] == static_cast<uint32_t>(i)) {
            map.match[i] = static_cast<int32_t>(j);
            ++map.matched_count;
            row[0] = j;
            int filled = 1;
            for (int s = 0; s < k && filled < k; ++s) {
                const uint32_t cand = q_self.at(j, s);
                if (cand == j) continue;
                row[filled++] = cand;
            }
            if (filled < k)
                throw ContractError("bidirectional_match: q_self row cannot pad the group");
        } else {
            for (int s = 0; s < k; ++s) row[s] = fallback.at(i, s);
        }
    }
    return map;
}

inline CorrespondenceMap bidirectional_match(const std::vector<float>& sim, size_t n, size_t m,
                                             const NeighborTable& fallback,
                                             const NeighborTable& q_self) {
    if (sim.size() != n * m) throw DimensionError("bidirectional_match: similarity matrix size mismatch");
    return bidirectional_match_rows(sim.data(), n, m, fallback, q_self);
}

namespace detail {

// Edge features of a group: MLP applied to [center, neighbor - center] per
// neighbor (or the edge alone in the edge-only variant).
template <typename S>
Var graph_features(TapeT<S>& t, ParamBinderT<S>& p, const std::string& prefix, Var center,
                   Var gathered, bool edge_only) {
    const int n = t.value(gathered).dim(0);
    const int k = t.value(gathered).dim(1);
    (void)n;
    Var tiled = tile_over_neighbors(t, center, k);
    Var edge = sub(t, gathered, tiled);
    Var input = edge_only ? edge : concat_lastdim(t, {tiled, edge});
    return leaky_relu(t, mlp_linear(t, p, prefix, input));
}

// Attention-weighted sum over a neighborhood: scores come from a two-layer
// MLP on each gathered row (per-channel scores), normalized over the group.
template <typename S>
Var attentive_sum(TapeT<S>& t, ParamBinderT<S>& p, const std::string& prefix, Var rows,
                  const NeighborTable& nbr) {
    Var gathered = gather_rows(t, rows, nbr.idx, static_cast<int>(nbr.rows()), nbr.k);
    Var hidden = leaky_relu(t, mlp_linear(t, p, prefix + ".h", gathered));
    Var scores = mlp_linear(t, p, prefix + ".s", hidden);
    Var weights = softmax_over_neighbors(t, scores);
    return sum_over_neighbors(t, mul(t, gathered, weights));
}

}  // namespace detail

template <typename S>
struct FlowEmbeddingInputsT {
    Var fp;                          // [n, c] source-frame features
    Var fq;                          // [m, c] target-frame features
    const NeighborTable* groups;     // n x K cross-frame group ids into fq
    const NeighborTable* intra;      // n x K intra-frame table (reused from the encoder)
    Var sf_up;                       // upsampled coarser flow features, invalid at the coarsest scale
    Var s_up;                        // upsampled coarser flow, invalid at the coarsest scale
};

// Returns the flow feature tensor [n, c_k] for one scale.
template <typename S>
Var flow_embedding(TapeT<S>& t, ParamBinderT<S>& p, int scale_k, const FlowEmbeddingInputsT<S>& in,
                   const ModelConfig& cfg) {
    if (scale_k < 1 || scale_k > 3) throw IndexError("flow_embedding: scale must be 1..3");
    const std::string fe = "fe.s" + std::to_string(scale_k);
    const int n = t.value(in.fp).dim(0);
    const int k = in.groups->k;
    if (in.groups->rows() != static_cast<size_t>(n))
        throw DimensionError("flow_embedding: group table does not cover the source frame");
    if (in.intra->rows() != static_cast<size_t>(n))
        throw DimensionError("flow_embedding: intra-frame table does not cover the source frame");

    // Step 1: cross-frame aggregation over the group.
    Var gathered_q = gather_rows(t, in.fq, in.groups->idx, n, k);
    Var e1 = max_over_neighbors(t, detail::graph_features(t, p, fe + ".e1", in.fp, gathered_q, cfg.edge_only));

    // Step 2: dilation via nearest rows in feature space (self included).
    Var e2 = e1;
    if (cfg.enable_embed2) {
        const TensorT<S>& e1v = t.value(e1);
        NeighborTable fnbr = knn_feature_rows(e1v.data.data(), static_cast<size_t>(n), e1v.data.data(),
                                              static_cast<size_t>(n), static_cast<size_t>(e1v.dim(1)), k);
        Var gathered_e1 = gather_rows(t, e1, fnbr.idx, n, k);
        Var e2_hat = max_over_neighbors(t, detail::graph_features(t, p, fe + ".e2g", e1, gathered_e1, cfg.edge_only));
        e2 = leaky_relu(t, mlp_linear(t, p, fe + ".e2m", concat_lastdim(t, {e1, e2_hat})));
    }

    // Fuse with the source features and, below the coarsest scale, with the
    // upsampled coarse flow state; project back to the scale width.
    std::vector<Var> fuse_in{in.fp, e2};
    if (in.sf_up.valid()) {
        fuse_in.push_back(in.sf_up);
        fuse_in.push_back(in.s_up);
    }
    Var fused = leaky_relu(t, mlp_linear(t, p, fe + ".fuse", concat_lastdim(t, fuse_in)));

    // Steps 3 and 4: two attention passes over the same spatial neighborhood;
    // the second pass sees features whose receptive field already spans the
    // neighbors' neighbors.
    Var e3 = detail::attentive_sum(t, p, fe + ".g1", fused, *in.intra);
    Var e4 = detail::attentive_sum(t, p, fe + ".g2", e3, *in.intra);
    return add(t, e2, e4);
}

}  // namespace sceneflow
