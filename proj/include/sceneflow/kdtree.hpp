#pragma once

// Exact k-nearest-neighbor search over 3D points. Results are identical to a
// brute-force scan ordered by (squared distance, id): the pruning bound is
// strict, so equal-distance candidates are always visited and the smaller id
// wins ties.

#include <algorithm>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sceneflow/error.hpp"
#include "sceneflow/geometry.hpp"

namespace sceneflow {

class KdTree {
  public:
    explicit KdTree(std::span<const Vec3> points, int leaf_size = 16);

    size_t size() const { return points_.size(); }

    // K nearest target ids for one query, ascending (distance, id);
    // exclude_id >= 0 removes that single target id from consideration.
    void knn(const Vec3& query, int k, std::vector<uint32_t>& out, int64_t exclude_id = -1) const;

    // Convenience wrapper producing a rectangular table for many queries.
    NeighborTable knn_batch(std::span<const Vec3> queries, int k, bool exclude_self_by_row = false) const;

    uint32_t nearest(const Vec3& query) const;

  private:
    struct Node {
        // Leaf when child < 0: covers order_[begin, end).
        int32_t left = -1, right = -1;
        int32_t begin = 0, end = 0;
        float split = 0.f;
        int8_t axis = -1;
    };

    int32_t build(int32_t begin, int32_t end);

    std::vector<Vec3> points_;
    std::vector<uint32_t> order_;
    std::vector<Node> nodes_;
    int leaf_size_;
    int32_t root_ = -1;
};

// Brute-force K nearest in 3D, same ordering contract as KdTree::knn.
// Used as the reference implementation in tests and for small target sets.
NeighborTable knn_bruteforce(std::span<const Vec3> queries, std::span<const Vec3> targets, int k,
                             bool exclude_self_by_row = false);

// K nearest targets per query by (squared distance, id) of the points in the
// tree; throws SizeError when fewer than k targets are available.
NeighborTable knn_euclidean(const KdTree& targets, std::span<const Vec3> queries, int k,
                            bool exclude_self_by_row = false);

// Brute-force K nearest rows in feature space (row-major [n, c] vs [m, c]),
// same (distance, id) ordering; used on learned descriptors, not points.
// Templated so the high-precision check path selects on its own scalar type.
template <typename T>
NeighborTable knn_feature_rows(const T* query_rows, size_t n, const T* target_rows, size_t m,
                               size_t c, int k) {
    if (k <= 0) throw ContractError("knn_feature: k must be positive");
    if (static_cast<size_t>(k) > m)
        throw SizeError("knn_feature: requested more neighbors than available rows");
    if (c == 0) throw DimensionError("knn_feature: zero-width features");
    NeighborTable table;
    table.k = k;
    table.space = NeighborSpace::kFeature;
    table.idx.reserve(n * static_cast<size_t>(k));
    std::vector<std::pair<T, uint32_t>> dist(m);
    for (size_t q = 0; q < n; ++q) {
        const T* qr = query_rows + q * c;
        for (size_t t = 0; t < m; ++t) {
            const T* tr = target_rows + t * c;
            T acc = T(0);
            for (size_t j = 0; j < c; ++j) {
                const T d = qr[j] - tr[j];
                acc += d * d;
            }
            dist[t] = {acc, static_cast<uint32_t>(t)};
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int j = 0; j < k; ++j) table.idx.push_back(dist[static_cast<size_t>(j)].second);
    }
    return table;
}

inline NeighborTable knn_feature(const float* query_rows, size_t n, const float* target_rows,
                                 size_t m, size_t c, int k) {
    return knn_feature_rows(query_rows, n, target_rows, m, c, k);
}

}  // namespace sceneflow
