#include "sceneflow/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sceneflow/error.hpp"

namespace sceneflow {

namespace {

inline float coord(const Vec3& p, int axis) {
    return axis == 0 ? p.x : axis == 1 ? p.y : p.z;
}

// Bounded candidate set ordered worst-first; (d2, id) lexicographic.
struct BestSet {
    struct Entry {
        float d2;
        uint32_t id;
        bool operator<(const Entry& o) const {
            return d2 != o.d2 ? d2 < o.d2 : id < o.id;
        }
    };

    explicit BestSet(int k) : k_(static_cast<size_t>(k)) { heap_.reserve(k_); }

    bool full() const { return heap_.size() == k_; }
    const Entry& worst() const { return heap_.front(); }

    void offer(float d2, uint32_t id) {
        const Entry e{d2, id};
        if (!full()) {
            heap_.push_back(e);
            std::push_heap(heap_.begin(), heap_.end());
        } else if (e < heap_.front()) {
            std::pop_heap(heap_.begin(), heap_.end());
            heap_.back() = e;
            std::push_heap(heap_.begin(), heap_.end());
        }
    }

    void drain_sorted(std::vector<uint32_t>& out) {
        std::sort_heap(heap_.begin(), heap_.end());
        out.clear();
        out.reserve(heap_.size());
        for (const Entry& e : heap_) out.push_back(e.id);
    }

    size_t k_;
    std::vector<Entry> heap_;
};

}  // namespace

KdTree::KdTree(std::span<const Vec3> points, int leaf_size)
    : points_(points.begin(), points.end()), leaf_size_(std::max(1, leaf_size)) {
    if (points_.empty()) throw ContractError("KdTree: empty point set");
    order_.resize(points_.size());
    for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<uint32_t>(i);
    nodes_.reserve(2 * points_.size() / static_cast<size_t>(leaf_size_) + 2);
    root_ = build(0, static_cast<int32_t>(points_.size()));
}

int32_t KdTree::build(int32_t begin, int32_t end) {
    Node n;
    n.begin = begin;
    n.end = end;
    if (end - begin <= leaf_size_) {
        nodes_.push_back(n);
        return static_cast<int32_t>(nodes_.size()) - 1;
    }

    // Split on the widest axis at the median; ties in coordinate fall back to
    // id so the partition is deterministic.
    Vec3 lo = points_[order_[static_cast<size_t>(begin)]];
    Vec3 hi = lo;
    for (int32_t i = begin + 1; i < end; ++i) {
        const Vec3& p = points_[order_[static_cast<size_t>(i)]];
        lo.x = std::min(lo.x, p.x); hi.x = std::max(hi.x, p.x);
        lo.y = std::min(lo.y, p.y); hi.y = std::max(hi.y, p.y);
        lo.z = std::min(lo.z, p.z); hi.z = std::max(hi.z, p.z);
    }
    const float ex = hi.x - lo.x, ey = hi.y - lo.y, ez = hi.z - lo.z;
    int axis = 0;
    if (ey > ex || ez > ex) axis = (ey >= ez) ? 1 : 2;
    const int32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](uint32_t a, uint32_t b) {
                         const float ca = coord(points_[a], axis);
                         const float cb = coord(points_[b], axis);
                         return ca != cb ? ca < cb : a < b;
                     });
    n.axis = static_cast<int8_t>(axis);
    n.split = coord(points_[order_[static_cast<size_t>(mid)]], axis);

    const int32_t self = static_cast<int32_t>(nodes_.size());
    nodes_.push_back(n);
    const int32_t l = build(begin, mid);
    const int32_t r = build(mid, end);
    nodes_[static_cast<size_t>(self)].left = l;
    nodes_[static_cast<size_t>(self)].right = r;
    return self;
}

void KdTree::knn(const Vec3& query, int k, std::vector<uint32_t>& out, int64_t exclude_id) const {
    const size_t available = points_.size() - (exclude_id >= 0 ? 1 : 0);
    if (k <= 0) throw ContractError("KdTree::knn: k must be positive");
    if (static_cast<size_t>(k) > available)
        throw SizeError("KdTree::knn: requested more neighbors than available points");

    BestSet best(k);
    // Descend the near side first; the far side is visited unless its slab
    // distance is strictly worse than the current worst. Equal slab distance
    // is never pruned: a tie candidate with a lower id may live there.
    auto visit = [&](auto&& self, int32_t ni) -> void {
        const Node& n = nodes_[static_cast<size_t>(ni)];
        if (n.axis < 0) {
            for (int32_t i = n.begin; i < n.end; ++i) {
                const uint32_t id = order_[static_cast<size_t>(i)];
                if (static_cast<int64_t>(id) == exclude_id) continue;
                best.offer(sq_dist(query, points_[id]), id);
            }
            return;
        }
        const float delta = coord(query, n.axis) - n.split;
        const float slab = delta * delta;
        const int32_t near = delta < 0.f ? n.left : n.right;
        const int32_t far = delta < 0.f ? n.right : n.left;
        self(self, near);
        if (!best.full() || slab <= best.worst().d2) self(self, far);
    };
    visit(visit, root_);
    best.drain_sorted(out);
}

uint32_t KdTree::nearest(const Vec3& query) const {
    std::vector<uint32_t> out;
    knn(query, 1, out);
    return out[0];
}

NeighborTable KdTree::knn_batch(std::span<const Vec3> queries, int k, bool exclude_self_by_row) const {
    NeighborTable table;
    table.k = k;
    table.space = NeighborSpace::kEuclidean;
    table.idx.reserve(queries.size() * static_cast<size_t>(k));
    std::vector<uint32_t> row;
    for (size_t q = 0; q < queries.size(); ++q) {
        knn(queries[q], k, row, exclude_self_by_row ? static_cast<int64_t>(q) : -1);
        table.idx.insert(table.idx.end(), row.begin(), row.end());
    }
    return table;
}

NeighborTable knn_euclidean(const KdTree& targets, std::span<const Vec3> queries, int k,
                            bool exclude_self_by_row) {
    return targets.knn_batch(queries, k, exclude_self_by_row);
}

NeighborTable knn_bruteforce(std::span<const Vec3> queries, std::span<const Vec3> targets, int k,
                             bool exclude_self_by_row) {
    const size_t avail = targets.size() - (exclude_self_by_row ? 1 : 0);
    if (k <= 0) throw ContractError("knn_bruteforce: k must be positive");
    if (static_cast<size_t>(k) > avail)
        throw SizeError("knn_bruteforce: requested more neighbors than available points");
    NeighborTable table;
    table.k = k;
    table.space = NeighborSpace::kEuclidean;
    table.idx.reserve(queries.size() * static_cast<size_t>(k));
    std::vector<std::pair<float, uint32_t>> dist;
    dist.reserve(targets.size());
    for (size_t q = 0; q < queries.size(); ++q) {
        dist.clear();
        for (size_t t = 0; t < targets.size(); ++t) {
            if (exclude_self_by_row && t == q) continue;
            dist.emplace_back(sq_dist(queries[q], targets[t]), static_cast<uint32_t>(t));
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int j = 0; j < k; ++j) table.idx.push_back(dist[static_cast<size_t>(j)].second);
    }
    return table;
}

}  // namespace sceneflow
