#include "sceneflow/sampling.hpp"

#include <limits>
#include <numeric>
#include <unordered_set>
#include <string>
#include <vector>

#include "sceneflow/error.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

SampleIndices random_sample(size_t n, size_t m, uint64_t seed) {
    if (m == 0) throw SizeError("random_sample: sample count must be positive");
    if (m > n)
        throw SizeError("random_sample: cannot draw " + std::to_string(m) + " of " + std::to_string(n));
    // Floyd's subset sampling: every m-subset equally likely, O(m) time and
    // space regardless of n, so the cost never scales with cloud size.
    std::unordered_set<uint32_t> chosen;
    chosen.reserve(m * 2);
    std::vector<uint32_t> out;
    out.reserve(m);
    Rng rng(seed);
    for (size_t j = n - m; j < n; ++j) {
        const uint32_t r = rng.bounded(static_cast<uint32_t>(j + 1));
        if (chosen.insert(r).second) {
            out.push_back(r);
        } else {
            chosen.insert(static_cast<uint32_t>(j));
            out.push_back(static_cast<uint32_t>(j));
        }
    }
    return SampleIndices{std::move(out), Sampler::kRandom, seed};
}

SampleIndices farthest_point_sample(std::span<const Vec3> points, size_t m, uint64_t seed) {
    const size_t n = points.size();
    if (m == 0) throw SizeError("farthest_point_sample: sample count must be positive");
    if (m > n)
        throw SizeError("farthest_point_sample: cannot draw " + std::to_string(m) + " of " +
                        std::to_string(n));

    std::vector<uint32_t> picked;
    picked.reserve(m);
    Rng rng(seed);
    uint32_t current = rng.bounded(static_cast<uint32_t>(n));
    picked.push_back(current);

    // min_d2[i] = squared distance from point i to the chosen set so far.
    std::vector<float> min_d2(n, std::numeric_limits<float>::infinity());
    std::vector<uint8_t> taken(n, 0);
    taken[current] = 1;
    for (size_t step = 1; step < m; ++step) {
        const Vec3& latest = points[current];
        for (size_t i = 0; i < n; ++i) {
            const float d2 = sq_dist(points[i], latest);
            if (d2 < min_d2[i]) min_d2[i] = d2;
        }
        // Ascending scan with strict '>' keeps the lowest unpicked id on
        // ties; skipping picked points guarantees distinct output even for
        // fully coincident clouds.
        uint32_t best = 0;
        float best_d2 = -1.f;
        for (size_t i = 0; i < n; ++i) {
            if (!taken[i] && min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = static_cast<uint32_t>(i);
            }
        }
        current = best;
        taken[current] = 1;
        picked.push_back(current);
    }
    return SampleIndices{std::move(picked), Sampler::kFarthest, seed};
}

SampleIndices sample_points(std::span<const Vec3> points, size_t m, Sampler method, uint64_t seed) {
    return method == Sampler::kRandom ? random_sample(points.size(), m, seed)
                                      : farthest_point_sample(points, m, seed);
}

}  // namespace sceneflow
