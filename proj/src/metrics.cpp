#include "sceneflow/metrics.hpp"

#include <cmath>

#include "sceneflow/error.hpp"

namespace sceneflow {

MetricsReport compute_metrics(const std::vector<Vec3>& predicted,
                              const std::vector<Vec3>& ground_truth,
                              const std::vector<uint8_t>& occluded) {
    if (predicted.size() != ground_truth.size())
        throw DimensionError("compute_metrics: predicted and ground-truth sizes differ");
    if (!occluded.empty() && occluded.size() != predicted.size())
        throw DimensionError("compute_metrics: visibility mask size mismatch");
    if (predicted.empty()) throw SizeError("compute_metrics: empty input");

    double sum = 0.0, sum_noc = 0.0;
    size_t strict = 0, relax = 0, strict_noc = 0, relax_noc = 0, n_noc = 0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        const Vec3 d = predicted[i] - ground_truth[i];
        const double err = std::sqrt(static_cast<double>(sq_dist(d, Vec3{0.f, 0.f, 0.f})));
        const double mag = std::sqrt(static_cast<double>(sq_dist(ground_truth[i], Vec3{0.f, 0.f, 0.f})));
        // Relative thresholds only apply when the true flow is nonzero.
        const bool s = err < 0.05 || (mag > 0.0 && err / mag < 0.05);
        const bool r = err < 0.1 || (mag > 0.0 && err / mag < 0.1);
        sum += err;
        strict += s ? 1 : 0;
        relax += r ? 1 : 0;
        if (occluded.empty() || occluded[i] == 0) {
            sum_noc += err;
            strict_noc += s ? 1 : 0;
            relax_noc += r ? 1 : 0;
            ++n_noc;
        }
    }

    MetricsReport rep;
    rep.count = predicted.size();
    rep.count_noc = n_noc;
    rep.epe3d = sum / static_cast<double>(rep.count);
    rep.acc3d_strict = static_cast<double>(strict) / static_cast<double>(rep.count);
    rep.acc3d_relax = static_cast<double>(relax) / static_cast<double>(rep.count);
    if (n_noc > 0) {
        rep.epe3d_noc = sum_noc / static_cast<double>(n_noc);
        rep.acc3d_strict_noc = static_cast<double>(strict_noc) / static_cast<double>(n_noc);
        rep.acc3d_relax_noc = static_cast<double>(relax_noc) / static_cast<double>(n_noc);
    }
    return rep;
}

}  // namespace sceneflow
