#pragma once

// Shared helpers for the unit suites and the acceptance runner: deterministic
// cloud builders, small model configurations, and a central finite-difference
// harness used to validate every analytic gradient against a numeric oracle.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sceneflow/geometry.hpp"
#include "sceneflow/model.hpp"
#include "sceneflow/rng.hpp"
#include "sceneflow/tensor.hpp"

namespace testsupport {

inline std::vector<sceneflow::Vec3> make_cloud(size_t n, uint64_t seed, float extent = 2.f) {
    sceneflow::Rng rng(sceneflow::mix_seed(seed, 0xc10d));
    std::vector<sceneflow::Vec3> pts(n);
    for (auto& p : pts)
        p = {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
    return pts;
}

// 64-point network used by the gradient acceptance check: scales 32/16/8,
// widths 8/16/32/64.
inline sceneflow::ModelConfig toy_config() {
    sceneflow::ModelConfig cfg = sceneflow::ModelConfig::defaults_for(sceneflow::Sampler::kRandom);
    cfg.scale.resolutions = {32, 16, 8};
    cfg.scale.channels = {8, 16, 32, 64};
    cfg.scale.k_neighbors = 4;
    return cfg;
}

// Smallest legal network; cheap enough for exhaustive finite differences.
inline sceneflow::ModelConfig micro_config() {
    sceneflow::ModelConfig cfg = sceneflow::ModelConfig::defaults_for(sceneflow::Sampler::kRandom);
    cfg.scale.resolutions = {8, 4, 2};
    cfg.scale.channels = {2, 4, 4, 8};
    cfg.scale.k_neighbors = 2;
    return cfg;
}

// Loss functional over a list of named parameter tensors. Must rebuild the
// full graph from scratch on every call (fresh tape), so central differences
// see exactly the computation the analytic gradients came from.
using LossFn = std::function<double(const std::vector<sceneflow::TensorT<double>>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;  // "tensor#i[j]" of the worst element
    size_t checked = 0;
};

// Central-difference comparison. `analytic` must align with `inits`
// element-for-element. `picks` limits per-tensor elements (0 = exhaustive).
inline GradCheckReport fd_compare(const LossFn& loss,
                                  const std::vector<sceneflow::TensorT<double>>& inits,
                                  const std::vector<std::vector<double>>& analytic, double h,
                                  size_t picks, uint64_t seed) {
    GradCheckReport rep;
    sceneflow::Rng rng(sceneflow::mix_seed(seed, 0xfd));
    for (size_t ti = 0; ti < inits.size(); ++ti) {
        const size_t n = inits[ti].data.size();
        std::vector<size_t> idx;
        if (picks == 0 || picks >= n) {
            idx.resize(n);
            for (size_t j = 0; j < n; ++j) idx[j] = j;
        } else {
            for (size_t p = 0; p < picks; ++p) idx.push_back(rng.bounded(static_cast<uint32_t>(n)));
        }
        for (size_t j : idx) {
            std::vector<sceneflow::TensorT<double>> probe = inits;
            probe[ti].data[j] += h;
            const double up = loss(probe);
            probe[ti].data[j] -= 2 * h;
            const double down = loss(probe);
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[ti][j];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = "tensor#" + std::to_string(ti) + "[" + std::to_string(j) + "]";
            }
        }
    }
    return rep;
}

// Convenience wrapper for ops: builds the graph once for analytic gradients,
// then runs fd_compare.
template <typename BuildFn>
GradCheckReport check_op_gradients(BuildFn build, std::vector<sceneflow::TensorT<double>> inits,
                                   double h = 1e-6, size_t picks = 0, uint64_t seed = 1) {
    sceneflow::TapeT<double> tape;
    std::vector<sceneflow::Var> vars;
    for (const auto& init : inits) vars.push_back(tape.leaf_param(init));
    sceneflow::Var loss_var = build(tape, vars);
    tape.backward(loss_var);
    std::vector<std::vector<double>> analytic;
    for (auto v : vars) analytic.push_back(tape.grad(v));

    LossFn loss = [&build](const std::vector<sceneflow::TensorT<double>>& params) {
        sceneflow::TapeT<double> t;
        std::vector<sceneflow::Var> vs;
        for (const auto& p : params) vs.push_back(t.leaf_param(p));
        sceneflow::Var l = build(t, vs);
        return static_cast<double>(t.value(l).data.at(0));
    };
    return fd_compare(loss, inits, analytic, h, picks, seed);
}

inline sceneflow::TensorT<double> random_tensor(std::vector<int> shape, uint64_t seed,
                                                double lo = -1.0, double hi = 1.0) {
    sceneflow::TensorT<double> t = sceneflow::TensorT<double>::zeros(shape);
    sceneflow::Rng rng(sceneflow::mix_seed(seed, 0x7e4));
    for (double& v : t.data) v = rng.uniform_f64() * (hi - lo) + lo;
    return t;
}

// Whole-network finite-difference fixture: two random frames, a random
// ground-truth flow, and one 64-bit parameter vector to differentiate at.
struct NetFixture {
    sceneflow::ModelConfig cfg;
    std::vector<sceneflow::Vec3> frame_p, frame_q;
    std::vector<sceneflow::Vec3> gt;
    std::vector<std::string> names;
    std::vector<sceneflow::TensorT<double>> inits;

    NetFixture(const sceneflow::ModelConfig& c, size_t n, uint64_t seed) : cfg(c) {
        using namespace sceneflow;
        frame_p = make_cloud(n, seed);
        frame_q = make_cloud(n, seed + 1);
        Rng rng(mix_seed(seed, 0x6f));
        gt.resize(n);
        for (Vec3& v : gt)
            v = {rng.uniform(-0.2f, 0.2f), rng.uniform(-0.2f, 0.2f), rng.uniform(-0.2f, 0.2f)};
        ParamStoreT<double> store = build_params<double>(cfg, seed + 2);
        for (const auto& [name, tensor] : store) {
            names.push_back(name);
            inits.push_back(tensor);
        }
        // Differentiate at a generic point. Fresh parameters put every bias at
        // exactly 0, and the relative-position rows of each point's self
        // neighbor are exactly 0, so pre-activations would sit on the
        // leaky-relu corner where central differences average the two slopes.
        for (sceneflow::TensorT<double>& t : inits)
            for (double& v : t.data) {
                const double u = rng.uniform_f64() * 0.2 - 0.1;
                v += u >= 0.0 ? u + 0.05 : u - 0.05;
            }
    }

    // The training loss sums over points, so its magnitude grows with the
    // cloud and the FD roundoff floor (machine-eps * |loss| / 2h) grows with
    // it. Checking a constant multiple is exact under the chain rule and
    // keeps the readout at O(1), where 1e-6 relative accuracy is attainable.
    double norm() const { return 1.0 / static_cast<double>(4 * frame_p.size()); }

    double loss(const std::vector<sceneflow::TensorT<double>>& params) const {
        using namespace sceneflow;
        ParamStoreT<double> store;
        for (size_t i = 0; i < names.size(); ++i) store.add(names[i], params[i]);
        TapeT<double> t;
        ParamBinderT<double> bind(t, store);
        ForwardResultT<double> fwd = run_model(t, bind, cfg, frame_p, frame_q, 77);
        const auto gt_pyr = gather_gt_pyramid(fwd.pyr_p, std::span<const Vec3>(gt));
        Var l = scale(t, multiscale_loss(t, fwd.pred.flow, gt_pyr), norm());
        return t.value(l).data.at(0);
    }

    // Analytic gradients in `names` order.
    std::vector<std::vector<double>> analytic() const {
        using namespace sceneflow;
        ParamStoreT<double> store;
        for (size_t i = 0; i < names.size(); ++i) store.add(names[i], inits[i]);
        TapeT<double> t;
        ParamBinderT<double> bind(t, store);
        ForwardResultT<double> fwd = run_model(t, bind, cfg, frame_p, frame_q, 77);
        const auto gt_pyr = gather_gt_pyramid(fwd.pyr_p, std::span<const Vec3>(gt));
        t.backward(scale(t, multiscale_loss(t, fwd.pred.flow, gt_pyr), norm()));
        auto grads = bind.gradients();
        std::vector<std::vector<double>> out;
        for (const std::string& name : names) out.push_back(grads.at(name));
        return out;
    }
};

}  // namespace testsupport
