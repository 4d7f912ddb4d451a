#pragma once

// Parameter layout and end-to-end forward execution.
//
// All parameter tensors are declared here in one walk so that construction,
// initialization, shape introspection, and checkpoint compatibility all
// derive from a single source of truth.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sceneflow/encoder.hpp"
#include "sceneflow/flow_embedding.hpp"
#include "sceneflow/model_config.hpp"
#include "sceneflow/params.hpp"
#include "sceneflow/predictor.hpp"

namespace sceneflow {

inline constexpr int kHeadHidden1 = 64;
inline constexpr int kHeadHidden2 = 32;
inline constexpr float kLeakySlope = 0.2f;

// Visit every linear layer of the model as (prefix, in_width, out_width).
inline void for_each_linear(const ModelConfig& cfg,
                            const std::function<void(const std::string&, int, int)>& fn) {
    cfg.validate();
    const ScaleConfig& sc = cfg.scale;
    const int pos_dim = cfg.include_absolute_xyz ? 7 : 4;

    fn("enc.lift", 3, sc.channel(0));
    for (int k = 1; k <= 3; ++k) {
        const std::string e = "enc.s" + std::to_string(k);
        const int c = sc.channel(k);
        const int h = c / 2;
        fn(e + ".ds", sc.channel(k - 1), h);
        fn(e + ".u1.pos", pos_dim, h);
        fn(e + ".u1.att", 2 * h, 2 * h);
        fn(e + ".u1.mlp", 2 * h, h);
        fn(e + ".u2.pos", pos_dim, h);
        fn(e + ".u2.att", 2 * h, 2 * h);
        fn(e + ".u2.mlp", 2 * h, c);
        fn(e + ".sc", h, c);
    }
    for (int k = 1; k <= 3; ++k) {
        const std::string f = "fe.s" + std::to_string(k);
        const int c = sc.channel(k);
        fn(f + ".e1", cfg.edge_only ? c : 2 * c, c);
        if (cfg.enable_embed2) {
            fn(f + ".e2g", cfg.edge_only ? c : 2 * c, c);
            fn(f + ".e2m", 2 * c, c);
        }
        const int fuse_in = k == 3 ? 2 * c : 2 * c + sc.channel(k + 1) + 3;
        fn(f + ".fuse", fuse_in, c);
        fn(f + ".g1.h", c, c);
        fn(f + ".g1.s", c, c);
        fn(f + ".g2.h", c, c);
        fn(f + ".g2.s", c, c);
    }
    for (int k = 0; k <= 3; ++k) {
        const std::string h = "head.s" + std::to_string(k);
        const int in = k == 0 ? sc.channel(1) : sc.channel(k);
        fn(h + ".l1", in, kHeadHidden1);
        fn(h + ".l2", kHeadHidden1, kHeadHidden2);
        fn(h + ".l3", kHeadHidden2, 3);
    }
}

// Fresh parameter store: Kaiming-uniform fan-in weights (leaky-ReLU gain),
// zero biases; deterministic in (config, seed).
template <typename S>
ParamStoreT<S> build_params(const ModelConfig& cfg, uint64_t seed) {
    ParamStoreT<S> store;
    Rng rng(mix_seed(seed, 0x9a7a));
    for_each_linear(cfg, [&](const std::string& prefix, int in, int out) {
        store.add(prefix + ".w", kaiming_linear_weight<S>(in, out, static_cast<S>(kLeakySlope), rng));
        store.add(prefix + ".b", TensorT<S>::zeros({out}));
    });
    return store;
}

// Structural summary used by tests and tooling.
struct ModelStructure {
    int fe_modules = 0;
    int heads = 0;
    size_t tensors = 0;
    int64_t values = 0;
};

inline ModelStructure model_structure(const ModelConfig& cfg) {
    ModelStructure s;
    std::vector<std::string> seen_fe, seen_head;
    for_each_linear(cfg, [&](const std::string& prefix, int in, int out) {
        s.tensors += 2;
        s.values += static_cast<int64_t>(in) * out + out;
        if (prefix.rfind("fe.s", 0) == 0) {
            const std::string inst = prefix.substr(0, 5);
            if (std::find(seen_fe.begin(), seen_fe.end(), inst) == seen_fe.end()) seen_fe.push_back(inst);
        }
        if (prefix.rfind("head.s", 0) == 0) {
            const std::string inst = prefix.substr(0, 7);
            if (std::find(seen_head.begin(), seen_head.end(), inst) == seen_head.end())
                seen_head.push_back(inst);
        }
    });
    s.fe_modules = static_cast<int>(seen_fe.size());
    s.heads = static_cast<int>(seen_head.size());
    return s;
}

template <typename S>
struct ForwardResultT {
    FeaturePyramidT<S> pyr_p, pyr_q;
    PredictionT<S> pred;
};

using ForwardResult = ForwardResultT<float>;

// Run the full network on one frame pair. The same binder (hence the same
// parameters) serves both pyramids and the predictor; per-frame sampling
// streams are derived from the seed.
template <typename S>
ForwardResultT<S> run_model(TapeT<S>& t, ParamBinderT<S>& p, const ModelConfig& cfg,
                            std::span<const Vec3> frame_p, std::span<const Vec3> frame_q,
                            uint64_t seed) {
    ForwardResultT<S> r;
    r.pyr_p = extract_pyramid(t, p, frame_p, cfg, mix_seed(seed, 1));
    r.pyr_q = extract_pyramid(t, p, frame_q, cfg, mix_seed(seed, 2));
    r.pred = forward_pass(t, p, r.pyr_p, r.pyr_q, cfg);
    return r;
}

}  // namespace sceneflow
