#include "sceneflow/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <new>
#include <sstream>

#include "sceneflow/error.hpp"
#include "sceneflow/sampling.hpp"
#include "sceneflow/scene_io.hpp"
#include "sceneflow/sysmem.hpp"

namespace sceneflow {
namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

std::vector<Vec3> flow_values(const TapeT<float>& t, Var flow) {
    const TensorT<float>& v = t.value(flow);
    if (v.last_dim() != 3) throw DimensionError("flow_values: expected 3 columns");
    std::vector<Vec3> out(static_cast<size_t>(v.rows()));
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = {v.data[i * 3 + 0], v.data[i * 3 + 1], v.data[i * 3 + 2]};
    return out;
}

ScenePair prepare_iteration_pair(const TrainConfig& cfg, const ScenePair& base, int epoch,
                                 int scene_idx, size_t pool_size) {
    const uint64_t step = static_cast<uint64_t>(epoch) * pool_size + static_cast<uint64_t>(scene_idx);
    ScenePair pair = base;
    if (cfg.augment) {
        AugmentParams ap{cfg.augment_rotation_deg, cfg.augment_translation};
        augment(pair, ap, mix_seed(cfg.seed, 0xa100000 + step));
    }
    const size_t np = std::min(cfg.train_points, pair.frame_p.size());
    const size_t nq = std::min(cfg.train_points, pair.frame_q.size());
    if (np < pair.frame_p.size() || nq < pair.frame_q.size())
        pair = subsample_pair(pair, np, nq, mix_seed(cfg.seed, 0x5b00000 + step));
    return pair;
}

}  // namespace

std::vector<ScenePair> load_training_pool(const TrainConfig& cfg) {
    std::vector<ScenePair> pool;
    if (!cfg.data_dir.empty()) {
        std::vector<std::string> files;
        for (const auto& entry : std::filesystem::directory_iterator(cfg.data_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".sfpc")
                files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw ContractError("load_training_pool: no .sfpc scenes in " + cfg.data_dir);
        for (const std::string& f : files) {
            ScenePair pair = read_scene(f);
            if (pair.gt_flow.empty())
                throw ContractError("load_training_pool: scene lacks ground truth: " + f);
            pool.push_back(std::move(pair));
        }
    } else {
        pool.reserve(static_cast<size_t>(cfg.scenes_per_epoch));
        for (int i = 0; i < cfg.scenes_per_epoch; ++i)
            pool.push_back(generate_pair(cfg.synth, mix_seed(cfg.seed, 0xd000000 + static_cast<uint64_t>(i))));
    }
    return pool;
}

TrainResult train_loop(const TrainConfig& cfg, const std::vector<ScenePair>& pool,
                       ParamStore& params, const std::string& checkpoint_path) {
    cfg.validate();
    if (pool.empty()) throw ContractError("train_loop: empty scene pool");

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path, std::ios::trunc);
        if (!log) throw FormatError(cfg.log_path + ": cannot open training log");
        log << "iter,loss,lr,ms\n";
    }

    AdamT<float> adam;
    TrainResult result;
    int iter = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = learning_rate_at(cfg, epoch);
        for (size_t si = 0; si < pool.size(); ++si, ++iter) {
            const auto t0 = std::chrono::steady_clock::now();
            const ScenePair pair =
                prepare_iteration_pair(cfg, pool[si], epoch, static_cast<int>(si), pool.size());

            double loss_value = 0.0;
            try {
                TapeT<float> tape;
                ParamBinderT<float> bind(tape, params);
                ForwardResult fwd = run_model(tape, bind, cfg.model, pair.frame_p.points,
                                              pair.frame_q.points,
                                              mix_seed(cfg.seed, 0xf000000 + static_cast<uint64_t>(iter)));
                const auto gt = gather_gt_pyramid(fwd.pyr_p, std::span<const Vec3>(pair.gt_flow));
                Var loss = multiscale_loss(tape, fwd.pred.flow, gt);
                loss_value = static_cast<double>(tape.value(loss).data.at(0));
                if (!std::isfinite(loss_value))
                    throw DivergenceError("training diverged at iteration " + std::to_string(iter) +
                                          ": loss is not finite");
                tape.backward(loss);
                adam.step(params, bind.gradients(), static_cast<float>(lr));
            } catch (const NumericError& e) {
                throw DivergenceError("training diverged at iteration " + std::to_string(iter) +
                                      ": " + e.what());
            }

            result.losses.push_back(loss_value);
            result.lrs.push_back(lr);
            if (log)
                log << iter << ',' << loss_value << ',' << lr << ',' << elapsed_ms(t0) << '\n';
        }
        if (!checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(params, checkpoint_path + ".e" + std::to_string(epoch + 1));
    }

    result.iterations = iter;
    result.final_loss = result.losses.empty() ? 0.0 : result.losses.back();
    if (!checkpoint_path.empty()) save_checkpoint(params, checkpoint_path);
    return result;
}

TrainResult train(const TrainConfig& cfg, const std::string& checkpoint_path) {
    cfg.validate();
    ParamStore params = build_params<float>(cfg.model, cfg.seed);
    const std::vector<ScenePair> pool = load_training_pool(cfg);
    return train_loop(cfg, pool, params, checkpoint_path);
}

std::vector<Vec3> infer_flow(const ParamStore& params, const ModelConfig& cfg,
                             const ScenePair& pair, uint64_t seed) {
    TapeT<float> tape;
    tape.set_recording(false);
    ParamBinderT<float> bind(tape, params);
    ForwardResult fwd =
        run_model(tape, bind, cfg, pair.frame_p.points, pair.frame_q.points, seed);
    return flow_values(tape, fwd.pred.flow[0]);
}

EvalReport evaluate(const ParamStore& params, const ModelConfig& cfg,
                    const std::vector<ScenePair>& scenes, const EvalOptions& opt) {
    if (scenes.empty()) throw ContractError("evaluate: no scenes");

    std::vector<Vec3> all_pred, all_gt;
    std::vector<uint8_t> all_occ;
    bool any_mask = false;
    for (const ScenePair& s : scenes)
        if (!s.frame_p.occluded.empty()) any_mask = true;

    reset_peak_rss();
    EvalReport rep;
    for (size_t si = 0; si < scenes.size(); ++si) {
        const ScenePair& pair = scenes[si];
        if (pair.gt_flow.empty())
            throw ContractError("evaluate: scene " + std::to_string(si) + " lacks ground truth");

        std::vector<Vec3> pred;
        if (opt.oracle_mode) {
            pred = pair.gt_flow;
        } else {
            ModelConfig mc = cfg;
            mc.scale.sampler = opt.sampler;
            mc.scale.k_neighbors = opt.k_neighbors;
            if (opt.adapt_resolutions && pair.frame_p.size() >= 8192) {
                const ScaleConfig adapted =
                    adaptive_scale_resolutions(pair.frame_p.size(), opt.sampler);
                mc.scale.resolutions = adapted.resolutions;
            }
            const auto t0 = std::chrono::steady_clock::now();
            pred = infer_flow(params, mc, pair, mix_seed(opt.seed, 0xe000000 + si));
            rep.runtime_ms += elapsed_ms(t0);
        }

        all_pred.insert(all_pred.end(), pred.begin(), pred.end());
        all_gt.insert(all_gt.end(), pair.gt_flow.begin(), pair.gt_flow.end());
        if (any_mask) {
            if (pair.frame_p.occluded.empty())
                all_occ.insert(all_occ.end(), pair.frame_p.size(), uint8_t{0});
            else
                all_occ.insert(all_occ.end(), pair.frame_p.occluded.begin(),
                               pair.frame_p.occluded.end());
        }
        ++rep.scenes;
    }

    rep.metrics = compute_metrics(all_pred, all_gt, all_occ);
    rep.peak_rss_bytes = peak_rss_bytes();
    return rep;
}

std::vector<BenchRow> benchmark_density(const ParamStore& params, const ModelConfig& base,
                                        const std::vector<size_t>& densities,
                                        const std::vector<Sampler>& samplers,
                                        int scenes_per_cell, uint64_t seed) {
    if (densities.empty() || samplers.empty())
        throw ContractError("benchmark_density: empty sweep");
    for (size_t i = 1; i < densities.size(); ++i)
        if (densities[i] <= densities[i - 1])
            throw ContractError("benchmark_density: densities must be ascending");
    if (scenes_per_cell < 1) throw ContractError("benchmark_density: scenes_per_cell must be >= 1");

    std::vector<BenchRow> rows;
    for (size_t density : densities) {
        for (Sampler sampler : samplers) {
            BenchRow row;
            row.density = density;
            row.sampler = sampler;
            try {
                SyntheticSceneSpec spec;
                spec.object_count = 3;
                spec.points_per_object =
                    static_cast<int>((density + spec.object_count - 1) / spec.object_count) + 8;
                ModelConfig mc = base;
                const ScaleConfig adapted = adaptive_scale_resolutions(density, sampler);
                mc.scale.sampler = adapted.sampler;
                mc.scale.k_neighbors = adapted.k_neighbors;
                mc.scale.resolutions = adapted.resolutions;

                std::vector<Vec3> all_pred, all_gt;
                reset_peak_rss();
                for (int sc = 0; sc < scenes_per_cell; ++sc) {
                    const uint64_t sseed = mix_seed(seed, 0xbe0000 + rows.size() * 64 + static_cast<uint64_t>(sc));
                    ScenePair pair = generate_pair(spec, sseed);
                    pair = subsample_pair(pair, density, density, mix_seed(sseed, 1));
                    const auto t0 = std::chrono::steady_clock::now();
                    std::vector<Vec3> pred = infer_flow(params, mc, pair, mix_seed(sseed, 2));
                    row.ms += elapsed_ms(t0);
                    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
                    all_gt.insert(all_gt.end(), pair.gt_flow.begin(), pair.gt_flow.end());
                }
                row.ms /= scenes_per_cell;
                const MetricsReport m = compute_metrics(all_pred, all_gt, {});
                row.epe3d = m.epe3d;
                row.acc3dr = m.acc3d_relax;
                row.bytes = peak_rss_bytes();
            } catch (const std::bad_alloc&) {
                row.status = "oom";
                row.epe3d = row.acc3dr = row.ms = 0.0;
                row.bytes = 0;
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out << "density,sampler,epe3d,acc3dr,ms,bytes,status\n";
    for (const BenchRow& r : rows)
        out << r.density << ',' << sampler_name(r.sampler) << ',' << r.epe3d << ',' << r.acc3dr
            << ',' << r.ms << ',' << r.bytes << ',' << r.status << '\n';
    if (!out) throw FormatError(path + ": write failed");
}

double measure_sampling_ms(Sampler sampler, size_t n, size_t m, int repeats, uint64_t seed) {
    if (repeats < 1) throw ContractError("measure_sampling_ms: repeats must be >= 1");
    Rng rng(mix_seed(seed, 0x7154));
    std::vector<Vec3> cloud(n);
    for (Vec3& p : cloud)
        p = {rng.uniform(-10.f, 10.f), rng.uniform(-10.f, 10.f), rng.uniform(-10.f, 10.f)};

    double best = 0.0;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const SampleIndices s = sample_points(cloud, m, sampler, mix_seed(seed, static_cast<uint64_t>(r)));
        const double ms = elapsed_ms(t0);
        if (s.indices.size() != m) throw ContractError("measure_sampling_ms: sampler short output");
        if (r == 0 || ms < best) best = ms;
    }
    return best;
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& xy) {
    if (xy.size() < 2) throw ContractError("fit_loglog_slope: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : xy) {
        if (x <= 0.0 || y <= 0.0) throw ContractError("fit_loglog_slope: values must be positive");
        const double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(xy.size());
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) throw ContractError("fit_loglog_slope: degenerate x values");
    return (n * sxy - sx * sy) / denom;
}

}  // namespace sceneflow
