#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sceneflow/config.hpp"
#include "sceneflow/metrics.hpp"
#include "sceneflow/model.hpp"
#include "sceneflow/synthetic.hpp"

namespace sceneflow {

struct TrainResult {
    std::vector<double> losses;  // one entry per iteration
    std::vector<double> lrs;
    int iterations = 0;
    double final_loss = 0.0;
};

// Fixed pool of training scenes: loaded from cfg.data_dir when set, otherwise
// generated from cfg.synth with seeds derived from cfg.seed.
std::vector<ScenePair> load_training_pool(const TrainConfig& cfg);

// Full training loop over a prepared parameter store: per iteration one scene
// is augmented, subsampled to the training resolution, pushed through the
// network, and stepped with Adam under the exponential LR schedule. Appends a
// `iter,loss,lr,ms` CSV log when cfg.log_path is set and snapshots the store
// to checkpoint_path (plus `.e<epoch>` copies when cfg.checkpoint_every > 0).
TrainResult train_loop(const TrainConfig& cfg, const std::vector<ScenePair>& pool,
                       ParamStore& params, const std::string& checkpoint_path);

// Convenience wrapper: build params from cfg, load the pool, run the loop.
TrainResult train(const TrainConfig& cfg, const std::string& checkpoint_path);

struct EvalOptions {
    Sampler sampler = Sampler::kRandom;
    int k_neighbors = 20;
    uint64_t seed = 1;
    bool oracle_mode = false;  // score ground truth against itself (plumbing check)
    bool adapt_resolutions = true;  // pick scale sizes from each scene's density
};

struct EvalReport {
    MetricsReport metrics;
    double runtime_ms = 0.0;  // inference only, summed over scenes
    size_t peak_rss_bytes = 0;
    size_t scenes = 0;
};

// Metrics over every input point of every scene (concatenated before
// averaging), plus the non-occluded variants when masks are present.
EvalReport evaluate(const ParamStore& params, const ModelConfig& cfg,
                    const std::vector<ScenePair>& scenes, const EvalOptions& opt);

// Predicted flow for one scene at full input resolution.
std::vector<Vec3> infer_flow(const ParamStore& params, const ModelConfig& cfg,
                             const ScenePair& pair, uint64_t seed);

struct BenchRow {
    size_t density = 0;
    Sampler sampler = Sampler::kRandom;
    double epe3d = 0.0;
    double acc3dr = 0.0;
    double ms = 0.0;
    size_t bytes = 0;
    std::string status = "ok";
};

// Accuracy/runtime/memory sweep across input densities. Out-of-memory cells
// become rows with status "oom" instead of crashing the sweep.
std::vector<BenchRow> benchmark_density(const ParamStore& params, const ModelConfig& base,
                                        const std::vector<size_t>& densities,
                                        const std::vector<Sampler>& samplers,
                                        int scenes_per_cell, uint64_t seed);

// CSV with header `density,sampler,epe3d,acc3dr,ms,bytes,status`.
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);

// Wall-clock milliseconds for the sampling step alone on a random cloud of n
// points (m picks), best of `repeats` runs.
double measure_sampling_ms(Sampler sampler, size_t n, size_t m, int repeats, uint64_t seed);

// Least-squares slope of log(y) against log(x); the growth exponent when the
// relationship is polynomial.
double fit_loglog_slope(const std::vector<std::pair<double, double>>& xy);

}  // namespace sceneflow
