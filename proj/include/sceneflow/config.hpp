#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "sceneflow/model_config.hpp"
#include "sceneflow/synthetic.hpp"

namespace sceneflow {

// Plain key=value text. '#' starts a comment, blank lines are skipped,
// whitespace around keys and values is trimmed. Every key must be consumed by
// a typed getter; leftovers are reported so typos fail loudly.
class ConfigMap {
  public:
    static ConfigMap parse_text(const std::string& text, const std::string& origin);
    static ConfigMap parse_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get_str(const std::string& key, const std::string& fallback);
    int64_t get_int(const std::string& key, int64_t fallback);
    double get_f64(const std::string& key, double fallback);
    float get_f32(const std::string& key, float fallback);
    bool get_bool(const std::string& key, bool fallback);

    // Throws if any parsed key was never requested.
    void finish() const;

  private:
    std::string origin_;
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

// Everything the training loop needs; model hyper-parameters ride along so a
// single file describes a full run.
struct TrainConfig {
    ModelConfig model;
    SyntheticSceneSpec synth;

    int epochs = 1;
    int scenes_per_epoch = 10;
    int batch_size = 1;          // scenes per optimizer step
    size_t train_points = 8192;  // per-frame resolution after subsampling
    float lr0 = 0.001f;
    float decay_rate = 0.8f;
    int decay_interval = 0;  // 0 = pick by sampler: 60 for RS, 20 for FPS
    bool augment = true;
    float augment_rotation_deg = 5.f;
    float augment_translation = 0.1f;
    uint64_t seed = 1;
    int checkpoint_every = 0;  // epochs between snapshots, 0 = final only
    std::string data_dir;      // read scenes from disk when set, else generate
    std::string log_path;      // CSV training log, empty = no log

    void validate() const;
    int effective_decay_interval() const;

    static TrainConfig from_map(ConfigMap& cfg);
    static TrainConfig from_file(const std::string& path);
};

// lr0 * decay^floor(epoch / interval)
double learning_rate_at(const TrainConfig& cfg, int epoch);

}  // namespace sceneflow
