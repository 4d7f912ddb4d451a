#include "sceneflow/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "sceneflow/error.hpp"

namespace sceneflow {
namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

ConfigMap ConfigMap::parse_text(const std::string& text, const std::string& origin) {
    ConfigMap cfg;
    cfg.origin_ = origin;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(origin + ":" + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw FormatError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (!cfg.values_.emplace(key, value).second)
            throw FormatError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    return cfg;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path + ": cannot open config file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_text(text, path);
}

std::string ConfigMap::get_str(const std::string& key, const std::string& fallback) {
    consumed_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int64_t ConfigMap::get_int(const std::string& key, int64_t fallback) {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    size_t used = 0;
    int64_t v = 0;
    try {
        v = std::stoll(it->second, &used);
    } catch (const std::exception&) {
        throw FormatError(origin_ + ": key '" + key + "': not an integer: '" + it->second + "'");
    }
    if (used != it->second.size())
        throw FormatError(origin_ + ": key '" + key + "': not an integer: '" + it->second + "'");
    return v;
}

double ConfigMap::get_f64(const std::string& key, double fallback) {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(it->second, &used);
    } catch (const std::exception&) {
        throw FormatError(origin_ + ": key '" + key + "': not a number: '" + it->second + "'");
    }
    if (used != it->second.size())
        throw FormatError(origin_ + ": key '" + key + "': not a number: '" + it->second + "'");
    return v;
}

float ConfigMap::get_f32(const std::string& key, float fallback) {
    return static_cast<float>(get_f64(key, static_cast<double>(fallback)));
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
    consumed_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw FormatError(origin_ + ": key '" + key + "': not a boolean: '" + v + "'");
}

void ConfigMap::finish() const {
    for (const auto& [key, value] : values_) {
        if (!consumed_.count(key))
            throw FormatError(origin_ + ": unknown key '" + key + "'");
    }
}

void TrainConfig::validate() const {
    model.validate();
    synth.validate();
    if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
    if (scenes_per_epoch < 1) throw ContractError("TrainConfig: scenes_per_epoch must be >= 1");
    if (batch_size != 1) throw ContractError("TrainConfig: only batch_size 1 is supported");
    if (lr0 <= 0.f) throw ContractError("TrainConfig: lr0 must be positive");
    if (decay_rate <= 0.f || decay_rate > 1.f)
        throw ContractError("TrainConfig: decay_rate must be in (0, 1]");
    if (decay_interval < 0) throw ContractError("TrainConfig: negative decay_interval");
    if (checkpoint_every < 0) throw ContractError("TrainConfig: negative checkpoint_every");
    if (augment && (augment_rotation_deg < 0.f || augment_translation < 0.f))
        throw ContractError("TrainConfig: negative augmentation ranges");
}

int TrainConfig::effective_decay_interval() const {
    if (decay_interval > 0) return decay_interval;
    return model.scale.sampler == Sampler::kFarthest ? 20 : 60;
}

TrainConfig TrainConfig::from_map(ConfigMap& cfg) {
    TrainConfig tc;

    const std::string sampler = cfg.get_str("model.sampler", "rs");
    if (sampler == "rs") tc.model.scale.sampler = Sampler::kRandom;
    else if (sampler == "fps") tc.model.scale.sampler = Sampler::kFarthest;
    else throw FormatError("model.sampler must be 'rs' or 'fps', got '" + sampler + "'");
    tc.model.scale = ScaleConfig::defaults_for(tc.model.scale.sampler);
    tc.model.scale.k_neighbors = static_cast<int>(cfg.get_int("model.kp", tc.model.scale.k_neighbors));
    for (int k = 0; k < 3; ++k) {
        const std::string key = "model.l" + std::to_string(k + 1);
        tc.model.scale.resolutions[static_cast<size_t>(k)] = static_cast<int>(
            cfg.get_int(key, tc.model.scale.resolutions[static_cast<size_t>(k)]));
    }
    for (int k = 0; k < 4; ++k) {
        const std::string key = "model.c" + std::to_string(k);
        tc.model.scale.channels[static_cast<size_t>(k)] = static_cast<int>(
            cfg.get_int(key, tc.model.scale.channels[static_cast<size_t>(k)]));
    }
    tc.model.include_absolute_xyz = cfg.get_bool("model.include_absolute_xyz", tc.model.include_absolute_xyz);
    tc.model.edge_only = cfg.get_bool("model.edge_only", tc.model.edge_only);
    tc.model.enable_embed2 = cfg.get_bool("model.enable_embed2", tc.model.enable_embed2);
    tc.model.enable_bidirectional = cfg.get_bool("model.enable_bidirectional", tc.model.enable_bidirectional);
    tc.model.residual_heads = cfg.get_bool("model.residual_heads", tc.model.residual_heads);
    tc.model.l0_head = cfg.get_bool("model.l0_head", tc.model.l0_head);

    tc.synth.object_count = static_cast<int>(cfg.get_int("synth.objects", tc.synth.object_count));
    const std::string kinds = cfg.get_str("synth.kinds", "");
    if (!kinds.empty()) {
        tc.synth.kinds.clear();
        for (const std::string& k : split_csv(kinds)) {
            if (k == "plane") tc.synth.kinds.push_back(ObjectKind::kPlane);
            else if (k == "box") tc.synth.kinds.push_back(ObjectKind::kBox);
            else if (k == "blob") tc.synth.kinds.push_back(ObjectKind::kBlob);
            else throw FormatError("synth.kinds: unknown kind '" + k + "'");
        }
    }
    tc.synth.points_per_object = static_cast<int>(cfg.get_int("synth.points_per_object", tc.synth.points_per_object));
    tc.synth.rotation_deg = cfg.get_f32("synth.rotation_deg", tc.synth.rotation_deg);
    tc.synth.translation_range = cfg.get_f32("synth.translation", tc.synth.translation_range);
    tc.synth.occlusion_fraction = cfg.get_f32("synth.occlusion", tc.synth.occlusion_fraction);
    tc.synth.resample_independently = cfg.get_bool("synth.resample", tc.synth.resample_independently);
    tc.synth.depth_limit = cfg.get_f32("synth.depth_limit", tc.synth.depth_limit);

    tc.epochs = static_cast<int>(cfg.get_int("train.epochs", tc.epochs));
    tc.scenes_per_epoch = static_cast<int>(cfg.get_int("train.scenes_per_epoch", tc.scenes_per_epoch));
    tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", tc.batch_size));
    tc.train_points = static_cast<size_t>(cfg.get_int("train.points", static_cast<int64_t>(tc.train_points)));
    tc.lr0 = cfg.get_f32("train.lr0", tc.lr0);
    tc.decay_rate = cfg.get_f32("train.decay_rate", tc.decay_rate);
    tc.decay_interval = static_cast<int>(cfg.get_int("train.decay_interval", tc.decay_interval));
    tc.augment = cfg.get_bool("train.augment", tc.augment);
    tc.augment_rotation_deg = cfg.get_f32("train.augment_rotation_deg", tc.augment_rotation_deg);
    tc.augment_translation = cfg.get_f32("train.augment_translation", tc.augment_translation);
    tc.seed = static_cast<uint64_t>(cfg.get_int("train.seed", static_cast<int64_t>(tc.seed)));
    tc.checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every", tc.checkpoint_every));
    tc.data_dir = cfg.get_str("train.data_dir", tc.data_dir);
    tc.log_path = cfg.get_str("train.log", tc.log_path);

    cfg.finish();
    tc.validate();
    return tc;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    ConfigMap cfg = ConfigMap::parse_file(path);
    return from_map(cfg);
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
    if (epoch < 0) throw ContractError("learning_rate_at: negative epoch");
    const int steps = epoch / cfg.effective_decay_interval();
    return static_cast<double>(cfg.lr0) *
           std::pow(static_cast<double>(cfg.decay_rate), static_cast<double>(steps));
}

}  // namespace sceneflow
