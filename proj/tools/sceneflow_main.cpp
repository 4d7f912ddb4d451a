#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sceneflow/config.hpp"
#include "sceneflow/error.hpp"
#include "sceneflow/scene_io.hpp"
#include "sceneflow/train.hpp"

namespace sf = sceneflow;

namespace {

sf::Sampler parse_sampler(const std::string& name) {
    if (name == "rs") return sf::Sampler::kRandom;
    if (name == "fps") return sf::Sampler::kFarthest;
    throw sf::ContractError("sampler must be 'rs' or 'fps', got '" + name + "'");
}

std::vector<sf::ScenePair> load_scene_dir(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".sfpc")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw sf::ContractError("no .sfpc scenes in " + dir);
    std::vector<sf::ScenePair> scenes;
    scenes.reserve(files.size());
    for (const std::string& f : files) scenes.push_back(sf::read_scene(f));
    return scenes;
}

sf::TrainConfig config_or_defaults(const std::string& path) {
    if (path.empty()) {
        sf::ConfigMap empty = sf::ConfigMap::parse_text("", "<defaults>");
        return sf::TrainConfig::from_map(empty);
    }
    return sf::TrainConfig::from_file(path);
}

void print_report(const sf::EvalReport& rep) {
    std::printf("scenes,%zu\n", rep.scenes);
    std::printf("points,%zu\n", rep.metrics.count);
    std::printf("epe3d,%.6f\n", rep.metrics.epe3d);
    std::printf("acc3ds,%.6f\n", rep.metrics.acc3d_strict);
    std::printf("acc3dr,%.6f\n", rep.metrics.acc3d_relax);
    std::printf("points_noc,%zu\n", rep.metrics.count_noc);
    std::printf("epe3d_noc,%.6f\n", rep.metrics.epe3d_noc);
    std::printf("acc3ds_noc,%.6f\n", rep.metrics.acc3d_strict_noc);
    std::printf("acc3dr_noc,%.6f\n", rep.metrics.acc3d_relax_noc);
    std::printf("runtime_ms,%.3f\n", rep.runtime_ms);
    std::printf("peak_bytes,%zu\n", rep.peak_rss_bytes);
}

std::vector<size_t> parse_density_list(const std::string& csv) {
    std::vector<size_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(static_cast<size_t>(std::stoull(item)));
    if (out.empty()) throw sf::ContractError("empty density list");
    return out;
}

std::vector<sf::Sampler> parse_sampler_list(const std::string& csv) {
    std::vector<sf::Sampler> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(parse_sampler(item));
    if (out.empty()) throw sf::ContractError("empty sampler list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"point cloud scene flow: data generation, training, evaluation, benchmarking"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write synthetic scene pairs to a directory");
    std::string gen_spec, gen_out;
    int gen_count = 10;
    uint64_t gen_seed = 1;
    gen->add_option("--spec", gen_spec, "key=value file with synth.* settings");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--count", gen_count, "number of scene pairs");
    gen->add_option("--seed", gen_seed, "base seed");

    // train
    auto* tr = app.add_subcommand("train", "train a model from a config file");
    std::string tr_config, tr_out;
    tr->add_option("--config", tr_config, "key=value training config")->required();
    tr->add_option("--out", tr_out, "checkpoint output path")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a scene directory");
    std::string ev_ckpt, ev_data, ev_sampler = "rs", ev_config;
    int ev_kp = 0;
    uint64_t ev_seed = 1;
    bool ev_oracle = false;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--data", ev_data, "directory of .sfpc scenes")->required();
    ev->add_option("--sampler", ev_sampler, "rs or fps");
    ev->add_option("--kp", ev_kp, "neighborhood size (default: 20 rs, 16 fps)");
    ev->add_option("--config", ev_config, "config describing the checkpointed model");
    ev->add_option("--seed", ev_seed, "sampling seed");
    ev->add_flag("--oracle", ev_oracle, "score ground truth against itself");

    // infer
    auto* in = app.add_subcommand("infer", "predict flow for one scene pair");
    std::string in_ckpt, in_scene, in_out, in_sampler = "rs", in_config;
    int in_kp = 0;
    uint64_t in_seed = 1;
    in->add_option("--ckpt", in_ckpt, "checkpoint path")->required();
    in->add_option("--in", in_scene, "scene pair file")->required();
    in->add_option("--out", in_out, "flow output file")->required();
    in->add_option("--sampler", in_sampler, "rs or fps");
    in->add_option("--kp", in_kp, "neighborhood size (default: 20 rs, 16 fps)");
    in->add_option("--config", in_config, "config describing the checkpointed model");
    in->add_option("--seed", in_seed, "sampling seed");

    // bench
    auto* be = app.add_subcommand("bench", "accuracy/runtime/memory sweep over input densities");
    std::string be_ckpt, be_densities = "8192", be_samplers = "rs", be_csv, be_config;
    int be_scenes = 2;
    uint64_t be_seed = 1;
    be->add_option("--ckpt", be_ckpt, "checkpoint path")->required();
    be->add_option("--densities", be_densities, "comma-separated point counts, ascending");
    be->add_option("--samplers", be_samplers, "comma-separated subset of rs,fps");
    be->add_option("--csv", be_csv, "output CSV path")->required();
    be->add_option("--config", be_config, "config describing the checkpointed model");
    be->add_option("--scenes", be_scenes, "scenes per sweep cell");
    be->add_option("--seed", be_seed, "base seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            sf::TrainConfig cfg = config_or_defaults(gen_spec);
            std::filesystem::create_directories(gen_out);
            for (int i = 0; i < gen_count; ++i) {
                const sf::ScenePair pair =
                    sf::generate_pair(cfg.synth, sf::mix_seed(gen_seed, static_cast<uint64_t>(i)));
                char name[32];
                std::snprintf(name, sizeof(name), "scene_%04d.sfpc", i);
                sf::write_scene((std::filesystem::path(gen_out) / name).string(), pair);
            }
            std::printf("wrote %d scene pairs to %s\n", gen_count, gen_out.c_str());
        } else if (*tr) {
            const sf::TrainConfig cfg = sf::TrainConfig::from_file(tr_config);
            const sf::TrainResult res = sf::train(cfg, tr_out);
            std::printf("iterations,%d\nfinal_loss,%.6f\ncheckpoint,%s\n", res.iterations,
                        res.final_loss, tr_out.c_str());
        } else if (*ev) {
            sf::TrainConfig cfg = config_or_defaults(ev_config);
            sf::EvalOptions opt;
            opt.sampler = parse_sampler(ev_sampler);
            opt.k_neighbors = ev_kp > 0 ? ev_kp : (opt.sampler == sf::Sampler::kRandom ? 20 : 16);
            opt.seed = ev_seed;
            opt.oracle_mode = ev_oracle;
            sf::ParamStore params = sf::build_params<float>(cfg.model, cfg.seed);
            sf::load_checkpoint(params, ev_ckpt);
            const sf::EvalReport rep = sf::evaluate(params, cfg.model, load_scene_dir(ev_data), opt);
            print_report(rep);
        } else if (*in) {
            sf::TrainConfig cfg = config_or_defaults(in_config);
            cfg.model.scale.sampler = parse_sampler(in_sampler);
            cfg.model.scale.k_neighbors =
                in_kp > 0 ? in_kp : (cfg.model.scale.sampler == sf::Sampler::kRandom ? 20 : 16);
            sf::ParamStore params = sf::build_params<float>(cfg.model, cfg.seed);
            sf::load_checkpoint(params, in_ckpt);
            const sf::ScenePair pair = sf::read_scene(in_scene);
            sf::ModelConfig mc = cfg.model;
            if (pair.frame_p.size() >= 8192) {
                const sf::ScaleConfig adapted =
                    sf::adaptive_scale_resolutions(pair.frame_p.size(), mc.scale.sampler);
                mc.scale.resolutions = adapted.resolutions;
            }
            const std::vector<sf::Vec3> flow = sf::infer_flow(params, mc, pair, in_seed);
            sf::write_flow(in_out, flow);
            std::printf("wrote %zu flow vectors to %s\n", flow.size(), in_out.c_str());
        } else if (*be) {
            sf::TrainConfig cfg = config_or_defaults(be_config);
            sf::ParamStore params = sf::build_params<float>(cfg.model, cfg.seed);
            sf::load_checkpoint(params, be_ckpt);
            const std::vector<sf::BenchRow> rows =
                sf::benchmark_density(params, cfg.model, parse_density_list(be_densities),
                                      parse_sampler_list(be_samplers), be_scenes, be_seed);
            sf::write_bench_csv(be_csv, rows);
            std::printf("wrote %zu rows to %s\n", rows.size(), be_csv.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
