#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "sceneflow/config.hpp"
#include "sceneflow/error.hpp"
#include "sceneflow/metrics.hpp"
#include "sceneflow/model.hpp"
#include "sceneflow/rng.hpp"
#include "sceneflow/scene_io.hpp"
#include "sceneflow/synthetic.hpp"
#include "sceneflow/train.hpp"

using namespace sceneflow;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "sceneflow_harness_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// Definitional re-statement of the metrics: mean L2 endpoint error, plus the
// fraction of points under an absolute OR relative error bound (strict `<`,
// relative part only for nonzero true flow). Written as a plain loop so the
// library implementation is checked against an independent reading.
struct LoopMetrics {
    double epe = 0, strict = 0, relax = 0;
    double epe_noc = 0, strict_noc = 0, relax_noc = 0;
    size_t n = 0, n_noc = 0;
};

LoopMetrics loop_oracle(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                        const std::vector<uint8_t>& occ) {
    LoopMetrics o;
    o.n = pred.size();
    size_t s = 0, r = 0, s_noc = 0, r_noc = 0;
    double sum = 0, sum_noc = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double dx = static_cast<double>(pred[i].x) - static_cast<double>(gt[i].x);
        const double dy = static_cast<double>(pred[i].y) - static_cast<double>(gt[i].y);
        const double dz = static_cast<double>(pred[i].z) - static_cast<double>(gt[i].z);
        const double err = std::sqrt(dx * dx + dy * dy + dz * dz);
        const double mag = std::sqrt(static_cast<double>(gt[i].x) * gt[i].x +
                                     static_cast<double>(gt[i].y) * gt[i].y +
                                     static_cast<double>(gt[i].z) * gt[i].z);
        const bool hit_s = err < 0.05 || (mag > 0.0 && err / mag < 0.05);
        const bool hit_r = err < 0.1 || (mag > 0.0 && err / mag < 0.1);
        sum += err;
        s += hit_s;
        r += hit_r;
        if (occ.empty() || occ[i] == 0) {
            sum_noc += err;
            s_noc += hit_s;
            r_noc += hit_r;
            ++o.n_noc;
        }
    }
    o.epe = sum / static_cast<double>(o.n);
    o.strict = static_cast<double>(s) / static_cast<double>(o.n);
    o.relax = static_cast<double>(r) / static_cast<double>(o.n);
    if (o.n_noc > 0) {
        o.epe_noc = sum_noc / static_cast<double>(o.n_noc);
        o.strict_noc = static_cast<double>(s_noc) / static_cast<double>(o.n_noc);
        o.relax_noc = static_cast<double>(r_noc) / static_cast<double>(o.n_noc);
    }
    return o;
}

// Tiny but complete training setup: three small objects, a three-level
// pyramid over 32 training points, narrow channels. Fast enough to run the
// loop many times in one test binary.
TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.model.scale.resolutions = {16, 8, 4};
    cfg.model.scale.channels = {4, 8, 8, 16};
    cfg.model.scale.k_neighbors = 4;
    cfg.synth.points_per_object = 24;
    cfg.synth.rotation_deg = 5.f;
    cfg.synth.translation_range = 0.2f;
    cfg.epochs = 2;
    cfg.scenes_per_epoch = 2;
    cfg.train_points = 32;
    cfg.decay_rate = 0.5f;
    cfg.decay_interval = 1;
    cfg.seed = 7;
    return cfg;
}

bool same_store(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return false;
    auto ia = a.begin();
    for (auto ib = b.begin(); ib != b.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (ia->second.data != ib->second.data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("metrics match the definitional loop oracle on 1000 random instances") {
    Rng rng(mix_seed(1, 0x3e7));
    for (int round = 0; round < 1000; ++round) {
        const size_t n = 1 + rng.bounded(64);
        std::vector<Vec3> gt(n), pred(n);
        std::vector<uint8_t> occ;
        const bool with_mask = rng.bounded(2) == 0;
        if (with_mask) occ.resize(n);
        for (size_t i = 0; i < n; ++i) {
            // Mix zero and nonzero true flow so the relative term's zero
            // guard is exercised; errors straddle both thresholds.
            gt[i] = rng.bounded(5) == 0
                        ? Vec3{0, 0, 0}
                        : Vec3{rng.uniform(-1.f, 1.f), rng.uniform(-1.f, 1.f), rng.uniform(-1.f, 1.f)};
            const float e = rng.uniform(0.f, 0.2f);
            pred[i] = gt[i] + Vec3{e, rng.uniform(-0.05f, 0.05f), 0.f};
            if (with_mask) occ[i] = static_cast<uint8_t>(rng.bounded(2));
        }
        // A fully masked instance would leave no visible points; keep one.
        if (with_mask) occ[0] = 0;

        const MetricsReport got = compute_metrics(pred, gt, occ);
        const LoopMetrics want = loop_oracle(pred, gt, occ);
        REQUIRE(got.count == want.n);
        REQUIRE(got.count_noc == want.n_noc);
        REQUIRE(std::abs(got.epe3d - want.epe) < 1e-7);
        REQUIRE(std::abs(got.acc3d_strict - want.strict) < 1e-7);
        REQUIRE(std::abs(got.acc3d_relax - want.relax) < 1e-7);
        REQUIRE(std::abs(got.epe3d_noc - want.epe_noc) < 1e-7);
        REQUIRE(std::abs(got.acc3d_strict_noc - want.strict_noc) < 1e-7);
        REQUIRE(std::abs(got.acc3d_relax_noc - want.relax_noc) < 1e-7);
        // The relaxed bound is implied by the strict one.
        REQUIRE(got.acc3d_relax >= got.acc3d_strict);
        REQUIRE(got.acc3d_relax_noc >= got.acc3d_strict_noc);
        REQUIRE(got.epe3d >= 0.0);
        REQUIRE(got.acc3d_strict >= 0.0);
        REQUIRE(got.acc3d_relax <= 1.0);
    }
}

TEST_CASE("metric values pinned by hand arithmetic") {
    // Perfect prediction.
    const std::vector<Vec3> gt = {{0.5f, -1.f, 2.f}, {0, 0, 0}};
    MetricsReport m = compute_metrics(gt, gt, {});
    CHECK(m.epe3d == 0.0);
    CHECK(m.acc3d_strict == 1.0);
    CHECK(m.acc3d_relax == 1.0);
    CHECK(m.epe3d_noc == 0.0);

    // Single point, difference (0,3,4): the 3-4-5 triangle.
    m = compute_metrics({{0.f, 3.f, 4.f}}, {{0.f, 0.f, 0.f}}, {});
    CHECK(m.epe3d == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(m.acc3d_strict == 0.0);
    CHECK(m.acc3d_relax == 0.0);

    // Threshold strictness: an error of exactly 5% relative with a large
    // absolute error counts for neither strict bound (`<`, not `<=`), but the
    // relaxed absolute bound still accepts it. All values chosen to be exact
    // in floating point: 0.0625 / 1.25 rounds to the same double as 0.05.
    m = compute_metrics({{1.3125f, 0.f, 0.f}}, {{1.25f, 0.f, 0.f}}, {});
    CHECK(m.acc3d_strict == 0.0);
    CHECK(m.acc3d_relax == 1.0);

    // One of two points off by 0.2 m against a unit flow misses strict and
    // relaxed; the perfect one carries 50%.
    m = compute_metrics({{1.2f, 0.f, 0.f}, {0.f, 1.f, 0.f}}, {{1.f, 0.f, 0.f}, {0.f, 1.f, 0.f}}, {});
    CHECK(m.acc3d_strict == 0.5);
    CHECK(m.acc3d_relax == 0.5);
    CHECK(m.epe3d == doctest::Approx(0.1).epsilon(1e-6));

    // Zero true flow: only the absolute bounds apply, no division blow-up.
    m = compute_metrics({{0.04f, 0.f, 0.f}, {0.07f, 0.f, 0.f}}, {{0, 0, 0}, {0, 0, 0}}, {});
    CHECK(m.acc3d_strict == 0.5);   // 0.04 passes, 0.07 fails
    CHECK(m.acc3d_relax == 1.0);    // both under 0.1
    CHECK(std::isfinite(m.epe3d));

    // The mask restricts the `_noc` columns only.
    m = compute_metrics({{1.2f, 0.f, 0.f}, {0.f, 1.f, 0.f}}, {{1.f, 0.f, 0.f}, {0.f, 1.f, 0.f}},
                        {1, 0});
    CHECK(m.acc3d_strict == 0.5);
    CHECK(m.count_noc == 1);
    CHECK(m.acc3d_strict_noc == 1.0);
    CHECK(m.epe3d_noc == 0.0);

    CHECK_THROWS_AS(compute_metrics({{0, 0, 0}}, {{0, 0, 0}, {0, 0, 0}}, {}), DimensionError);
    CHECK_THROWS_AS(compute_metrics({{0, 0, 0}}, {{0, 0, 0}}, {0, 1}), DimensionError);
    CHECK_THROWS_AS(compute_metrics({}, {}, {}), SizeError);
}

TEST_CASE("learning-rate schedule matches a loop-multiply oracle up to epoch 1260") {
    TrainConfig rs = tiny_train_config();
    rs.decay_interval = 0;  // fall back to the sampler rule
    rs.model.scale.sampler = Sampler::kRandom;
    TrainConfig fps = rs;
    fps.model.scale.sampler = Sampler::kFarthest;
    CHECK(rs.effective_decay_interval() == 60);
    CHECK(fps.effective_decay_interval() == 20);
    TrainConfig fixed = rs;
    fixed.decay_interval = 7;
    CHECK(fixed.effective_decay_interval() == 7);

    for (const TrainConfig& cfg : {rs, fps, fixed}) {
        const int interval = cfg.effective_decay_interval();
        double expect = static_cast<double>(cfg.lr0);
        int steps_applied = 0;
        for (int e = 0; e <= 1260; ++e) {
            const int steps = e / interval;
            while (steps_applied < steps) {
                expect *= static_cast<double>(cfg.decay_rate);
                ++steps_applied;
            }
            const double got = learning_rate_at(cfg, e);
            REQUIRE(std::abs(got - expect) <= 1e-12 * expect);
        }
        CHECK(learning_rate_at(cfg, 0) == static_cast<double>(cfg.lr0));
        CHECK(learning_rate_at(cfg, interval - 1) == static_cast<double>(cfg.lr0));
    }
    CHECK_THROWS_AS(learning_rate_at(rs, -1), ContractError);
}

TEST_CASE("key=value config parsing: comments, whitespace, types, and loud failure modes") {
    ConfigMap cfg = ConfigMap::parse_text(
        "# full-line comment\n"
        "\n"
        "  name =  widget factory \n"
        "count = 42\n"
        "ratio = 0.125  # trailing comment\n"
        "flag_a = true\n"
        "flag_b = off\n",
        "inline");
    CHECK(cfg.has("name"));
    CHECK(!cfg.has("missing"));
    CHECK(cfg.get_str("name", "") == "widget factory");
    CHECK(cfg.get_int("count", -1) == 42);
    CHECK(cfg.get_f64("ratio", 0.0) == 0.125);
    CHECK(cfg.get_bool("flag_a", false) == true);
    CHECK(cfg.get_bool("flag_b", true) == false);
    CHECK(cfg.get_int("absent", 17) == 17);  // fallback
    CHECK_NOTHROW(cfg.finish());             // everything consumed

    // Unconsumed keys are typos and must be reported.
    ConfigMap leftover = ConfigMap::parse_text("real = 1\ntpyo = 2\n", "inline");
    leftover.get_int("real", 0);
    CHECK_THROWS_WITH_AS(leftover.finish(), doctest::Contains("unknown key 'tpyo'"), FormatError);

    CHECK_THROWS_AS(ConfigMap::parse_text("a=1\na=2\n", "inline"), FormatError);
    CHECK_THROWS_AS(ConfigMap::parse_text("no equals sign\n", "inline"), FormatError);
    CHECK_THROWS_AS(ConfigMap::parse_text("= value\n", "inline"), FormatError);

    ConfigMap bad = ConfigMap::parse_text("n = abc\nf = 1.5x\nb = maybe\n", "inline");
    CHECK_THROWS_AS(bad.get_int("n", 0), FormatError);
    CHECK_THROWS_AS(bad.get_f64("f", 0.0), FormatError);
    CHECK_THROWS_AS(bad.get_bool("b", false), FormatError);

    CHECK_THROWS_AS(ConfigMap::parse_file("/nonexistent/config.cfg"), FormatError);

    // Boolean spellings.
    ConfigMap bools = ConfigMap::parse_text("a=1\nb=yes\nc=on\nd=0\ne=no\nf=false\n", "inline");
    CHECK(bools.get_bool("a", false));
    CHECK(bools.get_bool("b", false));
    CHECK(bools.get_bool("c", false));
    CHECK(!bools.get_bool("d", true));
    CHECK(!bools.get_bool("e", true));
    CHECK(!bools.get_bool("f", true));
}

TEST_CASE("training config from key=value text sets model, scene, and loop fields") {
    ConfigMap cfg = ConfigMap::parse_text(
        "model.sampler = fps\n"
        "model.kp = 4\n"
        "model.l1 = 16\n"
        "model.l2 = 8\n"
        "model.l3 = 4\n"
        "model.c0 = 4\n"
        "model.c1 = 8\n"
        "model.c2 = 8\n"
        "model.c3 = 16\n"
        "synth.objects = 2\n"
        "synth.kinds = plane, box\n"
        "synth.points_per_object = 24\n"
        "train.epochs = 3\n"
        "train.points = 32\n"
        "train.decay_rate = 0.5\n"
        "train.seed = 9\n",
        "inline");
    const TrainConfig tc = TrainConfig::from_map(cfg);
    CHECK(tc.model.scale.sampler == Sampler::kFarthest);
    CHECK(tc.model.scale.k_neighbors == 4);
    CHECK(tc.model.scale.resolutions == std::array<int, 3>{16, 8, 4});
    CHECK(tc.model.scale.channels == std::array<int, 4>{4, 8, 8, 16});
    CHECK(tc.synth.object_count == 2);
    REQUIRE(tc.synth.kinds.size() == 2);
    CHECK(tc.synth.kinds[0] == ObjectKind::kPlane);
    CHECK(tc.synth.kinds[1] == ObjectKind::kBox);
    CHECK(tc.synth.points_per_object == 24);
    CHECK(tc.epochs == 3);
    CHECK(tc.train_points == 32);
    CHECK(tc.decay_rate == 0.5f);
    CHECK(tc.seed == 9);
    CHECK(tc.effective_decay_interval() == 20);  // fps rule

    // Defaults when nothing is specified.
    ConfigMap empty = ConfigMap::parse_text("", "inline");
    const TrainConfig dflt = TrainConfig::from_map(empty);
    CHECK(dflt.model.scale.sampler == Sampler::kRandom);
    CHECK(dflt.model.scale.k_neighbors == 20);
    CHECK(dflt.model.scale.resolutions == std::array<int, 3>{2048, 512, 128});
    CHECK(dflt.lr0 == 0.001f);
    CHECK(dflt.decay_rate == 0.8f);
    CHECK(dflt.effective_decay_interval() == 60);  // rs rule

    auto reject_format = [](const std::string& text) {
        ConfigMap c = ConfigMap::parse_text(text, "inline");
        CHECK_THROWS_AS(TrainConfig::from_map(c), FormatError);
    };
    reject_format("model.sampler = quantum\n");
    reject_format("synth.kinds = cube\n");
    reject_format("train.typo = 1\n");

    auto reject_contract = [](const std::string& text) {
        ConfigMap c = ConfigMap::parse_text(text, "inline");
        CHECK_THROWS_AS(TrainConfig::from_map(c), ContractError);
    };
    reject_contract("train.epochs = 0\n");
    reject_contract("train.batch_size = 2\n");
    reject_contract("train.decay_rate = 1.5\n");
    reject_contract("train.lr0 = 0\n");
}

TEST_CASE("training runs end-to-end, is bit-reproducible, and logs CSV") {
    TrainConfig cfg = tiny_train_config();
    cfg.log_path = temp_file("train_log.csv").string();
    const std::string ckpt_a = temp_file("run_a.ckpt").string();
    const std::string ckpt_b = temp_file("run_b.ckpt").string();

    const TrainResult a = train(cfg, ckpt_a);
    REQUIRE(a.iterations == cfg.epochs * cfg.scenes_per_epoch);
    REQUIRE(a.losses.size() == static_cast<size_t>(a.iterations));
    for (double l : a.losses) {
        CHECK(std::isfinite(l));
        CHECK(l >= 0.0);
    }
    CHECK(a.final_loss == a.losses.back());

    // One learning rate per iteration, following the epoch schedule.
    REQUIRE(a.lrs.size() == a.losses.size());
    CHECK(a.lrs[0] == learning_rate_at(cfg, 0));
    CHECK(a.lrs[1] == learning_rate_at(cfg, 0));
    CHECK(a.lrs[2] == learning_rate_at(cfg, 1));
    CHECK(a.lrs[3] == learning_rate_at(cfg, 1));
    CHECK(a.lrs[2] == 0.5 * a.lrs[0]);

    // Bit-identical repeat under the same seed.
    const TrainResult b = train(cfg, ckpt_b);
    REQUIRE(b.losses.size() == a.losses.size());
    for (size_t i = 0; i < a.losses.size(); ++i) REQUIRE(a.losses[i] == b.losses[i]);

    // The final checkpoints agree parameter-for-parameter.
    ParamStore pa = build_params<float>(cfg.model, cfg.seed);
    ParamStore pb = build_params<float>(cfg.model, cfg.seed + 1);  // deliberately different start
    load_checkpoint(pa, ckpt_a);
    load_checkpoint(pb, ckpt_b);
    CHECK(same_store(pa, pb));

    // A different seed changes the trajectory.
    TrainConfig other = cfg;
    other.seed = 8;
    other.log_path.clear();
    const TrainResult c = train(other, temp_file("run_c.ckpt").string());
    CHECK(a.losses[0] != c.losses[0]);

    // Log: header plus one row of `iter,loss,lr,ms` per iteration.
    std::ifstream log(cfg.log_path);
    REQUIRE(bool(log));
    std::string line;
    REQUIRE(std::getline(log, line));
    CHECK(line == "iter,loss,lr,ms");
    int rows = 0;
    while (std::getline(log, line)) {
        CHECK(std::count(line.begin(), line.end(), ',') == 3);
        ++rows;
    }
    CHECK(rows == a.iterations);

    // Periodic snapshots appear next to the final one.
    TrainConfig snap = cfg;
    snap.log_path.clear();
    snap.checkpoint_every = 1;
    const std::string ckpt_s = temp_file("run_s.ckpt").string();
    train(snap, ckpt_s);
    CHECK(std::filesystem::exists(ckpt_s));
    CHECK(std::filesystem::exists(ckpt_s + ".e1"));
    CHECK(std::filesystem::exists(ckpt_s + ".e2"));
}

TEST_CASE("non-finite loss aborts training with a divergence diagnostic") {
    TrainConfig cfg = tiny_train_config();
    ParamStore params = build_params<float>(cfg.model, cfg.seed);
    for (auto& [name, tensor] : params) tensor.data[0] = std::nanf("");
    const std::vector<ScenePair> pool = load_training_pool(cfg);
    CHECK_THROWS_WITH_AS(train_loop(cfg, pool, params, ""),
                         doctest::Contains("diverged at iteration 0"), DivergenceError);

    CHECK_THROWS_AS(train_loop(cfg, {}, params, ""), ContractError);
}

TEST_CASE("scene pools load from disk in sorted order and demand ground truth") {
    const auto dir = temp_file("pool");
    std::filesystem::create_directories(dir);
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        std::filesystem::remove(entry.path());

    SyntheticSceneSpec spec;
    spec.points_per_object = 16;
    std::vector<ScenePair> written;
    for (int i = 0; i < 3; ++i) {
        const ScenePair pair = generate_pair(spec, 100 + static_cast<uint64_t>(i));
        write_scene((dir / ("scene_" + std::to_string(i) + ".sfpc")).string(), pair);
        written.push_back(pair);
    }
    std::ofstream(dir / "notes.txt") << "ignored";  // non-scene files are skipped

    TrainConfig cfg = tiny_train_config();
    cfg.data_dir = dir.string();
    const std::vector<ScenePair> pool = load_training_pool(cfg);
    REQUIRE(pool.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        REQUIRE(pool[i].frame_p.size() == written[i].frame_p.size());
        CHECK(pool[i].frame_p.points[0].x == written[i].frame_p.points[0].x);
    }

    // A scene without ground truth cannot train.
    ScenePair bare;
    bare.frame_p.points = {{1, 2, 3}};
    bare.frame_q.points = {{4, 5, 6}};
    write_scene((dir / "zz_bare.sfpc").string(), bare);
    CHECK_THROWS_AS(load_training_pool(cfg), ContractError);
    std::filesystem::remove(dir / "zz_bare.sfpc");

    TrainConfig empty_dir = cfg;
    const auto none = temp_file("pool_empty");
    std::filesystem::create_directories(none);
    empty_dir.data_dir = none.string();
    CHECK_THROWS_AS(load_training_pool(empty_dir), ContractError);
}

TEST_CASE("evaluation: oracle mode, masking contract, and cross-sampler runs") {
    TrainConfig base = tiny_train_config();
    base.synth.occlusion_fraction = 0.2f;
    std::vector<ScenePair> scenes;
    for (int i = 0; i < 3; ++i) scenes.push_back(generate_pair(base.synth, 200 + static_cast<uint64_t>(i)));

    ParamStore params = build_params<float>(base.model, 5);

    // Ground truth scored against itself: perfect metrics, no inference time.
    EvalOptions oracle;
    oracle.oracle_mode = true;
    const EvalReport perfect = evaluate(params, base.model, scenes, oracle);
    CHECK(perfect.scenes == 3);
    CHECK(perfect.metrics.epe3d == 0.0);
    CHECK(perfect.metrics.acc3d_strict == 1.0);
    CHECK(perfect.metrics.acc3d_relax == 1.0);
    CHECK(perfect.metrics.acc3d_strict_noc == 1.0);
    CHECK(perfect.metrics.count_noc < perfect.metrics.count);  // mask took effect
    CHECK(perfect.runtime_ms == 0.0);

    // Real inference on the tiny model: finite metrics, positive runtime.
    EvalOptions opt;
    opt.sampler = Sampler::kRandom;
    opt.k_neighbors = 4;
    const EvalReport real = evaluate(params, base.model, scenes, opt);
    CHECK(std::isfinite(real.metrics.epe3d));
    CHECK(real.metrics.epe3d > 0.0);  // random weights do not solve the task
    CHECK(real.runtime_ms > 0.0);
    CHECK(real.metrics.count == scenes[0].frame_p.size() * 3);

    // Masks change only the `_noc` columns: all-visible vs all-occluded.
    std::vector<ScenePair> vis = scenes, hid = scenes;
    for (ScenePair& s : vis) std::fill(s.frame_p.occluded.begin(), s.frame_p.occluded.end(), 0);
    for (ScenePair& s : hid) std::fill(s.frame_p.occluded.begin(), s.frame_p.occluded.end(), 1);
    const EvalReport rv = evaluate(params, base.model, vis, opt);
    const EvalReport rh = evaluate(params, base.model, hid, opt);
    CHECK(rv.metrics.epe3d == rh.metrics.epe3d);
    CHECK(rv.metrics.acc3d_strict == rh.metrics.acc3d_strict);
    CHECK(rv.metrics.acc3d_relax == rh.metrics.acc3d_relax);
    CHECK(rv.metrics.epe3d_noc == rv.metrics.epe3d);  // nothing hidden
    CHECK(rv.metrics.count_noc == rv.metrics.count);
    CHECK(rh.metrics.count_noc == 0);  // everything hidden
    CHECK(rh.metrics.epe3d_noc == 0.0);

    // Sampler swap at evaluation time: parameters trained under one sampler
    // drive the other without shape errors, both directions.
    EvalOptions fps;
    fps.sampler = Sampler::kFarthest;
    fps.k_neighbors = 4;
    const EvalReport xr = evaluate(params, base.model, scenes, fps);
    CHECK(std::isfinite(xr.metrics.epe3d));

    ModelConfig fps_model = base.model;
    fps_model.scale.sampler = Sampler::kFarthest;
    ParamStore fps_params = build_params<float>(fps_model, 6);
    const EvalReport rx = evaluate(fps_params, fps_model, scenes, opt);
    CHECK(std::isfinite(rx.metrics.epe3d));

    // Contracts.
    CHECK_THROWS_AS(evaluate(params, base.model, {}, opt), ContractError);
    ScenePair no_gt;
    no_gt.frame_p.points = scenes[0].frame_p.points;
    no_gt.frame_q.points = scenes[0].frame_q.points;
    CHECK_THROWS_AS(evaluate(params, base.model, {no_gt}, opt), ContractError);
}

TEST_CASE("evaluation adapts pyramid resolutions to dense inputs") {
    // One dense scene (>= 8192 points) exercises the density-dependent scale
    // selection path end to end; narrow channels keep it affordable.
    ModelConfig mc = ModelConfig::defaults_for(Sampler::kRandom);
    mc.scale.channels = {4, 8, 8, 16};

    SyntheticSceneSpec spec;
    spec.object_count = 3;
    spec.points_per_object = 2735;  // 8205 points total
    const ScenePair dense = generate_pair(spec, 77);
    REQUIRE(dense.frame_p.size() >= 8192);

    ParamStore params = build_params<float>(mc, 5);
    EvalOptions opt;
    opt.adapt_resolutions = true;
    const EvalReport rep = evaluate(params, mc, {dense}, opt);
    CHECK(std::isfinite(rep.metrics.epe3d));
    CHECK(rep.metrics.count == dense.frame_p.size());
    CHECK(rep.peak_rss_bytes > 0);
}

TEST_CASE("density benchmark emits one well-formed CSV row per cell") {
    ModelConfig mc = ModelConfig::defaults_for(Sampler::kRandom);
    mc.scale.channels = {4, 8, 8, 16};
    ParamStore params = build_params<float>(mc, 5);

    const std::vector<BenchRow> rows =
        benchmark_density(params, mc, {8192}, {Sampler::kRandom}, 1, 3);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].density == 8192);
    CHECK(rows[0].sampler == Sampler::kRandom);
    CHECK(rows[0].status == "ok");
    CHECK(std::isfinite(rows[0].epe3d));
    CHECK(rows[0].ms > 0.0);
    CHECK(rows[0].bytes > 0);
    CHECK(rows[0].acc3dr >= 0.0);
    CHECK(rows[0].acc3dr <= 1.0);

    const auto csv_path = temp_file("bench.csv");
    write_bench_csv(csv_path.string(), rows);
    std::ifstream in(csv_path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "density,sampler,epe3d,acc3dr,ms,bytes,status");
    REQUIRE(std::getline(in, line));
    CHECK(line.rfind("8192,rs,", 0) == 0);
    CHECK(!std::getline(in, line));

    CHECK_THROWS_AS(benchmark_density(params, mc, {}, {Sampler::kRandom}, 1, 3), ContractError);
    CHECK_THROWS_AS(benchmark_density(params, mc, {8192, 8192}, {Sampler::kRandom}, 1, 3),
                    ContractError);
    CHECK_THROWS_AS(benchmark_density(params, mc, {16384, 8192}, {Sampler::kRandom}, 1, 3),
                    ContractError);
    CHECK_THROWS_AS(benchmark_density(params, mc, {8192}, {Sampler::kRandom}, 0, 3), ContractError);
}

TEST_CASE("timing utilities: sampling stopwatch and log-log slope fits") {
    // The stopwatch must return a usable duration for both samplers.
    CHECK(measure_sampling_ms(Sampler::kRandom, 4096, 512, 2, 1) >= 0.0);
    CHECK(measure_sampling_ms(Sampler::kFarthest, 1024, 64, 2, 1) >= 0.0);
    CHECK_THROWS_AS(measure_sampling_ms(Sampler::kRandom, 64, 8, 0, 1), ContractError);

    // Exact power law: y = 3 x^2.5 fits slope 2.5.
    std::vector<std::pair<double, double>> xy;
    for (double x : {1.0, 2.0, 4.0, 8.0, 16.0}) xy.push_back({x, 3.0 * std::pow(x, 2.5)});
    CHECK(fit_loglog_slope(xy) == doctest::Approx(2.5).epsilon(1e-9));

    // A constant has slope 0.
    CHECK(fit_loglog_slope({{1.0, 5.0}, {10.0, 5.0}, {100.0, 5.0}}) ==
          doctest::Approx(0.0).epsilon(1e-9));

    CHECK_THROWS_AS(fit_loglog_slope({{1.0, 1.0}}), ContractError);
    CHECK_THROWS_AS(fit_loglog_slope({{1.0, 1.0}, {2.0, -1.0}}), ContractError);
    CHECK_THROWS_AS(fit_loglog_slope({{2.0, 1.0}, {2.0, 3.0}}), ContractError);
}
