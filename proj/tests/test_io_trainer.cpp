#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sandesc/checkpoint.hpp"
#include "sandesc/cli_commands.hpp"
#include "sandesc/config.hpp"
#include "sandesc/dataset.hpp"
#include "sandesc/descfile.hpp"
#include "sandesc/eval.hpp"
#include "sandesc/serial.hpp"
#include "sandesc/trainer.hpp"

using namespace sandesc;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.net_widths = {16, 16, 16, 16, 16};
    cfg.crop_size = 32;
    cfg.batch_size = 1;
    cfg.steps = 3;
    cfg.texture_sources = 2;
    cfg.grid_stride = 8;
    cfg.val_every = 0;
    cfg.log_every = 1;
    cfg.val_pairs = 2;
    cfg.seed = 11;
    return cfg;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& f) const { return (path / f).string(); }
};

bool params_equal(Model<float>& a, Model<float>& b) {
    auto pa = a.parameters(), pb = b.parameters();
    if (pa.size() != pb.size()) return false;
    for (size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->tensor.numel() != pb[i]->tensor.numel()) return false;
        if (0 != std::memcmp(pa[i]->tensor.data(), pb[i]->tensor.data(),
                             sizeof(float) * size_t(pa[i]->tensor.numel())))
            return false;
        if (0 != std::memcmp(pa[i]->moment1.data(), pb[i]->moment1.data(),
                             sizeof(float) * pa[i]->moment1.size()))
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("config round trip and error reporting") {
    TrainConfig def;
    const std::string text = config_text(def);
    TrainConfig back = parse_config_text(text);
    CHECK(config_text(back) == text);

    TrainConfig tweaked = def;
    tweaked.eta_max = 0.007;
    tweaked.net_widths = {16, 16, 32, 48, 64};
    tweaked.use_attention = false;
    CHECK(config_text(parse_config_text(config_text(tweaked))) == config_text(tweaked));

    CHECK_THROWS_WITH_AS(parse_config_text("eta_max = 0.01\nbogus_key = 3\n"),
                         doctest::Contains("unknown key 'bogus_key'"), std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_config_text("eta_max = 0.01\nbogus_key = 3\n"),
                         doctest::Contains("line 2"), std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_config_text("steps = banana\n"), doctest::Contains("steps"),
                         std::runtime_error);
}

TEST_CASE("checkpoint save/load round trip is lossless and byte-stable") {
    TempDir dir("sandesc_ckpt_test");
    NetworkConfig net;
    net.widths = {16, 16, 16, 16, 16};
    auto model = build_network<float>(net, 123);
    // make moments and running stats nontrivial
    auto params = model.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
        params[i]->moment1.assign(params[i]->moment1.size(), float(i) * 0.25f);
        params[i]->moment2.assign(params[i]->moment2.size(), float(i) * 0.5f);
    }
    Rng data_rng(5), mine_rng(9);
    data_rng.next_u64();

    const auto ckpt = snapshot(model, 17, 0.8342, data_rng, mine_rng);
    const std::string p1 = dir / "a.ckpt";
    save_checkpoint(ckpt, p1);
    const Checkpoint loaded = load_checkpoint(p1);
    CHECK(loaded.step == 17);
    CHECK(loaded.gamma == 0.8342);
    CHECK(loaded.rng_data_state == data_rng.state_hex());
    CHECK(loaded.net.widths == net.widths);

    const std::string p2 = dir / "b.ckpt";
    save_checkpoint(loaded, p2);
    CHECK(file_bytes(p1) == file_bytes(p2));

    auto restored = model_from_checkpoint(loaded);
    CHECK(params_equal(model, restored));
}

TEST_CASE("checkpoint corruption and version errors are distinct") {
    TempDir dir("sandesc_ckpt_err");
    NetworkConfig net;
    net.widths = {16, 16, 16, 16, 16};
    auto model = build_network<float>(net, 1);
    Rng r1(1), r2(2);
    const std::string path = dir / "c.ckpt";
    save_checkpoint(snapshot(model, 0, 1.0, r1, r2), path);

    std::string bytes = file_bytes(path);

    {  // flip one payload byte (well past the header)
        std::string bad = bytes;
        bad[bad.size() - 100] = char(bad[bad.size() - 100] ^ 0x40);
        std::ofstream(dir / "bad.ckpt", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.ckpt"), doctest::Contains("checksum"),
                             std::runtime_error);
    }
    {  // bump the version field
        std::string bad = bytes;
        bad[4] = 9;
        std::ofstream(dir / "ver.ckpt", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(load_checkpoint(dir / "ver.ckpt"),
                             doctest::Contains("version mismatch"), std::runtime_error);
    }
    {  // truncate
        std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
        CHECK_THROWS_WITH_AS(load_checkpoint(dir / "trunc.ckpt"), doctest::Contains("truncated"),
                             std::runtime_error);
    }
    {  // wrong magic
        std::string bad = bytes;
        bad[0] = 'X';
        std::ofstream(dir / "magic.ckpt", std::ios::binary) << bad;
        CHECK_THROWS_WITH_AS(load_checkpoint(dir / "magic.ckpt"), doctest::Contains("bad magic"),
                             std::runtime_error);
    }
}

TEST_CASE("descriptor file round trip and integrity") {
    TempDir dir("sandesc_descfile");
    DescriptorFile f;
    Rng rng(3);
    const int n = 9;
    f.keypoints.resize(n);
    f.descriptors.resize(size_t(n) * 128);
    for (int i = 0; i < n; ++i) {
        f.keypoints[size_t(i)] = {rng.uniform(0, 64), rng.uniform(0, 64), 1.f};
        double sq = 0;
        for (int c = 0; c < 128; ++c) {
            const double v = rng.uniform(-1, 1);
            f.descriptors[size_t(i) * 128 + c] = float(v);
            sq += v * v;
        }
        const float inv = float(1.0 / std::sqrt(sq));
        for (int c = 0; c < 128; ++c) f.descriptors[size_t(i) * 128 + c] *= inv;
    }
    const std::string path = dir / "d.desc";
    save_descriptor_file(f, path);
    const DescriptorFile back = load_descriptor_file(path);
    REQUIRE(back.keypoints.size() == size_t(n));
    CHECK(0 == std::memcmp(back.descriptors.data(), f.descriptors.data(),
                           f.descriptors.size() * sizeof(float)));
    CHECK(float(back.keypoints[3].x) == float(f.keypoints[3].x));

    std::string bytes = file_bytes(path);
    bytes[bytes.size() - 20] = char(bytes[bytes.size() - 20] ^ 0x04);
    std::ofstream(dir / "bad.desc", std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(load_descriptor_file(dir / "bad.desc"), doctest::Contains("checksum"),
                         std::runtime_error);

    DescriptorFile unnorm = f;
    for (int c = 0; c < 128; ++c) unnorm.descriptors[size_t(c)] *= 2.f;
    save_descriptor_file(unnorm, dir / "un.desc");
    CHECK_THROWS_WITH_AS(load_descriptor_file(dir / "un.desc"),
                         doctest::Contains("unit-norm"), std::runtime_error);
}

TEST_CASE("homography text round trip") {
    TempDir dir("sandesc_htxt");
    Rng rng(5);
    const auto h = Homography::from_row_major(
        {1.02, -0.3, 14.25, 0.28, 0.97, -3.5, 1e-4, -2e-4, 1});
    save_homography_text(h, dir / "H.txt");
    const Homography back = load_homography_text(dir / "H.txt");
    for (int i = 0; i < 100; ++i) {
        const Point2 p{rng.uniform(0, 128), rng.uniform(0, 128)};
        const Point2 a = warp_point(h, p), b = warp_point(back, p);
        CHECK(std::hypot(a.x - b.x, a.y - b.y) < 1e-4);
    }
}

TEST_CASE("zero-step training leaves the model at init") {
    TrainConfig cfg = tiny_train_config();
    cfg.steps = 0;
    auto model = build_network<float>(cfg.network(), cfg.seed);
    auto init = build_network<float>(cfg.network(), cfg.seed);
    auto sources = default_texture_sources(cfg);
    auto result = train(cfg, model, Detector::Grid, sources);
    CHECK(result.checkpoint.step == 0);
    CHECK(params_equal(model, init));
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
    TrainConfig cfg = tiny_train_config();
    auto sources = default_texture_sources(cfg);

    auto run = [&] {
        auto model = build_network<float>(cfg.network(), cfg.seed);
        return train(cfg, model, Detector::Grid, sources);
    };
    auto r1 = run();
    auto r2 = run();
    REQUIRE(r1.log.size() == r2.log.size());
    for (size_t i = 0; i < r1.log.size(); ++i) {
        CHECK(r1.log[i].loss == r2.log[i].loss);
        CHECK(r1.log[i].triplet_count == r2.log[i].triplet_count);
    }
    REQUIRE(r1.checkpoint.tensors.size() == r2.checkpoint.tensors.size());
    for (size_t i = 0; i < r1.checkpoint.tensors.size(); ++i)
        CHECK(0 == std::memcmp(r1.checkpoint.tensors[i].values.data(),
                               r2.checkpoint.tensors[i].values.data(),
                               r1.checkpoint.tensors[i].values.size() * sizeof(float)));
    // training moved the parameters
    auto fresh = build_network<float>(cfg.network(), cfg.seed);
    auto moved = model_from_checkpoint(r1.checkpoint);
    CHECK(!params_equal(fresh, moved));
}

TEST_CASE("save/load mid-run resumes bitwise") {
    TempDir dir("sandesc_resume");
    TrainConfig cfg = tiny_train_config();
    cfg.steps = 6;
    auto sources = default_texture_sources(cfg);

    auto straight_model = build_network<float>(cfg.network(), cfg.seed);
    auto straight = train(cfg, straight_model, Detector::Grid, sources);
    save_checkpoint(straight.checkpoint, dir / "straight.ckpt");

    TrainConfig half = cfg;
    half.steps = 3;
    auto half_model = build_network<float>(cfg.network(), cfg.seed);
    auto first = train(half, half_model, Detector::Grid, sources);
    save_checkpoint(first.checkpoint, dir / "half.ckpt");

    const Checkpoint mid = load_checkpoint(dir / "half.ckpt");
    auto resumed_model = model_from_checkpoint(mid);
    auto resumed = train(cfg, resumed_model, Detector::Grid, sources, nullptr, &mid);
    save_checkpoint(resumed.checkpoint, dir / "resumed.ckpt");

    CHECK(file_bytes(dir / "straight.ckpt") == file_bytes(dir / "resumed.ckpt"));
}

TEST_CASE("validation accuracy is a fraction and improves with identity pairs") {
    TrainConfig cfg = tiny_train_config();
    auto model = build_network<float>(cfg.network(), cfg.seed);
    auto pairs = validation_pairs(cfg);
    REQUIRE(pairs.size() == 2);
    const double acc = validation_accuracy(model, pairs, cfg, Detector::Grid);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);

    // identical views, identity homography: every MNN match is trivially correct
    TrainConfig idcfg = cfg;
    idcfg.rotation_range = 0;
    idcfg.scale_min = idcfg.scale_max = 1.0;
    idcfg.translate_frac = idcfg.perspective_frac = idcfg.photometric_frac = 0;
    auto idpairs = validation_pairs(idcfg);
    CHECK(validation_accuracy(model, idpairs, idcfg, Detector::Grid) == doctest::Approx(1.0));
}

TEST_CASE("gen-data writes a deterministic, self-consistent corpus") {
    TempDir dir("sandesc_gendata");
    generate_dataset(dir / "d1", 2, 3, 99, 64);
    generate_dataset(dir / "d2", 2, 3, 99, 64);

    int images = 0, homographies = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "d1")) {
        if (e.path().extension() == ".ppm") ++images;
        if (e.path().extension() == ".txt") ++homographies;
    }
    CHECK(images == 2 * (1 + 3));
    CHECK(homographies == 2 * 3);

    for (const auto& e : fs::recursive_directory_iterator(dir / "d1")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dir / "d1");
        CHECK(file_bytes(e.path().string()) ==
              file_bytes((fs::path(dir / "d2") / rel).string()));
    }

    const auto pairs = list_dataset(dir / "d1");
    CHECK(pairs.size() == 6);
    CHECK(pairs[0].scene == "scene_000");
    CHECK(!pairs[0].homography_missing);
}

TEST_CASE("cli extract/match round trip on a tiny checkpoint") {
    TempDir dir("sandesc_cli");
    NetworkConfig net;
    net.widths = {16, 16, 16, 16, 16};
    auto model = build_network<float>(net, 3);
    Rng r1(1), r2(2);
    save_checkpoint(snapshot(model, 0, 1.0, r1, r2), dir / "m.ckpt");

    const Image img = procedural_texture(64, 5);
    save_image(img, dir / "img.ppm");

    cli::ExtractArgs ex;
    ex.checkpoint_path = dir / "m.ckpt";
    ex.image_path = dir / "img.ppm";
    ex.out_descfile = dir / "img.desc";
    ex.detector = "grid";
    ex.n_keypoints = 64;
    CHECK(cli::cmd_extract(ex) == 0);

    const DescriptorFile f = load_descriptor_file(dir / "img.desc");
    CHECK(f.keypoints.size() == 64);  // 64x64 at the budget-derived stride 8
    CHECK(f.dim == 128);

    ex.out_descfile = dir / "img2.desc";
    CHECK(cli::cmd_extract(ex) == 0);
    CHECK(file_bytes(dir / "img.desc") == file_bytes(dir / "img2.desc"));

    cli::MatchArgs ma;
    ma.descfile_a = dir / "img.desc";
    ma.descfile_b = dir / "img2.desc";
    ma.out_matches = dir / "matches.txt";
    CHECK(cli::cmd_match(ma) == 0);
    std::ifstream matches(ma.out_matches);
    std::string line;
    std::getline(matches, line);  // header
    int rows = 0;
    bool identity = true;
    while (std::getline(matches, line)) {
        int ia, ib;
        float sim;
        REQUIRE(3 == sscanf(line.c_str(), "%d %d %f", &ia, &ib, &sim));
        identity = identity && ia == ib && sim > 0.999f;
        ++rows;
    }
    CHECK(rows == 64);  // self-matching is the identity
    CHECK(identity);
}

TEST_CASE("cli eval on a degenerate identity pair") {
    TempDir dir("sandesc_eval");
    NetworkConfig net;
    net.widths = {16, 16, 16, 16, 16};
    auto model = build_network<float>(net, 4);
    Rng r1(1), r2(2);
    save_checkpoint(snapshot(model, 0, 1.0, r1, r2), dir / "m.ckpt");

    fs::create_directories(dir.path / "data" / "scene_000");
    const Image img = procedural_texture(64, 9);
    save_image(img, (dir.path / "data" / "scene_000" / "ref.ppm").string());
    save_image(img, (dir.path / "data" / "scene_000" / "target_01.ppm").string());
    save_homography_text(Homography{}, (dir.path / "data" / "scene_000" / "H_01.txt").string());

    cli::EvalArgs ev;
    ev.checkpoint_path = dir / "m.ckpt";
    ev.data_dir = (dir.path / "data").string();
    ev.out_report = dir / "report.txt";
    ev.detector = "harris";
    ev.budget = 64;
    CHECK(cli::cmd_eval(ev) == 0);

    const std::string report = file_bytes(dir / "report.txt");
    CHECK(report.find("mma1=1.0000") != std::string::npos);  // identical views match exactly
    CHECK(report.find("corner_err=0.0000") != std::string::npos);

    CHECK(cli::cmd_eval(ev) == 0);
    CHECK(file_bytes(dir / "report.txt") == report);  // byte-identical rerun
}

TEST_CASE("eval report aggregates are recomputable from the rows") {
    TempDir dir("sandesc_eval_agg");
    generate_dataset(dir / "data", 2, 2, 31, 64);
    NetworkConfig net;
    net.widths = {16, 16, 16, 16, 16};
    auto model = build_network<float>(net, 6);
    const EvalReport report = evaluate_dataset(model, "-", dir / "data", 48, Detector::Harris, 3);
    REQUIRE(report.evaluated == 4);
    double mma3 = 0;
    for (const auto& p : report.pairs) mma3 += p.mma3;
    CHECK(report.agg_mma3 == doctest::Approx(mma3 / 4.0));
    const std::string text = report_text(report);
    CHECK(text.find("aggregate ") != std::string::npos);
}
