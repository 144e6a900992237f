#include "sandesc/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sandesc/serial.hpp"
#include "sandesc/synth.hpp"

namespace fs = std::filesystem;

namespace sandesc {

void save_homography_text(const Homography& h, const std::string& path) {
    std::ofstream out(path);
    SD_CHECK(out, "dataset: cannot write '", path, "'");
    const auto& m = h.values();
    for (int i = 0; i < 9; ++i) out << (i ? " " : "") << format_double(m[size_t(i)]);
    out << "\n";
    SD_CHECK(out.good(), "dataset: short write to '", path, "'");
}

Homography load_homography_text(const std::string& path) {
    std::ifstream in(path);
    SD_CHECK(in, "dataset: cannot open homography file '", path, "'");
    std::array<double, 9> m;
    for (int i = 0; i < 9; ++i) {
        in >> m[size_t(i)];
        SD_CHECK(bool(in), "dataset: homography file '", path, "' does not hold 9 numbers");
    }
    return Homography::from_row_major(m);
}

void generate_dataset(const std::string& out_dir, int n_scenes, int pairs_per_scene,
                      uint64_t seed, int crop) {
    SD_CHECK(n_scenes > 0 && pairs_per_scene > 0, "gen-data: scene and pair counts must be positive");
    SD_CHECK(crop >= 32, "gen-data: crop must be at least 32");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    SD_CHECK(!ec, "gen-data: cannot create output directory '", out_dir, "'");

    TrainConfig warp_cfg;
    warp_cfg.crop_size = crop;
    warp_cfg.seed = seed;

    Rng rng = Rng(seed).split(0xDA7A5E7u);
    char name[64];
    for (int s = 0; s < n_scenes; ++s) {
        snprintf(name, sizeof(name), "scene_%03d", s);
        const fs::path scene_dir = fs::path(out_dir) / name;
        fs::create_directories(scene_dir, ec);
        SD_CHECK(!ec, "gen-data: cannot create '", scene_dir.string(), "'");

        const Image source = procedural_texture(2 * crop + 32, seed * 9176u + uint64_t(s));
        const int ox = (source.width - crop) / 2, oy = (source.height - crop) / 2;
        save_image(crop_region(source, ox, oy, crop, crop), (scene_dir / "ref.ppm").string());

        for (int t = 1; t <= pairs_per_scene; ++t) {
            const SyntheticPair pair = generate_pair(source, warp_cfg, rng);
            snprintf(name, sizeof(name), "target_%02d.ppm", t);
            save_image(pair.image2, (scene_dir / name).string());
            snprintf(name, sizeof(name), "H_%02d.txt", t);
            save_homography_text(pair.map_1to2, (scene_dir / name).string());
        }
    }
}

std::vector<DatasetPair> list_dataset(const std::string& dir) {
    SD_CHECK(fs::is_directory(dir), "dataset: '", dir, "' is not a directory");
    std::vector<std::string> scenes;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) scenes.push_back(entry.path().filename().string());
    std::sort(scenes.begin(), scenes.end());
    SD_CHECK(!scenes.empty(), "dataset: no scene directories under '", dir, "'");

    std::vector<DatasetPair> out;
    char name[64];
    for (const auto& scene : scenes) {
        const fs::path scene_dir = fs::path(dir) / scene;
        fs::path ref = scene_dir / "ref.ppm";
        if (!fs::exists(ref)) ref = scene_dir / "ref.png";
        if (!fs::exists(ref)) continue;
        for (int t = 1;; ++t) {
            snprintf(name, sizeof(name), "target_%02d.ppm", t);
            fs::path target = scene_dir / name;
            if (!fs::exists(target)) {
                snprintf(name, sizeof(name), "target_%02d.png", t);
                target = scene_dir / name;
                if (!fs::exists(target)) break;
            }
            snprintf(name, sizeof(name), "H_%02d.txt", t);
            const fs::path hpath = scene_dir / name;
            DatasetPair pair;
            pair.scene = scene;
            pair.target_index = t;
            pair.ref_path = ref.string();
            pair.target_path = target.string();
            pair.homography_path = hpath.string();
            pair.homography_missing = !fs::exists(hpath);
            out.push_back(std::move(pair));
        }
    }
    SD_CHECK(!out.empty(), "dataset: no (reference, target) pairs found under '", dir, "'");
    return out;
}

}  // namespace sandesc
