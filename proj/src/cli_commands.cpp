#include "sandesc/cli_commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sandesc/checkpoint.hpp"
#include "sandesc/config.hpp"
#include "sandesc/dataset.hpp"
#include "sandesc/descfile.hpp"
#include "sandesc/eval.hpp"
#include "sandesc/matching.hpp"
#include "sandesc/serial.hpp"
#include "sandesc/trainer.hpp"
#include "sandesc/viz.hpp"

namespace fs = std::filesystem;

namespace sandesc::cli {

int cmd_gen_data(const GenDataArgs& args) {
    SD_CHECK(!args.out_dir.empty(), "gen-data: --out is required");
    generate_dataset(args.out_dir, args.scenes, args.pairs_per_scene, args.seed, args.crop);
    std::cout << "wrote " << args.scenes << " scenes x " << args.pairs_per_scene
              << " pairs to " << args.out_dir << "\n";
    return 0;
}

int cmd_train(const TrainArgs& args) {
    SD_CHECK(!args.out_checkpoint.empty(), "train: --out is required");
    TrainConfig cfg = args.config_path.empty() ? TrainConfig{} : load_config(args.config_path);
    if (args.has_seed_override) cfg.seed = args.seed_override;
    cfg.validate();
    const Detector detector = parse_detector(args.detector);

    std::vector<Image> sources;
    if (args.data_dir.empty()) {
        sources = default_texture_sources(cfg);
    } else {
        SD_CHECK(fs::is_directory(args.data_dir), "train: data directory '", args.data_dir,
                 "' does not exist");
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(args.data_dir)) {
            const auto ext = entry.path().extension().string();
            if (ext == ".ppm" || ext == ".pgm" || ext == ".png")
                files.push_back(entry.path().string());
        }
        std::sort(files.begin(), files.end());
        SD_CHECK(!files.empty(), "train: no .ppm/.pgm/.png images in '", args.data_dir, "'");
        for (const auto& f : files) sources.push_back(to_rgb(load_image(f)));
    }

    Model<float> model = build_network<float>(cfg.network(), cfg.seed);
    Checkpoint resume;
    const Checkpoint* resume_ptr = nullptr;
    if (!args.resume_path.empty()) {
        resume = load_checkpoint(args.resume_path);
        model = model_from_checkpoint(resume);
        resume_ptr = &resume;
    }

    const std::string metrics_path =
        args.metrics_path.empty() ? args.out_checkpoint + ".log" : args.metrics_path;
    std::ofstream metrics(metrics_path, resume_ptr ? std::ios::app : std::ios::out);
    SD_CHECK(metrics, "train: cannot write metrics log '", metrics_path, "'");
    if (!resume_ptr) {
        const std::string canon = config_text(cfg);
        char hash[20];
        snprintf(hash, sizeof(hash), "%016llx",
                 (unsigned long long)fnv1a64(canon.data(), canon.size()));
        metrics << "# training metrics\n";
        metrics << "seed = " << cfg.seed << "\n";
        metrics << "config_hash = " << hash << "\n";
        metrics << "detector = " << detector_name(detector) << "\n";
    }

    TrainResult result = train(cfg, model, detector, sources, &metrics, resume_ptr);
    save_checkpoint(result.checkpoint, args.out_checkpoint);
    std::cout << "trained " << cfg.steps << " steps; checkpoint written to "
              << args.out_checkpoint << "\n";
    return 0;
}

int cmd_extract(const ExtractArgs& args) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    Model<float> model = model_from_checkpoint(ckpt);
    const Image img = load_image(args.image_path);
    const Detector det = parse_detector(args.detector);
    Extraction ex = extract_descriptors(model, img, det, args.n_keypoints);
    if (int(ex.keypoints.size()) < args.n_keypoints)
        std::cerr << "warning: requested " << args.n_keypoints << " keypoints, detector found "
                  << ex.keypoints.size() << "\n";
    DescriptorFile f;
    f.keypoints = std::move(ex.keypoints);
    f.descriptors = std::move(ex.descriptors);
    save_descriptor_file(f, args.out_descfile);
    std::cout << "wrote " << f.keypoints.size() << " descriptors to " << args.out_descfile
              << "\n";
    return 0;
}

int cmd_match(const MatchArgs& args) {
    const DescriptorFile a = load_descriptor_file(args.descfile_a);
    const DescriptorFile b = load_descriptor_file(args.descfile_b);
    SD_CHECK(a.dim == 128 && b.dim == 128, "match: descriptor dim mismatch (", a.dim, " vs ",
             b.dim, "; both must be 128)");

    MatchSet matches;
    if (!a.keypoints.empty() && !b.keypoints.empty()) {
        NoGradGuard guard;
        Tensor<float> da(Shape{int(a.keypoints.size()), int(a.dim)}, a.descriptors);
        Tensor<float> db(Shape{int(b.keypoints.size()), int(b.dim)}, b.descriptors);
        matches = mutual_nearest_neighbors(similarity_matrix(da, db));
    }

    std::ofstream out(args.out_matches);
    SD_CHECK(out, "match: cannot write '", args.out_matches, "'");
    out << "# idx_a idx_b similarity\n";
    char line[96];
    for (const auto& m : matches.pairs) {
        snprintf(line, sizeof(line), "%d %d %.6f", m.first_idx, m.second_idx,
                 double(m.similarity));
        out << line << "\n";
    }
    SD_CHECK(out.good(), "match: short write to '", args.out_matches, "'");
    std::cout << matches.pairs.size() << " mutual nearest matches\n";

    if (!args.viz_out.empty()) {
        SD_CHECK(!args.viz_image_a.empty() && !args.viz_image_b.empty(),
                 "match: --viz needs both source images");
        const Image img_a = load_image(args.viz_image_a);
        const Image img_b = load_image(args.viz_image_b);
        std::vector<std::pair<int, int>> idx;
        std::vector<Correspondence> corr;
        for (const auto& m : matches.pairs) {
            idx.emplace_back(m.first_idx, m.second_idx);
            corr.push_back({{a.keypoints[size_t(m.first_idx)].x, a.keypoints[size_t(m.first_idx)].y},
                            {b.keypoints[size_t(m.second_idx)].x, b.keypoints[size_t(m.second_idx)].y},
                            0.0});
        }
        std::vector<char> inliers;
        if (corr.size() >= 4) {
            const auto res = ransac_homography(corr, 1000, 3.0, args.seed);
            if (res.success) inliers = res.inlier_mask;
        }
        save_image(render_matches(img_a, img_b, a.keypoints, b.keypoints, idx, inliers),
                   args.viz_out);
        std::cout << "visualization written to " << args.viz_out << "\n";
    }
    return 0;
}

int cmd_eval(const EvalArgs& args) {
    Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    Model<float> model = model_from_checkpoint(ckpt);
    char hash[20];
    snprintf(hash, sizeof(hash), "%016llx",
             (unsigned long long)fnv1a64_file(args.checkpoint_path));
    const EvalReport report =
        evaluate_dataset(model, hash, args.data_dir, args.budget, parse_detector(args.detector),
                         args.seed, args.jobs);
    write_report(report, args.out_report);
    char buf[192];
    snprintf(buf, sizeof(buf),
             "aggregate mma3=%.4f ms3=%.4f auc3=%.4f over %d pairs (%d skipped)",
             report.agg_mma3, report.agg_ms3, report.auc3, report.evaluated, report.skipped);
    std::cout << buf << "\n";
    return 0;
}

}  // namespace sandesc::cli
