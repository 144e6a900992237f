// Command-line surface for the descriptor toolkit: dataset generation,
// training, extraction, matching and evaluation.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "sandesc/cli_commands.hpp"

int main(int argc, char** argv) {
    using namespace sandesc::cli;
    CLI::App app{"sandesc: attention U-Net local descriptors, training and evaluation"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* cmd_gen = app.add_subcommand("gen-data", "write a synthetic homography corpus");
    cmd_gen->add_option("--out", gen.out_dir, "output directory")->required();
    cmd_gen->add_option("--scenes", gen.scenes, "number of scenes");
    cmd_gen->add_option("--pairs", gen.pairs_per_scene, "targets per scene");
    cmd_gen->add_option("--seed", gen.seed, "rng seed");
    cmd_gen->add_option("--crop", gen.crop, "image side length");

    TrainArgs tr;
    auto* cmd_tr = app.add_subcommand("train", "train a descriptor network");
    cmd_tr->add_option("--config", tr.config_path, "training config file");
    cmd_tr->add_option("--data", tr.data_dir, "texture source directory (default: procedural)");
    cmd_tr->add_option("--out", tr.out_checkpoint, "output checkpoint")->required();
    cmd_tr->add_option("--log", tr.metrics_path, "metrics log path (default: <out>.log)");
    cmd_tr->add_option("--resume", tr.resume_path, "checkpoint to resume from");
    cmd_tr->add_option("--detector", tr.detector, "grid|harris (default grid)");
    auto* seed_opt = cmd_tr->add_option("--seed", tr.seed_override, "override config seed");

    ExtractArgs ex;
    auto* cmd_ex = app.add_subcommand("extract", "extract keypoint descriptors from an image");
    cmd_ex->add_option("--checkpoint", ex.checkpoint_path, "trained checkpoint")->required();
    cmd_ex->add_option("--image", ex.image_path, "input image (pgm/ppm/png)")->required();
    cmd_ex->add_option("--out", ex.out_descfile, "output descriptor file")->required();
    cmd_ex->add_option("--detector", ex.detector, "harris|grid (default harris)");
    cmd_ex->add_option("--keypoints", ex.n_keypoints, "keypoint budget");

    MatchArgs ma;
    auto* cmd_ma = app.add_subcommand("match", "mutual-nearest matching of descriptor files");
    cmd_ma->add_option("--a", ma.descfile_a, "first descriptor file")->required();
    cmd_ma->add_option("--b", ma.descfile_b, "second descriptor file")->required();
    cmd_ma->add_option("--out", ma.out_matches, "output match list")->required();
    cmd_ma->add_option("--viz-a", ma.viz_image_a, "first image for visualization");
    cmd_ma->add_option("--viz-b", ma.viz_image_b, "second image for visualization");
    cmd_ma->add_option("--viz-out", ma.viz_out, "output PNG with inliers green, outliers red");
    cmd_ma->add_option("--seed", ma.seed, "rng seed for the inlier estimate");

    EvalArgs ev;
    auto* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    cmd_ev->add_option("--checkpoint", ev.checkpoint_path, "trained checkpoint")->required();
    cmd_ev->add_option("--data", ev.data_dir, "gen-data directory")->required();
    cmd_ev->add_option("--out", ev.out_report, "report path")->required();
    cmd_ev->add_option("--detector", ev.detector, "harris|grid (default harris)");
    cmd_ev->add_option("--budget", ev.budget, "keypoint budget per image");
    cmd_ev->add_option("--seed", ev.seed, "rng seed");
    cmd_ev->add_option("--jobs", ev.jobs, "parallel pair workers");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gen->parsed()) return cmd_gen_data(gen);
        if (cmd_tr->parsed()) {
            tr.has_seed_override = seed_opt->count() > 0;
            return cmd_train(tr);
        }
        if (cmd_ex->parsed()) return cmd_extract(ex);
        if (cmd_ma->parsed()) return cmd_match(ma);
        if (cmd_ev->parsed()) return cmd_eval(ev);
    } catch (const std::exception& e) {
        fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
