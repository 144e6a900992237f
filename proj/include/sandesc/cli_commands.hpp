#pragma once

#include <cstdint>
#include <string>

namespace sandesc::cli {

struct GenDataArgs {
    std::string out_dir;
    int scenes = 4;
    int pairs_per_scene = 4;
    uint64_t seed = 7;
    int crop = 128;
};
int cmd_gen_data(const GenDataArgs& args);

struct TrainArgs {
    std::string config_path;   // empty: built-in defaults
    std::string data_dir;      // empty: procedural textures; else texture images
    std::string out_checkpoint;
    std::string metrics_path;  // empty: out_checkpoint + ".log"
    std::string resume_path;   // empty: fresh run
    std::string detector = "grid";
    bool has_seed_override = false;
    uint64_t seed_override = 0;
};
int cmd_train(const TrainArgs& args);

struct ExtractArgs {
    std::string checkpoint_path;
    std::string image_path;
    std::string out_descfile;
    std::string detector = "harris";
    int n_keypoints = 512;
};
int cmd_extract(const ExtractArgs& args);

struct MatchArgs {
    std::string descfile_a;
    std::string descfile_b;
    std::string out_matches;
    // optional visualization: both source images plus a PNG output path
    std::string viz_image_a, viz_image_b, viz_out;
    uint64_t seed = 0;
};
int cmd_match(const MatchArgs& args);

struct EvalArgs {
    std::string checkpoint_path;
    std::string data_dir;
    std::string out_report;
    std::string detector = "harris";
    int budget = 512;
    uint64_t seed = 0;
    int jobs = 1;
};
int cmd_eval(const EvalArgs& args);

}  // namespace sandesc::cli
