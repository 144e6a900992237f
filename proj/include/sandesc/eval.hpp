#pragma once

#include <string>
#include <vector>

#include "sandesc/net.hpp"
#include "sandesc/trainer.hpp"

namespace sandesc {

struct PairReport {
    std::string scene;
    int target_index = 0;
    bool skipped = false;
    std::string skip_reason;
    int matches = 0;
    int correct_at_3 = 0;
    double mma1 = 0, mma2 = 0, mma3 = 0;
    double ms3 = 0;
    double corner_err = 0;  // at the reported RANSAC threshold; +inf on failure
};

struct EvalReport {
    uint64_t seed = 0;
    std::string config_hash;      // hash of the evaluation parameter block
    std::string checkpoint_hash;  // hash of the checkpoint file bytes
    std::string detector;
    int budget = 0;
    std::vector<double> ransac_sweep{0.5, 1.0, 2.0, 3.0, 5.0};
    double reported_threshold = 0;  // sweep entry behind the per-pair corner errors
    std::vector<PairReport> pairs;
    int evaluated = 0, skipped = 0;
    double agg_mma1 = 0, agg_mma2 = 0, agg_mma3 = 0, agg_ms3 = 0;
    double auc1 = 0, auc2 = 0, auc3 = 0;  // best over the threshold sweep
};

// Extraction helper shared by the CLI: pads to a multiple of 16, runs an
// eval-mode forward, crops the volume back, detects keypoints on the
// original frame, and samples. `budget` caps the keypoint count (top by
// score for harris; row-major truncation for the uniformly scored grid).
struct Extraction {
    std::vector<Keypoint> keypoints;
    std::vector<float> descriptors;  // N x 128
};
Extraction extract_descriptors(Model<float>& model, const Image& img, Detector det, int budget);

// HPatches-style protocol over a gen-data directory: MNN matching, MMA at
// 1/2/3 px, MS at 3 px, RANSAC homography over a threshold sweep with the
// best homography-accuracy AUC reported. Deterministic given the seed;
// `jobs` parallelizes over pairs with per-pair derived seeds.
EvalReport evaluate_dataset(Model<float>& model, const std::string& checkpoint_hash,
                            const std::string& data_dir, int budget, Detector det,
                            uint64_t seed, int jobs = 1);

std::string report_text(const EvalReport& r);
void write_report(const EvalReport& r, const std::string& path);

}  // namespace sandesc
