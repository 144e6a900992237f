#pragma once

#include <string>
#include <vector>

#include "sandesc/homography.hpp"
#include "sandesc/optim.hpp"

namespace sandesc {

// Synthetic evaluation corpus: per scene one reference image, k warped
// targets, and one ground-truth homography text file per target (9 decimal
// numbers, row-major, whitespace-separated, mapping reference pixel
// coordinates onto the target).
//
//   <out>/scene_000/ref.ppm
//   <out>/scene_000/target_01.ppm   + H_01.txt
void generate_dataset(const std::string& out_dir, int n_scenes, int pairs_per_scene,
                      uint64_t seed, int crop);

void save_homography_text(const Homography& h, const std::string& path);
Homography load_homography_text(const std::string& path);

struct DatasetPair {
    std::string scene;          // e.g. "scene_000"
    int target_index = 0;       // 1-based
    std::string ref_path, target_path, homography_path;
    bool homography_missing = false;
};

// Scans a gen-data (or same-layout) directory; pairs ordered by scene then
// target index. Pairs whose homography file is absent are flagged.
std::vector<DatasetPair> list_dataset(const std::string& dir);

}  // namespace sandesc
