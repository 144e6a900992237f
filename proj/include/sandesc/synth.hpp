#pragma once

#include <utility>
#include <vector>

#include "sandesc/homography.hpp"
#include "sandesc/image.hpp"
#include "sandesc/keypoint.hpp"
#include "sandesc/optim.hpp"

namespace sandesc {

// Two views of the same synthetic scene related by an exact homography.
struct SyntheticPair {
    Image image1, image2;   // crop_size x crop_size RGB in [0,1]
    Homography map_1to2;    // image1 pixel coordinates -> image2
};

// Deterministic texture source: multi-octave value noise plus random
// geometric primitives and fine grain, corner-rich enough for detection.
Image procedural_texture(int size, uint64_t seed);

// View 1 is the center crop of the source; view 2 resamples the source
// through a homography composed of rotation, isotropic scale, translation
// and mild perspective (ranges from cfg), both views followed by
// independent brightness/contrast jitter. Homographies whose second view
// would leave the source (or degenerate ones) are resampled a bounded
// number of times.
SyntheticPair generate_pair(const Image& source, const TrainConfig& cfg, Rng& rng);

// Grid points of view 1 pushed through `fwd` and pulled back through
// `back`; a point survives if both projections stay in bounds and the
// round trip lands within tau pixels. Returns aligned (view1, view2) lists.
std::pair<std::vector<Keypoint>, std::vector<Keypoint>> da_keypoints_maps(
    const Homography& fwd, const Homography& back, int width, int height, int grid_stride,
    double tau);

inline std::pair<std::vector<Keypoint>, std::vector<Keypoint>> da_keypoints(
    const SyntheticPair& pair, int grid_stride, double tau) {
    return da_keypoints_maps(pair.map_1to2, pair.map_1to2.inverse(), pair.image1.width,
                             pair.image1.height, grid_stride, tau);
}

}  // namespace sandesc
