#pragma once

#include <utility>
#include <vector>

#include "sandesc/image.hpp"
#include "sandesc/keypoint.hpp"

namespace sandesc {

// Side-by-side match rendering: line segments between matched keypoints,
// green for inliers, red for outliers (mask entries truthy = inlier; an
// empty mask draws everything green).
Image render_matches(const Image& left, const Image& right,
                     const std::vector<Keypoint>& kps_left,
                     const std::vector<Keypoint>& kps_right,
                     const std::vector<std::pair<int, int>>& matches,
                     const std::vector<char>& inlier_mask);

}  // namespace sandesc
