#pragma once

#include <vector>

#include "sandesc/image.hpp"
#include "sandesc/keypoint.hpp"

namespace sandesc {

// Harris corners: Sobel gradients, 3x3 Gaussian-weighted structure tensor,
// R = det - k * trace^2, non-max suppression with the given radius, top_n by
// response, then subpixel refinement by a quadratic fit. Flat images yield
// an empty list.
std::vector<Keypoint> harris_keypoints(const Image& gray, double k, int top_n, int nms_radius);

// Uniformly scored cell centers on a stride grid, row-major order; the
// detector-agnostic stand-in.
std::vector<Keypoint> grid_keypoints(int width, int height, int stride);

}  // namespace sandesc
