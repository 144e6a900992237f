#pragma once

namespace sandesc {

// Subpixel image location, x across columns, y down rows, pixel centers on
// the integer grid.
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    float score = 0.0f;
};

}  // namespace sandesc
