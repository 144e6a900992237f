#pragma once

#include <string>
#include <vector>

#include "sandesc/common.hpp"
#include "sandesc/tensor.hpp"

namespace sandesc {

// Planar float image in [0,1], data[(c*height + y)*width + x].
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int w, int h, int c, float fill = 0.f)
        : width(w), height(h), channels(c), data(size_t(w) * h * c, fill) {}

    bool empty() const { return data.empty(); }
    float at(int c, int y, int x) const { return data[(size_t(c) * height + y) * width + x]; }
    float& at(int c, int y, int x) { return data[(size_t(c) * height + y) * width + x]; }
};

// PGM (P5), PPM (P6) and PNG, chosen by extension on save and by magic on
// load. Grayscale stays single-channel; use to_rgb for network input.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

Image to_rgb(const Image& img);
Image to_gray(const Image& img);

// Edge-replicates on the bottom/right so existing pixel coordinates are
// unchanged; use crop_region() to take the original region back.
Image pad_to_multiple(const Image& img, int multiple);
Image crop_region(const Image& img, int x0, int y0, int w, int h);

// Clamped bilinear read at a subpixel location.
float sample_bilinear(const Image& img, int channel, double x, double y);

Tensor<float> image_tensor(const Image& rgb);  // 1 x 3 x H x W
Image tensor_image(const Tensor<float>& t);    // inverse, first batch entry

}  // namespace sandesc
