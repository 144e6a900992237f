#include "sandesc/viz.hpp"

#include <algorithm>
#include <cmath>

namespace sandesc {

namespace {

void put_pixel(Image& img, int x, int y, const float rgb[3]) {
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
    for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
}

void draw_line(Image& img, double x0, double y0, double x1, double y1, const float rgb[3]) {
    const int steps = std::max(1, int(std::ceil(std::max(std::fabs(x1 - x0), std::fabs(y1 - y0)))));
    for (int i = 0; i <= steps; ++i) {
        const double t = double(i) / steps;
        put_pixel(img, int(std::lround(x0 + t * (x1 - x0))), int(std::lround(y0 + t * (y1 - y0))),
                  rgb);
    }
}

void draw_square(Image& img, double cx, double cy, const float rgb[3]) {
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
            put_pixel(img, int(std::lround(cx)) + dx, int(std::lround(cy)) + dy, rgb);
}

}  // namespace

Image render_matches(const Image& left, const Image& right,
                     const std::vector<Keypoint>& kps_left,
                     const std::vector<Keypoint>& kps_right,
                     const std::vector<std::pair<int, int>>& matches,
                     const std::vector<char>& inlier_mask) {
    const Image a = to_rgb(left), b = to_rgb(right);
    Image canvas(a.width + b.width, std::max(a.height, b.height), 3, 0.f);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) canvas.at(c, y, x) = a.at(c, y, x);
        for (int y = 0; y < b.height; ++y)
            for (int x = 0; x < b.width; ++x) canvas.at(c, y, x + a.width) = b.at(c, y, x);
    }
    const float green[3] = {0.1f, 0.9f, 0.1f};
    const float red[3] = {0.9f, 0.1f, 0.1f};
    for (size_t i = 0; i < matches.size(); ++i) {
        const auto& kl = kps_left[size_t(matches[i].first)];
        const auto& kr = kps_right[size_t(matches[i].second)];
        const bool inlier = inlier_mask.empty() || inlier_mask[i];
        const float* rgb = inlier ? green : red;
        draw_line(canvas, kl.x, kl.y, kr.x + a.width, kr.y, rgb);
        draw_square(canvas, kl.x, kl.y, rgb);
        draw_square(canvas, kr.x + a.width, kr.y, rgb);
    }
    return canvas;
}

}  // namespace sandesc
