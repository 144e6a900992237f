#include "sandesc/harris.hpp"

#include <algorithm>
#include <cmath>

namespace sandesc {

namespace {

struct Candidate {
    int x, y;
    float response;
};

}  // namespace

std::vector<Keypoint> harris_keypoints(const Image& gray, double k, int top_n, int nms_radius) {
    SD_CHECK(gray.channels == 1, "harris: expected a grayscale image, got ", gray.channels,
             " channels");
    SD_CHECK(gray.width >= 7 && gray.height >= 7, "harris: image must be at least 7x7, got ",
             gray.width, "x", gray.height);
    SD_CHECK(top_n >= 0 && nms_radius >= 1, "harris: invalid top_n/nms_radius");

    const int w = gray.width, h = gray.height;
    std::vector<float> ix(size_t(w) * h, 0.f), iy(size_t(w) * h, 0.f);
    for (int y = 1; y < h - 1; ++y)
        for (int x = 1; x < w - 1; ++x) {
            const auto px = [&](int yy, int xx) { return gray.at(0, yy, xx); };
            ix[size_t(y) * w + x] = (px(y - 1, x + 1) + 2.f * px(y, x + 1) + px(y + 1, x + 1) -
                                     px(y - 1, x - 1) - 2.f * px(y, x - 1) - px(y + 1, x - 1));
            iy[size_t(y) * w + x] = (px(y + 1, x - 1) + 2.f * px(y + 1, x) + px(y + 1, x + 1) -
                                     px(y - 1, x - 1) - 2.f * px(y - 1, x) - px(y - 1, x + 1));
        }

    // 3x3 Gaussian-weighted structure tensor, kernel [1 2 1]/4 per axis
    std::vector<float> response(size_t(w) * h, 0.f);
    const float gk[3] = {0.25f, 0.5f, 0.25f};
    for (int y = 2; y < h - 2; ++y)
        for (int x = 2; x < w - 2; ++x) {
            double sxx = 0, syy = 0, sxy = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double wgt = double(gk[dy + 1]) * gk[dx + 1];
                    const double gx = ix[size_t(y + dy) * w + (x + dx)];
                    const double gy = iy[size_t(y + dy) * w + (x + dx)];
                    sxx += wgt * gx * gx;
                    syy += wgt * gy * gy;
                    sxy += wgt * gx * gy;
                }
            const double tr = sxx + syy;
            response[size_t(y) * w + x] = float(sxx * syy - sxy * sxy - k * tr * tr);
        }

    // non-max suppression; ties keep the earlier point in scan order
    const int margin = std::max(2, nms_radius);
    std::vector<Candidate> cands;
    for (int y = margin; y < h - margin; ++y)
        for (int x = margin; x < w - margin; ++x) {
            const float r = response[size_t(y) * w + x];
            if (!(r > 1e-10f)) continue;
            bool is_max = true;
            for (int dy = -nms_radius; dy <= nms_radius && is_max; ++dy)
                for (int dx = -nms_radius; dx <= nms_radius && is_max; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const float q = response[size_t(y + dy) * w + (x + dx)];
                    if (q > r || (q == r && (dy < 0 || (dy == 0 && dx < 0)))) is_max = false;
                }
            if (is_max) cands.push_back({x, y, r});
        }

    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.response != b.response) return a.response > b.response;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    if (int(cands.size()) > top_n) cands.resize(size_t(top_n));

    std::vector<Keypoint> out;
    out.reserve(cands.size());
    for (const auto& c : cands) {
        const auto r = [&](int yy, int xx) { return double(response[size_t(yy) * w + xx]); };
        const double gx = 0.5 * (r(c.y, c.x + 1) - r(c.y, c.x - 1));
        const double gy = 0.5 * (r(c.y + 1, c.x) - r(c.y - 1, c.x));
        const double hxx = r(c.y, c.x + 1) - 2 * r(c.y, c.x) + r(c.y, c.x - 1);
        const double hyy = r(c.y + 1, c.x) - 2 * r(c.y, c.x) + r(c.y - 1, c.x);
        const double hxy = 0.25 * (r(c.y + 1, c.x + 1) - r(c.y + 1, c.x - 1) -
                                   r(c.y - 1, c.x + 1) + r(c.y - 1, c.x - 1));
        double dx = 0, dy = 0;
        const double det = hxx * hyy - hxy * hxy;
        if (std::fabs(det) > 1e-18) {
            dx = -(hyy * gx - hxy * gy) / det;
            dy = -(hxx * gy - hxy * gx) / det;
            dx = std::min(std::max(dx, -0.5), 0.5);
            dy = std::min(std::max(dy, -0.5), 0.5);
        }
        out.push_back({c.x + dx, c.y + dy, c.response});
    }
    return out;
}

std::vector<Keypoint> grid_keypoints(int width, int height, int stride) {
    SD_CHECK(stride >= 1, "grid_keypoints: stride must be at least 1");
    std::vector<Keypoint> out;
    const int nx = width / stride, ny = height / stride;
    out.reserve(size_t(nx) * ny);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            out.push_back({double(stride / 2 + ix * stride), double(stride / 2 + iy * stride),
                           1.0f});
    return out;
}

}  // namespace sandesc
