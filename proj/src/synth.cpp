#include "sandesc/synth.hpp"

#include "sandesc/harris.hpp"

#include <algorithm>
#include <cmath>

namespace sandesc {

namespace {

// Bilinear lattice noise in [0,1] at the given cell size.
struct ValueNoise {
    int cells, size;
    std::vector<float> lattice;

    ValueNoise(int image_size, int cell_size, Rng& rng)
        : cells(image_size / cell_size + 2), size(cell_size) {
        lattice.resize(size_t(cells) * cells);
        for (auto& v : lattice) v = float(rng.uniform());
    }

    float at(double x, double y) const {
        const double gx = x / size, gy = y / size;
        const int x0 = int(gx), y0 = int(gy);
        const double fx = gx - x0, fy = gy - y0;
        auto l = [&](int yy, int xx) { return lattice[size_t(yy) * cells + xx]; };
        const double top = l(y0, x0) + fx * (l(y0, x0 + 1) - l(y0, x0));
        const double bot = l(y0 + 1, x0) + fx * (l(y0 + 1, x0 + 1) - l(y0 + 1, x0));
        return float(top + fy * (bot - top));
    }
};

void blend(Image& img, int x, int y, const float rgb[3], float alpha) {
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
    for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = (1.f - alpha) * img.at(c, y, x) + alpha * rgb[c];
}

}  // namespace

Image procedural_texture(int size, uint64_t seed) {
    SD_CHECK(size >= 16, "procedural_texture: size must be at least 16");
    Rng rng = Rng(seed).split(0x7E47u);
    Image img(size, size, 3);

    // fractal base: shared luminance plus per-channel tint
    ValueNoise lum1(size, std::max(8, size / 4), rng);
    ValueNoise lum2(size, std::max(4, size / 8), rng);
    ValueNoise lum3(size, std::max(2, size / 16), rng);
    ValueNoise tint[3] = {ValueNoise(size, std::max(8, size / 3), rng),
                          ValueNoise(size, std::max(8, size / 3), rng),
                          ValueNoise(size, std::max(8, size / 3), rng)};
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const float l = 0.55f * lum1.at(x, y) + 0.3f * lum2.at(x, y) + 0.15f * lum3.at(x, y);
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = 0.65f * l + 0.35f * tint[c].at(x, y);
        }

    // geometric primitives: rectangles, circles, lines, checker patches
    const int count = 12 + rng.uniform_int(9);
    for (int prim = 0; prim < count; ++prim) {
        const int kind = rng.uniform_int(4);
        float rgb[3] = {float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
        const float alpha = float(rng.uniform(0.6, 1.0));
        if (kind == 0) {  // axis-aligned rectangle
            const int rw = 4 + rng.uniform_int(size / 3);
            const int rh = 4 + rng.uniform_int(size / 3);
            const int x0 = rng.uniform_int(std::max(1, size - rw));
            const int y0 = rng.uniform_int(std::max(1, size - rh));
            for (int y = y0; y < y0 + rh; ++y)
                for (int x = x0; x < x0 + rw; ++x) blend(img, x, y, rgb, alpha);
        } else if (kind == 1) {  // filled circle
            const int r = 3 + rng.uniform_int(size / 6);
            const int cx = rng.uniform_int(size), cy = rng.uniform_int(size);
            for (int y = cy - r; y <= cy + r; ++y)
                for (int x = cx - r; x <= cx + r; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                        blend(img, x, y, rgb, alpha);
        } else if (kind == 2) {  // thick line segment
            const double x0 = rng.uniform(0, size), y0 = rng.uniform(0, size);
            const double x1 = rng.uniform(0, size), y1 = rng.uniform(0, size);
            const double half = 0.5 + rng.uniform_int(2);
            const int lo_x = int(std::floor(std::min(x0, x1) - half - 1));
            const int hi_x = int(std::ceil(std::max(x0, x1) + half + 1));
            const int lo_y = int(std::floor(std::min(y0, y1) - half - 1));
            const int hi_y = int(std::ceil(std::max(y0, y1) + half + 1));
            const double dx = x1 - x0, dy = y1 - y0;
            const double len2 = std::max(1e-9, dx * dx + dy * dy);
            for (int y = lo_y; y <= hi_y; ++y)
                for (int x = lo_x; x <= hi_x; ++x) {
                    const double t =
                        std::min(1.0, std::max(0.0, ((x - x0) * dx + (y - y0) * dy) / len2));
                    const double px = x0 + t * dx, py = y0 + t * dy;
                    if (std::hypot(x - px, y - py) <= half) blend(img, x, y, rgb, alpha);
                }
        } else {  // checker patch
            const int cell = 3 + rng.uniform_int(10);
            const int pw = 2 + rng.uniform_int(6), ph = 2 + rng.uniform_int(6);
            const int x0 = rng.uniform_int(std::max(1, size - pw * cell));
            const int y0 = rng.uniform_int(std::max(1, size - ph * cell));
            float other[3] = {float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
            for (int ty = 0; ty < ph; ++ty)
                for (int tx = 0; tx < pw; ++tx) {
                    const float* col = ((tx + ty) % 2 == 0) ? rgb : other;
                    for (int y = 0; y < cell; ++y)
                        for (int x = 0; x < cell; ++x)
                            blend(img, x0 + tx * cell + x, y0 + ty * cell + y, col, alpha);
                }
        }
    }

    // fine grain so flat regions still carry gradient signal
    for (auto& v : img.data)
        v = std::min(1.f, std::max(0.f, v + float(rng.uniform(-0.03, 0.03))));
    return img;
}

namespace {

Homography sample_homography(int side, const TrainConfig& cfg, Rng& rng) {
    const double c = 0.5 * (side - 1);
    const double rot = cfg.rotation_range * 3.14159265358979323846 / 180.0;
    const double theta = rng.uniform(-rot, rot);
    const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    const double tx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * side;
    const double ty = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * side;
    const double persp_span = cfg.perspective_frac * std::sqrt(2.0) / side;
    double pa = rng.uniform(-persp_span, persp_span);
    double pb = rng.uniform(-persp_span, persp_span);

    // rescale the perspective part so its own corner displacement stays
    // within perspective_frac * crop
    const double half = 0.5 * (side - 1);
    double worst = 0.0;
    for (int sx = -1; sx <= 1; sx += 2)
        for (int sy = -1; sy <= 1; sy += 2) {
            const double den = 1.0 + pa * sx * half + pb * sy * half;
            if (std::fabs(den) < 1e-6) {
                worst = 1e9;
                continue;
            }
            const double disp = std::hypot(sx * half, sy * half) * std::fabs(1.0 / den - 1.0);
            worst = std::max(worst, disp);
        }
    const double budget = cfg.perspective_frac * side;
    if (worst > budget && worst > 0.0) {
        pa *= budget / worst;
        pb *= budget / worst;
    }

    const double cs = std::cos(theta), sn = std::sin(theta);
    auto mat = [](std::array<double, 9> v) { return v; };
    const auto rot_scale = mat({scale * cs, -scale * sn, 0, scale * sn, scale * cs, 0, 0, 0, 1});
    const auto trans = mat({1, 0, tx, 0, 1, ty, 0, 0, 1});
    const auto persp = mat({1, 0, 0, 0, 1, 0, pa, pb, 1});
    const auto center = mat({1, 0, c, 0, 1, c, 0, 0, 1});
    const auto uncenter = mat({1, 0, -c, 0, 1, -c, 0, 0, 1});

    auto mul = [](const std::array<double, 9>& a, const std::array<double, 9>& b) {
        std::array<double, 9> r{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) r[size_t(i) * 3 + j] += a[size_t(i) * 3 + k] * b[size_t(k) * 3 + j];
        return r;
    };
    const auto full = mul(center, mul(persp, mul(trans, mul(rot_scale, uncenter))));
    return Homography::from_row_major(full);  // throws when degenerate
}

}  // namespace

SyntheticPair generate_pair(const Image& source, const TrainConfig& cfg, Rng& rng) {
    const int side = cfg.crop_size;
    SD_CHECK(source.channels == 3, "generate_pair: source must be RGB");
    SD_CHECK(source.width >= side && source.height >= side,
             "generate_pair: source ", source.width, "x", source.height,
             " smaller than crop ", side);

    const int ox = (source.width - side) / 2;
    const int oy = (source.height - side) / 2;

    SyntheticPair pair;
    bool accepted = false;
    for (int attempt = 0; attempt < 64 && !accepted; ++attempt) {
        Homography h;
        try {
            h = sample_homography(side, cfg, rng);
        } catch (const std::runtime_error&) {
            continue;  // degenerate draw; resample
        }
        if (std::fabs(h.det()) < 1e-8) continue;
        Homography hinv = h.inverse();
        accepted = true;
        const Point2 corners[4] = {{0, 0},
                                   {double(side - 1), 0},
                                   {double(side - 1), double(side - 1)},
                                   {0, double(side - 1)}};
        for (const auto& q : corners) {
            try {
                const Point2 src = warp_point(hinv, q);
                const double sx = src.x + ox, sy = src.y + oy;
                if (!(sx >= 0 && sx <= source.width - 1 && sy >= 0 && sy <= source.height - 1))
                    accepted = false;
            } catch (const PointAtInfinityError&) {
                accepted = false;
            }
        }
        if (accepted) pair.map_1to2 = h;
    }
    SD_CHECK(accepted, "generate_pair: could not fit a warp inside the source after 64 draws; ",
             "use a larger source image");

    pair.image1 = crop_region(source, ox, oy, side, side);
    pair.image2 = Image(side, side, 3);
    const Homography hinv = pair.map_1to2.inverse();
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const Point2 src = warp_point(hinv, {double(x), double(y)});
            for (int c = 0; c < 3; ++c)
                pair.image2.at(c, y, x) = sample_bilinear(source, c, src.x + ox, src.y + oy);
        }

    // independent brightness/contrast jitter per view
    for (Image* view : {&pair.image1, &pair.image2}) {
        const float contrast = float(rng.uniform(1.0 - cfg.photometric_frac, 1.0 + cfg.photometric_frac));
        const float bright = float(rng.uniform(-cfg.photometric_frac, cfg.photometric_frac));
        for (auto& v : view->data)
            v = std::min(1.f, std::max(0.f, contrast * (v - 0.5f) + 0.5f + bright));
    }
    return pair;
}

std::pair<std::vector<Keypoint>, std::vector<Keypoint>> da_keypoints_maps(
    const Homography& fwd, const Homography& back, int width, int height, int grid_stride,
    double tau) {
    std::pair<std::vector<Keypoint>, std::vector<Keypoint>> out;
    for (const Keypoint& kp : grid_keypoints(width, height, grid_stride)) {
        try {
            const Point2 projected = warp_point(fwd, {kp.x, kp.y});
            if (!(projected.x >= 0 && projected.x <= width - 1 && projected.y >= 0 &&
                  projected.y <= height - 1))
                continue;
            const Point2 round_trip = warp_point(back, projected);
            if (std::hypot(round_trip.x - kp.x, round_trip.y - kp.y) >= tau) continue;
            out.first.push_back(kp);
            out.second.push_back({projected.x, projected.y, 1.0f});
        } catch (const PointAtInfinityError&) {
        }
    }
    return out;
}

}  // namespace sandesc
