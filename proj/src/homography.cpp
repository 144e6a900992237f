#include "sandesc/homography.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>

#include "sandesc/rng.hpp"

namespace sandesc {

namespace {
using Mat3 = Eigen::Matrix3d;

Mat3 to_eigen(const std::array<double, 9>& m) {
    Mat3 e;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) e(r, c) = m[size_t(r) * 3 + c];
    return e;
}

std::array<double, 9> from_eigen(const Mat3& e) {
    std::array<double, 9> m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m[size_t(r) * 3 + c] = e(r, c);
    return m;
}
}  // namespace

void Homography::normalize() {
    double frob = 0.0;
    for (double v : m_) frob += v * v;
    frob = std::sqrt(frob);
    SD_CHECK(frob > 0.0, "homography: zero matrix");
    if (std::fabs(m_[8]) > 1e-12 * frob) {
        const double inv = 1.0 / m_[8];
        for (double& v : m_) v *= inv;
    } else {
        const double inv = 1.0 / frob;
        for (double& v : m_) v *= inv;
    }
}

Homography Homography::from_row_major(const std::array<double, 9>& m) {
    Homography h;
    h.m_ = m;
    h.normalize();
    SD_CHECK(std::fabs(h.det()) > 1e-10, "homography: matrix is not invertible (|det| = ",
             std::fabs(h.det()), ")");
    return h;
}

double Homography::det() const { return to_eigen(m_).determinant(); }

Homography Homography::inverse() const {
    const Mat3 e = to_eigen(m_);
    SD_CHECK(std::fabs(e.determinant()) > 1e-10, "homography: cannot invert, |det| = ",
             std::fabs(e.determinant()));
    return from_row_major(from_eigen(e.inverse()));
}

Homography Homography::compose(const Homography& inner) const {
    return from_row_major(from_eigen(to_eigen(m_) * to_eigen(inner.m_)));
}

Point2 warp_point(const Homography& h, const Point2& p) {
    const auto& m = h.values();
    const double den = m[6] * p.x + m[7] * p.y + m[8];
    if (std::fabs(den) <= 1e-12)
        throw PointAtInfinityError("warp_point: point (" + std::to_string(p.x) + "," +
                                   std::to_string(p.y) + ") maps to infinity");
    return {(m[0] * p.x + m[1] * p.y + m[2]) / den, (m[3] * p.x + m[4] * p.y + m[5]) / den};
}

namespace {

// Hartley normalization: translate centroid to the origin, scale mean
// distance to sqrt(2).
Mat3 hartley_transform(const std::vector<Point2>& pts) {
    double cx = 0, cy = 0;
    for (const auto& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= double(pts.size());
    cy /= double(pts.size());
    double mean_dist = 0;
    for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
    mean_dist /= double(pts.size());
    SD_CHECK(mean_dist > 1e-12, "dlt: degenerate configuration, points are coincident");
    const double s = std::sqrt(2.0) / mean_dist;
    Mat3 t;
    t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
    return t;
}

Point2 apply(const Mat3& t, const Point2& p) {
    return {t(0, 0) * p.x + t(0, 1) * p.y + t(0, 2), t(1, 0) * p.x + t(1, 1) * p.y + t(1, 2)};
}

}  // namespace

Homography dlt_homography(const std::vector<Point2>& pts1, const std::vector<Point2>& pts2) {
    SD_CHECK(pts1.size() == pts2.size(), "dlt: point lists differ in length");
    const int n = int(pts1.size());
    SD_CHECK(n >= 4, "dlt: need at least 4 correspondences, got ", n);

    const Mat3 t1 = hartley_transform(pts1);
    const Mat3 t2 = hartley_transform(pts2);

    Eigen::MatrixXd a(2 * n, 9);
    for (int i = 0; i < n; ++i) {
        const Point2 p = apply(t1, pts1[size_t(i)]);
        const Point2 q = apply(t2, pts2[size_t(i)]);
        a.row(2 * i) << 0, 0, 0, -p.x, -p.y, -1, q.y * p.x, q.y * p.y, q.y;
        a.row(2 * i + 1) << p.x, p.y, 1, 0, 0, 0, -q.x * p.x, -q.x * p.y, -q.x;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // a healthy system has a one-dimensional null space; a second vanishing
    // singular value signals collinear/coincident points
    SD_CHECK(sv(7) > 1e-9 * sv(0), "dlt: degenerate configuration (rank-deficient system)");

    const Eigen::VectorXd h = svd.matrixV().col(8);
    Mat3 hn;
    hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    const Mat3 full = t2.inverse() * hn * t1;
    SD_CHECK(std::fabs(full.determinant()) > 1e-10, "dlt: degenerate configuration (singular result)");
    return Homography::from_row_major(from_eigen(full));
}

RansacResult ransac_homography(const std::vector<Correspondence>& corr, int iters,
                               double inlier_thresh, uint64_t seed) {
    RansacResult result;
    const int n = int(corr.size());
    if (n < 4) return result;
    SD_CHECK(iters > 0 && inlier_thresh > 0, "ransac: iters and threshold must be positive");

    Rng rng = Rng(seed).split(0x7A45ACu);

    auto score = [&](const Homography& h, std::vector<char>& mask) -> int {
        Homography hinv;
        try {
            hinv = h.inverse();
        } catch (const std::runtime_error&) {
            return -1;
        }
        int count = 0;
        mask.assign(size_t(n), 0);
        for (int i = 0; i < n; ++i) {
            try {
                const Point2 f = warp_point(h, corr[size_t(i)].p1);
                const Point2 b = warp_point(hinv, corr[size_t(i)].p2);
                const double err = 0.5 * (std::hypot(f.x - corr[size_t(i)].p2.x,
                                                     f.y - corr[size_t(i)].p2.y) +
                                          std::hypot(b.x - corr[size_t(i)].p1.x,
                                                     b.y - corr[size_t(i)].p1.y));
                if (err < inlier_thresh) {
                    mask[size_t(i)] = 1;
                    ++count;
                }
            } catch (const PointAtInfinityError&) {
            }
        }
        return count;
    };

    int best_count = 0;
    std::vector<char> best_mask;
    Homography best_h;
    std::vector<Point2> s1(4), s2(4);
    std::vector<char> mask;
    for (int it = 0; it < iters; ++it) {
        int idx[4];
        for (int k = 0; k < 4; ++k) {
            bool fresh;
            do {
                idx[k] = rng.uniform_int(n);
                fresh = true;
                for (int j = 0; j < k; ++j) fresh = fresh && idx[j] != idx[k];
            } while (!fresh);
        }
        for (int k = 0; k < 4; ++k) {
            s1[size_t(k)] = corr[size_t(idx[k])].p1;
            s2[size_t(k)] = corr[size_t(idx[k])].p2;
        }
        Homography h;
        try {
            h = dlt_homography(s1, s2);
        } catch (const std::runtime_error&) {
            continue;  // collinear or coincident minimal sample
        }
        const int count = score(h, mask);
        if (count > best_count) {
            best_count = count;
            best_mask = mask;
            best_h = h;
        }
    }

    if (best_count < 4) return result;

    std::vector<Point2> in1, in2;
    for (int i = 0; i < n; ++i)
        if (best_mask[size_t(i)]) {
            in1.push_back(corr[size_t(i)].p1);
            in2.push_back(corr[size_t(i)].p2);
        }
    Homography refit = best_h;
    try {
        refit = dlt_homography(in1, in2);
    } catch (const std::runtime_error&) {
        // keep the minimal-sample model when the refit degenerates
    }
    result.success = true;
    result.h = refit;
    result.inlier_count = score(refit, result.inlier_mask);
    if (result.inlier_count < best_count) {  // refit drifted; fall back
        result.h = best_h;
        result.inlier_count = score(best_h, result.inlier_mask);
    }
    return result;
}

}  // namespace sandesc
