#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sandesc/common.hpp"

namespace sandesc {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct PointAtInfinityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 3x3 projective map over pixel coordinates, stored row-major and kept
// normalized: bottom-right entry 1 when nonzero, unit Frobenius norm
// otherwise. Accepted instances are invertible (|det| > 1e-10).
class Homography {
public:
    Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

    static Homography from_row_major(const std::array<double, 9>& m);

    const std::array<double, 9>& values() const { return m_; }
    double at(int r, int c) const { return m_[size_t(r) * 3 + c]; }
    double det() const;

    Homography inverse() const;
    // (*this) after `inner`: (this o inner)(p) = this(inner(p))
    Homography compose(const Homography& inner) const;

private:
    void normalize();
    std::array<double, 9> m_;
};

// Perspective division of h * (x, y, 1); throws PointAtInfinityError when
// the denominator magnitude drops below 1e-12.
Point2 warp_point(const Homography& h, const Point2& p);

struct Correspondence {
    Point2 p1, p2;
    double reprojection_error = 0.0;
};

// Normalized DLT (Hartley): both point sets are translated to centroid zero
// and scaled to mean distance sqrt(2); the system is solved by the null
// space of the 2Nx9 design matrix. Throws on degenerate configurations.
Homography dlt_homography(const std::vector<Point2>& pts1, const std::vector<Point2>& pts2);

struct RansacResult {
    bool success = false;
    Homography h;
    std::vector<char> inlier_mask;
    int inlier_count = 0;
};

// Seeded minimal-sample loop (4 points), symmetric transfer error (average
// of forward and backward reprojection) against `inlier_thresh`, final DLT
// refit on the best inlier set. Returns success=false instead of throwing
// when no model reaches 4 inliers.
RansacResult ransac_homography(const std::vector<Correspondence>& corr, int iters,
                               double inlier_thresh, uint64_t seed);

}  // namespace sandesc
