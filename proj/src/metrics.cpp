#include "sandesc/metrics.hpp"

#include <cmath>
#include <limits>

namespace sandesc {

double corner_error(const Homography& h_est, const Homography& h_gt, int width, int height) {
    SD_CHECK(width >= 1 && height >= 1, "corner_error: empty image");
    const Point2 corners[4] = {{0.0, 0.0},
                               {double(width - 1), 0.0},
                               {double(width - 1), double(height - 1)},
                               {0.0, double(height - 1)}};
    double acc = 0.0;
    for (const auto& c : corners) {
        try {
            const Point2 a = warp_point(h_est, c);
            const Point2 b = warp_point(h_gt, c);
            acc += std::hypot(a.x - b.x, a.y - b.y);
        } catch (const PointAtInfinityError&) {
            return std::numeric_limits<double>::infinity();
        }
    }
    return acc / 4.0;
}

std::vector<double> mma(const std::vector<double>& errors,
                        const std::vector<double>& thresholds) {
    std::vector<double> out(thresholds.size(), 0.0);
    if (errors.empty()) return out;
    for (size_t t = 0; t < thresholds.size(); ++t) {
        long correct = 0;
        for (double e : errors)
            if (e <= thresholds[t]) ++correct;
        out[t] = double(correct) / double(errors.size());
    }
    return out;
}

double matching_score(long correct_matches, long kps1_in_overlap, long kps2_in_overlap) {
    const double denom = 0.5 * (double(kps1_in_overlap) + double(kps2_in_overlap));
    if (denom <= 0.0) return 0.0;
    return double(correct_matches) / denom;
}

double hom_acc_auc(const std::vector<double>& corner_errors, int eps_max) {
    SD_CHECK(eps_max >= 1, "hom_acc_auc: eps_max must be at least 1");
    if (corner_errors.empty()) return 0.0;
    const int grid = 100 * eps_max;
    auto accuracy = [&](double eps) {
        long ok = 0;
        for (double e : corner_errors)
            if (e <= eps) ++ok;
        return double(ok) / double(corner_errors.size());
    };
    double acc_sum = 0.0;
    double prev = accuracy(0.0);
    for (int i = 1; i <= grid; ++i) {
        const double cur = accuracy(double(i) / 100.0);
        acc_sum += 0.5 * (prev + cur);
        prev = cur;
    }
    return acc_sum / double(grid);
}

}  // namespace sandesc
