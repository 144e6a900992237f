#pragma once

#include <vector>

#include "sandesc/homography.hpp"

namespace sandesc {

// Mean displacement of the four image corners (pixel centers (0,0),
// (W-1,0), (W-1,H-1), (0,H-1)) under the estimated versus the reference
// homography. A point at infinity yields +infinity (scored as failure).
double corner_error(const Homography& h_est, const Homography& h_gt, int width, int height);

// Per threshold, the fraction of errors <= eps; an empty error list scores 0.
std::vector<double> mma(const std::vector<double>& errors, const std::vector<double>& thresholds);

// correct / ((n1 + n2) / 2), 0 when the denominator vanishes.
double matching_score(long correct_matches, long kps1_in_overlap, long kps2_in_overlap);

// Accuracy-vs-threshold AUC over a dense grid of 100 points per pixel unit
// from 0 to eps_max, integrated with the trapezoid rule; result in [0,1].
// Infinite corner errors (failed estimations) never clear any threshold.
double hom_acc_auc(const std::vector<double>& corner_errors, int eps_max);

}  // namespace sandesc
