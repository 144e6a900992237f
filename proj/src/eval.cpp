#include "sandesc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "sandesc/dataset.hpp"
#include "sandesc/harris.hpp"
#include "sandesc/matching.hpp"
#include "sandesc/metrics.hpp"
#include "sandesc/serial.hpp"

namespace sandesc {

namespace {

DescriptorVolume crop_volume(const DescriptorVolume& v, int w, int h) {
    if (w == v.width && h == v.height) return v;
    DescriptorVolume out;
    out.dim = v.dim;
    out.width = w;
    out.height = h;
    out.data.resize(size_t(v.dim) * w * h);
    for (int c = 0; c < v.dim; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.data[(size_t(c) * h + y) * w + x] = v.at(c, y, x);
    return out;
}

std::string hex64(uint64_t v) {
    char buf[20];
    snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
    return buf;
}

double fmt4(double v) { return std::round(v * 10000.0) / 10000.0; }

}  // namespace

Extraction extract_descriptors(Model<float>& model, const Image& img, Detector det, int budget) {
    SD_CHECK(budget > 0, "extract: keypoint budget must be positive");
    const Image rgb = to_rgb(img);
    const Image padded = pad_to_multiple(rgb, 16);
    DescriptorVolume volume = extract_volume(model, image_tensor(padded));
    volume = crop_volume(volume, rgb.width, rgb.height);

    Extraction out;
    if (det == Detector::Harris) {
        out.keypoints = harris_keypoints(to_gray(rgb), 0.04, budget, 3);
    } else {
        const int stride =
            std::max(1, int(std::floor(std::sqrt(double(rgb.width) * rgb.height / budget))));
        out.keypoints = grid_keypoints(rgb.width, rgb.height, stride);
        if (int(out.keypoints.size()) > budget) out.keypoints.resize(size_t(budget));
    }
    if (!out.keypoints.empty()) out.descriptors = sample_descriptors(volume, out.keypoints);
    return out;
}

EvalReport evaluate_dataset(Model<float>& model, const std::string& checkpoint_hash,
                            const std::string& data_dir, int budget, Detector det,
                            uint64_t seed, int jobs) {
    const auto dataset = list_dataset(data_dir);
    EvalReport report;
    report.seed = seed;
    report.checkpoint_hash = checkpoint_hash;
    report.detector = detector_name(det);
    report.budget = budget;
    {
        std::ostringstream params;
        params << "detector=" << report.detector << ";budget=" << budget << ";seed=" << seed
               << ";sweep=";
        for (double t : report.ransac_sweep) params << t << ",";
        report.config_hash = hex64(fnv1a64(params.str().data(), params.str().size()));
    }

    const size_t n_pairs = dataset.size();
    const size_t n_thresh = report.ransac_sweep.size();
    report.pairs.resize(n_pairs);
    // corner_errors[t * n_pairs + p]
    std::vector<double> corner_errors(n_thresh * n_pairs,
                                      std::numeric_limits<double>::infinity());

    auto run_pair = [&](size_t idx) {
        const auto& entry = dataset[idx];
        PairReport& pr = report.pairs[idx];
        pr.scene = entry.scene;
        pr.target_index = entry.target_index;
        if (entry.homography_missing) {
            pr.skipped = true;
            pr.skip_reason = "homography file missing";
            return;
        }
        const Image ref = load_image(entry.ref_path);
        const Image target = load_image(entry.target_path);
        const Homography h_gt = load_homography_text(entry.homography_path);
        const Homography h_gt_inv = h_gt.inverse();

        const Extraction e1 = extract_descriptors(model, ref, det, budget);
        const Extraction e2 = extract_descriptors(model, target, det, budget);

        MatchSet matches;
        if (!e1.keypoints.empty() && !e2.keypoints.empty()) {
            NoGradGuard guard;
            Tensor<float> d1(Shape{int(e1.keypoints.size()), 128}, e1.descriptors);
            Tensor<float> d2(Shape{int(e2.keypoints.size()), 128}, e2.descriptors);
            matches = mutual_nearest_neighbors(similarity_matrix(d1, d2));
        }
        pr.matches = int(matches.pairs.size());

        std::vector<double> reproj_errors;
        std::vector<Correspondence> corr;
        for (const auto& m : matches.pairs) {
            const auto& a = e1.keypoints[size_t(m.first_idx)];
            const auto& b = e2.keypoints[size_t(m.second_idx)];
            double err = std::numeric_limits<double>::infinity();
            try {
                const Point2 projected = warp_point(h_gt, {a.x, a.y});
                err = std::hypot(projected.x - b.x, projected.y - b.y);
            } catch (const PointAtInfinityError&) {
            }
            reproj_errors.push_back(err);
            corr.push_back({{a.x, a.y}, {b.x, b.y}, err});
        }
        const auto fractions = mma(reproj_errors, {1.0, 2.0, 3.0});
        pr.mma1 = fractions[0];
        pr.mma2 = fractions[1];
        pr.mma3 = fractions[2];
        for (double e : reproj_errors)
            if (e <= 3.0) ++pr.correct_at_3;

        long in_overlap1 = 0, in_overlap2 = 0;
        auto inside = [](const Point2& p, const Image& img) {
            return p.x >= 0 && p.x <= img.width - 1 && p.y >= 0 && p.y <= img.height - 1;
        };
        for (const auto& kp : e1.keypoints) {
            try {
                if (inside(warp_point(h_gt, {kp.x, kp.y}), target)) ++in_overlap1;
            } catch (const PointAtInfinityError&) {
            }
        }
        for (const auto& kp : e2.keypoints) {
            try {
                if (inside(warp_point(h_gt_inv, {kp.x, kp.y}), ref)) ++in_overlap2;
            } catch (const PointAtInfinityError&) {
            }
        }
        pr.ms3 = matching_score(pr.correct_at_3, in_overlap1, in_overlap2);

        for (size_t t = 0; t < n_thresh; ++t) {
            const uint64_t pair_seed = seed * 1000003ull + idx * 97ull + t;
            const auto res =
                ransac_homography(corr, 1000, report.ransac_sweep[t], pair_seed);
            if (res.success)
                corner_errors[t * n_pairs + idx] = corner_error(res.h, h_gt, ref.width, ref.height);
        }
    };

    if (jobs <= 1) {
        for (size_t i = 0; i < n_pairs; ++i) run_pair(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j)
            pool.emplace_back([&] {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= n_pairs) return;
                    run_pair(i);
                }
            });
        for (auto& th : pool) th.join();
    }

    std::vector<size_t> evaluated;
    for (size_t i = 0; i < n_pairs; ++i)
        if (!report.pairs[i].skipped) evaluated.push_back(i);
    report.evaluated = int(evaluated.size());
    report.skipped = int(n_pairs - evaluated.size());

    // threshold sweep: keep the best AUC per target pixel bound, and report
    // per-pair corner errors at the sweep entry with the best AUC@3
    double best3 = -1.0;
    size_t best_t = 0;
    for (size_t t = 0; t < n_thresh; ++t) {
        std::vector<double> errs;
        for (size_t i : evaluated) errs.push_back(corner_errors[t * n_pairs + i]);
        if (errs.empty()) continue;
        const double a1 = hom_acc_auc(errs, 1);
        const double a2 = hom_acc_auc(errs, 2);
        const double a3 = hom_acc_auc(errs, 3);
        report.auc1 = std::max(report.auc1, a1);
        report.auc2 = std::max(report.auc2, a2);
        report.auc3 = std::max(report.auc3, a3);
        if (a3 > best3) {
            best3 = a3;
            best_t = t;
        }
    }
    report.reported_threshold = report.ransac_sweep[best_t];
    for (size_t i : evaluated) report.pairs[i].corner_err = corner_errors[best_t * n_pairs + i];

    if (!evaluated.empty()) {
        for (size_t i : evaluated) {
            report.agg_mma1 += report.pairs[i].mma1;
            report.agg_mma2 += report.pairs[i].mma2;
            report.agg_mma3 += report.pairs[i].mma3;
            report.agg_ms3 += report.pairs[i].ms3;
        }
        report.agg_mma1 /= double(evaluated.size());
        report.agg_mma2 /= double(evaluated.size());
        report.agg_mma3 /= double(evaluated.size());
        report.agg_ms3 /= double(evaluated.size());
    }
    return report;
}

std::string report_text(const EvalReport& r) {
    std::ostringstream os;
    char buf[256];
    os << "# descriptor evaluation report\n";
    os << "seed = " << r.seed << "\n";
    os << "config_hash = " << r.config_hash << "\n";
    os << "checkpoint_hash = " << r.checkpoint_hash << "\n";
    os << "detector = " << r.detector << "\n";
    os << "budget = " << r.budget << "\n";
    os << "ransac_sweep =";
    for (double t : r.ransac_sweep) os << " " << t;
    os << "\n";
    os << "reported_threshold = " << r.reported_threshold << "\n";
    os << "pairs_evaluated = " << r.evaluated << "\n";
    os << "pairs_skipped = " << r.skipped << "\n";
    for (const auto& p : r.pairs) {
        if (p.skipped) {
            os << "pair " << p.scene << " target_" << p.target_index << " skipped ("
               << p.skip_reason << ")\n";
            continue;
        }
        snprintf(buf, sizeof(buf),
                 "pair %s target_%02d matches=%d mma1=%.4f mma2=%.4f mma3=%.4f ms3=%.4f "
                 "corner_err=%.4f",
                 p.scene.c_str(), p.target_index, p.matches, fmt4(p.mma1), fmt4(p.mma2),
                 fmt4(p.mma3), fmt4(p.ms3), p.corner_err);
        os << buf << "\n";
    }
    snprintf(buf, sizeof(buf),
             "aggregate mma1=%.4f mma2=%.4f mma3=%.4f ms3=%.4f auc1=%.4f auc2=%.4f auc3=%.4f",
             fmt4(r.agg_mma1), fmt4(r.agg_mma2), fmt4(r.agg_mma3), fmt4(r.agg_ms3), fmt4(r.auc1),
             fmt4(r.auc2), fmt4(r.auc3));
    os << buf << "\n";
    return os.str();
}

void write_report(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    SD_CHECK(out, "report: cannot write '", path, "'");
    out << report_text(r);
    SD_CHECK(out.good(), "report: short write to '", path, "'");
}

}  // namespace sandesc
