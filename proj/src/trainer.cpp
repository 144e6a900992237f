#include "sandesc/trainer.hpp"

#include <cmath>

#include "sandesc/harris.hpp"
#include "sandesc/matching.hpp"
#include "sandesc/serial.hpp"

namespace sandesc {

Detector parse_detector(const std::string& name) {
    if (name == "grid") return Detector::Grid;
    if (name == "harris") return Detector::Harris;
    fail("detector: expected 'grid' or 'harris', got '", name, "'");
}

const char* detector_name(Detector d) { return d == Detector::Grid ? "grid" : "harris"; }

namespace {

struct PairKeypoints {
    std::vector<Keypoint> first, second;
};

PairKeypoints detect(const SyntheticPair& pair, const TrainConfig& cfg, Detector det) {
    PairKeypoints out;
    if (det == Detector::Grid) {
        auto [k1, k2] = da_keypoints(pair, cfg.grid_stride, cfg.reproj_tau);
        out.first = std::move(k1);
        out.second = std::move(k2);
    } else {
        out.first = harris_keypoints(to_gray(pair.image1), 0.04, cfg.train_keypoints, 3);
        out.second = harris_keypoints(to_gray(pair.image2), 0.04, cfg.train_keypoints, 3);
    }
    return out;
}

void write_record(std::ostream& out, const StepRecord& r) {
    out << "step=" << r.step << " loss=" << format_double(r.loss)
        << " gamma=" << format_double(r.gamma) << " lr=" << format_double(r.lr)
        << " triplets=" << r.triplet_count;
    if (r.val_accuracy >= 0.0) out << " val_acc=" << format_double(r.val_accuracy);
    out << "\n" << std::flush;
}

}  // namespace

std::vector<Image> default_texture_sources(const TrainConfig& cfg) {
    std::vector<Image> out;
    const int size = 2 * cfg.crop_size + 32;
    for (int i = 0; i < cfg.texture_sources; ++i)
        out.push_back(procedural_texture(size, cfg.seed * 1000003ull + uint64_t(i)));
    return out;
}

std::vector<SyntheticPair> validation_pairs(const TrainConfig& cfg) {
    Rng rng = Rng(cfg.seed).split(0x7A11DA7Eu);
    std::vector<SyntheticPair> out;
    const int size = 2 * cfg.crop_size + 32;
    for (int i = 0; i < cfg.val_pairs; ++i) {
        const Image src = procedural_texture(size, cfg.seed * 7777777ull + 500000ull + uint64_t(i));
        out.push_back(generate_pair(src, cfg, rng));
    }
    return out;
}

double validation_accuracy(Model<float>& model, const std::vector<SyntheticPair>& pairs,
                           const TrainConfig& cfg, Detector detector, double px_thresh) {
    if (pairs.empty()) return 0.0;
    double acc_sum = 0.0;
    for (const auto& pair : pairs) {
        const auto kps = detect(pair, cfg, detector);
        if (kps.first.size() < 2 || kps.second.size() < 2) continue;
        const DescriptorVolume v1 = extract_volume(model, image_tensor(pair.image1));
        const DescriptorVolume v2 = extract_volume(model, image_tensor(pair.image2));
        const auto d1 = sample_descriptors(v1, kps.first);
        const auto d2 = sample_descriptors(v2, kps.second);
        NoGradGuard guard;
        Tensor<float> t1(Shape{int(kps.first.size()), v1.dim}, d1);
        Tensor<float> t2(Shape{int(kps.second.size()), v2.dim}, d2);
        const auto matches = mutual_nearest_neighbors(similarity_matrix(t1, t2));
        if (matches.pairs.empty()) continue;
        long correct = 0;
        for (const auto& m : matches.pairs) {
            const auto& a = kps.first[size_t(m.first_idx)];
            const auto& b = kps.second[size_t(m.second_idx)];
            const Point2 projected = warp_point(pair.map_1to2, {a.x, a.y});
            if (std::hypot(projected.x - b.x, projected.y - b.y) <= px_thresh) ++correct;
        }
        acc_sum += double(correct) / double(matches.pairs.size());
    }
    return acc_sum / double(pairs.size());
}

TrainResult train(const TrainConfig& cfg, Model<float>& model, Detector detector,
                  const std::vector<Image>& sources, std::ostream* metrics_out,
                  const Checkpoint* resume) {
    cfg.validate();
    SD_CHECK(!sources.empty(), "train: no texture sources");

    Rng data_rng = Rng(cfg.seed).split(0xDA7Au);
    Rng mine_rng = Rng(cfg.seed).split(0x313Eu);
    CurriculumState curriculum{cfg.gamma_init, cfg.gamma_decay};
    long start_step = 0;
    if (resume) {
        data_rng = Rng::from_state_hex(resume->rng_data_state);
        mine_rng = Rng::from_state_hex(resume->rng_mine_state);
        curriculum.gamma = resume->gamma;
        start_step = resume->step;
    }

    const auto val_set = validation_pairs(cfg);
    auto params = model.parameters();
    TrainResult result;

    for (long step = start_step; step < cfg.steps; ++step) {
        const double lr = lr_at(step, cfg);
        const std::string batch_rng_state = data_rng.state_hex();

        std::vector<SyntheticPair> batch;
        std::vector<PairKeypoints> keypoints;
        for (int p = 0; p < cfg.batch_size; ++p) {
            const int src = data_rng.uniform_int(int(sources.size()));
            batch.push_back(generate_pair(sources[size_t(src)], cfg, data_rng));
            keypoints.push_back(detect(batch.back(), cfg, detector));
        }

        const int S = cfg.crop_size;
        Tensor<float> input(Shape{2 * cfg.batch_size, 3, S, S});
        const size_t img_len = size_t(3) * S * S;
        for (int p = 0; p < cfg.batch_size; ++p) {
            std::copy(batch[size_t(p)].image1.data.begin(), batch[size_t(p)].image1.data.end(),
                      input.data() + size_t(2 * p) * img_len);
            std::copy(batch[size_t(p)].image2.data.begin(), batch[size_t(p)].image2.data.end(),
                      input.data() + size_t(2 * p + 1) * img_len);
        }

        auto volume = model.forward(input, true);

        Tensor<float> loss_fwd, loss_rev;
        long count_fwd = 0, count_rev = 0;
        for (int p = 0; p < cfg.batch_size; ++p) {
            const auto& kp = keypoints[size_t(p)];
            if (kp.first.size() < 2 || kp.second.size() < 2) continue;
            auto d1 = sample_descriptors(volume, std::vector<int>(kp.first.size(), 2 * p),
                                         kp.first);
            auto d2 = sample_descriptors(volume, std::vector<int>(kp.second.size(), 2 * p + 1),
                                         kp.second);
            auto sim = similarity_matrix(d1, d2);
            const auto matches = mutual_nearest_neighbors(sim);
            if (matches.pairs.empty()) continue;

            auto fwd = mine_triplets(sim, matches, curriculum, cfg.margin, mine_rng);
            if (!fwd.empty()) {
                auto part = triplet_sum(sim, fwd);
                loss_fwd = loss_fwd.defined() ? add(loss_fwd, part) : part;
                count_fwd += long(fwd.size());
            }
            auto sim_t = transpose2d(sim);
            auto rev = mine_triplets(sim_t, flipped(matches), curriculum, cfg.margin, mine_rng);
            if (!rev.empty()) {
                auto part = triplet_sum(sim_t, rev);
                loss_rev = loss_rev.defined() ? add(loss_rev, part) : part;
                count_rev += long(rev.size());
            }
        }

        // mean of the two directional losses; an empty direction contributes 0
        Tensor<float> total;
        if (count_fwd > 0) total = mul_scalar(loss_fwd, 0.5f / float(count_fwd));
        if (count_rev > 0) {
            auto half = mul_scalar(loss_rev, 0.5f / float(count_rev));
            total = total.defined() ? add(total, half) : half;
        }

        StepRecord rec;
        rec.step = step;
        rec.gamma = curriculum.gamma;
        rec.lr = lr;
        rec.triplet_count = count_fwd + count_rev;

        if (total.defined()) {
            rec.loss = double(total.item());
            SD_CHECK(std::isfinite(rec.loss), "train: non-finite loss at step ", step,
                     "; offending batch rng state ", batch_rng_state);
            model.zero_grad();
            backward(total);
            adamw_step(params, step + 1, lr, cfg);
        } else {
            rec.loss = 0.0;  // no margin violators anywhere; optimizer skipped
        }

        curriculum = curriculum_step(curriculum);

        const bool last = step + 1 == cfg.steps;
        if (cfg.val_every > 0 && ((step + 1) % cfg.val_every == 0 || last))
            rec.val_accuracy = validation_accuracy(model, val_set, cfg, detector);
        if ((cfg.log_every > 0 && step % cfg.log_every == 0) || last || rec.val_accuracy >= 0) {
            result.log.push_back(rec);
            if (metrics_out) write_record(*metrics_out, rec);
        }
    }

    result.checkpoint = snapshot(model, cfg.steps, curriculum.gamma, data_rng, mine_rng);
    return result;
}

}  // namespace sandesc
