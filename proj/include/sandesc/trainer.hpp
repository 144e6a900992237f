#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "sandesc/checkpoint.hpp"
#include "sandesc/synth.hpp"

namespace sandesc {

enum class Detector { Grid, Harris };

Detector parse_detector(const std::string& name);
const char* detector_name(Detector d);

struct StepRecord {
    long step = 0;
    double loss = 0.0;
    double gamma = 1.0;
    double lr = 0.0;
    long triplet_count = 0;
    double val_accuracy = -1.0;  // < 0 when not measured at this record
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<StepRecord> log;
};

// Deterministic procedural texture sources for training with the given
// config (size 2*crop+32, seeds derived from cfg.seed).
std::vector<Image> default_texture_sources(const TrainConfig& cfg);

// Fixed held-out pairs derived from cfg.seed (never from the training
// streams), used for the matching-accuracy metric.
std::vector<SyntheticPair> validation_pairs(const TrainConfig& cfg);

// Fraction of mutual-nearest matches within `px_thresh` of the ground-truth
// reprojection, averaged over the pairs.
double validation_accuracy(Model<float>& model, const std::vector<SyntheticPair>& pairs,
                           const TrainConfig& cfg, Detector detector, double px_thresh = 3.0);

// The training loop: per step, sample a batch of synthetic pairs, detect
// keypoints, run one batched forward, mine triplets bidirectionally per
// pair, average the two direction losses, backpropagate, and take one
// AdamW step at lr_at(step); gamma decays once per step. Passing `resume`
// continues bitwise from a checkpoint (same config required).
TrainResult train(const TrainConfig& cfg, Model<float>& model, Detector detector,
                  const std::vector<Image>& sources, std::ostream* metrics_out = nullptr,
                  const Checkpoint* resume = nullptr);

}  // namespace sandesc
