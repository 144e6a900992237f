#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sandesc/net.hpp"

namespace sandesc {

struct TrainConfig {
    // optimizer and learning-rate schedule
    double eta_max = 0.005;
    double eta_min = 0.0001;
    long warmup_steps = 2048;
    double lr_decay = 0.99996;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double adam_epsilon = 1e-8;

    // loss and negative-mining curriculum
    double margin = 0.5;
    double gamma_init = 1.0;
    double gamma_decay = 0.9993;

    // data generation
    int batch_size = 4;  // image pairs per step
    long steps = 2000;
    int crop_size = 96;
    double rotation_range = 30.0;  // degrees, uniform in [-r, r]
    double scale_min = 0.8;
    double scale_max = 1.25;
    double translate_frac = 0.10;
    double perspective_frac = 0.05;
    double photometric_frac = 0.10;
    int texture_sources = 8;
    uint64_t seed = 42;

    // training keypoints
    int grid_stride = 8;
    double reproj_tau = 1.0;
    int train_keypoints = 150;  // detector budget per image (harris regime)

    // logging and held-out validation
    long log_every = 25;
    long val_every = 500;
    int val_pairs = 32;

    // network
    int net_k = 5;
    std::vector<int> net_widths = {16, 32, 32, 32, 176};
    bool use_attention = true;
    bool use_residual = true;

    void validate() const {
        SD_CHECK(eta_min <= eta_max, "config: eta_min must not exceed eta_max");
        SD_CHECK(warmup_steps > 0, "config: warmup_steps must be positive");
        SD_CHECK(lr_decay > 0.0 && lr_decay < 1.0, "config: lr_decay must lie in (0,1)");
        SD_CHECK(gamma_decay > 0.0 && gamma_decay < 1.0, "config: gamma_decay must lie in (0,1)");
        SD_CHECK(gamma_init >= 0.0 && gamma_init <= 1.0, "config: gamma_init must lie in [0,1]");
        SD_CHECK(crop_size > 0 && crop_size % 16 == 0, "config: crop_size must be a positive multiple of 16");
        SD_CHECK(batch_size > 0 && steps >= 0, "config: batch_size/steps out of range");
        SD_CHECK(scale_min <= scale_max && scale_min > 0, "config: scale range invalid");
        SD_CHECK(grid_stride >= 1, "config: grid_stride must be at least 1");
        SD_CHECK(net_widths.size() == 5, "config: net_widths needs exactly 5 entries");
        network().validate();
    }

    NetworkConfig network() const {
        NetworkConfig n;
        n.k = net_k;
        for (int i = 0; i < 5; ++i) n.widths[size_t(i)] = net_widths[size_t(i)];
        n.use_attention = use_attention;
        n.use_residual = use_residual;
        return n;
    }
};

// Linear warmup from eta_min to eta_max over `warmup_steps`, then
// exponential decay floored at eta_min.
inline double lr_at(long step, const TrainConfig& cfg) {
    SD_CHECK(step >= 0, "lr_at: step must be non-negative");
    if (step < cfg.warmup_steps)
        return cfg.eta_min +
               (cfg.eta_max - cfg.eta_min) * double(step) / double(cfg.warmup_steps);
    return std::max(cfg.eta_min, cfg.eta_max * std::pow(cfg.lr_decay, double(step - cfg.warmup_steps)));
}

// Decoupled weight decay applied separately from the moment update;
// bias-corrected moments; epsilon inside the square root. `step_count` is
// 1-based. Aborts (before touching any state) on non-finite gradients.
template <typename T>
void adamw_step(const std::vector<Parameter<T>*>& params, long step_count, double lr,
                const TrainConfig& cfg) {
    SD_CHECK(step_count >= 1, "adamw_step: step_count is 1-based");
    for (auto* p : params) {
        const T* g = p->tensor.grad();
        SD_CHECK(g != nullptr, "adamw_step: parameter '", p->name, "' has no gradient buffer");
        for (long i = 0; i < p->tensor.numel(); ++i)
            SD_CHECK(std::isfinite(double(g[i])), "adamw_step: non-finite gradient in parameter '",
                     p->name, "'");
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(step_count));
    for (auto* p : params) {
        T* theta = p->tensor.data();
        const T* g = p->tensor.grad();
        for (long i = 0; i < p->tensor.numel(); ++i) {
            double th = double(theta[i]);
            const double gi = double(g[i]);
            th -= lr * cfg.weight_decay * th;
            const double m = cfg.beta1 * double(p->moment1[size_t(i)]) + (1.0 - cfg.beta1) * gi;
            const double v = cfg.beta2 * double(p->moment2[size_t(i)]) + (1.0 - cfg.beta2) * gi * gi;
            p->moment1[size_t(i)] = T(m);
            p->moment2[size_t(i)] = T(v);
            th -= lr * (m / bc1) / std::sqrt(v / bc2 + cfg.adam_epsilon);
            theta[i] = T(th);
        }
    }
}

}  // namespace sandesc
