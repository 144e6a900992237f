#pragma once

#include <string>
#include <vector>

#include "sandesc/net.hpp"
#include "sandesc/rng.hpp"

namespace sandesc {

// Full training state: network config, parameter tensors with optimizer
// moments, batch-norm running buffers, step counter, curriculum gamma, and
// the two rng streams. A save/load round trip resumes training bitwise.
//
// On-disk layout: magic "SDSC", u32 version, u64 header byte count, a
// key = value text header (config, tensor names/shapes/byte offsets), raw
// little-endian float32 payloads, and a trailing 64-bit FNV-1a checksum of
// the payload.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    NetworkConfig net;
    long step = 0;
    double gamma = 1.0;
    std::string rng_data_state;  // hex, xoshiro256++ words
    std::string rng_mine_state;

    struct Entry {
        std::string name;
        Shape shape;
        std::vector<float> values;
    };
    std::vector<Entry> tensors;  // params (values/m1/m2 triplets), then buffers
};

Checkpoint snapshot(Model<float>& model, long step, double gamma, const Rng& data_rng,
                    const Rng& mine_rng);

// Rebuilds the architecture from the stored config and installs all state.
Model<float> model_from_checkpoint(const Checkpoint& c);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sandesc
