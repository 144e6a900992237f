#pragma once

#include <string>

#include "sandesc/optim.hpp"

namespace sandesc {

// `key = value` per line, keys mirroring TrainConfig field names exactly.
// Unknown keys are errors that name the key and line.
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);

// Canonical serialization; parse(config_text(c)) == c and the text hashes
// stably for report embedding.
std::string config_text(const TrainConfig& cfg);

}  // namespace sandesc
