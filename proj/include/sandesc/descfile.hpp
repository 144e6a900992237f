#pragma once

#include <string>
#include <vector>

#include "sandesc/keypoint.hpp"

namespace sandesc {

// Binary descriptor container: magic "SDSF", u32 version, u32 count,
// u32 dim, count x 2 float32 keypoint coordinates, count x dim float32
// descriptors (little-endian), 64-bit FNV-1a checksum of both payloads.
// Descriptors must be unit-norm within 1e-4; validated on load.
struct DescriptorFile {
    static constexpr uint32_t kVersion = 1;
    uint32_t dim = 128;
    std::vector<Keypoint> keypoints;
    std::vector<float> descriptors;  // keypoints.size() x dim, row-major
};

void save_descriptor_file(const DescriptorFile& f, const std::string& path);
DescriptorFile load_descriptor_file(const std::string& path);

}  // namespace sandesc
