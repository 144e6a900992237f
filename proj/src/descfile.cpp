#include "sandesc/descfile.hpp"

#include <cmath>
#include <cstring>

#include "sandesc/serial.hpp"

namespace sandesc {

namespace {
constexpr char kMagic[4] = {'S', 'D', 'S', 'F'};
}

void save_descriptor_file(const DescriptorFile& f, const std::string& path) {
    const size_t n = f.keypoints.size();
    SD_CHECK(f.descriptors.size() == n * f.dim, "descriptor file: payload length ",
             f.descriptors.size(), " does not match ", n, " x ", f.dim);
    std::ofstream out(path, std::ios::binary);
    SD_CHECK(out, "descriptor file: cannot write '", path, "'");
    out.write(kMagic, 4);
    bin::write_u32(out, DescriptorFile::kVersion);
    bin::write_u32(out, uint32_t(n));
    bin::write_u32(out, f.dim);

    std::vector<float> coords(2 * n);
    for (size_t i = 0; i < n; ++i) {
        coords[2 * i] = float(f.keypoints[i].x);
        coords[2 * i + 1] = float(f.keypoints[i].y);
    }
    out.write(reinterpret_cast<const char*>(coords.data()),
              std::streamsize(coords.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(f.descriptors.data()),
              std::streamsize(f.descriptors.size() * sizeof(float)));
    uint64_t checksum = fnv1a64(coords.data(), coords.size() * sizeof(float));
    checksum = fnv1a64(f.descriptors.data(), f.descriptors.size() * sizeof(float), checksum);
    bin::write_u64(out, checksum);
    SD_CHECK(out.good(), "descriptor file: short write to '", path, "'");
}

DescriptorFile load_descriptor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SD_CHECK(in, "descriptor file: cannot open '", path, "'");
    char magic[4];
    in.read(magic, 4);
    SD_CHECK(in.gcount() == 4 && 0 == std::memcmp(magic, kMagic, 4),
             "descriptor file: bad magic in '", path, "'");
    const uint32_t version = bin::read_u32(in, "descriptor file version");
    SD_CHECK(version == DescriptorFile::kVersion, "descriptor file: version mismatch: file has ",
             version, ", this build reads ", DescriptorFile::kVersion);
    const uint32_t count = bin::read_u32(in, "descriptor count");
    const uint32_t dim = bin::read_u32(in, "descriptor dim");

    DescriptorFile f;
    f.dim = dim;
    std::vector<float> coords(size_t(count) * 2);
    f.descriptors.resize(size_t(count) * dim);
    in.read(reinterpret_cast<char*>(coords.data()),
            std::streamsize(coords.size() * sizeof(float)));
    SD_CHECK(size_t(in.gcount()) == coords.size() * sizeof(float),
             "descriptor file: truncated coordinates in '", path, "'");
    in.read(reinterpret_cast<char*>(f.descriptors.data()),
            std::streamsize(f.descriptors.size() * sizeof(float)));
    SD_CHECK(size_t(in.gcount()) == f.descriptors.size() * sizeof(float),
             "descriptor file: truncated payload in '", path, "'");
    uint64_t checksum = fnv1a64(coords.data(), coords.size() * sizeof(float));
    checksum = fnv1a64(f.descriptors.data(), f.descriptors.size() * sizeof(float), checksum);
    const uint64_t stored = bin::read_u64(in, "descriptor checksum");
    SD_CHECK(stored == checksum, "descriptor file: checksum mismatch in '", path, "'");

    f.keypoints.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        f.keypoints[i].x = coords[2 * i];
        f.keypoints[i].y = coords[2 * i + 1];
    }
    for (uint32_t i = 0; i < count; ++i) {
        double sq = 0;
        for (uint32_t c = 0; c < dim; ++c) {
            const double v = f.descriptors[size_t(i) * dim + c];
            sq += v * v;
        }
        SD_CHECK(std::fabs(std::sqrt(sq) - 1.0) <= 1e-4, "descriptor file: descriptor ", i,
                 " in '", path, "' is not unit-norm");
    }
    return f;
}

}  // namespace sandesc
