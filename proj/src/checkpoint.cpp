#include "sandesc/checkpoint.hpp"

#include <cstring>
#include <map>
#include <sstream>

#include "sandesc/serial.hpp"

namespace sandesc {

namespace {
constexpr char kMagic[4] = {'S', 'D', 'S', 'C'};

Checkpoint::Entry make_entry(std::string name, Shape shape, const float* data, long n) {
    Checkpoint::Entry e;
    e.name = std::move(name);
    e.shape = std::move(shape);
    e.values.assign(data, data + n);
    return e;
}
}  // namespace

Checkpoint snapshot(Model<float>& model, long step, double gamma, const Rng& data_rng,
                    const Rng& mine_rng) {
    Checkpoint c;
    c.net = model.cfg;
    c.step = step;
    c.gamma = gamma;
    c.rng_data_state = data_rng.state_hex();
    c.rng_mine_state = mine_rng.state_hex();
    for (auto* p : model.parameters()) {
        const long n = p->tensor.numel();
        c.tensors.push_back(make_entry(p->name + ".values", p->tensor.shape(), p->tensor.data(), n));
        c.tensors.push_back(make_entry(p->name + ".m1", Shape{int(n)}, p->moment1.data(), n));
        c.tensors.push_back(make_entry(p->name + ".m2", Shape{int(n)}, p->moment2.data(), n));
    }
    for (auto& [name, buf] : model.buffers())
        c.tensors.push_back(make_entry(name, Shape{int(buf->size())}, buf->data(), long(buf->size())));
    return c;
}

Model<float> model_from_checkpoint(const Checkpoint& c) {
    Model<float> m = build_network<float>(c.net, 0);
    std::map<std::string, const Checkpoint::Entry*> by_name;
    for (const auto& e : c.tensors) by_name[e.name] = &e;
    size_t used = 0;

    auto install = [&](const std::string& name, float* dst, long n, const Shape* expect_shape) {
        auto it = by_name.find(name);
        SD_CHECK(it != by_name.end(), "checkpoint: missing tensor '", name, "'");
        const auto& e = *it->second;
        SD_CHECK(long(e.values.size()) == n, "checkpoint: tensor '", name, "' holds ",
                 e.values.size(), " values, model expects ", n);
        if (expect_shape)
            SD_CHECK(e.shape == *expect_shape, "checkpoint: tensor '", name, "' has shape ",
                     shape_str(e.shape), ", model expects ", shape_str(*expect_shape));
        std::memcpy(dst, e.values.data(), size_t(n) * sizeof(float));
        ++used;
    };

    for (auto* p : m.parameters()) {
        const long n = p->tensor.numel();
        const Shape s = p->tensor.shape();
        install(p->name + ".values", p->tensor.data(), n, &s);
        install(p->name + ".m1", p->moment1.data(), n, nullptr);
        install(p->name + ".m2", p->moment2.data(), n, nullptr);
    }
    for (auto& [name, buf] : m.buffers()) install(name, buf->data(), long(buf->size()), nullptr);
    SD_CHECK(used == c.tensors.size(), "checkpoint: ", c.tensors.size() - used,
             " unexpected tensors in file");
    return m;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ostringstream header;
    header << "net.k = " << c.net.k << "\n";
    std::vector<int> widths(c.net.widths.begin(), c.net.widths.end());
    header << "net.widths = " << join_int_list(widths) << "\n";
    header << "net.descriptor_dim = " << c.net.descriptor_dim << "\n";
    header << "net.use_attention = " << (c.net.use_attention ? 1 : 0) << "\n";
    header << "net.use_residual = " << (c.net.use_residual ? 1 : 0) << "\n";
    header << "step = " << c.step << "\n";
    header << "gamma = " << format_double(c.gamma) << "\n";
    header << "rng.data = " << c.rng_data_state << "\n";
    header << "rng.mine = " << c.rng_mine_state << "\n";
    header << "tensor_count = " << c.tensors.size() << "\n";
    uint64_t offset = 0;
    for (size_t i = 0; i < c.tensors.size(); ++i) {
        const auto& e = c.tensors[i];
        header << "tensor." << i << ".name = " << e.name << "\n";
        header << "tensor." << i << ".shape = "
               << join_int_list(std::vector<int>(e.shape.begin(), e.shape.end())) << "\n";
        header << "tensor." << i << ".offset = " << offset << "\n";
        offset += e.values.size() * sizeof(float);
    }
    const std::string head = header.str();

    std::ofstream out(path, std::ios::binary);
    SD_CHECK(out, "checkpoint: cannot write '", path, "'");
    out.write(kMagic, 4);
    bin::write_u32(out, Checkpoint::kVersion);
    bin::write_u64(out, head.size());
    out.write(head.data(), std::streamsize(head.size()));

    uint64_t checksum = 0xcbf29ce484222325ull;
    for (const auto& e : c.tensors) {
        const size_t bytes = e.values.size() * sizeof(float);
        out.write(reinterpret_cast<const char*>(e.values.data()), std::streamsize(bytes));
        checksum = fnv1a64(e.values.data(), bytes, checksum);
    }
    bin::write_u64(out, checksum);
    SD_CHECK(out.good(), "checkpoint: short write to '", path, "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SD_CHECK(in, "checkpoint: cannot open '", path, "'");
    char magic[4];
    in.read(magic, 4);
    SD_CHECK(in.gcount() == 4 && 0 == std::memcmp(magic, kMagic, 4),
             "checkpoint: bad magic in '", path, "' (not a checkpoint file)");
    const uint32_t version = bin::read_u32(in, "checkpoint version");
    SD_CHECK(version == Checkpoint::kVersion, "checkpoint: version mismatch: file has ", version,
             ", this build reads ", Checkpoint::kVersion);
    const uint64_t head_size = bin::read_u64(in, "checkpoint header size");
    std::string head(head_size, '\0');
    in.read(head.data(), std::streamsize(head_size));
    SD_CHECK(uint64_t(in.gcount()) == head_size, "checkpoint: truncated header in '", path, "'");

    Checkpoint c;
    long tensor_count = -1;
    std::map<std::string, std::string> kv;
    for (const auto& line : parse_kv_text(head)) kv[line.key] = line.value;
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        SD_CHECK(it != kv.end(), "checkpoint: header missing key '", key, "'");
        return it->second;
    };
    c.net.k = std::stoi(need("net.k"));
    const auto widths = parse_int_list(need("net.widths"), "checkpoint: net.widths");
    SD_CHECK(widths.size() == 5, "checkpoint: net.widths needs 5 entries");
    for (int i = 0; i < 5; ++i) c.net.widths[size_t(i)] = widths[size_t(i)];
    c.net.descriptor_dim = std::stoi(need("net.descriptor_dim"));
    c.net.use_attention = need("net.use_attention") == "1";
    c.net.use_residual = need("net.use_residual") == "1";
    c.step = std::stol(need("step"));
    c.gamma = std::stod(need("gamma"));
    c.rng_data_state = need("rng.data");
    c.rng_mine_state = need("rng.mine");
    tensor_count = std::stol(need("tensor_count"));
    SD_CHECK(tensor_count >= 0, "checkpoint: negative tensor count");

    uint64_t expect_offset = 0;
    c.tensors.resize(size_t(tensor_count));
    for (long i = 0; i < tensor_count; ++i) {
        const std::string prefix = "tensor." + std::to_string(i) + ".";
        auto& e = c.tensors[size_t(i)];
        e.name = need(prefix + "name");
        const auto dims = parse_int_list(need(prefix + "shape"), "checkpoint: tensor shape");
        e.shape.assign(dims.begin(), dims.end());
        const uint64_t off = std::stoull(need(prefix + "offset"));
        SD_CHECK(off == expect_offset, "checkpoint: tensor '", e.name,
                 "' offset out of order");
        e.values.resize(size_t(numel(e.shape)));
        expect_offset += e.values.size() * sizeof(float);
    }

    uint64_t checksum = 0xcbf29ce484222325ull;
    for (auto& e : c.tensors) {
        const size_t bytes = e.values.size() * sizeof(float);
        in.read(reinterpret_cast<char*>(e.values.data()), std::streamsize(bytes));
        SD_CHECK(size_t(in.gcount()) == bytes, "checkpoint: truncated payload in '", path, "'");
        checksum = fnv1a64(e.values.data(), bytes, checksum);
    }
    const uint64_t stored = bin::read_u64(in, "checkpoint checksum");
    SD_CHECK(stored == checksum, "checkpoint: checksum mismatch in '", path,
             "' (corrupted payload)");
    return c;
}

}  // namespace sandesc
