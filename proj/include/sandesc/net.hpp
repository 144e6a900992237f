#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "sandesc/keypoint.hpp"
#include "sandesc/ops.hpp"
#include "sandesc/rng.hpp"

namespace sandesc {

// A learnable tensor plus its optimizer state. Names are hierarchical and
// unique within a model; they key the checkpoint format.
template <typename T>
struct Parameter {
    Tensor<T> tensor;
    std::vector<T> moment1, moment2;
    std::string name;

    void init(Shape s, std::string n) {
        tensor = Tensor<T>(std::move(s));
        tensor.set_requires_grad(true);
        moment1.assign(size_t(tensor.numel()), T(0));
        moment2.assign(size_t(tensor.numel()), T(0));
        name = std::move(n);
    }
};

struct NetworkConfig {
    int k = 5;                                      // kernel size, stem and residual convs
    std::array<int, 5> widths{16, 32, 32, 32, 176}; // stem + four encoder levels
    int descriptor_dim = 128;
    bool use_attention = true;
    bool use_residual = true;

    void validate() const {
        SD_CHECK(k >= 1 && k % 2 == 1, "network config: kernel size must be odd, got ", k);
        SD_CHECK(descriptor_dim == 128, "network config: descriptor dim is fixed at 128, got ",
                 descriptor_dim);
        for (int w : widths) {
            SD_CHECK(w > 0, "network config: widths must be positive");
            SD_CHECK(w % 16 == 0, "network config: width ", w,
                     " not divisible by the attention reduction ratio 16");
        }
    }
};

// Channel-then-spatial attention. The two-layer MLP is shared between the
// average- and max-pooled channel vectors; the spatial gate uses a 7x7
// convolution regardless of the network kernel size.
template <typename T>
struct CbamBlock {
    Parameter<T> mlp_w1;          // (C/16) x C
    Parameter<T> mlp_w2;          // C x (C/16)
    Parameter<T> spatial_kernel;  // 1 x 2 x 7 x 7
};

template <typename T>
struct ConvLayer {
    Parameter<T> weight;
    Parameter<T> bias;  // tensor left undefined for bias-free convs
    int pad = 0;
};

template <typename T>
struct NormLayer {
    Parameter<T> scale, shift;
    std::vector<T> running_mean, running_var;
};

template <typename T>
struct RubaBlock {
    bool down = true;
    ConvLayer<T> align;                  // 1x1, no bias
    NormLayer<T> norm1, norm2, norm3;    // pre-activation stages, no weight sharing
    ConvLayer<T> conv1, conv2, conv3;    // KxK
    CbamBlock<T> cbam;
};

template <typename T>
Tensor<T> cbam(const Tensor<T>& f, const CbamBlock<T>& p) {
    SD_CHECK(f.rank() == 4, "cbam: input must be B x C x H x W");
    SD_CHECK(f.dim(1) % 16 == 0, "cbam: configuration error: ", f.dim(1),
             " channels not divisible by reduction ratio 16");
    auto stats = spatial_stats(f);
    auto mlp = [&](const Tensor<T>& s) {
        return linear(gelu(linear(s, p.mlp_w1.tensor, Tensor<T>{})), p.mlp_w2.tensor,
                      Tensor<T>{});
    };
    auto channel_gate = sigmoid(add(mlp(stats.first), mlp(stats.second)));
    auto refined = scale_channels(f, channel_gate);
    auto spatial_gate = sigmoid(conv2d(channel_stats(refined), p.spatial_kernel.tensor,
                                       Tensor<T>{}, 3));
    return scale_spatial(refined, spatial_gate);
}

// Main path: resize, concatenate the skip when given, then a bias-free 1x1
// conv onto the output width. Residual path: three pre-activation stages
// (batch norm, GELU, KxK conv) over the same resized tensor, refined by CBAM
// and added back. `skip` must be undefined for down blocks.
template <typename T>
Tensor<T> ruba(const Tensor<T>& input, const Tensor<T>& skip, RubaBlock<T>& p, bool training,
               bool use_attention, bool use_residual) {
    Tensor<T> resized = p.down ? avg_pool2(input) : upsample_bilinear2(input);
    if (!p.down) SD_CHECK(skip.defined(), "ruba: up block requires a skip tensor");
    if (skip.defined()) {
        SD_CHECK(skip.dim(2) == resized.dim(2) && skip.dim(3) == resized.dim(3),
                 "ruba: skip spatial size ", skip.dim(2), "x", skip.dim(3),
                 " does not match resized input ", resized.dim(2), "x", resized.dim(3));
        resized = concat_channels(resized, skip);
    }
    Tensor<T> main = conv2d(resized, p.align.weight.tensor, Tensor<T>{}, 0);
    if (!use_residual) return main;

    auto stage = [&](const Tensor<T>& x, NormLayer<T>& n, ConvLayer<T>& c) {
        return conv2d(gelu(batch_norm(x, n.scale.tensor, n.shift.tensor, n.running_mean,
                                      n.running_var, training)),
                      c.weight.tensor, c.bias.tensor, c.pad);
    };
    Tensor<T> r = stage(resized, p.norm1, p.conv1);
    r = stage(r, p.norm2, p.conv2);
    r = stage(r, p.norm3, p.conv3);
    if (use_attention) r = cbam(r, p.cbam);
    return add(main, r);
}

template <typename T>
struct Model {
    NetworkConfig cfg;
    ConvLayer<T> stem;                    // KxK, 3 -> widths[0]
    std::array<RubaBlock<T>, 4> encoder;  // widths[i] -> widths[i+1], halving
    std::array<RubaBlock<T>, 4> decoder;  // deepest-first, doubling
    ConvLayer<T> head;                    // 1x1, widths[0] -> 128

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        auto push_conv = [&](ConvLayer<T>& c) {
            out.push_back(&c.weight);
            if (c.bias.tensor.defined()) out.push_back(&c.bias);
        };
        auto push_block = [&](RubaBlock<T>& b) {
            push_conv(b.align);
            for (auto* n : {&b.norm1, &b.norm2, &b.norm3}) {
                out.push_back(&n->scale);
                out.push_back(&n->shift);
            }
            push_conv(b.conv1);
            push_conv(b.conv2);
            push_conv(b.conv3);
            out.push_back(&b.cbam.mlp_w1);
            out.push_back(&b.cbam.mlp_w2);
            out.push_back(&b.cbam.spatial_kernel);
        };
        push_conv(stem);
        for (auto& b : encoder) push_block(b);
        for (auto& b : decoder) push_block(b);
        push_conv(head);
        return out;
    }

    std::vector<std::pair<std::string, std::vector<T>*>> buffers() {
        std::vector<std::pair<std::string, std::vector<T>*>> out;
        auto push_block = [&](RubaBlock<T>& b, const std::string& prefix) {
            int i = 1;
            for (auto* n : {&b.norm1, &b.norm2, &b.norm3}) {
                out.emplace_back(prefix + ".norm" + std::to_string(i) + ".running_mean",
                                 &n->running_mean);
                out.emplace_back(prefix + ".norm" + std::to_string(i) + ".running_var",
                                 &n->running_var);
                ++i;
            }
        };
        for (int i = 0; i < 4; ++i) push_block(encoder[size_t(i)], "enc" + std::to_string(i + 1));
        for (int i = 0; i < 4; ++i) push_block(decoder[size_t(i)], "dec" + std::to_string(i + 1));
        return out;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->tensor.zero_grad();
    }

    // B x 3 x H x W in [0,1] -> B x 128 x H x W of unit-norm descriptors.
    Tensor<T> forward(const Tensor<T>& images, bool training) {
        SD_CHECK(images.defined() && images.rank() == 4 && images.dim(1) == 3,
                 "forward: input must be B x 3 x H x W");
        SD_CHECK(images.dim(2) % 16 == 0 && images.dim(3) % 16 == 0,
                 "forward: spatial size ", images.dim(2), "x", images.dim(3),
                 " not divisible by 16; pad the image (and crop the volume back)");
        if (!training) {
            NoGradGuard guard;
            return forward_impl(images, false);
        }
        return forward_impl(images, true);
    }

private:
    Tensor<T> forward_impl(const Tensor<T>& images, bool training) {
        auto e0 = conv2d(images, stem.weight.tensor, stem.bias.tensor, stem.pad);
        auto d1 = ruba(e0, Tensor<T>{}, encoder[0], training, cfg.use_attention, cfg.use_residual);
        auto d2 = ruba(d1, Tensor<T>{}, encoder[1], training, cfg.use_attention, cfg.use_residual);
        auto d3 = ruba(d2, Tensor<T>{}, encoder[2], training, cfg.use_attention, cfg.use_residual);
        auto d4 = ruba(d3, Tensor<T>{}, encoder[3], training, cfg.use_attention, cfg.use_residual);
        auto u = ruba(d4, d3, decoder[0], training, cfg.use_attention, cfg.use_residual);
        u = ruba(u, d2, decoder[1], training, cfg.use_attention, cfg.use_residual);
        u = ruba(u, d1, decoder[2], training, cfg.use_attention, cfg.use_residual);
        u = ruba(u, e0, decoder[3], training, cfg.use_attention, cfg.use_residual);
        auto raw = conv2d(u, head.weight.tensor, head.bias.tensor, head.pad);
        return l2_normalize_channels(raw, T(1e-8));
    }
};

namespace detail {

template <typename T>
void init_normal(Parameter<T>& p, Rng& rng, double std) {
    for (long i = 0; i < p.tensor.numel(); ++i) p.tensor.data()[i] = T(rng.normal() * std);
}

// Fan-in scaled normal init, std = sqrt(2 / fan_in); biases zero.
template <typename T>
void init_conv(ConvLayer<T>& c, int cout, int cin, int k, bool bias, const std::string& name,
               Rng& rng) {
    c.weight.init(Shape{cout, cin, k, k}, name + ".weight");
    c.pad = k / 2;
    init_normal(c.weight, rng, std::sqrt(2.0 / (double(cin) * k * k)));
    if (bias) c.bias.init(Shape{cout}, name + ".bias");
}

template <typename T>
void init_norm(NormLayer<T>& n, int c, const std::string& name) {
    n.scale.init(Shape{c}, name + ".scale");
    n.shift.init(Shape{c}, name + ".shift");
    std::fill(n.scale.tensor.data(), n.scale.tensor.data() + c, T(1));
    n.running_mean.assign(size_t(c), T(0));
    n.running_var.assign(size_t(c), T(1));
}

template <typename T>
void init_cbam(CbamBlock<T>& b, int c, const std::string& name, Rng& rng) {
    b.mlp_w1.init(Shape{c / 16, c}, name + ".mlp1.weight");
    b.mlp_w2.init(Shape{c, c / 16}, name + ".mlp2.weight");
    b.spatial_kernel.init(Shape{1, 2, 7, 7}, name + ".spatial.weight");
    init_normal(b.mlp_w1, rng, std::sqrt(2.0 / c));
    init_normal(b.mlp_w2, rng, std::sqrt(2.0 / (c / 16)));
    init_normal(b.spatial_kernel, rng, std::sqrt(2.0 / (2.0 * 49.0)));
}

template <typename T>
void init_ruba(RubaBlock<T>& b, int cin, int cout, int k, bool down, const std::string& name,
               Rng& rng) {
    b.down = down;
    init_conv(b.align, cout, cin, 1, false, name + ".align", rng);
    init_norm(b.norm1, cin, name + ".norm1");
    init_norm(b.norm2, cout, name + ".norm2");
    init_norm(b.norm3, cout, name + ".norm3");
    init_conv(b.conv1, cout, cin, k, true, name + ".conv1", rng);
    init_conv(b.conv2, cout, cout, k, true, name + ".conv2", rng);
    init_conv(b.conv3, cout, cout, k, true, name + ".conv3", rng);
    init_cbam(b.cbam, cout, name + ".cbam", rng);
}

}  // namespace detail

template <typename T>
Model<T> build_network(const NetworkConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.cfg = cfg;
    Rng rng = Rng(seed).split(0x90DE1u);
    const auto& w = cfg.widths;
    detail::init_conv(m.stem, w[0], 3, cfg.k, true, "stem", rng);
    for (int i = 0; i < 4; ++i)
        detail::init_ruba(m.encoder[size_t(i)], w[size_t(i)], w[size_t(i) + 1], cfg.k, true,
                          "enc" + std::to_string(i + 1), rng);
    for (int i = 0; i < 4; ++i) {
        const int below = w[size_t(4 - i)], skip = w[size_t(3 - i)];
        detail::init_ruba(m.decoder[size_t(i)], below + skip, skip, cfg.k, false,
                          "dec" + std::to_string(i + 1), rng);
    }
    detail::init_conv(m.head, cfg.descriptor_dim, w[0], 1, true, "head", rng);
    return m;
}

template <typename T>
long param_count(Model<T>& m) {
    long n = 0;
    for (auto* p : m.parameters()) n += p->tensor.numel();
    return n;
}

// Dense per-pixel descriptor field for one image, dim x H x W, every pixel
// unit-norm (or exactly zero under the epsilon guard).
struct DescriptorVolume {
    int height = 0, width = 0, dim = 128;
    std::vector<float> data;

    float at(int c, int y, int x) const {
        return data[(size_t(c) * height + y) * width + x];
    }
};

inline DescriptorVolume extract_volume(Model<float>& m, const Tensor<float>& image) {
    SD_CHECK(image.rank() == 4 && image.dim(0) == 1, "extract_volume: expected a single image");
    auto out = m.forward(image, false);
    DescriptorVolume v;
    v.dim = out.dim(1);
    v.height = out.dim(2);
    v.width = out.dim(3);
    v.data = out.values();
    return v;
}

// Bilinear sampling of the volume at subpixel keypoints, re-normalized to
// unit length. Differentiable; anchors the training loss to the graph.
template <typename T>
Tensor<T> sample_descriptors(const Tensor<T>& volume, const std::vector<int>& batch_index,
                             const std::vector<Keypoint>& kps) {
    SD_CHECK(volume.rank() == 4, "sample_descriptors: volume must be B x C x H x W");
    const int H = volume.dim(2), W = volume.dim(3);
    std::vector<double> px(kps.size()), py(kps.size());
    for (size_t i = 0; i < kps.size(); ++i) {
        SD_CHECK(kps[i].x >= 0.0 && kps[i].x <= W - 1 && kps[i].y >= 0.0 && kps[i].y <= H - 1,
                 "sample_descriptors: keypoint ", i, " at (", kps[i].x, ",", kps[i].y,
                 ") out of bounds for ", W, "x", H);
        px[i] = kps[i].x;
        py[i] = kps[i].y;
    }
    return l2_normalize_rows(bilinear_gather(volume, batch_index, px, py));
}

// Plain-float convenience over an extracted volume (N x dim, row-major).
inline std::vector<float> sample_descriptors(const DescriptorVolume& v,
                                             const std::vector<Keypoint>& kps) {
    Tensor<float> t(Shape{1, v.dim, v.height, v.width}, v.data);
    NoGradGuard guard;
    auto d = sample_descriptors(t, std::vector<int>(kps.size(), 0), kps);
    return d.values();
}

}  // namespace sandesc
