#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "sandesc/ops.hpp"
#include "sandesc/rng.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace sandesc;
using testutil::max_fd_error;

namespace {

Tensor<double> randn(Shape s, Rng& rng, double scale = 1.0) {
    Tensor<double> t(s);
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0) * scale;
    return t;
}

// Values with pairwise gaps, so max-reduction argmaxes are stable under the
// finite-difference step.
Tensor<double> rand_distinct(Shape s, Rng& rng) {
    Tensor<double> t(s);
    std::vector<int> order(size_t(t.numel()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(int(i))]);
    for (long i = 0; i < t.numel(); ++i) t.data()[i] = -1.0 + 0.05 * order[size_t(i)];
    return t;
}

}  // namespace

TEST_CASE("conv2d identity kernel") {
    Tensor<double> x(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor<double> k(Shape{1, 1, 1, 1}, {1.0});
    auto y = conv2d(x, k, Tensor<double>{}, 0);
    for (int i = 0; i < 9; ++i) CHECK(y.data()[i] == doctest::Approx(i + 1.0));
}

TEST_CASE("conv2d all-ones kernel matches direct summation oracle") {
    std::vector<double> xv{1, 2, 3, 4, 5, 6, 7, 8, 9};
    Tensor<double> x(Shape{1, 1, 3, 3}, xv);
    Tensor<double> k(Shape{1, 1, 3, 3}, std::vector<double>(9, 1.0));
    auto y = conv2d(x, k, Tensor<double>{}, 1);
    auto ref = testutil::conv2d_direct(xv, 1, 1, 3, 3, std::vector<double>(9, 1.0), 1, 3, 1,
                                       nullptr);
    for (int i = 0; i < 9; ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    CHECK(y.at({0, 0, 1, 1}) == doctest::Approx(45.0));
}

TEST_CASE("conv2d zero kernel with bias") {
    Rng rng(7);
    auto x = randn({2, 3, 4, 5}, rng);
    Tensor<double> k(Shape{1, 3, 3, 3});
    Tensor<double> b(Shape{1}, {2.0});
    auto y = conv2d(x, k, b, 1);
    for (long i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(2.0));
}

TEST_CASE("conv2d rejects channel mismatch naming the axis") {
    Tensor<double> x(Shape{1, 2, 4, 4});
    Tensor<double> k(Shape{3, 5, 3, 3});
    CHECK_THROWS_WITH_AS(conv2d(x, k, Tensor<double>{}, 1),
                         doctest::Contains("channel axis"), std::runtime_error);
}

TEST_CASE("conv2d matches random oracle and finite differences") {
    Rng rng(11);
    auto x = randn({2, 3, 5, 4}, rng);
    auto k = randn({4, 3, 3, 3}, rng);
    auto b = randn({4}, rng);
    auto y = conv2d(x, k, b, 1);
    std::vector<double> bv(b.data(), b.data() + 4);
    auto ref = testutil::conv2d_direct(x.values(), 2, 3, 5, 4, k.values(), 4, 3, 1, &bv);
    for (long i = 0; i < y.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-10));

    double err = max_fd_error([&] { return sum_all(gelu(conv2d(x, k, b, 1))); }, {&x, &k, &b});
    CHECK(err < 1e-4);
}

TEST_CASE("conv2d shape rule over random shapes") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const int B = 1 + rng.uniform_int(3), Cin = 1 + rng.uniform_int(4);
        const int H = 1 + rng.uniform_int(9), W = 1 + rng.uniform_int(9);
        const int Cout = 1 + rng.uniform_int(4);
        const int K = 1 + 2 * rng.uniform_int(3);
        auto x = randn({B, Cin, H, W}, rng);
        auto k = randn({Cout, Cin, K, K}, rng);
        auto y = conv2d(x, k, Tensor<double>{}, K / 2);
        CHECK(y.shape() == Shape{B, Cout, H, W});
    }
}

TEST_CASE("avg_pool2 basics") {
    Tensor<double> c(Shape{1, 1, 4, 6}, std::vector<double>(24, 3.25));
    auto yc = avg_pool2(c);
    CHECK(yc.shape() == Shape{1, 1, 2, 3});
    for (long i = 0; i < yc.numel(); ++i) CHECK(yc.data()[i] == doctest::Approx(3.25));

    Tensor<double> x(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(avg_pool2(x).item() == doctest::Approx(2.5));

    Tensor<double> q(Shape{1, 1, 4, 4});
    CHECK(avg_pool2(q).shape() == Shape{1, 1, 2, 2});
}

TEST_CASE("avg_pool2 shape rule and gradients, odd sizes included") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const int H = 2 + rng.uniform_int(7), W = 2 + rng.uniform_int(7);
        auto x = randn({1, 2, H, W}, rng);
        auto y = avg_pool2(x);
        CHECK(y.shape() == Shape{1, 2, (H + 1) / 2, (W + 1) / 2});
    }
    auto x = randn({2, 2, 5, 4}, rng);
    CHECK(max_fd_error([&] { return sum_all(gelu(avg_pool2(x))); }, {&x}) < 1e-4);
}

TEST_CASE("upsample_bilinear2 half-pixel convention") {
    Tensor<double> one(Shape{1, 1, 1, 1}, {5.0});
    auto y = upsample_bilinear2(one);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == doctest::Approx(5.0));

    Tensor<double> row(Shape{1, 1, 1, 2}, {0.0, 2.0});
    auto yr = upsample_bilinear2(row);
    const double expect[4] = {0.0, 0.5, 1.5, 2.0};
    for (int i = 0; i < 4; ++i) CHECK(yr.data()[i + 0] == doctest::Approx(expect[i]));
}

TEST_CASE("upsample_bilinear2 gradients and shape") {
    Rng rng(19);
    auto x = randn({1, 2, 3, 4}, rng);
    CHECK(max_fd_error([&] { return sum_all(mul(upsample_bilinear2(x), upsample_bilinear2(x))); },
                       {&x}) < 1e-4);
    // gradient of plain sum equals each input's scatter weight count
    x.set_requires_grad(true);
    x.zero_grad();
    backward(sum_all(upsample_bilinear2(x)));
    double total = 0;
    for (long i = 0; i < x.numel(); ++i) total += x.grad()[i];
    CHECK(total == doctest::Approx(4.0 * x.numel()));
    for (int trial = 0; trial < 10; ++trial) {
        const int H = 1 + rng.uniform_int(6), W = 1 + rng.uniform_int(6);
        auto t = randn({1, 1, H, W}, rng);
        CHECK(upsample_bilinear2(t).shape() == Shape{1, 1, 2 * H, 2 * W});
    }
}

TEST_CASE("batch_norm train-mode examples") {
    std::vector<double> rm(1, 0.0), rv(1, 1.0);
    Tensor<double> scale(Shape{1}, {1.0}), shift(Shape{1}, {0.0});

    Tensor<double> c(Shape{2, 1, 2, 2}, std::vector<double>(8, 4.2));
    auto yc = batch_norm(c, scale, shift, rm, rv, true);
    for (long i = 0; i < 8; ++i) CHECK(yc.data()[i] == doctest::Approx(0.0));

    std::vector<double> rm2(1, 0.0), rv2(1, 1.0);
    Tensor<double> pm(Shape{2, 1, 1, 1}, {-1.0, 1.0});
    auto ypm = batch_norm(pm, scale, shift, rm2, rv2, true);
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(ypm.data()[0] == doctest::Approx(-expect).epsilon(1e-12));
    CHECK(ypm.data()[1] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(rm2[0] == doctest::Approx(0.0));
    CHECK(rv2[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 2.0));  // unbiased var of {-1,1} is 2

    Tensor<double> s0(Shape{1}, {0.0}), s3(Shape{1}, {3.0});
    std::vector<double> rm3(1, 0.0), rv3(1, 1.0);
    auto y3 = batch_norm(pm, s0, s3, rm3, rv3, true);
    for (long i = 0; i < 2; ++i) CHECK(y3.data()[i] == doctest::Approx(3.0));
}

TEST_CASE("batch_norm eval mode with fresh stats is identity-standardization") {
    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    Tensor<double> scale(Shape{2}, {1.0, 1.0}), shift(Shape{2}, {0.0, 0.0});
    Rng rng(23);
    auto x = randn({1, 2, 3, 3}, rng);
    auto y = batch_norm(x, scale, shift, rm, rv, false);
    for (long i = 0; i < x.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i] / std::sqrt(1.0 + 1e-5)));
}

TEST_CASE("batch_norm gradients through batch statistics") {
    Rng rng(29);
    auto x = randn({2, 3, 3, 2}, rng);
    auto scale = randn({3}, rng);
    auto shift = randn({3}, rng);
    std::vector<double> rm(3, 0.0), rv(3, 1.0);
    double err = max_fd_error(
        [&] { return sum_all(gelu(batch_norm(x, scale, shift, rm, rv, true))); },
        {&x, &scale, &shift});
    CHECK(err < 1e-4);
    double err_eval = max_fd_error(
        [&] { return sum_all(gelu(batch_norm(x, scale, shift, rm, rv, false))); },
        {&x, &scale, &shift});
    CHECK(err_eval < 1e-4);
}

TEST_CASE("gelu values against quadrature oracle") {
    Tensor<double> x(Shape{3}, {0.0, 1.0, 10.0});
    auto y = gelu(x);
    CHECK(y.data()[0] == 0.0);
    const double oracle1 = 1.0 * testutil::normal_cdf_quadrature(1.0);
    CHECK(y.data()[1] == doctest::Approx(oracle1).epsilon(1e-10));
    CHECK(y.data()[1] == doctest::Approx(0.841345).epsilon(1e-5));
    CHECK(std::fabs(y.data()[2] - 10.0) < 1e-6);

    Rng rng(31);
    auto t = randn({2, 7}, rng);
    CHECK(max_fd_error([&] { return sum_all(mul(gelu(t), gelu(t))); }, {&t}) < 1e-4);
}

TEST_CASE("sigmoid values and gradients") {
    Tensor<double> x(Shape{4}, {0.0, 40.0, -40.0, 1.0});
    auto y = sigmoid(x);
    CHECK(y.data()[0] == doctest::Approx(0.5));
    CHECK(std::fabs(y.data()[1] - 1.0) < 1e-9);
    CHECK(std::fabs(y.data()[2] - 0.0) < 1e-9);
    CHECK(y.data()[3] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));

    Rng rng(37);
    auto t = randn({3, 5}, rng);
    CHECK(max_fd_error([&] { return sum_all(mul(sigmoid(t), t)); }, {&t}) < 1e-4);
}

TEST_CASE("concat_channels layout and edge cases") {
    Rng rng(41);
    auto a = randn({1, 2, 4, 4}, rng);
    auto b = randn({1, 3, 4, 4}, rng);
    auto y = concat_channels(a, b);
    CHECK(y.shape() == Shape{1, 5, 4, 4});
    CHECK(y.at({0, 2, 1, 3}) == b.at({0, 0, 1, 3}));

    Tensor<double> empty(Shape{1, 0, 4, 4});
    auto ye = concat_channels(a, empty);
    CHECK(ye.shape() == Shape{1, 2, 4, 4});
    CHECK(0 == std::memcmp(ye.data(), a.data(), sizeof(double) * size_t(a.numel())));

    Tensor<double> misfit(Shape{1, 1, 3, 4});
    CHECK_THROWS_WITH_AS(concat_channels(a, misfit), doctest::Contains("height axis"),
                         std::runtime_error);

    CHECK(max_fd_error([&] { return sum_all(gelu(concat_channels(a, b))); }, {&a, &b}) < 1e-4);
}

TEST_CASE("l2_normalize_channels unit norms and guard") {
    Tensor<double> x(Shape{1, 2, 1, 1}, {3.0, 4.0});
    auto y = l2_normalize_channels(x);
    CHECK(y.data()[0] == doctest::Approx(0.6));
    CHECK(y.data()[1] == doctest::Approx(0.8));

    Tensor<double> u(Shape{1, 2, 1, 1}, {1.0, 0.0});
    auto yu = l2_normalize_channels(u);
    CHECK(yu.data()[0] == doctest::Approx(1.0));
    CHECK(yu.data()[1] == doctest::Approx(0.0));

    Tensor<double> z(Shape{1, 3, 1, 1});
    auto yz = l2_normalize_channels(z);
    for (int i = 0; i < 3; ++i) CHECK(yz.data()[i] == 0.0);

    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
        auto t = randn({1, 8, 3, 3}, rng);
        auto n = l2_normalize_channels(t);
        for (int p = 0; p < 9; ++p) {
            double sq = 0;
            for (int c = 0; c < 8; ++c) sq += n.at({0, c, p / 3, p % 3}) * n.at({0, c, p / 3, p % 3});
            const double norm = std::sqrt(sq);
            CHECK((norm == 0.0 || (norm > 1 - 1e-5 && norm < 1 + 1e-5)));
        }
    }
    auto t = randn({1, 4, 2, 2}, rng);
    CHECK(max_fd_error([&] { return sum_all(mul(l2_normalize_channels(t), t)); }, {&t}) < 1e-4);

    auto r = randn({5, 6}, rng);
    CHECK(max_fd_error([&] { return sum_all(mul(l2_normalize_rows(r), r)); }, {&r}) < 1e-4);
}

TEST_CASE("spatial and channel statistics") {
    Tensor<double> c(Shape{1, 2, 2, 2}, std::vector<double>(8, 0.7));
    auto [avg, mx] = spatial_stats(c);
    CHECK(avg.shape() == Shape{1, 2});
    for (int i = 0; i < 2; ++i) {
        CHECK(avg.data()[i] == doctest::Approx(0.7));
        CHECK(mx.data()[i] == doctest::Approx(0.7));
    }

    Tensor<double> v(Shape{1, 3, 1, 1}, {1.0, 2.0, 3.0});
    auto cs = channel_stats(v);
    CHECK(cs.shape() == Shape{1, 2, 1, 1});
    CHECK(cs.data()[0] == doctest::Approx(2.0));
    CHECK(cs.data()[1] == doctest::Approx(3.0));

    Tensor<double> onehot(Shape{1, 1, 2, 3});
    onehot.data()[4] = 1.0;
    auto [a2, m2] = spatial_stats(onehot);
    CHECK(m2.data()[0] == doctest::Approx(1.0));
    CHECK(a2.data()[0] == doctest::Approx(1.0 / 6.0));

    Rng rng(47);
    auto t = rand_distinct({2, 4, 3, 2}, rng);
    CHECK(max_fd_error(
              [&] {
                  auto [sa, sm] = spatial_stats(t);
                  return add(sum_all(mul(sa, sa)), sum_all(mul(sm, sm)));
              },
              {&t}) < 1e-4);
    CHECK(max_fd_error([&] { return sum_all(mul(channel_stats(t), channel_stats(t))); }, {&t}) <
          1e-4);
}

TEST_CASE("linear examples and gradients") {
    Tensor<double> x(Shape{1, 2}, {1.0, 2.0});
    Tensor<double> eye(Shape{2, 2}, {1, 0, 0, 1});
    auto y = linear(x, eye, Tensor<double>{});
    CHECK(y.data()[0] == doctest::Approx(1.0));
    CHECK(y.data()[1] == doctest::Approx(2.0));

    Tensor<double> zero(Shape{3, 2});
    Tensor<double> b(Shape{3}, {4.0, 5.0, 6.0});
    auto yb = linear(x, zero, b);
    for (int i = 0; i < 3; ++i) CHECK(yb.data()[i] == doctest::Approx(4.0 + i));

    Tensor<double> w(Shape{2, 2}, {1, 1, 0, 1});
    auto yh = linear(x, w, Tensor<double>{});
    CHECK(yh.data()[0] == doctest::Approx(3.0));  // 1*1 + 2*1
    CHECK(yh.data()[1] == doctest::Approx(2.0));  // 1*0 + 2*1

    Tensor<double> bad(Shape{3, 5});
    CHECK_THROWS_WITH_AS(linear(x, bad, Tensor<double>{}), doctest::Contains("inner dimension"),
                         std::runtime_error);

    Rng rng(53);
    auto xx = randn({4, 3}, rng);
    auto ww = randn({5, 3}, rng);
    auto bb = randn({5}, rng);
    CHECK(max_fd_error([&] { return sum_all(gelu(linear(xx, ww, bb))); }, {&xx, &ww, &bb}) < 1e-4);
}

TEST_CASE("elementwise ops, transpose, broadcast gates") {
    Rng rng(59);
    auto a = randn({2, 3}, rng);
    auto b = randn({2, 3}, rng);
    CHECK(max_fd_error([&] { return sum_all(mul(add(a, b), a)); }, {&a, &b}) < 1e-4);
    CHECK(max_fd_error([&] { return sum_all(mul(transpose2d(a), transpose2d(b))); }, {&a, &b}) <
          1e-4);
    CHECK(max_fd_error([&] { return mul_scalar(sum_all(mul(a, b)), 0.37); }, {&a, &b}) < 1e-4);

    auto x = randn({2, 4, 3, 3}, rng);
    auto gate_c = randn({2, 4}, rng);
    auto gate_s = randn({2, 1, 3, 3}, rng);
    CHECK(max_fd_error([&] { return sum_all(mul(scale_channels(x, gate_c), x)); },
                       {&x, &gate_c}) < 1e-4);
    CHECK(max_fd_error([&] { return sum_all(mul(scale_spatial(x, gate_s), x)); },
                       {&x, &gate_s}) < 1e-4);
}

TEST_CASE("bilinear_gather sampling semantics") {
    // 1x2x1x2 volume: channel vectors d1=(1,3) at x=0, d2=(2,5) at x=1
    Tensor<double> v(Shape{1, 2, 1, 2}, {1.0, 2.0, 3.0, 5.0});
    auto mid = bilinear_gather(v, {0, 0, 0}, {0.0, 1.0, 0.5}, {0.0, 0.0, 0.0});
    CHECK(mid.shape() == Shape{3, 2});
    CHECK(mid.at({0, 0}) == doctest::Approx(1.0));
    CHECK(mid.at({0, 1}) == doctest::Approx(3.0));
    CHECK(mid.at({1, 0}) == doctest::Approx(2.0));
    CHECK(mid.at({2, 0}) == doctest::Approx(1.5));
    CHECK(mid.at({2, 1}) == doctest::Approx(4.0));

    CHECK_THROWS_WITH_AS(bilinear_gather(v, {0}, {2.5}, {0.0}), doctest::Contains("point 0"),
                         std::runtime_error);

    Rng rng(61);
    auto x = randn({2, 3, 4, 5}, rng);
    std::vector<int> bi{0, 1, 1, 0};
    std::vector<double> px{0.25, 3.75, 2.0, 1.5}, py{0.5, 2.25, 3.0, 0.0};
    CHECK(max_fd_error([&] { return sum_all(mul(bilinear_gather(x, bi, px, py),
                                                bilinear_gather(x, bi, px, py))); },
                       {&x}) < 1e-4);
}

TEST_CASE("backward contracts") {
    Tensor<double> x(Shape{2}, {1.0, 2.0});
    x.set_requires_grad(true);

    backward(sum_all(x));
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(1.0));

    x.zero_grad();
    backward(sum_all(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));

    // repeated calls accumulate
    backward(sum_all(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(4.0));

    CHECK_THROWS_WITH_AS(backward(mul(x, x)), doctest::Contains("scalar"), std::runtime_error);
}

TEST_CASE("backward is bitwise deterministic") {
    Rng rng(67);
    auto x = randn({2, 3, 8, 8}, rng);
    auto k = randn({4, 3, 5, 5}, rng);
    auto run = [&](std::vector<double>& gx, std::vector<double>& gk) {
        auto xi = x, ki = k;  // shared impls; zero grads between runs
        xi.set_requires_grad(true);
        ki.set_requires_grad(true);
        xi.zero_grad();
        ki.zero_grad();
        backward(sum_all(gelu(conv2d(xi, ki, Tensor<double>{}, 2))));
        gx.assign(xi.grad(), xi.grad() + xi.numel());
        gk.assign(ki.grad(), ki.grad() + ki.numel());
    };
    std::vector<double> gx1, gk1, gx2, gk2;
    run(gx1, gk1);
    run(gx2, gk2);
    CHECK(0 == std::memcmp(gx1.data(), gx2.data(), gx1.size() * sizeof(double)));
    CHECK(0 == std::memcmp(gk1.data(), gk2.data(), gk1.size() * sizeof(double)));
}

TEST_CASE("no-grad mode builds no graph") {
    Rng rng(71);
    auto x = randn({1, 2, 4, 4}, rng);
    x.set_requires_grad(true);
    NoGradGuard guard;
    auto y = avg_pool2(x);
    CHECK(!y.impl->backward_fn);
    CHECK(y.impl->parents.empty());
}
