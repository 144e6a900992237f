#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace testutil {

// Direct nested-loop convolution, stride 1, zero padding. Deliberately
// independent of the im2col path under test.
inline std::vector<double> conv2d_direct(const std::vector<double>& x, int B, int Cin, int H,
                                         int W, const std::vector<double>& w, int Cout, int K,
                                         int pad, const std::vector<double>* bias) {
    std::vector<double> out(size_t(B) * Cout * H * W, 0.0);
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < Cout; ++o)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    double acc = bias ? (*bias)[o] : 0.0;
                    for (int c = 0; c < Cin; ++c)
                        for (int ky = 0; ky < K; ++ky)
                            for (int kx = 0; kx < K; ++kx) {
                                const int iy = y + ky - pad, ix = xx + kx - pad;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += x[((size_t(b) * Cin + c) * H + iy) * W + ix] *
                                       w[((size_t(o) * Cin + c) * K + ky) * K + kx];
                            }
                    out[((size_t(b) * Cout + o) * H + y) * W + xx] = acc;
                }
    return out;
}

// Standard normal CDF by Simpson quadrature; independent of std::erf.
inline double normal_cdf_quadrature(double x, int panels = 4096) {
    const double inv_sqrt2pi = 0.39894228040143267794;
    auto pdf = [&](double t) { return inv_sqrt2pi * std::exp(-0.5 * t * t); };
    const double a = 0.0, b = x;
    const double h = (b - a) / panels;
    double acc = pdf(a) + pdf(b);
    for (int i = 1; i < panels; ++i) acc += pdf(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return 0.5 + acc * h / 3.0;
}

// Double-argmax mutual nearest neighbors, ties to the lowest index.
inline std::vector<std::pair<int, int>> mnn_bruteforce(const std::vector<float>& s, int n1,
                                                       int n2) {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < n2; ++j) {
            bool row_best = true, col_best = true;
            for (int k = 0; k < n2 && row_best; ++k) {
                const float v = s[size_t(i) * n2 + k];
                if (v > s[size_t(i) * n2 + j] || (v == s[size_t(i) * n2 + j] && k < j))
                    row_best = false;
            }
            for (int k = 0; k < n1 && col_best; ++k) {
                const float v = s[size_t(k) * n2 + j];
                if (v > s[size_t(i) * n2 + j] || (v == s[size_t(i) * n2 + j] && k < i))
                    col_best = false;
            }
            if (row_best && col_best) out.emplace_back(i, j);
        }
    return out;
}

}  // namespace testutil
