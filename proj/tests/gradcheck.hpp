#pragma once

#include <cmath>
#include <vector>

#include "sandesc/tensor.hpp"

namespace testutil {

// Central finite differences against reverse-mode gradients, whole graph in
// double. `loss_fn` must rebuild the graph from the current leaf values.
// Returns the max relative error over all elements of all leaves, with the
// denominator floored at 1e-6.
template <typename F>
double max_fd_error(F&& loss_fn, std::vector<sandesc::Tensor<double>*> leaves,
                    double h = 1e-4) {
    using sandesc::Tensor;
    for (auto* leaf : leaves) {
        leaf->set_requires_grad(true);
        leaf->zero_grad();
    }
    Tensor<double> loss = loss_fn();
    sandesc::backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto* leaf : leaves)
        analytic.emplace_back(leaf->grad(), leaf->grad() + leaf->numel());

    double worst = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto* leaf = leaves[li];
        for (long i = 0; i < leaf->numel(); ++i) {
            const double keep = leaf->data()[i];
            leaf->data()[i] = keep + h;
            const double up = loss_fn().item();
            leaf->data()[i] = keep - h;
            const double dn = loss_fn().item();
            leaf->data()[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double an = analytic[li][i];
            const double denom = std::max(1e-6, std::max(std::fabs(fd), std::fabs(an)));
            worst = std::max(worst, std::fabs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace testutil
