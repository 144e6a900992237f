#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sandesc/common.hpp"

namespace sandesc {

// Reverse-mode autodiff over dense tensors. T is float in production and
// double in gradient-check mode; the whole graph runs in one precision.

struct GradMode {
    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }
};

// RAII guard: ops executed under it build no graph (inference).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
    ~NoGradGuard() { GradMode::enabled() = prev; }
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> v;  // values, row-major
    std::vector<T> g;  // gradient, same length as v once touched
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl<T>>> parents;
    std::function<void(TensorImpl<T>&)> backward_fn;

    bool in_graph() const { return requires_grad || static_cast<bool>(backward_fn); }

    std::vector<T>& grad_buf() {
        if (g.size() != v.size()) g.assign(v.size(), T(0));
        return g;
    }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s, T fill = T(0)) : impl(std::make_shared<TensorImpl<T>>()) {
        impl->shape = std::move(s);
        impl->v.assign(sandesc::numel(impl->shape), fill);
    }

    Tensor(Shape s, std::vector<T> vals) : impl(std::make_shared<TensorImpl<T>>()) {
        SD_CHECK(long(vals.size()) == sandesc::numel(s), "tensor: ", vals.size(),
                 " values do not fill shape ", shape_str(s));
        impl->shape = std::move(s);
        impl->v = std::move(vals);
    }

    static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

    bool defined() const { return static_cast<bool>(impl); }
    const Shape& shape() const { return impl->shape; }
    int rank() const { return int(impl->shape.size()); }
    int dim(int i) const { return impl->shape.at(i); }
    long numel() const { return sandesc::numel(impl->shape); }

    T* data() { return impl->v.data(); }
    const T* data() const { return impl->v.data(); }
    std::vector<T>& values() { return impl->v; }
    const std::vector<T>& values() const { return impl->v; }

    // nullptr until gradients have been accumulated (or requires_grad set)
    T* grad() { return impl->g.empty() ? nullptr : impl->g.data(); }
    const T* grad() const { return impl->g.empty() ? nullptr : impl->g.data(); }

    bool requires_grad() const { return impl->requires_grad; }

    Tensor& set_requires_grad(bool b) {
        impl->requires_grad = b;
        if (b) impl->grad_buf();
        return *this;
    }

    void zero_grad() {
        if (!impl->g.empty()) std::fill(impl->g.begin(), impl->g.end(), T(0));
    }

    T item() const {
        SD_CHECK(numel() == 1, "item: tensor is not a scalar, shape ", shape_str(shape()));
        return impl->v[0];
    }

    T at(std::initializer_list<int> idx) const {
        SD_CHECK(idx.size() == impl->shape.size(), "at: rank mismatch");
        long off = 0;
        int d = 0;
        for (int i : idx) {
            SD_CHECK(i >= 0 && i < impl->shape[d], "at: index out of range on axis ", d);
            off = off * impl->shape[d] + i;
            ++d;
        }
        return impl->v[off];
    }

    std::shared_ptr<TensorImpl<T>> impl;
};

// Populates gradients of everything reachable from `loss`. Gradients
// accumulate across calls; zero them explicitly between steps.
template <typename T>
void backward(const Tensor<T>& loss) {
    SD_CHECK(loss.defined(), "backward: undefined tensor");
    SD_CHECK(loss.numel() == 1, "backward: loss must be a scalar, got shape ",
             shape_str(loss.shape()));

    TensorImpl<T>* root = loss.impl.get();
    std::vector<TensorImpl<T>*> order;
    std::unordered_set<TensorImpl<T>*> seen;
    std::vector<std::pair<TensorImpl<T>*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& top = stack.back();
        if (top.second < top.first->parents.size()) {
            TensorImpl<T>* p = top.first->parents[top.second++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(top.first);
            stack.pop_back();
        }
    }

    root->grad_buf()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

}  // namespace sandesc
