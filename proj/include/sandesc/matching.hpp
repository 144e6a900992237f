#pragma once

#include <vector>

#include "sandesc/ops.hpp"
#include "sandesc/rng.hpp"

namespace sandesc {

struct Match {
    int first_idx = 0;
    int second_idx = 0;
    float similarity = 0.f;
};

// Mutual-nearest pairing; each index appears at most once on each side.
struct MatchSet {
    std::vector<Match> pairs;
};

inline MatchSet flipped(const MatchSet& m) {
    MatchSet out;
    out.pairs.reserve(m.pairs.size());
    for (const auto& p : m.pairs) out.pairs.push_back({p.second_idx, p.first_idx, p.similarity});
    return out;
}

struct Triplet {
    int anchor = 0;
    int positive = 0;
    int negative = 0;
    float sim_positive = 0.f;
    float sim_negative = 0.f;
    bool hardest = false;
};

// Mixing schedule for negative mining: random negative with probability
// gamma, hardest otherwise; gamma decays multiplicatively per step.
struct CurriculumState {
    double gamma = 1.0;
    double decay = 0.9993;
};

inline CurriculumState curriculum_step(CurriculumState s) {
    s.gamma *= s.decay;
    return s;
}

// S[i][j] = d1_i . d2_j for unit-norm descriptor rows; differentiable in both.
template <typename T>
Tensor<T> similarity_matrix(const Tensor<T>& d1, const Tensor<T>& d2) {
    SD_CHECK(d1.defined() && d1.rank() == 2 && d2.defined() && d2.rank() == 2,
             "similarity_matrix: inputs must be N x C matrices");
    SD_CHECK(d1.dim(1) == d2.dim(1), "similarity_matrix: descriptor dims differ: ", d1.dim(1),
             " vs ", d2.dim(1));
    auto check_rows = [](const Tensor<T>& d, const char* side) {
        const int n = d.dim(0), c = d.dim(1);
        for (int i = 0; i < n; ++i) {
            T sq = T(0);
            for (int j = 0; j < c; ++j) sq += d.data()[long(i) * c + j] * d.data()[long(i) * c + j];
            SD_CHECK(std::fabs(double(std::sqrt(sq)) - 1.0) <= 1e-3,
                     "similarity_matrix: row ", i, " of ", side, " is not unit-norm (norm ",
                     std::sqrt(sq), ")");
        }
    };
    check_rows(d1, "d1");
    check_rows(d2, "d2");
    return linear(d1, d2, Tensor<T>{});
}

// (i,j) matched iff j is the argmax of row i and i the argmax of column j;
// ties break to the lowest index. Output ordered by first index.
template <typename T>
MatchSet mutual_nearest_neighbors(const Tensor<T>& s) {
    SD_CHECK(s.defined() && s.rank() == 2, "mutual_nearest_neighbors: input must be N1 x N2");
    const int n1 = s.dim(0), n2 = s.dim(1);
    MatchSet out;
    if (n1 == 0 || n2 == 0) return out;
    std::vector<int> row_arg(static_cast<size_t>(n1), 0);
    std::vector<int> col_arg(static_cast<size_t>(n2), 0);
    for (int i = 0; i < n1; ++i) {
        const T* row = s.data() + long(i) * n2;
        int best = 0;
        for (int j = 1; j < n2; ++j)
            if (row[j] > row[best]) best = j;
        row_arg[size_t(i)] = best;
    }
    for (int j = 0; j < n2; ++j) {
        int best = 0;
        for (int i = 1; i < n1; ++i)
            if (s.data()[long(i) * n2 + j] > s.data()[long(best) * n2 + j]) best = i;
        col_arg[size_t(j)] = best;
    }
    for (int i = 0; i < n1; ++i) {
        const int j = row_arg[size_t(i)];
        if (col_arg[size_t(j)] == i)
            out.pairs.push_back({i, j, float(s.data()[long(i) * n2 + j])});
    }
    return out;
}

// One triplet per match (anchor a, positive p): the negative is the
// second-best column of row a with probability 1-gamma, else uniform over
// columns != p. Only margin violators (s_p - s_n < margin) are retained.
// Apply to S transposed (with flipped matches) for the reverse direction.
// With gamma == 0 the rng is never touched.
template <typename T>
std::vector<Triplet> mine_triplets(const Tensor<T>& s, const MatchSet& matches,
                                   const CurriculumState& state, double margin, Rng& rng) {
    SD_CHECK(s.defined() && s.rank() == 2, "mine_triplets: similarity matrix must be N1 x N2");
    const int n2 = s.dim(1);
    std::vector<Triplet> out;
    if (n2 < 2) return out;
    for (const auto& m : matches.pairs) {
        const T* row = s.data() + long(m.first_idx) * n2;
        const int p = m.second_idx;
        const bool random_pick = state.gamma > 0.0 && rng.uniform() < state.gamma;
        int neg;
        if (random_pick) {
            neg = rng.uniform_int(n2 - 1);
            if (neg >= p) ++neg;
        } else {
            neg = p == 0 ? 1 : 0;
            for (int j = 0; j < n2; ++j)
                if (j != p && row[j] > row[neg]) neg = j;
        }
        const double sp = double(row[p]), sn = double(row[neg]);
        if (sp - sn < margin)
            out.push_back({m.first_idx, p, neg, float(sp), float(sn), !random_pick});
    }
    return out;
}

// Sum over triplets of (s_n - s_p), read out of (and differentiable
// through) the similarity matrix.
template <typename T>
Tensor<T> triplet_sum(const Tensor<T>& s, const std::vector<Triplet>& ts) {
    SD_CHECK(s.defined() && s.rank() == 2, "triplet_sum: similarity matrix must be 2-D");
    const int n2 = s.dim(1);
    T acc = T(0);
    for (const auto& t : ts) {
        SD_CHECK(t.anchor >= 0 && t.anchor < s.dim(0) && t.positive >= 0 && t.positive < n2 &&
                     t.negative >= 0 && t.negative < n2,
                 "triplet_sum: triplet indices out of range");
        acc += s.data()[long(t.anchor) * n2 + t.negative] -
               s.data()[long(t.anchor) * n2 + t.positive];
    }
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (!ts.empty() && detail::track<T>({&s})) {
        auto si = s.impl;
        detail::attach<T>(out, {s}, [si, ts, n2](TensorImpl<T>& self) {
            if (!si->in_graph()) return;
            const T g = self.grad_buf()[0];
            T* ds = si->grad_buf().data();
            for (const auto& t : ts) {
                ds[long(t.anchor) * n2 + t.negative] += g;
                ds[long(t.anchor) * n2 + t.positive] -= g;
            }
        });
    }
    return out;
}

// Mean of (s_n - s_p) over the retained triplets; an empty set yields a
// constant zero detached from the graph (no gradient).
template <typename T>
Tensor<T> triplet_loss(const Tensor<T>& s, const std::vector<Triplet>& ts) {
    if (ts.empty()) return Tensor<T>::scalar(T(0));
    return mul_scalar(triplet_sum(s, ts), T(1.0 / double(ts.size())));
}

}  // namespace sandesc
