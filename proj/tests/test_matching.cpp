#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sandesc/matching.hpp"
#include "oracles.hpp"

using namespace sandesc;

namespace {

Tensor<double> unit_rows(std::vector<std::vector<double>> rows) {
    const int n = int(rows.size()), c = int(rows[0].size());
    Tensor<double> t(Shape{n, c});
    for (int i = 0; i < n; ++i) {
        double sq = 0;
        for (int j = 0; j < c; ++j) sq += rows[size_t(i)][size_t(j)] * rows[size_t(i)][size_t(j)];
        const double inv = 1.0 / std::sqrt(sq);
        for (int j = 0; j < c; ++j) t.data()[long(i) * c + j] = rows[size_t(i)][size_t(j)] * inv;
    }
    return t;
}

Tensor<float> matrix(int n1, int n2, const std::vector<float>& v) {
    return Tensor<float>(Shape{n1, n2}, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

TEST_CASE("similarity_matrix basics") {
    auto d = unit_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    auto s = similarity_matrix(d, d);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(s.at({i, j}) == doctest::Approx(i == j ? 1.0 : 0.0));

    auto a = unit_rows({{1, 0}, {0.5, std::sqrt(3.0) / 2.0}});
    auto sa = similarity_matrix(a, a);
    CHECK(sa.at({0, 1}) == doctest::Approx(0.5).epsilon(1e-12));  // cos 60 degrees

    Rng rng(3);
    Tensor<double> big(Shape{6, 16});
    for (long i = 0; i < big.numel(); ++i) big.data()[i] = rng.uniform(-1.0, 1.0);
    auto bn = l2_normalize_rows(big);
    auto sb = similarity_matrix(bn, bn);
    for (long i = 0; i < sb.numel(); ++i) {
        CHECK(sb.data()[i] <= 1.0 + 1e-9);
        CHECK(sb.data()[i] >= -1.0 - 1e-9);
    }

    Tensor<double> off(Shape{1, 2}, {3.0, 4.0});
    CHECK_THROWS_WITH_AS(similarity_matrix(off, off), doctest::Contains("unit-norm"),
                         std::runtime_error);
}

TEST_CASE("mutual nearest neighbors on fixed matrices") {
    auto m1 = mutual_nearest_neighbors(matrix(2, 2, {0.9f, 0.1f, 0.2f, 0.8f}));
    REQUIRE(m1.pairs.size() == 2);
    CHECK(m1.pairs[0].first_idx == 0);
    CHECK(m1.pairs[0].second_idx == 0);
    CHECK(m1.pairs[1].first_idx == 1);
    CHECK(m1.pairs[1].second_idx == 1);

    // row 0 prefers col 0, but col 0 prefers row 1
    auto m2 = mutual_nearest_neighbors(matrix(2, 2, {0.9f, 0.8f, 0.95f, 0.1f}));
    REQUIRE(m2.pairs.size() == 1);
    CHECK(m2.pairs[0].first_idx == 1);
    CHECK(m2.pairs[0].second_idx == 0);

    CHECK(mutual_nearest_neighbors(Tensor<float>(Shape{0, 5})).pairs.empty());
}

TEST_CASE("mutual nearest neighbors equals brute force on random matrices") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const int n1 = 1 + rng.uniform_int(trial % 7 == 0 ? 13 : 64);
        const int n2 = 1 + rng.uniform_int(trial % 7 == 0 ? 8 : 64);
        Tensor<float> s(Shape{n1, n2});
        for (long i = 0; i < s.numel(); ++i) s.data()[i] = float(rng.uniform(-1.0, 1.0));
        if (trial % 5 == 0 && n2 > 1)  // inject exact ties
            for (int i = 0; i < n1; ++i) s.data()[long(i) * n2 + n2 / 2] = s.data()[long(i) * n2];
        auto got = mutual_nearest_neighbors(s);
        auto ref = testutil::mnn_bruteforce(s.values(), n1, n2);
        REQUIRE(got.pairs.size() == ref.size());
        for (size_t k = 0; k < ref.size(); ++k) {
            CHECK(got.pairs[k].first_idx == ref[k].first);
            CHECK(got.pairs[k].second_idx == ref[k].second);
        }
    }
}

TEST_CASE("mine_triplets hardest-negative and margin filter") {
    CurriculumState all_hard{0.0, 0.9993};
    Rng rng(5);
    MatchSet match;
    match.pairs = {{0, 0, 0.9f}};

    auto s1 = matrix(1, 3, {0.9f, 0.7f, 0.2f});
    auto t1 = mine_triplets(s1, match, all_hard, 0.5, rng);
    REQUIRE(t1.size() == 1);
    CHECK(t1[0].negative == 1);
    CHECK(t1[0].sim_negative == doctest::Approx(0.7));
    CHECK(t1[0].hardest);

    auto s2 = matrix(1, 3, {0.99f, 0.3f, 0.1f});
    CHECK(mine_triplets(s2, match, all_hard, 0.5, rng).empty());  // 0.69 >= margin

    auto s3 = matrix(1, 1, {0.9f});
    CHECK(mine_triplets(s3, match, all_hard, 0.5, rng).empty());  // no negative available
}

TEST_CASE("mine_triplets with gamma=0 never touches the rng") {
    CurriculumState all_hard{0.0, 0.9993};
    Rng a(1), b(999);  // different streams; equal output proves the rng is unused
    auto s = matrix(2, 4, {0.9f, 0.6f, 0.2f, 0.1f, 0.3f, 0.8f, 0.7f, 0.4f});
    MatchSet match;
    match.pairs = {{0, 0, 0.9f}, {1, 1, 0.8f}};
    auto ta = mine_triplets(s, match, all_hard, 0.5, a);
    auto tb = mine_triplets(s, match, all_hard, 0.5, b);
    REQUIRE(ta.size() == tb.size());
    for (size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].negative == tb[i].negative);
        CHECK(ta[i].sim_negative == tb[i].sim_negative);
    }
    CHECK(a.state() == Rng(1).state());
}

TEST_CASE("mine_triplets with gamma=1 draws negatives uniformly") {
    CurriculumState all_random{1.0, 0.9993};
    Rng rng(12345);
    const int n2 = 6, pos = 2;
    Tensor<float> s(Shape{1, n2});
    for (int j = 0; j < n2; ++j) s.data()[j] = j == pos ? 0.9f : 0.85f;  // all retained
    MatchSet match;
    match.pairs = {{0, pos, 0.9f}};
    std::vector<long> counts(size_t(n2), 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        auto ts = mine_triplets(s, match, all_random, 0.5, rng);
        REQUIRE(ts.size() == 1);
        CHECK(!ts[0].hardest);
        CHECK(ts[0].negative != pos);
        ++counts[size_t(ts[0].negative)];
    }
    const double expected = double(draws) / (n2 - 1);
    double chi2 = 0;
    for (int j = 0; j < n2; ++j) {
        if (j == pos) continue;
        const double d = counts[size_t(j)] - expected;
        chi2 += d * d / expected;
    }
    CHECK(chi2 < 13.2767);  // chi-square critical value, df=4, significance 0.01
}

TEST_CASE("triplet loss arithmetic and duplication invariance") {
    auto s = matrix(2, 3, {0.1f, 0.9f, 0.7f, 0.2f, 0.3f, 0.15f});
    std::vector<Triplet> one{{0, 1, 2, 0.9f, 0.7f, true}};
    CHECK(triplet_loss(s, one).item() == doctest::Approx(-0.2f));

    // second triplet contributes s_n - s_p = 0.3 - 0.2 = +0.1
    std::vector<Triplet> two{{0, 1, 2, 0.9f, 0.7f, true}, {1, 0, 1, 0.2f, 0.3f, false}};
    CHECK(triplet_loss(s, two).item() == doctest::Approx(-0.05f));

    auto dup = two;
    dup.insert(dup.end(), two.begin(), two.end());
    CHECK(triplet_loss(s, dup).item() == doctest::Approx(triplet_loss(s, two).item()));

    CHECK(triplet_loss(s, {}).item() == 0.0f);
    CHECK(!triplet_loss(s, {}).impl->backward_fn);
}

TEST_CASE("triplet loss gradient equals (N - P)/|T| on the anchor") {
    auto d1 = unit_rows({{0.8, 0.2, 0.1}});
    auto d2 = unit_rows({{0.7, 0.3, 0.05}, {0.1, 0.9, 0.2}, {-0.3, 0.4, 0.8}});
    d1.set_requires_grad(true);
    d2.set_requires_grad(true);

    auto run_loss = [&] {
        auto s = similarity_matrix(d1, d2);
        std::vector<Triplet> ts{{0, 0, 2, float(s.at({0, 0})), float(s.at({0, 2})), true}};
        return triplet_loss(s, ts);
    };
    d1.zero_grad();
    d2.zero_grad();
    backward(run_loss());
    for (int c = 0; c < 3; ++c) {
        const double expect = d2.at({2, c}) - d2.at({0, c});  // (N - P) / 1
        CHECK(d1.grad()[c] == doctest::Approx(expect).epsilon(1e-12));
    }

    // finite differences on the anchor
    const double h = 1e-5;
    std::vector<double> analytic(d1.grad(), d1.grad() + 3);
    for (int c = 0; c < 3; ++c) {
        const double keep = d1.data()[c];
        d1.data()[c] = keep + h;
        const double up = run_loss().item();
        d1.data()[c] = keep - h;
        const double dn = run_loss().item();
        d1.data()[c] = keep;
        CHECK((up - dn) / (2 * h) == doctest::Approx(analytic[size_t(c)]).epsilon(1e-6));
    }
}

TEST_CASE("bidirectional mining on a symmetric matrix mirrors itself") {
    Rng rng(17);
    Tensor<double> d(Shape{5, 8});
    for (long i = 0; i < d.numel(); ++i) d.data()[i] = rng.uniform(-1.0, 1.0);
    auto dn = l2_normalize_rows(d);
    auto s = similarity_matrix(dn, dn);
    auto st = transpose2d(s);

    auto matches = mutual_nearest_neighbors(s);
    CurriculumState all_hard{0.0, 0.9993};
    Rng r1(1), r2(1);
    auto fwd = mine_triplets(s, matches, all_hard, 0.5, r1);
    auto rev = mine_triplets(st, flipped(matches), all_hard, 0.5, r2);
    REQUIRE(fwd.size() == rev.size());
    for (size_t i = 0; i < fwd.size(); ++i) {
        CHECK(fwd[i].anchor == rev[i].anchor);  // symmetric: same indices both ways
        CHECK(fwd[i].positive == rev[i].positive);
        CHECK(fwd[i].negative == rev[i].negative);
    }
}

TEST_CASE("curriculum decay") {
    CurriculumState s{1.0, 0.9993};
    s = curriculum_step(s);
    CHECK(s.gamma == doctest::Approx(0.9993).epsilon(1e-15));
    for (int i = 1; i < 1000; ++i) s = curriculum_step(s);
    const double direct = std::pow(0.9993, 1000.0);
    CHECK(direct == doctest::Approx(0.4965).epsilon(1e-3));
    CHECK(std::fabs(s.gamma - direct) <= 1000 * 4 * 2.3e-16 * direct);  // ulp-scaled
    CHECK(s.gamma >= 0.0);
}
