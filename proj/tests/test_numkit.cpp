#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "hicolora/error.hpp"
#include "hicolora/numkit.hpp"

using namespace hicolora;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    RngStream rng(seed);
    return random_normal(r, c, rng);
}

// Reference triple loop, kept independent of the library kernels.
Matrix naive_product(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            long double acc = 0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
            out(i, j) = static_cast<double>(acc);
        }
    return out;
}

}  // namespace

TEST_CASE("matrix products agree with a reference loop") {
    const Matrix a = random_matrix(5, 7, 1);
    const Matrix b = random_matrix(7, 3, 2);
    const Matrix c = random_matrix(4, 7, 3);
    CHECK(max_abs_diff(matmul(a, b), naive_product(a, b)) <= 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, c), naive_product(a, c.transpose())) <= 1e-12);
    CHECK(max_abs_diff(matmul_tn(c.transpose(), b), naive_product(c, b)) <= 1e-12);
    CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("svd of the identity") {
    const auto r = svd(Matrix::identity(4));
    for (double s : r.s) CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(max_abs_diff(matmul_nt(r.u, r.v), Matrix::identity(4)) <= 1e-14);
}

TEST_CASE("svd of a diagonal matrix") {
    const auto r = svd(Matrix{{3, 0}, {0, 2}});
    REQUIRE(r.s.size() == 2);
    CHECK(r.s[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(r.s[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("svd reconstructs a seeded 8x5 matrix") {
    const Matrix a = random_matrix(8, 5, 11);
    const auto r = svd(a);
    Matrix us = r.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= r.s[k];
    CHECK(max_abs_diff(naive_product(us, r.v.transpose()), a) <= 1e-10);
    for (std::size_t k = 1; k < r.s.size(); ++k) CHECK(r.s[k - 1] >= r.s[k]);
    CHECK(max_abs_diff(naive_product(r.u.transpose(), r.u), Matrix::identity(5)) <= 1e-10);
}

TEST_CASE("sym_eig of diagonal and swap matrices") {
    const auto d = sym_eig(Matrix{{1, 0}, {0, 5}});
    CHECK(d.values[0] == doctest::Approx(1.0));
    CHECK(d.values[1] == doctest::Approx(5.0));
    for (std::size_t c = 0; c < 2; ++c) {
        double biggest = 0;
        for (std::size_t r = 0; r < 2; ++r) biggest = std::max(biggest, std::abs(d.vectors(r, c)));
        CHECK(biggest == doctest::Approx(1.0));
    }

    // Roots of the characteristic polynomial l^2 - 1 in extended precision.
    const long double disc = std::sqrt(0.0L + 4.0L);
    const double lo = static_cast<double>((0.0L - disc) / 2.0L);
    const double hi = static_cast<double>((0.0L + disc) / 2.0L);
    const auto s = sym_eig(Matrix{{0, 1}, {1, 0}});
    CHECK(std::abs(s.values[0] - lo) <= 1e-14);
    CHECK(std::abs(s.values[1] - hi) <= 1e-14);
}

TEST_CASE("sym_eig reconstructs a random symmetric matrix") {
    const Matrix g = random_matrix(6, 6, 5);
    const Matrix s = g + g.transpose();
    const auto e = sym_eig(s);
    Matrix vl = e.vectors;
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 6; ++c) vl(r, c) *= e.values[c];
    CHECK(max_abs_diff(naive_product(vl, e.vectors.transpose()), s) <= 1e-9);
    for (std::size_t k = 1; k < 6; ++k) CHECK(e.values[k - 1] <= e.values[k]);
}

TEST_CASE("kmeans with one cluster returns the global mean") {
    const Matrix p = random_matrix(10, 3, 9);
    RngStream rng(1);
    const auto r = kmeans(p, 1, rng);
    for (int l : r.labels) CHECK(l == 0);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0;
        for (std::size_t i = 0; i < 10; ++i) mean += p(i, c) / 10.0;
        CHECK(r.centroids(0, c) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("kmeans matches the best 2-partition found by enumeration") {
    const std::vector<double> xs = {0, 0.1, 10, 10.1};
    Matrix p(4, 1);
    for (std::size_t i = 0; i < 4; ++i) p(i, 0) = xs[i];

    // Enumerate every nontrivial 2-partition and keep the minimal SSE one.
    double best = std::numeric_limits<double>::infinity();
    unsigned best_mask = 0;
    for (unsigned mask = 1; mask < 15; ++mask) {
        double sse = 0;
        for (unsigned side = 0; side < 2; ++side) {
            double sum = 0, n = 0;
            for (unsigned i = 0; i < 4; ++i)
                if (((mask >> i) & 1u) == side) sum += xs[i], n += 1;
            for (unsigned i = 0; i < 4; ++i)
                if (((mask >> i) & 1u) == side) sse += (xs[i] - sum / n) * (xs[i] - sum / n);
        }
        if (sse < best) best = sse, best_mask = mask;
    }

    RngStream rng(3);
    const auto r = kmeans(p, 2, rng);
    for (unsigned i = 0; i < 4; ++i)
        for (unsigned j = 0; j < 4; ++j) {
            const bool same_oracle = ((best_mask >> i) & 1u) == ((best_mask >> j) & 1u);
            CHECK((r.labels[i] == r.labels[j]) == same_oracle);
        }
}

TEST_CASE("kmeans with k = n puts every point alone") {
    const Matrix p = random_matrix(5, 2, 4);
    RngStream rng(2);
    const auto r = kmeans(p, 5, rng);
    std::vector<int> sorted = r.labels;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK(r.objective_history.back() == doctest::Approx(0.0));
}

TEST_CASE("cosine similarity") {
    const std::vector<double> a = {1, 2}, e1 = {1, 0}, e2 = {0, 1}, d = {1, 1};
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_similarity(e1, e2) == 0.0);
    const double oracle = static_cast<double>(1.0L / std::sqrt(2.0L));
    CHECK(std::abs(cosine_similarity(d, e1) - oracle) <= 2.3e-16);
    CHECK(std::abs(oracle - 0.7071067811865475) <= 2.3e-16);
}

TEST_CASE("softmax") {
    const std::vector<double> c = {4.2, 4.2, 4.2};
    for (double p : softmax(c)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const std::vector<double> l = {std::log(2.0), 0.0};
    const auto p = softmax(l);
    CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const std::vector<double> distinct = {1.0, 1.5, 0.2};
    CHECK(softmax(distinct, 1e-3)[1] > 1.0 - 1e-12);
}

TEST_CASE("gumbel softmax") {
    RngStream rng(8);
    const std::vector<double> logits = {2, 1, 0}, zero = {0, 0, 0};
    const auto hard = gumbel_softmax(logits, 1.0, rng, true, zero);
    CHECK(hard == std::vector<double>{1, 0, 0});

    const std::vector<double> one = {3.7};
    for (int i = 0; i < 5; ++i) CHECK(gumbel_softmax(one, 0.5, rng, false)[0] == doctest::Approx(1.0));

    const std::vector<double> two = {std::log(2.0), 0.0};
    int first = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) first += gumbel_softmax(two, 1.0, rng, true)[0] == 1.0 ? 1 : 0;
    CHECK(std::abs(first / double(draws) - 2.0 / 3.0) <= 0.02);
}

TEST_CASE("rng streams are reproducible and forks are independent of the parent position") {
    RngStream a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    RngStream c(42);
    const auto f1 = c.fork(3).next_u64();
    c.next_u64();
    CHECK(c.fork(3).next_u64() == f1);
    CHECK(RngStream(42).fork(4).next_u64() != f1);
    for (int i = 0; i < 1000; ++i) CHECK(a.below(7) < 7);
}

TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}
