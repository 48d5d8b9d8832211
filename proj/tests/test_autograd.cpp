#include <doctest.h>

#include <cmath>

#include "hicolora/adapter.hpp"
#include "hicolora/autograd.hpp"

using namespace hicolora;
using ag::Tape;
using ag::Var;

TEST_CASE("forward ops") {
    Tape t;
    RngStream rng(1);
    const Matrix x = random_normal(3, 3, rng);
    CHECK(max_abs_diff(t.value(t.matmul(t.constant(Matrix::identity(3)), t.constant(x))), x) == 0.0);

    const Var r = t.relu(t.constant(Matrix{{-1, 0, 2}}));
    CHECK(max_abs_diff(t.value(r), Matrix{{0, 0, 2}}) == 0.0);

    const Var z = t.constant(Matrix(1, 4, 0.7));
    for (std::size_t target = 0; target < 4; ++target)
        CHECK(t.value(t.cross_entropy(z, target))(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-15));

    const Var sm = t.row_softmax(t.constant(Matrix{{std::log(2.0), 0.0}}));
    CHECK(t.value(sm)(0, 0) == doctest::Approx(2.0 / 3.0));

    const Var ln = t.layer_norm(t.constant(Matrix{{1, 2, 3, 4}}));
    double mean = 0, var = 0;
    for (double v : t.value(ln).data()) mean += v / 4;
    for (double v : t.value(ln).data()) var += (v - mean) * (v - mean) / 4;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("backward on a quadratic") {
    Tape t;
    const Var x = t.param(Matrix{{3.0}});
    const auto g = t.backward(t.matmul(x, x));
    CHECK(g[0](0, 0) == 6.0);
}

TEST_CASE("gradient of sum(W x) is outer(1, x)") {
    Tape t;
    const Matrix xv{{1.0}, {-2.0}, {0.5}};
    const Var w = t.param(Matrix(2, 3, 0.3));
    const auto g = t.backward(t.sum(t.matmul(w, t.constant(xv))));
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(g[0](r, c) == doctest::Approx(xv(c, 0)));

    // Finite differences agree with the hand derivation.
    const auto rep = ag::grad_check(
        [&](Tape& tp, std::span<const Var> p) { return tp.sum(tp.matmul(p[0], tp.constant(xv))); }, {Matrix(2, 3, 0.3)},
        1e-6);
    CHECK(rep.max_error <= 1e-8);
}

TEST_CASE("parameters off the loss path get an exact zero") {
    Tape t;
    const Var a = t.param(Matrix{{2.0}});
    t.param(Matrix{{5.0, 1.0}});
    const auto g = t.backward(t.matmul(a, a));
    REQUIRE(g.size() == 2);
    CHECK(g[1](0, 0) == 0.0);
    CHECK(g[1](0, 1) == 0.0);
}

TEST_CASE("grad_check on a quadratic loss is exact up to rounding") {
    RngStream rng(4);
    const Matrix w = random_normal(3, 4, rng);
    const auto rep = ag::grad_check(
        [](Tape& tp, std::span<const Var> p) { return tp.sum(tp.matmul_nt(p[0], p[0])); }, {w}, 1e-5);
    CHECK(rep.max_error <= 1e-9);
}

TEST_CASE("grad_check across every op used by the encoder") {
    RngStream rng(5);
    const Matrix x = random_normal(4, 6, rng);
    const Matrix w = random_normal(6, 6, rng, 0.4);
    const Matrix row = random_normal(1, 6, rng);
    const Matrix s = Matrix{{0.3}};
    const auto rep = ag::grad_check(
        [&](Tape& tp, std::span<const Var> p) {
            Var h = tp.matmul_nt(tp.constant(x), p[0]);
            h = tp.add_row(h, p[1]);
            h = tp.layer_norm(h);
            h = tp.scalar_mul(tp.sigmoid(p[2]), h);
            const Var att = tp.row_softmax(tp.matmul_nt(h, h));
            h = tp.add(tp.matmul(att, h), tp.scale(tp.relu(h), 0.5));
            const Var left = tp.slice_cols(h, 0, 3);
            const Var right = tp.slice_cols(h, 3, 3);
            const std::vector<Var> parts = {tp.sub(left, right), right};
            const Var pooled = tp.mean_pool_rows(tp.concat_cols(parts));
            return tp.cross_entropy(pooled, 2);
        },
        {w, row, s}, 1e-6, {"w", "row", "s"});
    CHECK(rep.max_error <= 1e-6);
}

TEST_CASE("grad_check on one HiCoLoRA layer with frozen routing noise") {
    RngStream rng(6);
    const std::size_t d = 6, r = 2;
    const Matrix base = random_normal(d, d, rng, 0.3);
    const Matrix x = random_normal(3, d, rng);
    const Matrix x_sa = random_normal(1, d, rng);
    const Matrix dc = random_normal(2, d, rng);
    const Matrix sc = random_normal(3, d, rng);
    adapter::RouteNoise noise{{0.1, -0.3}, {0.2, 0.0, -0.5}};
    RngStream unused(0);
    const auto routing = adapter::route(x_sa.data(), dc, sc, adapter::Phase::Train, 1.0, unused, false, &noise);

    std::vector<Matrix> params = {random_normal(r, d, rng, 0.3), random_normal(d, r, rng, 0.3)};
    for (int i = 0; i < 2; ++i) params.push_back(random_normal(r, d, rng, 0.3));
    for (int i = 0; i < 3; ++i) params.push_back(random_normal(d, r, rng, 0.3));
    params.push_back(Matrix{{0.2}});

    for (auto mode : {adapter::LayerMode::HeuristicGrouping, adapter::LayerMode::FullCollaboration}) {
        const auto rep = ag::grad_check(
            [&](Tape& tp, std::span<const Var> p) {
                adapter::LayerVars v{tp.constant(base), p[0], p[1], {p[2], p[3]}, {p[4], p[5], p[6]}, p[7]};
                const Var xv = tp.constant(x);
                const Var h = adapter::fuse(tp, adapter::unirep_forward(tp, v, xv),
                                            adapter::semadapt_forward(tp, v, mode, tp.constant(x_sa), routing), p[7]);
                return tp.cross_entropy(tp.mean_pool_rows(h), 1);
            },
            params, 1e-6);
        CHECK(rep.max_error <= 1e-4);
    }
}
