#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "hicolora/cluster.hpp"
#include "hicolora/error.hpp"

using namespace hicolora;

namespace {

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    return true;
}

// Brute-force mean silhouette with Euclidean distance.
double silhouette_oracle(const Matrix& p, const std::vector<int>& labels) {
    const std::size_t n = p.rows();
    auto dist = [&](std::size_t i, std::size_t j) {
        long double s = 0;
        for (std::size_t c = 0; c < p.cols(); ++c) s += (p(i, c) - p(j, c)) * (p(i, c) - p(j, c));
        return std::sqrt(s);
    };
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    long double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<long double> sum(k, 0);
        std::vector<int> cnt(k, 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sum[labels[j]] += dist(i, j);
            ++cnt[labels[j]];
        }
        if (cnt[labels[i]] == 0) continue;  // singleton scores 0
        const long double a = sum[labels[i]] / cnt[labels[i]];
        long double b = std::numeric_limits<long double>::infinity();
        for (int c = 0; c < k; ++c)
            if (c != labels[i] && cnt[c] > 0) b = std::min(b, sum[c] / cnt[c]);
        total += (b - a) / std::max(a, b);
    }
    return static_cast<double>(total / n);
}

Matrix blobs(const std::vector<std::vector<double>>& centers, std::size_t per, double spread, std::uint64_t seed) {
    RngStream rng(seed);
    const std::size_t d = centers[0].size();
    Matrix p(centers.size() * per, d);
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t i = 0; i < per; ++i) {
            std::vector<double> v(d);
            for (std::size_t j = 0; j < d; ++j) v[j] = centers[c][j] + spread * rng.normal();
            const auto u = normalized(v);
            for (std::size_t j = 0; j < d; ++j) p(c * per + i, j) = u[j];
        }
    return p;
}

}  // namespace

TEST_CASE("laplacian spectrum lies in [0, 2] with a zero eigenvalue") {
    RngStream rng(3);
    const Matrix p = random_normal(7, 4, rng);
    const auto e = sym_eig(cluster::normalized_laplacian(cluster::shifted_cosine_affinity(p)));
    for (double v : e.values) {
        CHECK(v >= -1e-9);
        CHECK(v <= 2.0 + 1e-9);
    }
    CHECK(std::abs(e.values[0]) <= 1e-9);
}

TEST_CASE("spectral clustering recovers two antipodal bundles, matching the best normalized cut") {
    const Matrix p = blobs({{1, 0, 0}, {-1, 0, 0}}, 4, 0.05, 11);
    const std::size_t n = p.rows();

    // Oracle: enumerate all 2-partitions and minimize the normalized cut of the
    // shifted-cosine affinity, computed here from scratch.
    auto aff = [&](std::size_t i, std::size_t j) {
        if (i == j) return 0.0;
        return (1.0 + cosine_similarity(p.row_span(i), p.row_span(j))) / 2.0;
    };
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_labels;
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        double cut = 0, vol0 = 0, vol1 = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const bool si = (mask >> i) & 1u, sj = (mask >> j) & 1u;
                (si ? vol1 : vol0) += aff(i, j);
                if (si != sj) cut += aff(i, j);
            }
        const double ncut = cut / 2 / vol0 + cut / 2 / vol1;
        if (ncut < best) {
            best = ncut;
            best_labels.assign(n, 0);
            for (std::size_t i = 0; i < n; ++i) best_labels[i] = (mask >> i) & 1u;
        }
    }
    RngStream rng(5);
    const auto labels = cluster::spectral_cluster(p, 2, rng);
    CHECK(same_partition(labels, best_labels));
    CHECK(same_partition(labels, {0, 0, 0, 0, 1, 1, 1, 1}));
}

TEST_CASE("spectral clustering of identical points follows the pinned tie-break") {
    const Matrix p(5, 3, 0.5);
    RngStream a(1), b(1);
    const auto labels = cluster::spectral_cluster(p, 2, a);
    CHECK(labels == cluster::spectral_cluster(p, 2, b));
    CHECK(std::count(labels.begin(), labels.end(), 0) >= 4);
}

TEST_CASE("spectral clustering with k = n gives distinct labels") {
    RngStream rng(2);
    const Matrix p = random_normal(5, 4, rng);
    const auto labels = cluster::spectral_cluster(p, 5, rng);
    CHECK(std::set<int>(labels.begin(), labels.end()).size() == 5);
}

TEST_CASE("spectral clustering is stable under input permutation") {
    const Matrix p = blobs({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 3, 0.05, 4);
    std::vector<std::size_t> perm = {8, 3, 0, 5, 1, 7, 2, 6, 4};
    Matrix q(p.rows(), p.cols());
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t c = 0; c < p.cols(); ++c) q(i, c) = p(perm[i], c);
    RngStream r1(9), r2(9);
    const auto lp = cluster::spectral_cluster(p, 3, r1);
    const auto lq = cluster::spectral_cluster(q, 3, r2);
    std::vector<int> permuted(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = lp[perm[i]];
    CHECK(same_partition(permuted, lq));
}

TEST_CASE("silhouette against the brute-force oracle") {
    Matrix p(4, 1);
    p(0, 0) = 0;
    p(1, 0) = 0.1;
    p(2, 0) = 10;
    p(3, 0) = 10.1;
    const std::vector<int> labels = {0, 0, 1, 1};
    CHECK(cluster::silhouette(p, labels) == doctest::Approx(silhouette_oracle(p, labels)).epsilon(1e-14));

    const std::vector<int> swapped = {0, 1, 0, 1};
    CHECK(cluster::silhouette(p, swapped) == doctest::Approx(silhouette_oracle(p, swapped)).epsilon(1e-14));
    CHECK(cluster::silhouette(p, swapped) < 0.0);

    Matrix far(4, 1);
    far(0, 0) = 0;
    far(1, 0) = 0;
    far(2, 0) = 100;
    far(3, 0) = 100;
    far(1, 0) += 1.0;  // spread 1, separation 100
    far(3, 0) += 1.0;
    CHECK(cluster::silhouette(far, labels) == doctest::Approx(silhouette_oracle(far, labels)).epsilon(1e-14));
    CHECK(cluster::silhouette(far, labels) > 0.98);

    CHECK_THROWS_AS(cluster::silhouette(p, {0, 0, 0, 0}), Error);
}

TEST_CASE("select_k picks the blob count") {
    const Matrix three = blobs({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 5, 0.05, 21);
    const auto s3 = cluster::select_k(three, 2, 5, RngStream(1));
    CHECK(s3.k_best == 3);
    // The choice agrees with the brute-force silhouette of each k's labels.
    for (const auto& [k, s] : s3.silhouette_by_k) CHECK(s <= s3.silhouette_by_k.at(3) + 1e-12);

    const Matrix two = blobs({{1, 0, 0}, {0, 1, 0}}, 5, 0.05, 22);
    CHECK(cluster::select_k(two, 2, 4, RngStream(1)).k_best == 2);
    CHECK(cluster::select_k(three, 4, 4, RngStream(1)).k_best == 4);

    const auto again = cluster::select_k(three, 2, 5, RngStream(1));
    CHECK(again.labels == s3.labels);
}

TEST_CASE("select_k silhouette values match the oracle on the chosen labels") {
    const Matrix three = blobs({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 4, 0.1, 5);
    const auto s = cluster::select_k(three, 2, 4, RngStream(2));
    CHECK(s.silhouette_by_k.at(s.k_best) == doctest::Approx(silhouette_oracle(three, s.labels)).epsilon(1e-12));
}

TEST_CASE("joint clustering separates transport from venue domains") {
    embed::EmbeddingTable t;
    t.dim = 4;
    RngStream rng(8);
    auto near = [&](std::vector<double> c) {
        for (auto& x : c) x += 0.05 * rng.normal();
        return c;
    };
    t.insert("train", near({1, 0, 0, 0}));
    t.insert("taxi", near({1, 0, 0, 0}));
    t.insert("hotel", near({0, 1, 0, 0}));
    t.insert("restaurant", near({0, 1, 0, 0}));
    std::vector<std::string> prompts = {"p0", "p1", "p2", "p3", "p4", "p5"};
    for (std::size_t i = 0; i < prompts.size(); ++i)
        t.insert(prompts[i], near(i < 3 ? std::vector<double>{0, 0, 1, 0} : std::vector<double>{0, 0, 0, 1}));

    const auto m = cluster::joint_cluster({"train", "taxi", "hotel", "restaurant"}, prompts, t, std::nullopt, {2, 3},
                                          {2, 5}, 3407);
    CHECK(m.m() == 2);
    CHECK(m.domains.label_of("train") == m.domains.label_of("taxi"));
    CHECK(m.domains.label_of("hotel") == m.domains.label_of("restaurant"));
    CHECK(m.domains.label_of("train") != m.domains.label_of("hotel"));
    CHECK(m.n() == 2);

    const auto r = cluster::random_partition(m, 5);
    CHECK(r.m() == m.m());
    CHECK(r.n() == m.n());
    for (std::size_t c = 0; c < r.m(); ++c) CHECK(std::count(r.domains.labels.begin(), r.domains.labels.end(), c) > 0);
    const auto one = cluster::single_cluster(m);
    CHECK(one.m() == 1);
    CHECK(one.n() == 1);

    const auto back = cluster::parse_manifest(cluster::manifest_json(m));
    CHECK(back.m() == m.m());
    CHECK(back.slots.labels == m.slots.labels);
    CHECK(max_abs_diff(back.slots.centroids, m.slots.centroids) == 0.0);
    CHECK(cluster::manifest_json(back) == cluster::manifest_json(m));

    CHECK_THROWS_AS(cluster::joint_cluster({"train", "taxi"}, prompts, t, std::nullopt, {3, 2}, {2, 5}, 1), Error);
}
