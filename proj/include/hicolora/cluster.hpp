#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hicolora/embed.hpp"
#include "hicolora/numkit.hpp"

namespace hicolora::cluster {

/// Affinity (1 + cos) / 2 with zero diagonal, and its symmetric normalized
/// Laplacian I - D^-1/2 W D^-1/2. Throws on a zero-degree point.
Matrix shifted_cosine_affinity(const Matrix& points);
Matrix normalized_laplacian(const Matrix& affinity);

/// Ng-Jordan-Weiss spectral clustering: rows of the k lowest Laplacian
/// eigenvectors, row-normalized, then k-means.
std::vector<int> spectral_cluster(const Matrix& points, std::size_t k, RngStream& rng);

/// Mean silhouette with Euclidean distance; singleton clusters score 0.
double silhouette(const Matrix& points, const std::vector<int>& labels);

struct KSelection {
    std::size_t k_best = 0;
    std::map<std::size_t, double> silhouette_by_k;
    std::vector<int> labels;  // labels at k_best
};

/// Spectral clustering for every k in [k_min, k_max], each with its own forked
/// stream; picks the silhouette argmax, ties to the smallest k.
KSelection select_k(const Matrix& points, std::size_t k_min, std::size_t k_max, const RngStream& rng);

struct KRange {
    std::size_t min = 2;
    std::size_t max = 8;
};

/// One clustered family (domains or slot prompts).
struct Family {
    std::vector<std::string> keys;
    Matrix points;  // one unit row per key
    std::vector<int> labels;
    Matrix centroids;  // normalized member means, one row per cluster
    std::size_t k = 0;
    std::map<std::size_t, double> silhouette_by_k;

    std::size_t dim() const { return points.cols(); }
    int label_of(const std::string& key) const;
};

struct JointClusterModel {
    Family domains;
    Family slots;
    std::uint64_t seed = 0;

    std::size_t m() const { return domains.k; }
    std::size_t n() const { return slots.k; }
};

Matrix normalized_centroids(const Matrix& points, const std::vector<int>& labels, std::size_t k);

Family cluster_family(std::vector<std::string> keys, Matrix points, KRange range, const RngStream& rng);

JointClusterModel joint_cluster(const std::vector<std::string>& domain_names,
                                const std::vector<std::string>& slot_prompts, const embed::EmbeddingTable& table,
                                const std::optional<embed::ToyFallback>& fallback, KRange domain_range,
                                KRange slot_range, std::uint64_t seed);

/// Same cluster counts, seeded random membership (every cluster nonempty).
JointClusterModel random_partition(const JointClusterModel& model, std::uint64_t seed);
/// Collapses both families to a single cluster.
JointClusterModel single_cluster(const JointClusterModel& model);

std::string manifest_json(const JointClusterModel& model);
JointClusterModel parse_manifest(const std::string& json_text);
JointClusterModel load_manifest(const std::string& path);
void save_manifest(const JointClusterModel& model, const std::string& path);

}  // namespace hicolora::cluster
