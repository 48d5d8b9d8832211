#include "hicolora/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "hicolora/error.hpp"
#include "hicolora/io.hpp"

namespace hicolora::cluster {

using nlohmann::json;

Matrix shifted_cosine_affinity(const Matrix& points) {
    const std::size_t n = points.rows();
    Matrix w(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            w(i, j) = w(j, i) = 0.5 * (1.0 + cosine_similarity(points.row_span(i), points.row_span(j)));
    return w;
}

Matrix normalized_laplacian(const Matrix& affinity) {
    const std::size_t n = affinity.rows();
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 0.0;
        for (std::size_t j = 0; j < n; ++j) deg += affinity(i, j);
        require(deg > 1e-12, ErrorKind::Argument,
                [&] { return "degenerate affinity graph: point " + std::to_string(i) + " is isolated"; });
        inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) l(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt[i] * affinity(i, j) * inv_sqrt[j];
    return l;
}

std::vector<int> spectral_cluster(const Matrix& points, std::size_t k, RngStream& rng) {
    const std::size_t n = points.rows();
    require(k >= 2 && k <= n, ErrorKind::Argument,
            [&] { return "spectral_cluster needs 2 <= k <= " + std::to_string(n) + ", got " + std::to_string(k); });
    const EigResult eig = sym_eig(normalized_laplacian(shifted_cosine_affinity(points)));
    Matrix embedding(n, k);
    bool identical = true;
    for (std::size_t i = 1; i < n && identical; ++i)
        identical = std::equal(points.row_span(i).begin(), points.row_span(i).end(), points.row_span(0).begin());
    if (identical) {
        // no spectral structure at all: cluster constant rows, which pins the
        // k-means tie-break (everything in cluster 0 except forced seeds)
        Matrix constant(n, k, 1.0 / std::sqrt(static_cast<double>(k)));
        return kmeans(constant, k, rng).labels;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) embedding(i, c) = eig.vectors(i, c);
        const double nrm = norm2(embedding.row_span(i));
        if (nrm > 0.0)
            for (double& x : embedding.row_span(i)) x /= nrm;
    }
    return kmeans(embedding, k, rng).labels;
}

double silhouette(const Matrix& points, const std::vector<int>& labels) {
    const std::size_t n = points.rows();
    require(labels.size() == n, ErrorKind::Argument, "silhouette: one label per point required");
    const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::size_t> size(static_cast<std::size_t>(std::max(k, 0)), 0);
    for (int l : labels) {
        require(l >= 0, ErrorKind::Argument, "silhouette: negative label");
        ++size[static_cast<std::size_t>(l)];
    }
    require(k >= 2, ErrorKind::Argument, "silhouette is undefined for a single cluster");
    for (std::size_t c = 0; c < size.size(); ++c)
        require(size[c] > 0, ErrorKind::Argument,
                [&] { return "silhouette: cluster " + std::to_string(c) + " is empty"; });

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(labels[i]);
        if (size[own] == 1) continue;  // singleton contributes 0
        std::vector<double> dist_sum(size.size(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t c = 0; c < points.cols(); ++c) {
                const double d = points(i, c) - points(j, c);
                d2 += d * d;
            }
            dist_sum[static_cast<std::size_t>(labels[j])] += std::sqrt(d2);
        }
        const double a = dist_sum[own] / static_cast<double>(size[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < size.size(); ++c)
            if (c != own) b = std::min(b, dist_sum[c] / static_cast<double>(size[c]));
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

KSelection select_k(const Matrix& points, std::size_t k_min, std::size_t k_max, const RngStream& rng) {
    const std::size_t n = points.rows();
    require(k_min >= 2 && k_min <= k_max && k_max + 1 <= n, ErrorKind::Argument, [&] {
        return "select_k needs 2 <= k_min <= k_max <= points - 1 (got [" + std::to_string(k_min) + ", " +
               std::to_string(k_max) + "] for " + std::to_string(n) + " points)";
    });
    KSelection sel;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = k_min; k <= k_max; ++k) {
        RngStream stream = rng.fork(k);
        auto labels = spectral_cluster(points, k, stream);
        const double s = silhouette(points, labels);
        sel.silhouette_by_k[k] = s;
        if (s > best) {
            best = s;
            sel.k_best = k;
            sel.labels = std::move(labels);
        }
    }
    return sel;
}

int Family::label_of(const std::string& key) const {
    const auto it = std::find(keys.begin(), keys.end(), key);
    require(it != keys.end(), ErrorKind::Lookup, [&] { return "'" + key + "' is not part of the cluster family"; });
    return labels[static_cast<std::size_t>(it - keys.begin())];
}

Matrix normalized_centroids(const Matrix& points, const std::vector<int>& labels, std::size_t k) {
    Matrix c(k, points.cols());
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto row = c.row_span(static_cast<std::size_t>(labels[i]));
        const auto p = points.row_span(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += p[j];
    }
    for (std::size_t r = 0; r < k; ++r) {
        const double nrm = norm2(c.row_span(r));
        require(nrm > 1e-12, ErrorKind::Numerical,
                [&] { return "cluster " + std::to_string(r) + " has a zero mean direction"; });
        for (double& x : c.row_span(r)) x /= nrm;
    }
    return c;
}

Family cluster_family(std::vector<std::string> keys, Matrix points, KRange range, const RngStream& rng) {
    const std::size_t n = points.rows();
    require(n >= 2, ErrorKind::Argument, "clustering needs at least two items");
    Family f;
    f.keys = std::move(keys);
    f.points = std::move(points);
    if (n == 2) {
        // no k leaves a non-trivial alternative: two singletons
        f.k = 2;
        f.labels = {0, 1};
        f.silhouette_by_k[2] = 0.0;
    } else {
        const std::size_t kmax = std::min(range.max, n - 1);
        const std::size_t kmin = std::min(range.min, kmax);
        KSelection sel = select_k(f.points, kmin, kmax, rng);
        f.k = sel.k_best;
        f.labels = std::move(sel.labels);
        f.silhouette_by_k = std::move(sel.silhouette_by_k);
    }
    f.centroids = normalized_centroids(f.points, f.labels, f.k);
    return f;
}

JointClusterModel joint_cluster(const std::vector<std::string>& domain_names,
                                const std::vector<std::string>& slot_prompts, const embed::EmbeddingTable& table,
                                const std::optional<embed::ToyFallback>& fallback, KRange domain_range,
                                KRange slot_range, std::uint64_t seed) {
    require(domain_names.size() >= 2, ErrorKind::Argument, "joint clustering needs at least two domains");
    require(slot_prompts.size() >= 2, ErrorKind::Argument, "joint clustering needs at least two slot prompts");
    require(domain_range.min >= 2 && domain_range.min <= domain_range.max && slot_range.min >= 2 &&
                slot_range.min <= slot_range.max,
            ErrorKind::Config, "invalid cluster-count range");
    auto stack = [&](const std::vector<std::string>& keys) {
        std::vector<std::vector<double>> rows;
        for (const auto& k : keys) rows.push_back(embed::lookup(k, table, fallback));
        return embed::rows_of(rows);
    };
    const RngStream root(seed);
    JointClusterModel m;
    m.seed = seed;
    m.domains = cluster_family(domain_names, stack(domain_names), domain_range, root.fork(1));
    m.slots = cluster_family(slot_prompts, stack(slot_prompts), slot_range, root.fork(2));
    return m;
}

namespace {

Family reassign(const Family& f, std::vector<int> labels, std::size_t k) {
    Family out;
    out.keys = f.keys;
    out.points = f.points;
    out.labels = std::move(labels);
    out.k = k;
    out.centroids = normalized_centroids(out.points, out.labels, k);
    return out;
}

Family random_family(const Family& f, RngStream& rng) {
    const std::size_t n = f.keys.size();
    // first k shuffled positions seed one cluster each, the rest are uniform
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<int> labels(n, 0);
    for (std::size_t i = 0; i < n; ++i) labels[order[i]] = static_cast<int>(i < f.k ? i : rng.below(f.k));
    return reassign(f, std::move(labels), f.k);
}

}  // namespace

JointClusterModel random_partition(const JointClusterModel& model, std::uint64_t seed) {
    RngStream rng(seed);
    JointClusterModel out;
    out.seed = seed;
    out.domains = random_family(model.domains, rng);
    out.slots = random_family(model.slots, rng);
    return out;
}

JointClusterModel single_cluster(const JointClusterModel& model) {
    JointClusterModel out;
    out.seed = model.seed;
    out.domains = reassign(model.domains, std::vector<int>(model.domains.keys.size(), 0), 1);
    out.slots = reassign(model.slots, std::vector<int>(model.slots.keys.size(), 0), 1);
    return out;
}

namespace {

json rows_json(const Matrix& m) {
    json a = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i)
        a.push_back(std::vector<double>(m.row_span(i).begin(), m.row_span(i).end()));
    return a;
}

Matrix rows_from(const json& a, std::size_t cols) {
    Matrix m(a.size(), cols);
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a[i].size() == cols, ErrorKind::Format, "cluster manifest vector has the wrong length");
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = a[i][j].get<double>();
    }
    return m;
}

json family_labels(const Family& f) {
    json o = json::object();
    for (std::size_t i = 0; i < f.keys.size(); ++i) o[f.keys[i]] = f.labels[i];
    return o;
}

json family_curve(const Family& f) {
    json o = json::object();
    for (const auto& [k, s] : f.silhouette_by_k) o[std::to_string(k)] = s;
    return o;
}

Family family_from(const json& doc, const char* family, const char* labels_key, std::size_t k) {
    Family f;
    f.k = k;
    f.keys = doc.at("key_order").at(family).get<std::vector<std::string>>();
    const json& pts = doc.at("points").at(family);
    require(pts.size() == f.keys.size(), ErrorKind::Format, "cluster manifest points do not match keys");
    const std::size_t dim = doc.at("dim").get<std::size_t>();
    f.points = rows_from(pts, dim);
    for (const auto& key : f.keys) {
        const int l = doc.at(labels_key).at(key).get<int>();
        require(l >= 0 && static_cast<std::size_t>(l) < k, ErrorKind::Format, "cluster label out of range");
        f.labels.push_back(l);
    }
    f.centroids = rows_from(doc.at("centroids").at(family), dim);
    require(f.centroids.rows() == k, ErrorKind::Format, "cluster manifest centroid count mismatch");
    for (const auto& [ks, s] : doc.at("silhouette_by_k").at(family).items())
        f.silhouette_by_k[static_cast<std::size_t>(std::stoul(ks))] = s.get<double>();
    return f;
}

}  // namespace

std::string manifest_json(const JointClusterModel& model) {
    json doc;
    doc["m"] = model.m();
    doc["n"] = model.n();
    doc["dim"] = model.domains.dim();
    doc["seed"] = model.seed;
    doc["domain_labels"] = family_labels(model.domains);
    doc["slot_labels"] = family_labels(model.slots);
    doc["centroids"] = {{"domain", rows_json(model.domains.centroids)}, {"slot", rows_json(model.slots.centroids)}};
    doc["silhouette_by_k"] = {{"domain", family_curve(model.domains)}, {"slot", family_curve(model.slots)}};
    doc["key_order"] = {{"domain", model.domains.keys}, {"slot", model.slots.keys}};
    doc["points"] = {{"domain", rows_json(model.domains.points)}, {"slot", rows_json(model.slots.points)}};
    doc["method"] = {{"affinity", "shifted_cosine"},
                     {"laplacian", "symmetric_normalized"},
                     {"embedding", "row_normalized_eigenvectors"},
                     {"silhouette_distance", "euclidean"}};
    return doc.dump(1) + "\n";
}

JointClusterModel parse_manifest(const std::string& json_text) {
    try {
        const json doc = json::parse(json_text);
        JointClusterModel m;
        m.seed = doc.at("seed").get<std::uint64_t>();
        m.domains = family_from(doc, "domain", "domain_labels", doc.at("m").get<std::size_t>());
        m.slots = family_from(doc, "slot", "slot_labels", doc.at("n").get<std::size_t>());
        return m;
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("malformed cluster manifest: ") + e.what());
    }
}

JointClusterModel load_manifest(const std::string& path) { return parse_manifest(io::read_file(path)); }

void save_manifest(const JointClusterModel& model, const std::string& path) {
    io::write_file_atomic(path, manifest_json(model));
}

}  // namespace hicolora::cluster
