#include "hicolora/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "hicolora/error.hpp"

namespace hicolora {

namespace {

constexpr int kMaxSweeps = 100;
constexpr double kJacobiTol = 1e-12;

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows * cols, ErrorKind::Argument, [&] {
        return "matrix data length " + std::to_string(data_.size()) + " does not match " + std::to_string(rows) + "x" +
               std::to_string(cols);
    });
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        require(r.size() == cols_, ErrorKind::Argument, "ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diag(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Matrix Matrix::row(std::span<const double> v) { return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end())); }

Matrix Matrix::column(std::span<const double> v) {
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

std::vector<double> Matrix::col(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> v) {
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix Matrix::cols_slice(std::size_t start, std::size_t count) const {
    require(start + count <= cols_, ErrorKind::Argument,
            [&] { return "column slice out of range for " + shape_str(); });
    Matrix out(rows_, count);
    for (std::size_t r = 0; r < rows_; ++r)
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_ + start), count,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(r * count));
    return out;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    require(rows_ == o.rows_ && cols_ == o.cols_, ErrorKind::Argument,
            [&] { return "shape mismatch in add: " + shape_str() + " vs " + o.shape_str(); });
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    require(rows_ == o.rows_ && cols_ == o.cols_, ErrorKind::Argument,
            [&] { return "shape mismatch in subtract: " + shape_str() + " vs " + o.shape_str(); });
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Matrix::shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
Eigen::Map<RowMajor> view(Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), ErrorKind::Argument,
            [&] { return "shape mismatch in matmul: " + a.shape_str() + " vs " + b.shape_str(); });
    Matrix out(a.rows(), b.cols());
    view(out).noalias() = view(a) * view(b);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), ErrorKind::Argument,
            [&] { return "shape mismatch in matmul_nt: " + a.shape_str() + " vs " + b.shape_str(); });
    Matrix out(a.rows(), b.rows());
    view(out).noalias() = view(a) * view(b).transpose();
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), ErrorKind::Argument,
            [&] { return "shape mismatch in matmul_tn: " + a.shape_str() + " vs " + b.shape_str(); });
    Matrix out(a.cols(), b.cols());
    view(out).noalias() = view(a).transpose() * view(b);
    return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    require(a.cols() == x.size(), ErrorKind::Argument,
            [&] { return "shape mismatch in matvec: " + a.shape_str() + " vs vector of " + std::to_string(x.size()); });
    std::vector<double> out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row_span(i), x);
    return out;
}

double frobenius_norm(const Matrix& a) { return norm2(a.data()); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::Argument,
            [&] { return "shape mismatch: " + a.shape_str() + " vs " + b.shape_str(); });
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double relative_error(const Matrix& a, const Matrix& b) {
    const double denom = frobenius_norm(b);
    const double diff = frobenius_norm(a - b);
    return denom > 0.0 ? diff / denom : diff;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::Argument,
            [&] { return "length mismatch in dot: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()); });
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm2(std::span<const double> a) {
    // scaled accumulation keeps tiny and huge entries from under/overflowing
    double scale = 0.0;
    for (double x : a) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double acc = 0.0;
    for (double x : a) {
        const double y = x / scale;
        acc += y * y;
    }
    return scale * std::sqrt(acc);
}

std::vector<double> normalized(std::span<const double> a) {
    const double n = norm2(a);
    require(n > 0.0, ErrorKind::Argument, "cannot normalize a zero vector");
    std::vector<double> out(a.begin(), a.end());
    for (double& x : out) x /= n;
    return out;
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t RngStream::next_u64() { return splitmix64(seed_ + 0x9e3779b97f4a7c15ULL * counter_++); }

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

double RngStream::normal() {
    // Box-Muller, one output per pair of draws
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::size_t RngStream::below(std::size_t n) {
    require(n > 0, ErrorKind::Argument, "RngStream::below requires n > 0");
    // Lemire-style multiply-shift; bias is negligible at the sizes used here
    __extension__ using u128 = unsigned __int128;
    return static_cast<std::size_t>((static_cast<u128>(next_u64()) * n) >> 64);
}

RngStream RngStream::fork(std::uint64_t stream_id) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL)));
}

Matrix random_normal(std::size_t rows, std::size_t cols, RngStream& rng, double stddev) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = stddev * rng.normal();
    return m;
}

// ---------------------------------------------------------------------------

namespace {

// Fill columns flagged in `missing` with unit vectors orthogonal to all the
// other columns (Gram-Schmidt against the standard basis).
void complete_orthonormal(Matrix& q, const std::vector<bool>& missing) {
    const std::size_t m = q.rows();
    std::size_t basis = 0;
    for (std::size_t c = 0; c < q.cols(); ++c) {
        if (!missing[c]) continue;
        for (; basis < m; ++basis) {
            std::vector<double> v(m, 0.0);
            v[basis] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t o = 0; o < q.cols(); ++o) {
                    if (o == c || (missing[o] && o > c)) continue;
                    const auto qo = q.col(o);
                    const double p = dot(qo, v);
                    for (std::size_t i = 0; i < m; ++i) v[i] -= p * qo[i];
                }
            }
            const double n = norm2(v);
            if (n > 0.5) {
                for (double& x : v) x /= n;
                q.set_col(c, v);
                ++basis;
                break;
            }
        }
    }
}

SvdResult svd_tall(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    // column-major working copies for cache-friendly column rotations
    std::vector<std::vector<double>> w(n, std::vector<double>(m));
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) w[j][i] = a(i, j);
        v[j][j] = 1.0;
    }

    int sweep = 0;
    double off = 0.0;
    for (; sweep < kMaxSweeps; ++sweep) {
        off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += w[p][i] * w[p][i];
                    beta += w[q][i] * w[q][i];
                    gamma += w[p][i] * w[q][i];
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                const double rel = std::abs(gamma) / std::sqrt(alpha * beta);
                off = std::max(off, rel);
                if (rel < kJacobiTol) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w[p][i], wq = w[q][i];
                    w[p][i] = c * wp - s * wq;
                    w[q][i] = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v[p][i], vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if (off < kJacobiTol) break;
    }
    if (off >= kJacobiTol) {
        std::ostringstream msg;
        msg << "svd did not converge after " << kMaxSweeps << " sweeps (residual " << off << ")";
        fail(ErrorKind::Numerical, msg.str());
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(w[j]);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    const double smax = n ? sigma[order[0]] : 0.0;
    const double tiny = std::max(smax, 1.0) * 1e-300;
    SvdResult r;
    r.u = Matrix(m, n);
    r.v = Matrix(n, n);
    r.s.resize(n);
    r.sweeps = sweep + 1;
    std::vector<bool> missing(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        r.s[k] = sigma[j];
        if (sigma[j] > tiny && sigma[j] > smax * 1e-15) {
            for (std::size_t i = 0; i < m; ++i) r.u(i, k) = w[j][i] / sigma[j];
        } else {
            missing[k] = true;
        }
        for (std::size_t i = 0; i < n; ++i) r.v(i, k) = v[j][i];
    }
    if (std::any_of(missing.begin(), missing.end(), [](bool b) { return b; })) complete_orthonormal(r.u, missing);
    return r;
}

}  // namespace

SvdResult svd(const Matrix& a) {
    require(a.rows() >= 1 && a.cols() >= 1, ErrorKind::Argument, "svd of an empty matrix");
    require(a.all_finite(), ErrorKind::Argument, "svd input has non-finite entries");
    if (a.rows() >= a.cols()) return svd_tall(a);
    SvdResult t = svd_tall(a.transpose());
    std::swap(t.u, t.v);
    return t;
}

EigResult sym_eig(const Matrix& s) {
    require(s.rows() == s.cols(), ErrorKind::Argument,
            [&] { return "sym_eig needs a square matrix, got " + s.shape_str(); });
    const std::size_t n = s.rows();
    double scale = 1.0;
    for (double x : s.data()) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            require(std::abs(s(i, j) - s(j, i)) <= 1e-10 * scale, ErrorKind::Contract, [&] {
                return "sym_eig input is not symmetric at (" + std::to_string(i) + "," + std::to_string(j) + ")";
            });

    Matrix a = s;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (s(i, j) + s(j, i));
    Matrix v = Matrix::identity(n);
    const double fro = std::max(1.0, frobenius_norm(a));

    auto off_mass = [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) acc += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(acc);
    };

    int sweep = 0;
    double off = off_mass();
    for (; sweep < kMaxSweeps && off >= kJacobiTol * fro; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
        off = off_mass();
    }
    if (off >= kJacobiTol * fro) {
        std::ostringstream msg;
        msg << "sym_eig did not converge after " << kMaxSweeps << " sweeps (residual " << off << ")";
        fail(ErrorKind::Numerical, msg.str());
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    EigResult r;
    r.values.resize(n);
    r.vectors = Matrix(n, n);
    r.sweeps = sweep;
    for (std::size_t k = 0; k < n; ++k) {
        r.values[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) r.vectors(i, k) = v(i, order[k]);
    }
    return r;
}

// ---------------------------------------------------------------------------

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double assign(const Matrix& points, const Matrix& centroids, std::vector<int>& labels) {
    double objective = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows(); ++c) {
            const double d = sq_dist(points.row_span(i), centroids.row_span(c));
            if (d < best_d) {  // strict: ties stay with the lowest index
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        labels[i] = best;
        objective += best_d;
    }
    return objective;
}

Matrix means(const Matrix& points, const std::vector<int>& labels, std::size_t k) {
    Matrix c(k, points.cols());
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto row = c.row_span(static_cast<std::size_t>(labels[i]));
        const auto p = points.row_span(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += p[j];
        ++count[static_cast<std::size_t>(labels[i])];
    }
    for (std::size_t j = 0; j < k; ++j)
        if (count[j])
            for (double& x : c.row_span(j)) x /= static_cast<double>(count[j]);
    return c;
}

// Give every empty cluster one point: its seed point when the seed's current
// cluster can spare it, otherwise the point farthest from its own centroid.
void repair_empty(const Matrix& points, std::vector<int>& labels, std::size_t k,
                  const std::vector<std::size_t>& seeds) {
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<std::size_t> count(k, 0);
        for (int l : labels) ++count[static_cast<std::size_t>(l)];
        if (count[c] != 0) continue;
        const std::size_t seed = seeds[c];
        if (count[static_cast<std::size_t>(labels[seed])] > 1) {
            labels[seed] = static_cast<int>(c);
            continue;
        }
        const Matrix cent = means(points, labels, k);
        std::size_t pick = points.rows();
        double far = -1.0;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            const auto l = static_cast<std::size_t>(labels[i]);
            if (count[l] <= 1) continue;
            const double d = sq_dist(points.row_span(i), cent.row_span(l));
            if (d > far) {
                far = d;
                pick = i;
            }
        }
        labels[pick] = static_cast<int>(c);
    }
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, RngStream& rng, int max_iter) {
    const std::size_t n = points.rows();
    require(k >= 1, ErrorKind::Argument, "kmeans needs k >= 1");
    require(k <= n, ErrorKind::Argument,
            [&] { return "kmeans k = " + std::to_string(k) + " exceeds point count " + std::to_string(n); });

    // k-means++ seeding
    std::vector<std::size_t> seeds;
    std::vector<bool> chosen(n, false);
    seeds.push_back(rng.below(n));
    chosen[seeds[0]] = true;
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points.row_span(i), points.row_span(seeds[0]));
    while (seeds.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!chosen[i]) total += d2[i];
        std::size_t pick = n;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i] || d2[i] == 0.0) continue;
                acc += d2[i];
                pick = i;
                if (acc > r) break;
            }
        } else {
            // every remaining point coincides with a seed: force the lowest unused index
            for (std::size_t i = 0; i < n && pick == n; ++i)
                if (!chosen[i]) pick = i;
        }
        seeds.push_back(pick);
        chosen[pick] = true;
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points.row_span(i), points.row_span(pick)));
    }

    KMeansResult res;
    Matrix centroids(k, points.cols());
    for (std::size_t c = 0; c < k; ++c)
        std::copy(points.row_span(seeds[c]).begin(), points.row_span(seeds[c]).end(), centroids.row_span(c).begin());

    std::vector<int> labels(n, 0);
    assign(points, centroids, labels);
    repair_empty(points, labels, k, seeds);
    res.objective_history.push_back(0.0);
    {
        const Matrix c0 = means(points, labels, k);
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            obj += sq_dist(points.row_span(i), c0.row_span(static_cast<std::size_t>(labels[i])));
        res.objective_history.back() = obj;
    }

    int it = 0;
    for (; it < max_iter; ++it) {
        centroids = means(points, labels, k);
        std::vector<int> next(n);
        double obj = assign(points, centroids, next);
        repair_empty(points, next, k, seeds);
        if (next != labels) {
            const Matrix c = means(points, next, k);
            obj = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                obj += sq_dist(points.row_span(i), c.row_span(static_cast<std::size_t>(next[i])));
        }
        res.objective_history.push_back(obj);
        if (next == labels) break;
        labels = std::move(next);
    }
    res.iterations = it + 1;
    res.labels = std::move(labels);
    res.centroids = means(points, res.labels, k);
    return res;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    require(u.size() == v.size(), ErrorKind::Argument, [&] {
        return "cosine_similarity length mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size());
    });
    const double nu = norm2(u);
    const double nv = norm2(v);
    require(nu > 0.0 && nv > 0.0, ErrorKind::Argument, "cosine_similarity of a zero-norm vector");
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    require(temperature > 0.0, ErrorKind::Argument, "softmax temperature must be positive");
    require(!logits.empty(), ErrorKind::Argument, "softmax of an empty vector");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        total += out[i];
    }
    for (double& p : out) p /= total;
    return out;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

std::vector<double> gumbel_softmax(std::span<const double> logits, double temperature, RngStream& rng, bool hard,
                                   std::span<const double> noise) {
    require(temperature > 0.0, ErrorKind::Argument, "gumbel_softmax temperature must be positive");
    require(noise.empty() || noise.size() == logits.size(), ErrorKind::Argument,
            "gumbel_softmax noise length does not match logits");
    std::vector<double> perturbed(logits.begin(), logits.end());
    for (std::size_t i = 0; i < perturbed.size(); ++i)
        perturbed[i] += noise.empty() ? -std::log(-std::log(rng.uniform_open())) : noise[i];
    std::vector<double> soft = softmax(perturbed, temperature);
    if (!hard) return soft;
    std::vector<double> one_hot(soft.size(), 0.0);
    one_hot[argmax(soft)] = 1.0;
    return one_hot;
}

}  // namespace hicolora
