#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hicolora {

/// Dense row-major matrix of doubles. Weights are stored out x in; activations
/// are stored one row per position.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diag(std::span<const double> d);
    static Matrix row(std::span<const double> v);
    static Matrix column(std::span<const double> v);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::vector<double> col(std::size_t c) const;
    void set_col(std::size_t c, std::span<const double> v);

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    Matrix transpose() const;
    /// Columns [start, start + count).
    Matrix cols_slice(std::size_t start, std::size_t count) const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

    bool all_finite() const;
    std::string shape_str() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);

double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// ||a - b||_F / ||b||_F, with an absolute fallback when b is zero.
double relative_error(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
std::vector<double> normalized(std::span<const double> a);

// ---------------------------------------------------------------------------
// Randomness

/// SplitMix64 stream. Counter-based: output i depends only on (seed, i), so a
/// stream is fully reproducible from its seed on any platform. Distribution
/// sampling is done here rather than via <random> distributions, whose output
/// is implementation-defined.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) : seed_(seed), counter_(0) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on the open interval (0, 1).
    double uniform_open();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n);
    /// Independent child stream; forking does not advance this stream.
    RngStream fork(std::uint64_t stream_id) const;

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

std::uint64_t splitmix64(std::uint64_t x);
/// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis = 0xcbf29ce484222325ULL);

Matrix random_normal(std::size_t rows, std::size_t cols, RngStream& rng, double stddev = 1.0);

// ---------------------------------------------------------------------------
// Decompositions

struct SvdResult {
    Matrix u;               // m x k, orthonormal columns
    std::vector<double> s;  // k, descending
    Matrix v;               // n x k, orthonormal columns
    int sweeps = 0;
};

/// Thin SVD by one-sided Jacobi rotations; k = min(m, n).
SvdResult svd(const Matrix& a);

struct EigResult {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column k pairs with values[k]
    int sweeps = 0;
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
EigResult sym_eig(const Matrix& s);

// ---------------------------------------------------------------------------
// Clustering and probability primitives

struct KMeansResult {
    std::vector<int> labels;
    Matrix centroids;
    std::vector<double> objective_history;  // after each assignment step
    int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding drawn from `rng`.
KMeansResult kmeans(const Matrix& points, std::size_t k, RngStream& rng, int max_iter = 100);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

/// Gumbel-softmax relaxation. When `hard` is set the result is the one-hot of
/// the soft sample's argmax. Noise g = -log(-log(U)) is drawn from `rng` unless
/// `noise` is supplied (one value per category).
std::vector<double> gumbel_softmax(std::span<const double> logits, double temperature, RngStream& rng, bool hard,
                                   std::span<const double> noise = {});

std::size_t argmax(std::span<const double> v);

}  // namespace hicolora
