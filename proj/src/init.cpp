#include "hicolora/init.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "hicolora/error.hpp"

namespace hicolora::init {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::SemSvd:
            return "semsvd";
        case Strategy::Kaiming:
            return "kaiming";
        case Strategy::Pissa:
            return "pissa";
        case Strategy::Milora:
            return "milora";
    }
    return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
    if (name == "semsvd") return Strategy::SemSvd;
    if (name == "kaiming") return Strategy::Kaiming;
    if (name == "pissa") return Strategy::Pissa;
    if (name == "milora") return Strategy::Milora;
    fail(ErrorKind::Config, "unknown init strategy '" + name + "'");
}

namespace {

void check_rank(const Matrix& w0, std::size_t rank) {
    require(rank >= 1 && rank <= std::min(w0.rows(), w0.cols()), ErrorKind::Argument,
            [&] { return "rank " + std::to_string(rank) + " is out of range for a " + w0.shape_str() + " weight"; });
}

// A = diag(sqrt(s)) V[:, idx]^T, B = U[:, idx] diag(sqrt(s))
void factor_pair(const SvdResult& f, const std::vector<std::size_t>& idx, const std::vector<double>& scale, Matrix& a,
                 Matrix& b) {
    const std::size_t r = idx.size();
    a = Matrix(r, f.v.rows());
    b = Matrix(f.u.rows(), r);
    for (std::size_t k = 0; k < r; ++k) {
        const double root = std::sqrt(scale[k]);
        for (std::size_t j = 0; j < f.v.rows(); ++j) a(k, j) = root * f.v(j, idx[k]);
        for (std::size_t i = 0; i < f.u.rows(); ++i) b(i, k) = root * f.u(i, idx[k]);
    }
}

InitPair svd_pair(const Matrix& w0, const SvdResult& f, const std::vector<std::size_t>& idx, Strategy tag) {
    std::vector<double> sigma;
    for (std::size_t k : idx) sigma.push_back(f.s[k]);
    InitPair p;
    p.strategy = tag;
    factor_pair(f, idx, sigma, p.a, p.b);
    p.base = w0 - matmul(p.b, p.a);
    return p;
}

}  // namespace

std::vector<double> relevance_scores(const Matrix& v_r, const Matrix& centroids) {
    require(centroids.rows() >= 1, ErrorKind::Argument, "relevance needs at least one centroid");
    require(centroids.cols() == v_r.rows(), ErrorKind::Argument, [&] {
        return "centroid dimension " + std::to_string(centroids.cols()) + " does not match layer input dimension " +
               std::to_string(v_r.rows());
    });
    std::vector<double> r(v_r.cols());
    for (std::size_t k = 0; k < v_r.cols(); ++k) {
        const auto col = v_r.col(k);
        double best = -1.0;
        for (std::size_t j = 0; j < centroids.rows(); ++j)
            best = std::max(best, cosine_similarity(col, centroids.row_span(j)));
        r[k] = best;
    }
    return r;
}

SemSvdResult semsvd_init(const Matrix& w0, std::size_t rank, double lambda, const Matrix& centroids) {
    check_rank(w0, rank);
    require(lambda >= 0.0, ErrorKind::Argument, "lambda must be non-negative");
    require(centroids.cols() == w0.cols(), ErrorKind::Argument, [&] {
        return "centroid dimension " + std::to_string(centroids.cols()) + " does not match layer input dimension " +
               std::to_string(w0.cols()) + " (use truncate_or_pad deliberately)";
    });
    const SvdResult f = svd(w0);

    SemSvdResult out;
    SemSvdFactors& fac = out.factors;
    fac.lambda = lambda;
    fac.sigma_r.assign(f.s.begin(), f.s.begin() + static_cast<std::ptrdiff_t>(rank));
    fac.u_r = f.u.cols_slice(0, rank);
    fac.v_r = f.v.cols_slice(0, rank);
    fac.relevance = relevance_scores(fac.v_r, centroids);
    fac.s_e.resize(rank);
    std::size_t dropped = 0;
    for (std::size_t k = 0; k < rank; ++k) {
        fac.s_e[k] = fac.sigma_r[k] * std::max(0.0, 1.0 + lambda * fac.relevance[k]);
        if (fac.s_e[k] == 0.0) ++dropped;
    }
    if (dropped) spdlog::info("semsvd init: {} of {} singular directions modulated to zero", dropped, rank);

    std::vector<std::size_t> idx(rank);
    for (std::size_t k = 0; k < rank; ++k) idx[k] = k;
    InitPair& p = out.pair;
    p.strategy = Strategy::SemSvd;
    factor_pair(f, idx, fac.s_e, p.a, p.b);
    p.base = w0 - matmul(p.b, p.a);
    fac.w_res = p.base;
    return out;
}

Matrix kaiming_uniform(std::size_t rows, std::size_t fan_in, RngStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix a(rows, fan_in);
    for (double& x : a.data()) x = rng.uniform(-bound, bound);
    return a;
}

InitPair kaiming_zero_init(const Matrix& w0, std::size_t rank, RngStream& rng) {
    check_rank(w0, rank);
    InitPair p;
    p.strategy = Strategy::Kaiming;
    p.a = kaiming_uniform(rank, w0.cols(), rng);
    p.b = Matrix(w0.rows(), rank);
    p.base = w0;
    return p;
}

InitPair pissa_init(const Matrix& w0, std::size_t rank) {
    check_rank(w0, rank);
    std::vector<std::size_t> idx(rank);
    for (std::size_t k = 0; k < rank; ++k) idx[k] = k;
    return svd_pair(w0, svd(w0), idx, Strategy::Pissa);
}

InitPair milora_init(const Matrix& w0, std::size_t rank) {
    check_rank(w0, rank);
    const SvdResult f = svd(w0);
    const std::size_t full = f.s.size();
    std::vector<std::size_t> idx(rank);
    for (std::size_t k = 0; k < rank; ++k) idx[k] = full - rank + k;
    return svd_pair(w0, f, idx, Strategy::Milora);
}

}  // namespace hicolora::init
