#pragma once

#include <string>
#include <vector>

#include "hicolora/numkit.hpp"

namespace hicolora::init {

enum class Strategy { SemSvd, Kaiming, Pissa, Milora };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

inline bool is_svd_family(Strategy s) { return s != Strategy::Kaiming; }

/// Audit record of one semantic SVD initialization.
struct SemSvdFactors {
    Matrix u_r;                     // d_out x r
    std::vector<double> sigma_r;    // descending
    Matrix v_r;                     // d_in x r
    std::vector<double> relevance;  // max centroid cosine per right singular vector
    std::vector<double> s_e;        // sigma_k * max(0, 1 + lambda * relevance_k)
    Matrix w_res;                   // d_out x d_in
    double lambda = 0.0;
};

/// Low-rank pair plus the matrix the adapted layer keeps frozen.
struct InitPair {
    Matrix a;     // r x d_in
    Matrix b;     // d_out x r
    Matrix base;  // W_res for SVD-family strategies, W_0 otherwise
    Strategy strategy = Strategy::Kaiming;
};

/// R_k = max_j cos(v_r[:, k], centroids[j, :]).
std::vector<double> relevance_scores(const Matrix& v_r, const Matrix& centroids);

struct SemSvdResult {
    InitPair pair;
    SemSvdFactors factors;
};

SemSvdResult semsvd_init(const Matrix& w0, std::size_t rank, double lambda, const Matrix& centroids);

/// A ~ U(-sqrt(6 / d_in), sqrt(6 / d_in)), B = 0, base = W_0.
InitPair kaiming_zero_init(const Matrix& w0, std::size_t rank, RngStream& rng);
Matrix kaiming_uniform(std::size_t rows, std::size_t fan_in, RngStream& rng);

/// Principal singular triplets: A = sqrt(S) V^T, B = U sqrt(S), base = W_0 - BA.
InitPair pissa_init(const Matrix& w0, std::size_t rank);

/// Minor (smallest) singular triplets, principal part stays in the base.
InitPair milora_init(const Matrix& w0, std::size_t rank);

}  // namespace hicolora::init
