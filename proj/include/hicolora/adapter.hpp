#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hicolora/autograd.hpp"
#include "hicolora/init.hpp"
#include "hicolora/numkit.hpp"

namespace hicolora::adapter {

enum class LayerMode { HeuristicGrouping, FullCollaboration };
enum class Phase { Train, Infer };

std::string to_string(LayerMode m);

/// One adapted linear map. `base` is frozen; everything else trains.
/// All weights are stored out x in; inputs are rows.
struct HiCoLayerParams {
    Matrix base;               // d_out x d_in
    Matrix a_ur;               // r x d_in
    Matrix b_ur;               // d_out x r
    std::vector<Matrix> a_sa;  // M of r x d_in (domain clusters)
    std::vector<Matrix> b_sa;  // N of d_out x r (slot clusters)
    double beta_logit = 0.0;
    LayerMode mode = LayerMode::HeuristicGrouping;
    double temperature = 1.0;

    std::size_t d_in() const { return base.cols(); }
    std::size_t d_out() const { return base.rows(); }
    std::size_t rank() const { return a_ur.rows(); }
    std::size_t m() const { return a_sa.size(); }
    std::size_t n() const { return b_sa.size(); }
    double beta() const;
    void validate() const;
};

struct RoutingDecision {
    std::vector<double> domain_weights;  // selects the A matrix (length M)
    std::vector<double> slot_weights;    // selects the B matrix (length N)
    bool hard = false;
    Phase phase = Phase::Infer;
    std::uint64_t noise_seed = 0;     // stream seed at sampling time
    std::uint64_t noise_counter = 0;  // stream position at sampling time
};

/// Inference form: x -> w_merged x + bias.
struct MergedLayer {
    Matrix w_merged;  // beta (base + b_ur a_ur)
    Matrix bias;      // 1 x d_out, (1 - beta) h_sa on the static prompt feature

    Matrix forward(const Matrix& x) const;
};

double sigmoid(double x);

/// Scalar multiplier that heuristic grouping applies to the selected pair.
double heuristic_scale(std::size_t m, std::size_t n);

/// h_ur = x base^T + (x a_ur^T) b_ur^T, computed low-rank first.
Matrix unirep_forward(const HiCoLayerParams& layer, const Matrix& x);

struct RouteNoise {
    std::vector<double> domain;
    std::vector<double> slot;
};

/// Cosine logits of `summary` against each centroid, divided by `temperature`.
/// Train phase samples a hard straight-through Gumbel-softmax; infer phase
/// uses plain softmax weights (or their argmax when `hard_infer`).
RoutingDecision route(std::span<const double> summary, const Matrix& domain_centroids, const Matrix& slot_centroids,
                      Phase phase, double temperature, RngStream& rng, bool hard_infer = false,
                      const RouteNoise* frozen_noise = nullptr);

/// Heuristic grouping: base x + (N B_hat)(M A_hat x) with routed mixtures.
Matrix semadapt_forward_low(const HiCoLayerParams& layer, const Matrix& x_sa, const RoutingDecision& routing);
/// Full collaboration: base x + sum_n B_n sum_m A_m x.
Matrix semadapt_forward_high(const HiCoLayerParams& layer, const Matrix& x_sa);
/// Dispatches on layer.mode.
Matrix semadapt_forward(const HiCoLayerParams& layer, const Matrix& x_sa, const RoutingDecision& routing);

/// beta h_ur + (1 - beta) h_sa with beta = sigmoid(beta_logit). A one-row
/// h_sa is broadcast over the rows of h_ur.
Matrix fuse(const Matrix& h_ur, const Matrix& h_sa, double beta_logit);

/// Top ceil(alpha * num_layers) layers collaborate fully; `swap` reverses.
std::vector<LayerMode> assign_layer_modes(std::size_t num_layers, double alpha, bool swap = false);

MergedLayer merge_for_inference(const HiCoLayerParams& layer, const Matrix& x_sa_static,
                                const RoutingDecision& routing_static);

// ---------------------------------------------------------------------------
// Construction

struct LayerInitOptions {
    init::Strategy strategy = init::Strategy::SemSvd;
    std::size_t rank = 4;
    double lambda = 0.5;
    std::size_t m = 1;
    std::size_t n = 1;
    LayerMode mode = LayerMode::HeuristicGrouping;
    double temperature = 1.0;
};

struct LayerInit {
    HiCoLayerParams layer;
    std::optional<init::SemSvdFactors> factors;  // SemSVD audit trail
};

/// Builds a layer around frozen weight `w0`. SVD-family strategies give the
/// semantic path the UniRep factors split evenly (A / M and B / N), so the
/// routed or summed product equals B A and base + BA = W_0 holds for both
/// paths at step 0. Kaiming draws every A independently with zero B.
LayerInit make_layer(const Matrix& w0, const LayerInitOptions& opts, const Matrix& slot_centroids, RngStream& rng);

// ---------------------------------------------------------------------------
// Tape versions

/// Tape handles for the trainable and frozen pieces of one layer.
struct LayerVars {
    ag::Var base;
    ag::Var a_ur;
    ag::Var b_ur;
    std::vector<ag::Var> a_sa;
    std::vector<ag::Var> b_sa;
    ag::Var beta_logit;  // 1 x 1
};

ag::Var unirep_forward(ag::Tape& tape, const LayerVars& v, ag::Var x);
ag::Var semadapt_forward(ag::Tape& tape, const LayerVars& v, LayerMode mode, ag::Var x_sa,
                         const RoutingDecision& routing);
ag::Var fuse(ag::Tape& tape, ag::Var h_ur, ag::Var h_sa, ag::Var beta_logit);

}  // namespace hicolora::adapter
