#include "hicolora/adapter.hpp"

#include <cmath>

#include "hicolora/error.hpp"

namespace hicolora::adapter {

std::string to_string(LayerMode m) {
    return m == LayerMode::HeuristicGrouping ? "heuristic_grouping" : "full_collaboration";
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

double heuristic_scale(std::size_t m, std::size_t n) { return static_cast<double>(m) * static_cast<double>(n); }

double HiCoLayerParams::beta() const { return sigmoid(beta_logit); }

void HiCoLayerParams::validate() const {
    require(!a_sa.empty() && !b_sa.empty(), ErrorKind::Argument, "a layer needs at least one A and one B matrix");
    require(a_ur.cols() == d_in() && b_ur.rows() == d_out() && b_ur.cols() == rank(), ErrorKind::Argument,
            [&] { return "UniRep factors do not match base " + base.shape_str(); });
    for (const auto& a : a_sa)
        require(a.rows() == rank() && a.cols() == d_in(), ErrorKind::Argument,
                [&] { return "SemAdapt A has shape " + a.shape_str(); });
    for (const auto& b : b_sa)
        require(b.rows() == d_out() && b.cols() == rank(), ErrorKind::Argument,
                [&] { return "SemAdapt B has shape " + b.shape_str(); });
    require(temperature > 0.0, ErrorKind::Argument, "routing temperature must be positive");
}

namespace {

void check_input(const HiCoLayerParams& layer, const Matrix& x) {
    require(x.cols() == layer.d_in(), ErrorKind::Argument, [&] {
        return "input " + x.shape_str() + " does not match layer input dimension " + std::to_string(layer.d_in());
    });
}

// sum_i w_i M_i over the nonzero weights, in index order
Matrix mixture(const std::vector<Matrix>& mats, std::span<const double> w) {
    require(mats.size() == w.size(), ErrorKind::Argument, "routing weights do not match matrix count");
    Matrix out;
    for (std::size_t i = 0; i < mats.size(); ++i) {
        if (w[i] == 0.0) continue;
        if (out.empty())
            out = mats[i] * w[i];
        else
            out += mats[i] * w[i];
    }
    require(!out.empty(), ErrorKind::Argument, "routing weights are all zero");
    return out;
}

Matrix sum_of(const std::vector<Matrix>& mats) {
    Matrix out = mats.front();
    for (std::size_t i = 1; i < mats.size(); ++i) out += mats[i];
    return out;
}

}  // namespace

Matrix unirep_forward(const HiCoLayerParams& layer, const Matrix& x) {
    check_input(layer, x);
    return matmul_nt(x, layer.base) + matmul_nt(matmul_nt(x, layer.a_ur), layer.b_ur);
}

RoutingDecision route(std::span<const double> summary, const Matrix& domain_centroids, const Matrix& slot_centroids,
                      Phase phase, double temperature, RngStream& rng, bool hard_infer,
                      const RouteNoise* frozen_noise) {
    require(temperature > 0.0, ErrorKind::Argument, "routing temperature must be positive");
    require(norm2(summary) > 0.0, ErrorKind::Argument, "routing summary has zero norm");
    require(domain_centroids.cols() == summary.size() && slot_centroids.cols() == summary.size(), ErrorKind::Argument,
            "routing summary dimension does not match the centroids");
    auto logits = [&](const Matrix& c) {
        std::vector<double> z(c.rows());
        for (std::size_t i = 0; i < c.rows(); ++i) z[i] = cosine_similarity(summary, c.row_span(i)) / temperature;
        return z;
    };
    const auto zd = logits(domain_centroids);
    const auto zs = logits(slot_centroids);

    RoutingDecision r;
    r.phase = phase;
    r.noise_seed = rng.seed();
    r.noise_counter = rng.counter();
    if (phase == Phase::Train) {
        r.hard = true;
        r.domain_weights =
            gumbel_softmax(zd, 1.0, rng, true,
                           frozen_noise ? std::span<const double>(frozen_noise->domain) : std::span<const double>());
        r.slot_weights = gumbel_softmax(
            zs, 1.0, rng, true, frozen_noise ? std::span<const double>(frozen_noise->slot) : std::span<const double>());
        return r;
    }
    r.domain_weights = softmax(zd);
    r.slot_weights = softmax(zs);
    if (hard_infer) {
        r.hard = true;
        auto one_hot = [](const std::vector<double>& p) {
            std::vector<double> h(p.size(), 0.0);
            h[argmax(p)] = 1.0;
            return h;
        };
        r.domain_weights = one_hot(r.domain_weights);
        r.slot_weights = one_hot(r.slot_weights);
    }
    return r;
}

Matrix semadapt_forward_low(const HiCoLayerParams& layer, const Matrix& x_sa, const RoutingDecision& routing) {
    require(layer.mode == LayerMode::HeuristicGrouping, ErrorKind::Contract,
            "heuristic grouping called on a full-collaboration layer");
    check_input(layer, x_sa);
    const Matrix a_hat = mixture(layer.a_sa, routing.domain_weights);
    const Matrix b_hat = mixture(layer.b_sa, routing.slot_weights);
    return matmul_nt(x_sa, layer.base) +
           matmul_nt(matmul_nt(x_sa, a_hat), b_hat) * heuristic_scale(layer.m(), layer.n());
}

Matrix semadapt_forward_high(const HiCoLayerParams& layer, const Matrix& x_sa) {
    require(layer.mode == LayerMode::FullCollaboration, ErrorKind::Contract,
            "full collaboration called on a heuristic-grouping layer");
    check_input(layer, x_sa);
    return matmul_nt(x_sa, layer.base) + matmul_nt(matmul_nt(x_sa, sum_of(layer.a_sa)), sum_of(layer.b_sa));
}

Matrix semadapt_forward(const HiCoLayerParams& layer, const Matrix& x_sa, const RoutingDecision& routing) {
    return layer.mode == LayerMode::HeuristicGrouping ? semadapt_forward_low(layer, x_sa, routing)
                                                      : semadapt_forward_high(layer, x_sa);
}

Matrix fuse(const Matrix& h_ur, const Matrix& h_sa, double beta_logit) {
    require(h_ur.cols() == h_sa.cols() && (h_sa.rows() == h_ur.rows() || h_sa.rows() == 1), ErrorKind::Argument,
            [&] { return "fuse shape mismatch: " + h_ur.shape_str() + " vs " + h_sa.shape_str(); });
    const double beta = sigmoid(beta_logit);
    const double rest = 1.0 - beta;
    Matrix out(h_ur.rows(), h_ur.cols());
    for (std::size_t i = 0; i < h_ur.rows(); ++i) {
        const std::size_t si = h_sa.rows() == 1 ? 0 : i;
        for (std::size_t j = 0; j < h_ur.cols(); ++j) out(i, j) = beta * h_ur(i, j) + rest * h_sa(si, j);
    }
    return out;
}

std::vector<LayerMode> assign_layer_modes(std::size_t num_layers, double alpha, bool swap) {
    require(num_layers >= 1, ErrorKind::Argument, "need at least one layer");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Argument, "alpha must lie in [0, 1]");
    const auto full = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(num_layers) - 1e-12));
    std::vector<LayerMode> modes(num_layers, LayerMode::HeuristicGrouping);
    for (std::size_t i = num_layers - full; i < num_layers; ++i) modes[i] = LayerMode::FullCollaboration;
    if (swap) std::reverse(modes.begin(), modes.end());
    return modes;
}

MergedLayer merge_for_inference(const HiCoLayerParams& layer, const Matrix& x_sa_static,
                                const RoutingDecision& routing_static) {
    require(routing_static.phase == Phase::Infer, ErrorKind::Contract,
            "stochastic train-phase routing cannot be merged");
    require(x_sa_static.rows() == 1, ErrorKind::Argument, "merging needs a single static prompt feature row");
    const double beta = layer.beta();
    MergedLayer m;
    m.w_merged = (layer.base + matmul(layer.b_ur, layer.a_ur)) * beta;
    m.bias = semadapt_forward(layer, x_sa_static, routing_static) * (1.0 - beta);
    return m;
}

Matrix MergedLayer::forward(const Matrix& x) const {
    Matrix out = matmul_nt(x, w_merged);
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias(0, j);
    return out;
}

LayerInit make_layer(const Matrix& w0, const LayerInitOptions& opts, const Matrix& slot_centroids, RngStream& rng) {
    require(opts.m >= 1 && opts.n >= 1, ErrorKind::Argument, "cluster counts must be positive");
    LayerInit out;
    init::InitPair pair;
    switch (opts.strategy) {
        case init::Strategy::SemSvd: {
            auto r = init::semsvd_init(w0, opts.rank, opts.lambda, slot_centroids);
            pair = std::move(r.pair);
            out.factors = std::move(r.factors);
            break;
        }
        case init::Strategy::Pissa:
            pair = init::pissa_init(w0, opts.rank);
            break;
        case init::Strategy::Milora:
            pair = init::milora_init(w0, opts.rank);
            break;
        case init::Strategy::Kaiming:
            pair = init::kaiming_zero_init(w0, opts.rank, rng);
            break;
    }
    HiCoLayerParams& l = out.layer;
    l.mode = opts.mode;
    l.temperature = opts.temperature;
    l.beta_logit = 0.0;
    l.base = pair.base;
    l.a_ur = pair.a;
    l.b_ur = pair.b;
    for (std::size_t i = 0; i < opts.m; ++i)
        l.a_sa.push_back(opts.strategy == init::Strategy::Kaiming ? init::kaiming_uniform(opts.rank, w0.cols(), rng)
                                                                  : pair.a * (1.0 / static_cast<double>(opts.m)));
    for (std::size_t i = 0; i < opts.n; ++i)
        l.b_sa.push_back(opts.strategy == init::Strategy::Kaiming ? Matrix(w0.rows(), opts.rank)
                                                                  : pair.b * (1.0 / static_cast<double>(opts.n)));
    l.validate();
    return out;
}

// ---------------------------------------------------------------------------

ag::Var unirep_forward(ag::Tape& tape, const LayerVars& v, ag::Var x) {
    return tape.add(tape.matmul_nt(x, v.base), tape.matmul_nt(tape.matmul_nt(x, v.a_ur), v.b_ur));
}

namespace {

ag::Var tape_mixture(ag::Tape& tape, const std::vector<ag::Var>& mats, std::span<const double> w) {
    require(mats.size() == w.size(), ErrorKind::Argument, "routing weights do not match matrix count");
    std::optional<ag::Var> out;
    for (std::size_t i = 0; i < mats.size(); ++i) {
        if (w[i] == 0.0) continue;
        const ag::Var term = tape.scale(mats[i], w[i]);
        out = out ? tape.add(*out, term) : term;
    }
    require(out.has_value(), ErrorKind::Argument, "routing weights are all zero");
    return *out;
}

ag::Var tape_sum(ag::Tape& tape, const std::vector<ag::Var>& mats) {
    ag::Var out = mats.front();
    for (std::size_t i = 1; i < mats.size(); ++i) out = tape.add(out, mats[i]);
    return out;
}

}  // namespace

ag::Var semadapt_forward(ag::Tape& tape, const LayerVars& v, LayerMode mode, ag::Var x_sa,
                         const RoutingDecision& routing) {
    const ag::Var base_term = tape.matmul_nt(x_sa, v.base);
    if (mode == LayerMode::HeuristicGrouping) {
        const ag::Var a_hat = tape_mixture(tape, v.a_sa, routing.domain_weights);
        const ag::Var b_hat = tape_mixture(tape, v.b_sa, routing.slot_weights);
        const ag::Var low = tape.matmul_nt(tape.matmul_nt(x_sa, a_hat), b_hat);
        return tape.add(base_term, tape.scale(low, heuristic_scale(v.a_sa.size(), v.b_sa.size())));
    }
    const ag::Var low = tape.matmul_nt(tape.matmul_nt(x_sa, tape_sum(tape, v.a_sa)), tape_sum(tape, v.b_sa));
    return tape.add(base_term, low);
}

ag::Var fuse(ag::Tape& tape, ag::Var h_ur, ag::Var h_sa, ag::Var beta_logit) {
    const ag::Var beta = tape.sigmoid(beta_logit);
    const ag::Var rest = tape.sub(tape.constant(Matrix(1, 1, 1.0)), beta);
    const ag::Var ur = tape.scalar_mul(beta, h_ur);
    const ag::Var sa = tape.scalar_mul(rest, h_sa);
    if (tape.value(h_sa).rows() == 1 && tape.value(h_ur).rows() != 1) return tape.add_row(ur, sa);
    return tape.add(ur, sa);
}

}  // namespace hicolora::adapter
