#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hicolora/adapter.hpp"
#include "hicolora/autograd.hpp"
#include "hicolora/dstsim.hpp"
#include "hicolora/init.hpp"
#include "hicolora/numkit.hpp"

namespace hicolora::model {

struct EncoderConfig {
    std::size_t num_layers = 4;
    std::size_t hidden_dim = 32;
    std::size_t heads = 4;
    std::size_t ffn_dim = 64;
    std::size_t rank = 4;
    double alpha = 0.5;
    std::size_t max_seq_len = 128;
    /// Seeds the frozen backbone and token embeddings, independent of training.
    std::uint64_t backbone_seed = 7;
    bool adapt_all_projections = false;  // default adapts query and value only
    bool use_positions = true;
    bool swap_modes = false;
    /// Test hook: feed each adapted layer its own input as x_sa instead of
    /// the pooled prompt feature.
    bool token_aligned_x_sa = false;
    double route_temperature = 1.0;
    bool hard_infer_routing = false;

    void validate() const;
};

/// Lowercases, splits on whitespace, drops '?' and ',', strips a trailing
/// ':' and splits on '-'.
std::vector<std::string> tokenize(const std::string& text);

class Vocab {
public:
    static constexpr const char* kSep = "[sep]";
    static constexpr const char* kUnk = "[unk]";

    Vocab() = default;
    /// Special tokens come first; remaining tokens are sorted and deduplicated.
    explicit Vocab(const std::vector<std::string>& tokens);

    std::size_t id(const std::string& token) const;  // unknown -> [unk]
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, std::size_t> index_;
};

struct PromptAttention {
    Matrix sequence;              // terms x d
    Matrix pooled;                // 1 x d, mean over the sequence
    std::vector<double> summary;  // pooled, L2-normalized
};

/// Parameter-free multi-head attention with Q from `terms` and K = V from
/// `descriptions`.
PromptAttention prompt_attend(const Matrix& terms, const Matrix& descriptions, std::size_t heads);

struct SlotPrompt {
    std::string domain;
    std::string slot;
    std::string key;  // "domain-slot: question"
    std::vector<std::size_t> tokens;
    Matrix x_sa;  // 1 x d
    std::vector<double> summary;
};

enum class Proj : std::size_t { Q = 0, K = 1, V = 2, O = 3 };
inline constexpr std::array<const char*, 4> kProjNames = {"q", "k", "v", "o"};

struct Block {
    std::array<Matrix, 4> w;  // frozen q, k, v, o projections (d x d)
    Matrix w1, b1, w2, b2;    // frozen feed-forward
    std::array<std::optional<adapter::HiCoLayerParams>, 4> adapted;
};

struct InitSpec {
    init::Strategy strategy = init::Strategy::SemSvd;
    double lambda = 0.5;
    std::uint64_t seed = 3407;
};

struct Model {
    EncoderConfig cfg;
    Vocab vocab;
    Matrix token_embeddings;  // vocab x d
    std::vector<Block> blocks;
    Matrix head_w;                    // classes x d
    Matrix head_b;                    // 1 x classes
    std::vector<std::string> values;  // classifier labels; "none" is last
    Matrix domain_centroids;
    Matrix slot_centroids;
    std::vector<std::string> terms;  // prompt-attention queries
    std::vector<SlotPrompt> prompts;
    std::vector<adapter::LayerMode> modes;

    std::size_t d() const { return cfg.hidden_dim; }
    std::size_t prompt_index(const std::string& domain, const std::string& slot) const;
    std::size_t value_index(const std::string& value) const;
    std::size_t none_index() const { return values.size() - 1; }
    /// (block, projection) of every adapted layer, in parameter order.
    std::vector<std::pair<std::size_t, Proj>> adapted_layers() const;
};

Matrix sinusoidal_positions(std::size_t len, std::size_t d);

/// Frozen backbone from cfg.backbone_seed, adapters initialized per `init`
/// around the frozen projections, zero classification head.
Model build_model(const EncoderConfig& cfg, const InitSpec& init, const std::vector<dst::DomainSchema>& schemas,
                  const std::vector<std::string>& vocab_text, const std::vector<std::string>& terms,
                  const Matrix& domain_centroids, const Matrix& slot_centroids);

/// Recomputes the pooled prompt features from the current terms and prompts.
void refresh_prompts(Model& m);

/// Context tokens of turns 0..turn, the separator, then the slot prompt.
/// The context is truncated from the left to fit max_seq_len.
std::vector<std::size_t> input_ids(const Model& m, const dst::Dialog& d, std::size_t turn, std::size_t prompt);

// ---------------------------------------------------------------------------
// Parameters

struct ParamInfo {
    std::string name;
    std::size_t rows;
    std::size_t cols;
    bool is_beta;
};

std::vector<ParamInfo> param_layout(const Model& m);
std::vector<Matrix> flatten_params(const Model& m);
void assign_params(Model& m, const std::vector<Matrix>& flat);

struct Bound {
    std::vector<std::array<std::optional<adapter::LayerVars>, 4>> layers;
    ag::Var head_w;
    ag::Var head_b;
};

/// Maps flat parameter vars (param_layout order) onto the model structure;
/// frozen bases become constants.
Bound bind(ag::Tape& tape, const Model& m, std::span<const ag::Var> flat);
Bound bind_params(ag::Tape& tape, const Model& m);

// ---------------------------------------------------------------------------
// Forward

/// One decision per adapted layer, in adapted_layers() order.
using Routing = std::vector<adapter::RoutingDecision>;

Routing infer_routing(const Model& m, std::size_t prompt);
Routing train_routing(const Model& m, std::size_t prompt, RngStream& rng,
                      const std::vector<adapter::RouteNoise>* frozen_noise = nullptr);

/// Projection hook: returns the output of projection `p` of block `b` for input x.
using ProjFn = std::function<ag::Var(ag::Tape&, std::size_t b, Proj p, ag::Var x)>;

ag::Var encode_with(ag::Tape& tape, const Model& m, std::span<const std::size_t> ids, const ProjFn& proj);

/// Encoder with HiCoLoRA projections.
ag::Var encode(ag::Tape& tape, const Model& m, const Bound& bound, std::span<const std::size_t> ids, std::size_t prompt,
               const Routing& routing);

/// Same encoder with every projection replaced by its frozen weight.
ag::Var encode_plain(ag::Tape& tape, const Model& m, std::span<const std::size_t> ids);

ag::Var head_logits(ag::Tape& tape, const Bound& bound, ag::Var hidden);

/// 1 x classes logits for one query.
ag::Var logits(ag::Tape& tape, const Model& m, const Bound& bound, std::span<const std::size_t> ids, std::size_t prompt,
               const Routing& routing);

/// Infer-phase logits without a trainable tape.
std::vector<double> infer_logits(const Model& m, std::span<const std::size_t> ids, std::size_t prompt);

/// Softmax over values plus "none"; throws Lookup for an unknown slot.
std::vector<double> predict_slot_value(const Model& m, const dst::Dialog& d, std::size_t turn,
                                       const std::string& domain, const std::string& slot);

// ---------------------------------------------------------------------------
// Merged inference

struct MergedModel {
    Model frozen;  // backbone, vocabulary, prompts and head; adapters unused
    /// [block][proj] dense weight beta (base + B_ur A_ur)
    std::vector<std::array<std::optional<Matrix>, 4>> w_merged;
    /// [prompt][block][proj] bias (1 - beta) h_sa
    std::vector<std::vector<std::array<std::optional<Matrix>, 4>>> bias;
};

MergedModel merge_model(const Model& m);
std::vector<double> merged_logits(const MergedModel& mm, std::span<const std::size_t> ids, std::size_t prompt);

}  // namespace hicolora::model
