#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hicolora/dstsim.hpp"
#include "hicolora/init.hpp"
#include "hicolora/model.hpp"

namespace hicolora::train {

enum class FusionMode { Adaptive, StaticHalf };
std::string to_string(FusionMode f);
FusionMode fusion_from_string(const std::string& s);

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    std::size_t batch_size = 8;
    std::size_t grad_accum_steps = 8;
    std::uint64_t seed = 3407;
    std::size_t epochs = 5;
    std::size_t early_stop_patience = 5;
    double min_delta = 1e-5;
    /// Routing logit temperature.
    double gumbel_temperature = 1.0;
    double alpha = 0.5;
    std::size_t rank = 4;
    double lambda = 0.5;
    init::Strategy init_strategy = init::Strategy::SemSvd;
    FusionMode fusion_mode = FusionMode::Adaptive;
    /// false: seeded random partition with the spectral M and N.
    bool clustering_enabled = true;
    /// Collapse both cluster families to one cluster (single-LoRA baseline).
    bool single_cluster = false;
    bool swap_modes = false;
    bool restore_best = true;

    void validate() const;
};

struct AdamConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::size_t step = 0;
};

/// Decoupled weight decay then bias-corrected Adam. Entries with
/// `frozen[i]` set are left untouched. Throws Numerical naming the first
/// parameter with a non-finite gradient.
void adamw_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state, const AdamConfig& cfg,
                std::span<const std::string> names = {}, const std::vector<bool>& frozen = {});

/// One (turn, slot) prediction target.
struct Example {
    std::size_t dialog;
    std::size_t turn;
    std::size_t prompt;
    std::size_t target;
};

std::vector<Example> make_examples(const model::Model& m, const dst::Corpus& schemas,
                                   const std::vector<dst::Dialog>& dialogs);

struct BatchResult {
    double loss = 0.0;
    std::vector<Matrix> grads;  // mean over the batch, param_layout order
};

/// Train-phase routing draws from `rng`; Infer uses the deterministic routing.
BatchResult batch_gradient(const model::Model& m, const std::vector<dst::Dialog>& dialogs,
                           std::span<const Example> batch, adapter::Phase phase, RngStream& rng);

/// Mean infer-phase cross-entropy.
double mean_loss(const model::Model& m, const std::vector<dst::Dialog>& dialogs, std::span<const Example> examples);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> dev_loss;
    std::optional<double> dev_jga;
    std::optional<double> dev_aga;
    double seconds = 0.0;
};

struct RunHistory {
    std::vector<EpochRecord> epochs;
    std::optional<std::size_t> early_stop_epoch;
    std::optional<std::size_t> best_epoch;
    std::size_t optimizer_steps = 0;
    AdamConfig adam;

    /// Deterministic part only; wall-clock goes to timing_json.
    std::string to_json() const;
    std::string timing_json() const;
};

struct TrainHooks {
    /// Called after each optimizer step with the (masked) gradients applied.
    std::function<void(std::size_t step, const std::vector<Matrix>& grads)> on_step;
};

RunHistory train(model::Model& m, const dst::Corpus& schemas, const dst::Splits& splits, const TrainConfig& cfg,
                 const TrainHooks& hooks = {});

dst::Metrics evaluate(const model::Model& m, const dst::Corpus& schemas, const std::vector<dst::Dialog>& dialogs,
                      bool skip_empty_gold = false);
dst::Metrics evaluate_merged(const model::MergedModel& mm, const dst::Corpus& schemas,
                             const std::vector<dst::Dialog>& dialogs, bool skip_empty_gold = false);

/// Largest |merged - unmerged| logit difference over every (turn, slot) query.
double merge_gap(const model::Model& m, const model::MergedModel& mm, const dst::Corpus& schemas,
                 const std::vector<dst::Dialog>& dialogs);

/// Same gap over `count` seeded random queries (random prompt, random token
/// ids of random length up to max_seq_len).
double merge_gap_random(const model::Model& m, const model::MergedModel& mm, std::size_t count, std::uint64_t seed);

}  // namespace hicolora::train
