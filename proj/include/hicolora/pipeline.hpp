#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hicolora/cluster.hpp"
#include "hicolora/dstsim.hpp"
#include "hicolora/embed.hpp"
#include "hicolora/model.hpp"
#include "hicolora/trainer.hpp"

namespace hicolora::pipeline {

struct RunConfig {
    model::EncoderConfig encoder;
    train::TrainConfig train;
    cluster::KRange domain_range;
    cluster::KRange slot_range;
    std::string embeddings;
    std::string corpus;
    std::string clusters;
    std::string out_dir;
    std::string heldout;
    std::vector<std::string> train_domains;
    double dev_fraction = 0.1;
    std::size_t top_k_terms = 16;
    std::vector<std::string> stoplist = {"a", "and", "at", "be", "by", "i", "is", "it", "the", "to"};
    bool skip_empty_gold = false;

    void validate() const;
};

std::string config_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are a Config error.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
/// Applies HICOLORA_SEED when set (logged). Returns true when applied.
bool apply_env_seed(RunConfig& cfg);

/// Embedding table for a schema set built with the toy embedder: one entry
/// per domain name (its name plus slot names) and one per slot prompt key.
embed::EmbeddingTable schema_embeddings(const std::vector<dst::DomainSchema>& schemas, std::size_t dim,
                                        std::uint64_t seed);

/// Joint clustering of the domain names and slot prompt keys of `schemas`.
cluster::JointClusterModel cluster_schemas(const std::vector<dst::DomainSchema>& schemas,
                                           const embed::EmbeddingTable& table,
                                           const std::optional<embed::ToyFallback>& fallback,
                                           cluster::KRange domain_range, cluster::KRange slot_range,
                                           std::uint64_t seed);

/// Cluster model a configuration actually trains with (spectral, random
/// partition or single cluster).
cluster::JointClusterModel effective_clusters(const train::TrainConfig& cfg, const cluster::JointClusterModel& cm);

dst::Splits make_splits(const RunConfig& cfg, const dst::Corpus& corpus);

/// Encoder settings a run actually uses (rank, alpha, swap and routing
/// temperature come from the training section).
model::EncoderConfig encoder_config(const RunConfig& cfg);
model::InitSpec init_spec(const RunConfig& cfg);

model::Model build_model(const RunConfig& cfg, const dst::Corpus& corpus, const dst::Splits& splits,
                         const cluster::JointClusterModel& cm);

/// Per adapted layer: strategy, mode, cluster counts, reconstruction error
/// |base + B_ur A_ur - W_0| / |W_0| and, for SemSVD, the singular factors,
/// relevance scores and rescaled spectrum.
std::string init_report_json(const model::Model& m, const RunConfig& cfg);

struct RunResult {
    model::Model model;
    train::RunHistory history;
    dst::Metrics test;
};

RunResult run(const RunConfig& cfg, const dst::Corpus& corpus, const cluster::JointClusterModel& cm);

inline const std::vector<std::string> kVariants = {"full",    "swap_hier", "static_fusion", "no_cluster",
                                                   "kaiming", "pissa",     "milora",        "single_lora"};

/// Changes only the knob named by `variant`.
RunConfig apply_variant(RunConfig cfg, const std::string& variant);

struct AblationRow {
    std::string variant;
    double jga = 0.0;
    double aga = 0.0;
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    std::optional<std::string> error;
};

std::vector<AblationRow> run_ablation_grid(const RunConfig& base, const dst::Corpus& corpus,
                                           const cluster::JointClusterModel& cm,
                                           const std::vector<std::string>& variants);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace hicolora::pipeline
