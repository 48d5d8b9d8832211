#pragma once

#include "hicolora/pipeline.hpp"

namespace hicolora::testing {

/// Builtin schemas, a small generated corpus and their spectral clusters.
struct Tiny {
    dst::Corpus corpus;
    pipeline::RunConfig cfg;
    cluster::JointClusterModel clusters;
    dst::Splits splits;

    model::Model build() const { return pipeline::build_model(cfg, corpus, splits, clusters); }
};

inline Tiny tiny(std::size_t layers = 1, std::size_t dialogs = 6, std::uint64_t seed = 11) {
    Tiny t;
    t.corpus.schemas = dst::builtin_schemas();
    RngStream rng(seed);
    t.corpus.dialogs = dst::generate_corpus(t.corpus.schemas, dialogs, 2, rng);
    t.cfg.heldout = "taxi";
    t.cfg.encoder.num_layers = layers;
    t.cfg.encoder.hidden_dim = 16;
    t.cfg.encoder.ffn_dim = 32;
    t.cfg.encoder.heads = 2;
    t.cfg.train.rank = 2;
    t.cfg.train.seed = seed;
    t.cfg.train.grad_accum_steps = 1;
    const auto table = pipeline::schema_embeddings(t.corpus.schemas, 16, 7);
    t.clusters = pipeline::cluster_schemas(t.corpus.schemas, table, std::nullopt, t.cfg.domain_range,
                                           t.cfg.slot_range, 1);
    t.splits = pipeline::make_splits(t.cfg, t.corpus);
    return t;
}

}  // namespace hicolora::testing
