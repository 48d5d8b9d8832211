#include <spdlog/spdlog.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <sstream>
#include <variant>

#include "hicolora/checkpoint.hpp"
#include "hicolora/error.hpp"
#include "hicolora/hicolora.h"
#include "hicolora/io.hpp"
#include "hicolora/pipeline.hpp"

using namespace hicolora;
using nlohmann::json;
namespace fs = std::filesystem;

struct hcl_config {
    pipeline::RunConfig cfg;
};
struct hcl_corpus {
    dst::Corpus corpus;
};
struct hcl_clusters {
    cluster::JointClusterModel cm;
};
struct hcl_model {
    ckpt::Skeleton skeleton;
    std::variant<model::Model, model::MergedModel> net;
};

namespace {

thread_local std::string g_last_error;

hcl_status status_of(ErrorKind k) {
    switch (k) {
        case ErrorKind::Numerical:
            return HCL_ERR_NUMERICAL;
        case ErrorKind::Config:
            return HCL_ERR_CONFIG;
        case ErrorKind::Argument:
            return HCL_ERR_ARGUMENT;
        case ErrorKind::Io:
            return HCL_ERR_IO;
        case ErrorKind::Format:
            return HCL_ERR_FORMAT;
        case ErrorKind::Lookup:
            return HCL_ERR_LOOKUP;
        case ErrorKind::Contract:
            return HCL_ERR_CONTRACT;
    }
    return HCL_ERR_INTERNAL;
}

template <typename F>
hcl_status guarded(F&& body) {
    g_last_error.clear();
    try {
        body();
        return HCL_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
    } catch (const std::exception& e) {
        g_last_error = e.what();
    }
    return HCL_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
    require(p != nullptr, ErrorKind::Argument, [&] { return std::string(what) + " is null"; });
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::vector<dst::DomainSchema> schemas_from(const char* path) {
    return path == nullptr ? dst::builtin_schemas() : dst::parse_schemas(io::read_file(path));
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

json metrics_json(const dst::Metrics& m) { return {{"jga", m.jga}, {"aga", m.aga}, {"turns", m.turns}}; }

}  // namespace

extern "C" {

const char* hcl_last_error(void) { return g_last_error.c_str(); }

const char* hcl_status_name(hcl_status status) {
    switch (status) {
        case HCL_OK:
            return "ok";
        case HCL_ERR_NUMERICAL:
            return "numerical";
        case HCL_ERR_CONFIG:
            return "config";
        case HCL_ERR_ARGUMENT:
            return "argument";
        case HCL_ERR_IO:
            return "io";
        case HCL_ERR_FORMAT:
            return "format";
        case HCL_ERR_LOOKUP:
            return "lookup";
        case HCL_ERR_CONTRACT:
            return "contract";
        case HCL_ERR_INTERNAL:
            return "internal";
    }
    return "unknown";
}

void hcl_string_free(char* s) { std::free(s); }

hcl_status hcl_set_log_level(int level) {
    return guarded([&] {
        require(level >= 0 && level <= 6, ErrorKind::Argument, "log level must be in [0, 6]");
        spdlog::set_level(static_cast<spdlog::level::level_enum>(level));
    });
}

// ---------------------------------------------------------------------------
// Config

hcl_status hcl_config_default(hcl_config** out) {
    return guarded([&] {
        need(out, "out");
        *out = new hcl_config{};
    });
}

hcl_status hcl_config_load(const char* path, hcl_config** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new hcl_config{pipeline::load_config(path)};
    });
}

hcl_status hcl_config_parse(const char* text, hcl_config** out) {
    return guarded([&] {
        need(text, "json");
        need(out, "out");
        *out = new hcl_config{pipeline::parse_config(text)};
    });
}

hcl_status hcl_config_to_json(const hcl_config* cfg, char** out) {
    return guarded([&] {
        need(cfg, "config");
        need(out, "out");
        *out = dup(pipeline::config_json(cfg->cfg));
    });
}

hcl_status hcl_config_set_seed(hcl_config* cfg, uint64_t seed) {
    return guarded([&] {
        need(cfg, "config");
        cfg->cfg.train.seed = seed;
    });
}

hcl_status hcl_config_apply_env_seed(hcl_config* cfg, int* applied) {
    return guarded([&] {
        need(cfg, "config");
        const bool a = pipeline::apply_env_seed(cfg->cfg);
        if (applied != nullptr) *applied = a ? 1 : 0;
    });
}

void hcl_config_free(hcl_config* cfg) { delete cfg; }

// ---------------------------------------------------------------------------
// Corpus

hcl_status hcl_corpus_generate(const char* schemas_path, uint64_t seed, size_t dialogs_per_domain, size_t turns,
                               hcl_corpus** out) {
    return guarded([&] {
        need(out, "out");
        auto schemas = schemas_from(schemas_path);
        RngStream rng(seed);
        auto dialogs = dst::generate_corpus(schemas, dialogs_per_domain, turns, rng);
        *out = new hcl_corpus{dst::Corpus{std::move(schemas), std::move(dialogs)}};
    });
}

hcl_status hcl_corpus_load(const char* path, hcl_corpus** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new hcl_corpus{dst::load_corpus(path)};
    });
}

hcl_status hcl_corpus_save(const hcl_corpus* corpus, const char* path) {
    return guarded([&] {
        need(corpus, "corpus");
        need(path, "path");
        io::write_file_atomic(path, dst::corpus_json(corpus->corpus));
    });
}

hcl_status hcl_corpus_dialog_count(const hcl_corpus* corpus, size_t* out) {
    return guarded([&] {
        need(corpus, "corpus");
        need(out, "out");
        *out = corpus->corpus.dialogs.size();
    });
}

void hcl_corpus_free(hcl_corpus* corpus) { delete corpus; }

hcl_status hcl_toy_embeddings(const char* schemas_path, size_t dim, uint64_t seed, const char* out_path) {
    return guarded([&] {
        need(out_path, "out_path");
        require(dim > 0, ErrorKind::Config, "embedding dimension must be positive");
        embed::save_embeddings(pipeline::schema_embeddings(schemas_from(schemas_path), dim, seed), out_path);
    });
}

// ---------------------------------------------------------------------------
// Clusters

hcl_status hcl_clusters_compute(const char* embeddings_path, const char* const* domains, size_t num_domains,
                                const char* const* prompts, size_t num_prompts, size_t k_min, size_t k_max,
                                uint64_t seed, size_t toy_dim, uint64_t toy_seed, hcl_clusters** out) {
    return guarded([&] {
        need(embeddings_path, "embeddings_path");
        need(out, "out");
        require(num_domains == 0 || domains != nullptr, ErrorKind::Argument, "domains is null");
        require(num_prompts == 0 || prompts != nullptr, ErrorKind::Argument, "prompts is null");
        require(k_min >= 1 && k_min <= k_max, ErrorKind::Config,
                [&] { return "invalid k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) + "]"; });
        const auto table = embed::load_embeddings(embeddings_path);
        std::vector<std::string> d(domains, domains + num_domains);
        std::vector<std::string> p(prompts, prompts + num_prompts);
        std::optional<embed::ToyFallback> fb;
        if (toy_dim > 0) fb = embed::ToyFallback{toy_dim, toy_seed};
        const cluster::KRange range{k_min, k_max};
        *out = new hcl_clusters{cluster::joint_cluster(d, p, table, fb, range, range, seed)};
    });
}

hcl_status hcl_clusters_for_corpus(const hcl_corpus* corpus, const char* embeddings_path, const hcl_config* cfg,
                                   uint64_t seed, hcl_clusters** out) {
    return guarded([&] {
        need(corpus, "corpus");
        need(cfg, "config");
        need(out, "out");
        const auto& c = cfg->cfg;
        const auto& schemas = corpus->corpus.schemas;
        const auto table = embeddings_path != nullptr
                               ? embed::load_embeddings(embeddings_path)
                               : pipeline::schema_embeddings(schemas, c.encoder.hidden_dim, c.encoder.backbone_seed);
        *out = new hcl_clusters{
            pipeline::cluster_schemas(schemas, table, std::nullopt, c.domain_range, c.slot_range, seed)};
    });
}

hcl_status hcl_clusters_load(const char* path, hcl_clusters** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new hcl_clusters{cluster::load_manifest(path)};
    });
}

hcl_status hcl_clusters_save(const hcl_clusters* clusters, const char* path) {
    return guarded([&] {
        need(clusters, "clusters");
        need(path, "path");
        cluster::save_manifest(clusters->cm, path);
    });
}

hcl_status hcl_clusters_counts(const hcl_clusters* clusters, size_t* m, size_t* n) {
    return guarded([&] {
        need(clusters, "clusters");
        if (m != nullptr) *m = clusters->cm.m();
        if (n != nullptr) *n = clusters->cm.n();
    });
}

hcl_status hcl_clusters_to_json(const hcl_clusters* clusters, char** out) {
    return guarded([&] {
        need(clusters, "clusters");
        need(out, "out");
        *out = dup(cluster::manifest_json(clusters->cm));
    });
}

void hcl_clusters_free(hcl_clusters* clusters) { delete clusters; }

// ---------------------------------------------------------------------------
// Training and evaluation

hcl_status hcl_train(const hcl_config* cfg, const hcl_corpus* corpus, const hcl_clusters* clusters, const char* out_dir,
                     char** summary) {
    return guarded([&] {
        need(cfg, "config");
        need(corpus, "corpus");
        need(clusters, "clusters");
        need(out_dir, "out_dir");
        const auto& c = cfg->cfg;
        c.validate();
        require(corpus->corpus.has_domain(c.heldout), ErrorKind::Config,
                [&] { return "held-out domain '" + c.heldout + "' is not in the corpus"; });
        const auto r = pipeline::run(c, corpus->corpus, clusters->cm);

        const fs::path dir(out_dir);
        const auto skel = ckpt::skeleton_of(r.model, c, corpus->corpus.schemas, ckpt::cluster_hash(clusters->cm));
        ckpt::save_model((dir / "checkpoint").string(), r.model, skel);
        io::write_file_atomic((dir / "history.json").string(), r.history.to_json());
        io::write_file_atomic((dir / "timing.json").string(), r.history.timing_json());
        io::write_file_atomic((dir / "config.json").string(), pipeline::config_json(c));

        if (summary != nullptr) {
            json s = {{"test", metrics_json(r.test)},
                      {"epochs", r.history.epochs.size()},
                      {"optimizer_steps", r.history.optimizer_steps}};
            const auto& last = r.history.epochs.back();
            s["dev"] = {{"loss", last.dev_loss ? json(*last.dev_loss) : json(nullptr)},
                        {"jga", last.dev_jga ? json(*last.dev_jga) : json(nullptr)},
                        {"aga", last.dev_aga ? json(*last.dev_aga) : json(nullptr)}};
            s["best_epoch"] = r.history.best_epoch ? json(*r.history.best_epoch) : json(nullptr);
            *summary = dup(s.dump());
        }
    });
}

hcl_status hcl_model_load(const char* dir, const hcl_clusters* clusters, hcl_model** out) {
    return guarded([&] {
        need(dir, "dir");
        need(out, "out");
        std::optional<std::uint64_t> expect;
        if (clusters != nullptr) expect = ckpt::cluster_hash(clusters->cm);
        const auto loaded = ckpt::load(dir, expect);
        auto* h = new hcl_model{loaded.skeleton, model::Model{}};
        try {
            if (loaded.kind == ckpt::Kind::Model)
                h->net = ckpt::load_model(dir, expect);
            else
                h->net = ckpt::load_merged(dir, expect);
        } catch (...) {
            delete h;
            throw;
        }
        *out = h;
    });
}

hcl_status hcl_model_is_merged(const hcl_model* model, int* out) {
    return guarded([&] {
        need(model, "model");
        need(out, "out");
        *out = std::holds_alternative<model::MergedModel>(model->net) ? 1 : 0;
    });
}

void hcl_model_free(hcl_model* model) { delete model; }

hcl_status hcl_eval(const hcl_model* model, const hcl_corpus* corpus, const char* split, char** metrics) {
    return guarded([&] {
        need(model, "model");
        need(corpus, "corpus");
        need(split, "split");
        need(metrics, "metrics");
        const auto& c = model->skeleton.config;
        const std::string which = split;
        std::vector<dst::Dialog> dialogs;
        if (which == "all") {
            dialogs = corpus->corpus.dialogs;
        } else {
            auto splits = pipeline::make_splits(c, corpus->corpus);
            if (which == "train")
                dialogs = std::move(splits.train);
            else if (which == "dev")
                dialogs = std::move(splits.dev);
            else if (which == "test")
                dialogs = std::move(splits.test);
            else
                throw Error(ErrorKind::Config, "unknown split '" + which + "'");
        }
        require(!dialogs.empty(), ErrorKind::Config, [&] { return "split '" + which + "' is empty"; });
        const auto m = std::visit(
            [&](const auto& net) {
                if constexpr (std::is_same_v<std::decay_t<decltype(net)>, model::Model>)
                    return train::evaluate(net, corpus->corpus, dialogs, c.skip_empty_gold);
                else
                    return train::evaluate_merged(net, corpus->corpus, dialogs, c.skip_empty_gold);
            },
            model->net);
        *metrics = dup(metrics_json(m).dump());
    });
}

hcl_status hcl_merge(const hcl_model* model, const char* out_dir, size_t num_checks, uint64_t check_seed,
                     double tolerance, double* gap) {
    return guarded([&] {
        need(model, "model");
        need(out_dir, "out_dir");
        const auto* m = std::get_if<model::Model>(&model->net);
        require(m != nullptr, ErrorKind::Config, "checkpoint is already merged");
        require(num_checks > 0, ErrorKind::Config, "at least one equivalence check is required");
        const auto mm = ckpt::round_f32(model::merge_model(*m));
        const double g = train::merge_gap_random(*m, mm, num_checks, check_seed);
        if (gap != nullptr) *gap = g;
        require(g <= tolerance, ErrorKind::Numerical, [&] {
            return fmt::format("merged logits differ from unmerged by {:.3e} > {:.1e}; nothing written", g, tolerance);
        });
        ckpt::save_merged(out_dir, mm, model->skeleton);
    });
}

hcl_status hcl_inspect_init(const hcl_config* cfg, const hcl_corpus* corpus, const hcl_clusters* clusters,
                            char** report) {
    return guarded([&] {
        need(cfg, "config");
        need(corpus, "corpus");
        need(clusters, "clusters");
        need(report, "report");
        const auto splits = pipeline::make_splits(cfg->cfg, corpus->corpus);
        const auto m = pipeline::build_model(cfg->cfg, corpus->corpus, splits, clusters->cm);
        *report = dup(pipeline::init_report_json(m, cfg->cfg));
    });
}

hcl_status hcl_ablate(const hcl_config* cfg, const hcl_corpus* corpus, const hcl_clusters* clusters,
                      const char* variants, const char* seeds, char** csv) {
    return guarded([&] {
        need(cfg, "config");
        need(corpus, "corpus");
        need(clusters, "clusters");
        need(variants, "variants");
        need(csv, "csv");
        const auto names = split_csv(variants);
        require(!names.empty(), ErrorKind::Config, "no ablation variants given");
        for (const auto& v : names)
            require(std::find(pipeline::kVariants.begin(), pipeline::kVariants.end(), v) != pipeline::kVariants.end(),
                    ErrorKind::Config, [&] { return "unknown variant '" + v + "'"; });
        std::vector<std::uint64_t> seed_list;
        if (seeds == nullptr) {
            seed_list.push_back(cfg->cfg.train.seed);
        } else {
            for (const auto& s : split_csv(seeds)) {
                std::size_t used = 0;
                std::uint64_t v = 0;
                try {
                    v = std::stoull(s, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                require(used == s.size() && used > 0, ErrorKind::Config, [&] { return "bad seed '" + s + "'"; });
                seed_list.push_back(v);
            }
            require(!seed_list.empty(), ErrorKind::Config, "no seeds given");
        }
        std::vector<pipeline::AblationRow> rows;
        for (const auto seed : seed_list) {
            auto base = cfg->cfg;
            base.train.seed = seed;
            auto part = pipeline::run_ablation_grid(base, corpus->corpus, clusters->cm, names);
            rows.insert(rows.end(), part.begin(), part.end());
        }
        *csv = dup(pipeline::ablation_csv(rows));
    });
}

}  // extern "C"
