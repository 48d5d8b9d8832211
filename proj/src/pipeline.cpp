#include "hicolora/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <set>

#include "hicolora/error.hpp"
#include "hicolora/io.hpp"

namespace hicolora::pipeline {

using nlohmann::json;

void RunConfig::validate() const {
    encoder.validate();
    train.validate();
    require(domain_range.min >= 2 && domain_range.min <= domain_range.max, ErrorKind::Config,
            [&] { return fmt::format("invalid domain cluster range [{}, {}]", domain_range.min, domain_range.max); });
    require(slot_range.min >= 2 && slot_range.min <= slot_range.max, ErrorKind::Config,
            [&] { return fmt::format("invalid slot cluster range [{}, {}]", slot_range.min, slot_range.max); });
    require(dev_fraction >= 0.0 && dev_fraction < 1.0, ErrorKind::Config, "dev_fraction must lie in [0, 1)");
    require(top_k_terms >= 1, ErrorKind::Config, "top_k_terms must be >= 1");
    require(train.rank <= encoder.hidden_dim, ErrorKind::Config, "rank exceeds hidden_dim");
}

std::string config_json(const RunConfig& c) {
    const auto& e = c.encoder;
    const auto& t = c.train;
    json j = {
        {"encoder",
         {{"num_layers", e.num_layers},
          {"hidden_dim", e.hidden_dim},
          {"heads", e.heads},
          {"ffn_dim", e.ffn_dim},
          {"max_seq_len", e.max_seq_len},
          {"backbone_seed", e.backbone_seed},
          {"adapt_all_projections", e.adapt_all_projections},
          {"use_positions", e.use_positions},
          {"hard_infer_routing", e.hard_infer_routing}}},
        {"train",
         {{"learning_rate", t.learning_rate},
          {"weight_decay", t.weight_decay},
          {"batch_size", t.batch_size},
          {"grad_accum_steps", t.grad_accum_steps},
          {"seed", t.seed},
          {"epochs", t.epochs},
          {"early_stop_patience", t.early_stop_patience},
          {"min_delta", t.min_delta},
          {"gumbel_temperature", t.gumbel_temperature},
          {"alpha", t.alpha},
          {"rank", t.rank},
          {"lambda", t.lambda},
          {"init_strategy", init::to_string(t.init_strategy)},
          {"fusion_mode", train::to_string(t.fusion_mode)},
          {"clustering_enabled", t.clustering_enabled},
          {"single_cluster", t.single_cluster},
          {"swap_modes", t.swap_modes},
          {"restore_best", t.restore_best}}},
        {"clusters",
         {{"domain_range", {c.domain_range.min, c.domain_range.max}},
          {"slot_range", {c.slot_range.min, c.slot_range.max}}}},
        {"paths",
         {{"embeddings", c.embeddings}, {"corpus", c.corpus}, {"clusters", c.clusters}, {"out_dir", c.out_dir}}},
        {"split", {{"heldout", c.heldout}, {"train_domains", c.train_domains}, {"dev_fraction", c.dev_fraction}}},
        {"terms", {{"top_k", c.top_k_terms}, {"stoplist", c.stoplist}}},
        {"metrics", {{"skip_empty_gold", c.skip_empty_gold}}},
    };
    return j.dump(1) + "\n";
}

namespace {

/// Reads the members of one config section, rejecting unknown keys.
class Section {
public:
    Section(const json& root, const std::string& name) : name_(name) {
        if (!root.contains(name)) return;
        obj_ = &root.at(name);
        require(obj_->is_object(), ErrorKind::Config,
                [&] { return "config section '" + name + "' must be an object"; });
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        try {
            out = obj_->at(key).get<T>();
        } catch (const json::exception& e) {
            fail(ErrorKind::Config, fmt::format("config {}.{}: {}", name_, key, e.what()));
        }
    }

    void range(const std::string& key, cluster::KRange& r) {
        std::vector<std::size_t> v = {r.min, r.max};
        get(key, v);
        require(v.size() == 2, ErrorKind::Config,
                [&] { return fmt::format("config {}.{} must be [min, max]", name_, key); });
        r = {v[0], v[1]};
    }

    void finish() const {
        if (!obj_) return;
        for (const auto& [k, _] : obj_->items())
            require(seen_.count(k) != 0, ErrorKind::Config,
                    [&] { return fmt::format("unknown config key {}.{}", name_, k); });
    }

private:
    std::string name_;
    const json* obj_ = nullptr;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("config: ") + e.what());
    }
    require(root.is_object(), ErrorKind::Config, "config root must be an object");
    static const std::set<std::string> sections = {"encoder", "train", "clusters", "paths",
                                                   "split",   "terms", "metrics"};
    for (const auto& [k, _] : root.items())
        require(sections.count(k) != 0, ErrorKind::Config, [&] { return "unknown config section '" + k + "'"; });

    RunConfig c;
    Section e(root, "encoder");
    e.get("num_layers", c.encoder.num_layers);
    e.get("hidden_dim", c.encoder.hidden_dim);
    e.get("heads", c.encoder.heads);
    e.get("ffn_dim", c.encoder.ffn_dim);
    e.get("max_seq_len", c.encoder.max_seq_len);
    e.get("backbone_seed", c.encoder.backbone_seed);
    e.get("adapt_all_projections", c.encoder.adapt_all_projections);
    e.get("use_positions", c.encoder.use_positions);
    e.get("hard_infer_routing", c.encoder.hard_infer_routing);
    e.finish();

    Section t(root, "train");
    t.get("learning_rate", c.train.learning_rate);
    t.get("weight_decay", c.train.weight_decay);
    t.get("batch_size", c.train.batch_size);
    t.get("grad_accum_steps", c.train.grad_accum_steps);
    t.get("seed", c.train.seed);
    t.get("epochs", c.train.epochs);
    t.get("early_stop_patience", c.train.early_stop_patience);
    t.get("min_delta", c.train.min_delta);
    t.get("gumbel_temperature", c.train.gumbel_temperature);
    t.get("alpha", c.train.alpha);
    t.get("rank", c.train.rank);
    t.get("lambda", c.train.lambda);
    std::string strategy = init::to_string(c.train.init_strategy);
    t.get("init_strategy", strategy);
    c.train.init_strategy = init::strategy_from_string(strategy);
    std::string fusion = train::to_string(c.train.fusion_mode);
    t.get("fusion_mode", fusion);
    c.train.fusion_mode = train::fusion_from_string(fusion);
    t.get("clustering_enabled", c.train.clustering_enabled);
    t.get("single_cluster", c.train.single_cluster);
    t.get("swap_modes", c.train.swap_modes);
    t.get("restore_best", c.train.restore_best);
    t.finish();

    Section cl(root, "clusters");
    cl.range("domain_range", c.domain_range);
    cl.range("slot_range", c.slot_range);
    cl.finish();

    Section p(root, "paths");
    p.get("embeddings", c.embeddings);
    p.get("corpus", c.corpus);
    p.get("clusters", c.clusters);
    p.get("out_dir", c.out_dir);
    p.finish();

    Section s(root, "split");
    s.get("heldout", c.heldout);
    s.get("train_domains", c.train_domains);
    s.get("dev_fraction", c.dev_fraction);
    s.finish();

    Section tm(root, "terms");
    tm.get("top_k", c.top_k_terms);
    tm.get("stoplist", c.stoplist);
    tm.finish();

    Section mt(root, "metrics");
    mt.get("skip_empty_gold", c.skip_empty_gold);
    mt.finish();

    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const Error& e) {
        fail(ErrorKind::Config, e.what());
    }
    return parse_config(text);
}

bool apply_env_seed(RunConfig& cfg) {
    const char* env = std::getenv("HICOLORA_SEED");
    if (!env || !*env) return false;
    std::size_t pos = 0;
    std::uint64_t seed = 0;
    try {
        seed = std::stoull(env, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    require(pos != 0 && env[pos] == '\0', ErrorKind::Config,
            [&] { return fmt::format("HICOLORA_SEED='{}' is not an integer", env); });
    spdlog::info("HICOLORA_SEED overrides seed {} -> {}", cfg.train.seed, seed);
    cfg.train.seed = seed;
    return true;
}

namespace {

std::string normalized_text(const std::string& text) {
    std::string out;
    for (const auto& t : model::tokenize(text)) out += (out.empty() ? "" : " ") + t;
    return out;
}

std::vector<std::string> prompt_keys(const std::vector<dst::DomainSchema>& schemas) {
    std::vector<std::string> keys;
    for (const auto& d : schemas)
        for (const auto& s : d.slots) keys.push_back(embed::prompt_key(d.name, s.name, s.question));
    return keys;
}

}  // namespace

embed::EmbeddingTable schema_embeddings(const std::vector<dst::DomainSchema>& schemas, std::size_t dim,
                                        std::uint64_t seed) {
    embed::EmbeddingTable table;
    table.dim = dim;
    table.provenance = embed::Provenance::Toy;
    for (const auto& d : schemas) {
        std::string text = d.name;
        for (const auto& s : d.slots) text += " " + s.name;
        table.insert(d.name, embed::toy_embed(normalized_text(text), dim, seed));
        for (const auto& s : d.slots) {
            const auto key = embed::prompt_key(d.name, s.name, s.question);
            table.insert(key, embed::toy_embed(normalized_text(key), dim, seed));
        }
    }
    return table;
}

cluster::JointClusterModel cluster_schemas(const std::vector<dst::DomainSchema>& schemas,
                                           const embed::EmbeddingTable& table,
                                           const std::optional<embed::ToyFallback>& fallback,
                                           cluster::KRange domain_range, cluster::KRange slot_range,
                                           std::uint64_t seed) {
    std::vector<std::string> domains;
    for (const auto& d : schemas) domains.push_back(d.name);
    return cluster::joint_cluster(domains, prompt_keys(schemas), table, fallback, domain_range, slot_range, seed);
}

cluster::JointClusterModel effective_clusters(const train::TrainConfig& cfg, const cluster::JointClusterModel& cm) {
    if (cfg.single_cluster) return cluster::single_cluster(cm);
    if (!cfg.clustering_enabled) return cluster::random_partition(cm, RngStream(cfg.seed).fork(6).next_u64());
    return cm;
}

dst::Splits make_splits(const RunConfig& cfg, const dst::Corpus& corpus) {
    require(!cfg.heldout.empty(), ErrorKind::Config, "a held-out domain is required");
    require(corpus.has_domain(cfg.heldout), ErrorKind::Config,
            [&] { return "held-out domain '" + cfg.heldout + "' not in corpus"; });
    for (const auto& d : cfg.train_domains)
        require(corpus.has_domain(d), ErrorKind::Config, [&] { return "training domain '" + d + "' not in corpus"; });
    dst::SplitSpec spec{cfg.train_domains, cfg.heldout, cfg.dev_fraction};
    RngStream rng = RngStream(cfg.train.seed).fork(5);
    return dst::zero_shot_split(corpus.dialogs, spec, rng);
}

model::EncoderConfig encoder_config(const RunConfig& cfg) {
    model::EncoderConfig enc = cfg.encoder;
    enc.rank = cfg.train.rank;
    enc.alpha = cfg.train.alpha;
    enc.swap_modes = cfg.train.swap_modes;
    enc.route_temperature = cfg.train.gumbel_temperature;
    return enc;
}

model::InitSpec init_spec(const RunConfig& cfg) { return {cfg.train.init_strategy, cfg.train.lambda, cfg.train.seed}; }

model::Model build_model(const RunConfig& cfg, const dst::Corpus& corpus, const dst::Splits& splits,
                         const cluster::JointClusterModel& cm) {
    cfg.validate();
    const auto ecm = effective_clusters(cfg.train, cm);

    const std::set<std::string> stop(cfg.stoplist.begin(), cfg.stoplist.end());
    const auto terms = dst::high_freq_terms(splits.train, cfg.top_k_terms, stop);
    std::vector<std::string> text;
    for (const auto& d : corpus.dialogs)
        for (const auto& t : d.turns) text.push_back(t.utterance);
    return model::build_model(encoder_config(cfg), init_spec(cfg), corpus.schemas, text, terms, ecm.domains.centroids,
                              ecm.slots.centroids);
}

std::string init_report_json(const model::Model& m, const RunConfig& cfg) {
    auto mat = [](const Matrix& x) {
        json rows = json::array();
        for (std::size_t r = 0; r < x.rows(); ++r)
            rows.push_back(std::vector<double>(x.row_span(r).begin(), x.row_span(r).end()));
        return rows;
    };
    json layers = json::array();
    for (const auto& [b, proj] : m.adapted_layers()) {
        const auto p = static_cast<std::size_t>(proj);
        const auto& w0 = m.blocks[b].w[p];
        const auto& layer = *m.blocks[b].adapted[p];
        const Matrix recon = layer.base + matmul(layer.b_ur, layer.a_ur);
        json j = {{"block", b},
                  {"proj", model::kProjNames[p]},
                  {"strategy", init::to_string(cfg.train.init_strategy)},
                  {"mode", adapter::to_string(layer.mode)},
                  {"m", layer.m()},
                  {"n", layer.n()},
                  {"beta", layer.beta()},
                  {"reconstruction_error", frobenius_norm(recon - w0) / frobenius_norm(w0)}};
        if (cfg.train.init_strategy == init::Strategy::SemSvd) {
            const auto r = init::semsvd_init(w0, layer.rank(), cfg.train.lambda, m.slot_centroids);
            j["sigma_r"] = r.factors.sigma_r;
            j["relevance"] = r.factors.relevance;
            j["s_e"] = r.factors.s_e;
            j["u_r"] = mat(r.factors.u_r);
            j["v_r"] = mat(r.factors.v_r);
        }
        layers.push_back(std::move(j));
    }
    return json{{"lambda", cfg.train.lambda}, {"rank", cfg.train.rank}, {"layers", std::move(layers)}}.dump(1);
}

RunResult run(const RunConfig& cfg, const dst::Corpus& corpus, const cluster::JointClusterModel& cm) {
    const auto splits = make_splits(cfg, corpus);
    RunResult r{build_model(cfg, corpus, splits, cm), {}, {}};
    r.history = train::train(r.model, corpus, splits, cfg.train);
    r.test = train::evaluate(r.model, corpus, splits.test, cfg.skip_empty_gold);
    return r;
}

RunConfig apply_variant(RunConfig cfg, const std::string& variant) {
    auto& t = cfg.train;
    if (variant == "full") {
    } else if (variant == "swap_hier") {
        t.swap_modes = true;
    } else if (variant == "static_fusion") {
        t.fusion_mode = train::FusionMode::StaticHalf;
    } else if (variant == "no_cluster") {
        t.clustering_enabled = false;
    } else if (variant == "kaiming") {
        t.init_strategy = init::Strategy::Kaiming;
    } else if (variant == "pissa") {
        t.init_strategy = init::Strategy::Pissa;
    } else if (variant == "milora") {
        t.init_strategy = init::Strategy::Milora;
    } else if (variant == "single_lora") {
        t.single_cluster = true;
        t.init_strategy = init::Strategy::Kaiming;
        t.fusion_mode = train::FusionMode::StaticHalf;
    } else {
        fail(ErrorKind::Config, "unknown ablation variant '" + variant + "'");
    }
    return cfg;
}

std::vector<AblationRow> run_ablation_grid(const RunConfig& base, const dst::Corpus& corpus,
                                           const cluster::JointClusterModel& cm,
                                           const std::vector<std::string>& variants) {
    require(!variants.empty(), ErrorKind::Config, "no ablation variants given");
    std::vector<RunConfig> cfgs;
    for (const auto& v : variants) cfgs.push_back(apply_variant(base, v));
    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < variants.size(); ++i) {
        AblationRow row;
        row.variant = variants[i];
        row.seed = cfgs[i].train.seed;
        try {
            const auto r = run(cfgs[i], corpus, cm);
            row.jga = r.test.jga;
            row.aga = r.test.aga;
            row.epochs = r.history.epochs.size();
        } catch (const Error& e) {
            spdlog::error("variant {} failed: {}", variants[i], e.what());
            row.jga = row.aga = std::nan("");
            row.error = e.what();
        }
        spdlog::info("variant {}: jga {:.4f} aga {:.4f}", row.variant, row.jga, row.aga);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "variant,jga,aga,epochs,seed\n";
    for (const auto& r : rows)
        out += fmt::format("{},{:.6f},{:.6f},{},{}\n", r.variant, r.jga, r.aga, r.epochs, r.seed);
    return out;
}

}  // namespace hicolora::pipeline
