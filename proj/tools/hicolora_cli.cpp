// hicolora command-line tool. Links only the C API.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hicolora/hicolora.h"

namespace {

using nlohmann::json;

// Exit codes: 0 success, 1 numerical failure, 2 configuration or input error.
struct Failure {
    int code;
};

int exit_code(hcl_status s) { return s == HCL_ERR_NUMERICAL ? 1 : 2; }

void check(hcl_status s) {
    if (s == HCL_OK) return;
    std::fprintf(stderr, "error (%s): %s\n", hcl_status_name(s), hcl_last_error());
    throw Failure{exit_code(s)};
}

std::string take(char* s) {
    std::string out = s != nullptr ? s : "";
    hcl_string_free(s);
    return out;
}

template <typename T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
};
using Config = Handle<hcl_config, hcl_config_free>;
using Corpus = Handle<hcl_corpus, hcl_corpus_free>;
using Clusters = Handle<hcl_clusters, hcl_clusters_free>;
using Model = Handle<hcl_model, hcl_model_free>;

void write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        f << text;
        if (!f) {
            std::fprintf(stderr, "error (io): cannot write %s\n", path.c_str());
            throw Failure{2};
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::fprintf(stderr, "error (io): cannot rename onto %s\n", path.c_str());
        throw Failure{2};
    }
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void load_config(Config& cfg, const std::string& path) {
    if (path.empty())
        check(hcl_config_default(&cfg.p));
    else
        check(hcl_config_load(path.c_str(), &cfg.p));
}

// Rewrites one top-level section key of the config through its JSON form.
void override_config(Config& cfg, const std::string& section, const std::string& key, const json& value) {
    json j = json::parse(take([&] {
        char* s = nullptr;
        check(hcl_config_to_json(cfg.p, &s));
        return s;
    }()));
    j[section][key] = value;
    Config next;
    check(hcl_config_parse(j.dump().c_str(), &next.p));
    std::swap(cfg.p, next.p);
}

void print_clusters(const Clusters& c) {
    const json j = json::parse(take([&] {
        char* s = nullptr;
        check(hcl_clusters_to_json(c.p, &s));
        return s;
    }()));
    std::printf("M = %d, N = %d\n", j.at("m").get<int>(), j.at("n").get<int>());
    for (const char* family : {"domain", "slot"}) {
        std::printf("%s silhouette:", family);
        for (const auto& [k, v] : j.at("silhouette_by_k").at(family).items())
            std::printf(" k=%s %.4f", k.c_str(), v.get<double>());
        std::printf("\n");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HiCoLoRA dialogue state tracking toolkit"};
    app.require_subcommand(1);
    int log_level = 2;
    app.add_option("--log-level", log_level, "0 trace .. 6 off")->check(CLI::Range(0, 6));

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dialogue corpus");
    std::string gen_schemas, gen_out;
    std::uint64_t gen_seed = 1;
    std::size_t gen_dialogs = 30, gen_turns = 3;
    gen->add_option("--schemas", gen_schemas, "Schema JSON (default: built-in train/taxi/hotel)");
    gen->add_option("--out", gen_out, "Corpus JSON to write")->required();
    gen->add_option("--seed", gen_seed);
    gen->add_option("--dialogs", gen_dialogs, "Dialogs per domain");
    gen->add_option("--turns", gen_turns, "Turns per dialog");

    // toy-embeddings
    auto* toy = app.add_subcommand("toy-embeddings", "Write bag-of-words embeddings for schema keys");
    std::string toy_schemas, toy_out;
    std::size_t toy_dim = 32;
    std::uint64_t toy_seed = 7;
    toy->add_option("--schemas", toy_schemas);
    toy->add_option("--dim", toy_dim);
    toy->add_option("--seed", toy_seed);
    toy->add_option("--out", toy_out)->required();

    // cluster
    auto* clu = app.add_subcommand("cluster", "Spectral clustering of domains and slot prompts");
    std::string clu_emb, clu_out, clu_corpus, clu_config;
    std::vector<std::string> clu_domains, clu_prompts;
    std::size_t clu_kmin = 2, clu_kmax = 8, clu_toy_dim = 0;
    std::uint64_t clu_seed = 3407;
    clu->add_option("--embeddings", clu_emb, "Embeddings JSON")->required();
    clu->add_option("--domains", clu_domains, "Domain keys");
    clu->add_option("--prompts", clu_prompts, "Prompt keys (\"domain-slot: question\")");
    clu->add_option("--corpus", clu_corpus, "Take domains and prompts from this corpus's schemas");
    clu->add_option("--config", clu_config, "Cluster ranges for --corpus");
    auto* clu_kmin_opt = clu->add_option("--kmin", clu_kmin, "With --corpus, overrides both config ranges");
    auto* clu_kmax_opt = clu->add_option("--kmax", clu_kmax);
    clu->add_option("--seed", clu_seed);
    clu->add_option("--toy-dim", clu_toy_dim, "Embed missing keys with the toy embedder of this dimension");
    clu->add_option("--out", clu_out, "Manifest JSON to write")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train on all but the held-out domain");
    std::string tr_config, tr_corpus, tr_clusters, tr_heldout, tr_out;
    tr->add_option("--config", tr_config, "Run config JSON (default: built-in defaults)");
    tr->add_option("--corpus", tr_corpus)->required();
    tr->add_option("--clusters", tr_clusters)->required();
    tr->add_option("--heldout", tr_heldout, "Overrides split.heldout");
    tr->add_option("--out", tr_out, "Output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Report JGA and AGA of a checkpoint");
    std::string ev_ckpt, ev_corpus, ev_clusters, ev_split = "test";
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--corpus", ev_corpus)->required();
    ev->add_option("--clusters", ev_clusters, "Refuse a checkpoint trained with other clusters");
    ev->add_option("--split", ev_split)->check(CLI::IsMember({"train", "dev", "test", "all"}));

    // merge
    auto* mg = app.add_subcommand("merge", "Write a merged-inference checkpoint");
    std::string mg_ckpt, mg_out;
    std::size_t mg_checks = 100;
    std::uint64_t mg_seed = 1;
    double mg_tol = 1e-5;
    mg->add_option("--checkpoint", mg_ckpt)->required();
    mg->add_option("--out", mg_out)->required();
    mg->add_option("--checks", mg_checks, "Seeded equivalence queries");
    mg->add_option("--check-seed", mg_seed);
    mg->add_option("--tolerance", mg_tol);

    // inspect-init
    auto* ins = app.add_subcommand("inspect-init", "Dump per-layer initialization factors");
    std::string ins_config, ins_corpus, ins_clusters, ins_out;
    ins->add_option("--config", ins_config);
    ins->add_option("--corpus", ins_corpus)->required();
    ins->add_option("--clusters", ins_clusters)->required();
    ins->add_option("--out", ins_out, "Report JSON (default: stdout)");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Run the ablation grid");
    std::string ab_config, ab_corpus, ab_clusters, ab_variants = "full,swap_hier,static_fusion,no_cluster,kaiming",
                                                   ab_seeds, ab_out;
    ab->add_option("--config", ab_config);
    ab->add_option("--corpus", ab_corpus)->required();
    ab->add_option("--clusters", ab_clusters)->required();
    ab->add_option("--variants", ab_variants, "Comma-separated variants");
    ab->add_option("--seeds", ab_seeds, "Comma-separated seeds (default: config seed)");
    ab->add_option("--out", ab_out, "CSV path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        check(hcl_set_log_level(log_level));

        if (*gen) {
            Corpus c;
            check(hcl_corpus_generate(opt(gen_schemas), gen_seed, gen_dialogs, gen_turns, &c.p));
            check(hcl_corpus_save(c.p, gen_out.c_str()));
            std::size_t n = 0;
            check(hcl_corpus_dialog_count(c.p, &n));
            std::printf("wrote %zu dialogs to %s\n", n, gen_out.c_str());
        } else if (*toy) {
            check(hcl_toy_embeddings(opt(toy_schemas), toy_dim, toy_seed, toy_out.c_str()));
            std::printf("wrote %s\n", toy_out.c_str());
        } else if (*clu) {
            Clusters c;
            if (!clu_corpus.empty()) {
                Corpus corpus;
                Config cfg;
                check(hcl_corpus_load(clu_corpus.c_str(), &corpus.p));
                load_config(cfg, clu_config);
                if (clu_kmin_opt->count() + clu_kmax_opt->count() > 0) {
                    const json range = {clu_kmin, clu_kmax};
                    override_config(cfg, "clusters", "domain_range", range);
                    override_config(cfg, "clusters", "slot_range", range);
                }
                check(hcl_clusters_for_corpus(corpus.p, clu_emb.c_str(), cfg.p, clu_seed, &c.p));
            } else {
                std::vector<const char*> d, p;
                for (const auto& s : clu_domains) d.push_back(s.c_str());
                for (const auto& s : clu_prompts) p.push_back(s.c_str());
                check(hcl_clusters_compute(clu_emb.c_str(), d.data(), d.size(), p.data(), p.size(), clu_kmin, clu_kmax,
                                           clu_seed, clu_toy_dim, clu_seed, &c.p));
            }
            check(hcl_clusters_save(c.p, clu_out.c_str()));
            print_clusters(c);
        } else if (*tr) {
            Config cfg;
            Corpus corpus;
            Clusters cl;
            load_config(cfg, tr_config);
            if (!tr_heldout.empty()) override_config(cfg, "split", "heldout", tr_heldout);
            check(hcl_config_apply_env_seed(cfg.p, nullptr));
            check(hcl_corpus_load(tr_corpus.c_str(), &corpus.p));
            check(hcl_clusters_load(tr_clusters.c_str(), &cl.p));
            char* summary = nullptr;
            check(hcl_train(cfg.p, corpus.p, cl.p, tr_out.c_str(), &summary));
            const json s = json::parse(take(summary));
            const auto& dev = s.at("dev");
            auto num = [](const json& v) { return v.is_null() ? std::string("n/a") : std::to_string(v.get<double>()); };
            std::printf("epochs %d, dev loss %s, dev jga %s, dev aga %s\n", s.at("epochs").get<int>(),
                        num(dev.at("loss")).c_str(), num(dev.at("jga")).c_str(), num(dev.at("aga")).c_str());
            std::printf("test jga %.6f aga %.6f\n", s.at("test").at("jga").get<double>(),
                        s.at("test").at("aga").get<double>());
        } else if (*ev) {
            Corpus corpus;
            Clusters cl;
            Model m;
            if (!ev_clusters.empty()) check(hcl_clusters_load(ev_clusters.c_str(), &cl.p));
            check(hcl_model_load(ev_ckpt.c_str(), cl.p, &m.p));
            check(hcl_corpus_load(ev_corpus.c_str(), &corpus.p));
            char* out = nullptr;
            check(hcl_eval(m.p, corpus.p, ev_split.c_str(), &out));
            const json r = json::parse(take(out));
            std::printf("jga %.6f aga %.6f turns %d\n", r.at("jga").get<double>(), r.at("aga").get<double>(),
                        r.at("turns").get<int>());
        } else if (*mg) {
            Model m;
            check(hcl_model_load(mg_ckpt.c_str(), nullptr, &m.p));
            double gap = 0.0;
            const hcl_status s = hcl_merge(m.p, mg_out.c_str(), mg_checks, mg_seed, mg_tol, &gap);
            std::printf("max logit gap %.3e over %zu queries\n", gap, mg_checks);
            check(s);
            std::printf("wrote %s\n", mg_out.c_str());
        } else if (*ins) {
            Config cfg;
            Corpus corpus;
            Clusters cl;
            load_config(cfg, ins_config);
            check(hcl_config_apply_env_seed(cfg.p, nullptr));
            check(hcl_corpus_load(ins_corpus.c_str(), &corpus.p));
            check(hcl_clusters_load(ins_clusters.c_str(), &cl.p));
            char* out = nullptr;
            check(hcl_inspect_init(cfg.p, corpus.p, cl.p, &out));
            const std::string report = take(out);
            if (ins_out.empty())
                std::printf("%s\n", report.c_str());
            else
                write_text(ins_out, report + "\n");
        } else if (*ab) {
            Config cfg;
            Corpus corpus;
            Clusters cl;
            load_config(cfg, ab_config);
            check(hcl_config_apply_env_seed(cfg.p, nullptr));
            check(hcl_corpus_load(ab_corpus.c_str(), &corpus.p));
            check(hcl_clusters_load(ab_clusters.c_str(), &cl.p));
            char* out = nullptr;
            check(hcl_ablate(cfg.p, corpus.p, cl.p, ab_variants.c_str(), opt(ab_seeds), &out));
            const std::string csv = take(out);
            if (ab_out.empty())
                std::printf("%s", csv.c_str());
            else
                write_text(ab_out, csv);
        }
    } catch (const Failure& f) {
        return f.code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
