// Acceptance gate: one PASS/FAIL line per criterion, details indented below.
// Usage: hicolora_acceptance <hicolora CLI binary> <scratch dir> [criterion ...]
#include <spdlog/spdlog.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hicolora/checkpoint.hpp"
#include "hicolora/error.hpp"
#include "hicolora/pipeline.hpp"

using namespace hicolora;
namespace fs = std::filesystem;

namespace {

std::string g_cli;
fs::path g_work;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
        pass = pass && ok;
    }
    void note(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmtd(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Matrix centroids(std::size_t k, std::size_t d, RngStream& rng) {
    Matrix c = random_normal(k, d, rng);
    for (std::size_t i = 0; i < k; ++i) {
        const auto n = normalized(c.row_span(i));
        std::copy(n.begin(), n.end(), c.row_span(i).begin());
    }
    return c;
}

// --------------------------------------------------------------------------

Outcome residual_exactness() {
    Outcome o;
    const auto t0 = Clock::now();
    RngStream rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t rows = 8 + rng.below(57), cols = 8 + rng.below(41);
        const std::size_t r = 1 + rng.below(std::min<std::size_t>(16, std::min(rows, cols)));
        const Matrix w = random_normal(rows, cols, rng);
        const Matrix c = centroids(3, cols, rng);
        std::vector<init::InitPair> pairs;
        for (double lambda : {0.0, 0.5, 3.0}) pairs.push_back(init::semsvd_init(w, r, lambda, c).pair);
        pairs.push_back(init::pissa_init(w, r));
        pairs.push_back(init::milora_init(w, r));
        for (const auto& p : pairs) worst = std::max(worst, relative_error(p.base + matmul(p.b, p.a), w));
    }
    const double secs = seconds_since(t0);
    o.check(worst <= 1e-9, "max relative residual " + fmtd("%.2e", worst) + " <= 1e-9 (20 matrices x 5 inits)");
    o.check(secs < 5.0, "runtime " + fmtd("%.2f", secs) + " s < 5 s");
    return o;
}

Outcome semsvd_reductions() {
    Outcome o;
    RngStream rng(7);
    double gap0 = 0.0, gap_orth = 0.0;
    for (int t = 0; t < 10; ++t) {
        const Matrix w = random_normal(12, 9, rng);
        const auto p = init::pissa_init(w, 4);
        const auto s = init::semsvd_init(w, 4, 0.0, centroids(3, 9, rng));
        gap0 = std::max({gap0, max_abs_diff(s.pair.a, p.a), max_abs_diff(s.pair.b, p.b),
                         max_abs_diff(s.pair.base, p.base)});
        // Centroids spanned by right singular vectors outside the top 4.
        const auto sv = svd(w);
        Matrix c(2, 9);
        for (std::size_t i = 0; i < 9; ++i) {
            c(0, i) = sv.v(i, 5);
            c(1, i) = (sv.v(i, 6) + sv.v(i, 8)) / std::sqrt(2.0);
        }
        const auto so = init::semsvd_init(w, 4, 0.5, c);
        gap_orth = std::max({gap_orth, max_abs_diff(so.pair.a, p.a), max_abs_diff(so.pair.b, p.b),
                             max_abs_diff(so.pair.base, p.base)});
    }
    o.check(gap0 <= 1e-12, "lambda = 0 equals PiSSA elementwise (max diff " + fmtd("%.1e", gap0) + ")");
    o.check(gap_orth <= 1e-12, "orthogonal centroids reduce to PiSSA (max diff " + fmtd("%.1e", gap_orth) + ")");

    Matrix e1(1, 3);
    e1(0, 0) = 1.0;
    const auto id = init::semsvd_init(Matrix::identity(3), 3, 0.5, e1);
    const Matrix ba = matmul(id.pair.b, id.pair.a);
    // B and A each carry sqrt(s_e), so sqrt(1.5)^2 may land one ulp off 1.5.
    const double worst = std::max(max_abs_diff(ba, Matrix{{1.5, 0, 0}, {0, 1, 0}, {0, 0, 1}}),
                                  max_abs_diff(id.pair.base, Matrix{{-0.5, 0, 0}, {0, 0, 0}, {0, 0, 0}}));
    o.check(worst <= 4 * std::numeric_limits<double>::epsilon(),
            "identity example gives BA = diag(1.5, 1, 1) and residual diag(-0.5, 0, 0) (max diff " +
                fmtd("%.1e", worst) + ", <= 4 ulp)");
    return o;
}

Outcome initial_forward() {
    Outcome o;
    const auto schemas = dst::builtin_schemas();
    RngStream rng(3);
    const dst::Corpus corpus{schemas, dst::generate_corpus(schemas, 4, 3, rng)};
    pipeline::RunConfig cfg;
    cfg.heldout = "taxi";
    cfg.encoder.token_aligned_x_sa = true;
    const auto table = pipeline::schema_embeddings(schemas, cfg.encoder.hidden_dim, cfg.encoder.backbone_seed);
    const auto cm = pipeline::cluster_schemas(schemas, table, std::nullopt, cfg.domain_range, cfg.slot_range, 1);
    const auto splits = pipeline::make_splits(cfg, corpus);
    for (auto s : {init::Strategy::SemSvd, init::Strategy::Pissa, init::Strategy::Milora, init::Strategy::Kaiming}) {
        cfg.train.init_strategy = s;
        const auto m = pipeline::build_model(cfg, corpus, splits, cm);
        double worst = 0.0;
        for (std::size_t d = 0; d < 3; ++d)
            for (std::size_t p = 0; p < m.prompts.size(); p += 3) {
                const auto ids = model::input_ids(m, splits.train[d], 2, p);
                ag::Tape tape;
                const auto bound = model::bind_params(tape, m);
                const Matrix a = tape.value(model::encode(tape, m, bound, ids, p, model::infer_routing(m, p)));
                const Matrix b = tape.value(model::encode_plain(tape, m, ids));
                worst = std::max(worst, max_abs_diff(a, b));
            }
        const bool kaiming = s == init::Strategy::Kaiming;
        o.check(kaiming ? worst == 0.0 : worst <= 1e-9,
                init::to_string(s) + ": max |adapted - base| = " + fmtd("%.2e", worst) +
                    (kaiming ? " (exact)" : " <= 1e-9"));
    }
    return o;
}

int run_cli(const std::string& args, const std::string& log = "cli.log") {
    const std::string cmd = "'" + g_cli + "' --log-level 4 " + args + " >>'" + (g_work / log).string() + "' 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome merge_equivalence() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto schemas = dst::builtin_schemas();
    RngStream rng(4);
    const dst::Corpus corpus{schemas, dst::generate_corpus(schemas, 6, 3, rng)};
    pipeline::RunConfig cfg;
    cfg.heldout = "taxi";
    const auto table = pipeline::schema_embeddings(schemas, cfg.encoder.hidden_dim, cfg.encoder.backbone_seed);
    const auto cm = pipeline::cluster_schemas(schemas, table, std::nullopt, cfg.domain_range, cfg.slot_range, 1);
    const auto splits = pipeline::make_splits(cfg, corpus);
    auto m = pipeline::build_model(cfg, corpus, splits, cm);
    auto flat = model::flatten_params(m);
    RngStream perturb(5);
    for (auto& p : flat) p += random_normal(p.rows(), p.cols(), perturb, 0.1);
    model::assign_params(m, flat);

    const auto mm = model::merge_model(m);
    const double gap = train::merge_gap_random(m, mm, 100, 1);
    o.check(gap <= 1e-5, "max |merged - unmerged| logit over 100 seeded inputs = " + fmtd("%.2e", gap) + " <= 1e-5");
    const double rounded_gap = train::merge_gap_random(ckpt::round_f32(m), ckpt::round_f32(mm), 100, 1);
    o.note("after float32 rounding of both models: " + fmtd("%.2e", rounded_gap));

    const auto dir = g_work / "merge_src";
    fs::remove_all(dir);
    ckpt::save_model(dir.string(), m, ckpt::skeleton_of(m, cfg, schemas, ckpt::cluster_hash(cm)));
    const auto ok_dir = g_work / "merge_ok", bad_dir = g_work / "merge_refused";
    fs::remove_all(ok_dir);
    fs::remove_all(bad_dir);
    const int rc_ok = run_cli("merge --checkpoint '" + dir.string() + "' --out '" + ok_dir.string() + "'");
    o.check(rc_ok == 0 && fs::exists(ok_dir / ckpt::kManifestFile), "merge CLI writes within tolerance");
    const int rc_bad = run_cli("merge --checkpoint '" + dir.string() + "' --out '" + bad_dir.string() +
                               "' --tolerance 1e-300");
    o.check(rc_bad == 1 && !fs::exists(bad_dir),
            "merge CLI refuses (exit 1) and writes nothing when the gap exceeds tolerance");
    const double secs = seconds_since(t0);
    o.check(secs < 10.0, "runtime " + fmtd("%.2f", secs) + " s < 10 s");
    return o;
}

Outcome low_high_identity() {
    Outcome o;
    RngStream rng(50);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t d_in = 4 + rng.below(12), d_out = 4 + rng.below(12), r = 1 + rng.below(4);
        const std::size_t m = 1 + rng.below(4), n = 1 + rng.below(5);
        adapter::HiCoLayerParams l;
        l.base = random_normal(d_out, d_in, rng);
        l.a_ur = random_normal(r, d_in, rng);
        l.b_ur = random_normal(d_out, r, rng);
        const Matrix a = random_normal(r, d_in, rng), b = random_normal(d_out, r, rng);
        l.a_sa.assign(m, a);
        l.b_sa.assign(n, b);
        const Matrix x = random_normal(1, d_in, rng);
        std::vector<double> dl(m), sl(n);
        for (auto& v : dl) v = rng.normal();
        for (auto& v : sl) v = rng.normal();
        adapter::RoutingDecision routing;
        routing.domain_weights = softmax(dl);
        routing.slot_weights = softmax(sl);
        l.mode = adapter::LayerMode::HeuristicGrouping;
        const Matrix low = adapter::semadapt_forward_low(l, x, routing);
        l.mode = adapter::LayerMode::FullCollaboration;
        const Matrix high = adapter::semadapt_forward_high(l, x);
        worst = std::max(worst, max_abs_diff(low, high));
    }
    o.check(worst <= 1e-12, "max |heuristic - full| over 50 layers = " + fmtd("%.2e", worst) + " <= 1e-12");
    return o;
}

Outcome gradient_fidelity() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto schemas = dst::builtin_schemas();
    RngStream rng(1);
    const dst::Corpus corpus{schemas, dst::generate_corpus(schemas, 3, 2, rng)};
    pipeline::RunConfig cfg;
    cfg.heldout = "taxi";
    cfg.encoder.num_layers = 2;
    cfg.encoder.hidden_dim = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn_dim = 16;
    cfg.train.rank = 2;
    const auto table = pipeline::schema_embeddings(schemas, 8, cfg.encoder.backbone_seed);
    const auto cm = pipeline::cluster_schemas(schemas, table, std::nullopt, cfg.domain_range, cfg.slot_range, 1);
    const auto splits = pipeline::make_splits(cfg, corpus);
    auto m = pipeline::build_model(cfg, corpus, splits, cm);
    auto flat = model::flatten_params(m);
    RngStream perturb(9);
    for (auto& p : flat) p += random_normal(p.rows(), p.cols(), perturb, 0.3);
    model::assign_params(m, flat);

    const auto examples = train::make_examples(m, corpus, splits.train);
    const auto& ex = examples[0];
    RngStream route_rng(5);
    const auto routing = model::train_routing(m, ex.prompt, route_rng);  // sampled once, then frozen
    const auto ids = model::input_ids(m, splits.train[ex.dialog], ex.turn, ex.prompt);
    std::vector<std::string> names;
    for (const auto& p : model::param_layout(m)) names.push_back(p.name);
    const auto rep = ag::grad_check(
        [&](ag::Tape& t, std::span<const ag::Var> vars) {
            const auto b = model::bind(t, m, vars);
            return t.cross_entropy(model::logits(t, m, b, ids, ex.prompt, routing), ex.target);
        },
        flat, 1e-5, names);
    std::size_t betas = 0;
    for (std::size_t i = 0; i < names.size(); ++i) betas += names[i].find("beta_logit") != std::string::npos;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < rep.max_rel_error.size(); ++i)
        if (rep.max_rel_error[i] > rep.max_rel_error[worst]) worst = i;
    o.check(rep.max_error <= 1e-4, "max relative error " + fmtd("%.2e", rep.max_error) + " <= 1e-4 over " +
                                       std::to_string(names.size()) + " groups (" + std::to_string(betas) +
                                       " beta_logit), worst " + names[worst]);
    const double secs = seconds_since(t0);
    o.check(secs < 60.0, "runtime " + fmtd("%.2f", secs) + " s < 60 s");
    return o;
}

Outcome routing_statistics() {
    Outcome o;
    const std::vector<double> logits = {0.4, -0.3, 1.1, 0.0};
    const auto p = softmax(logits);
    RngStream rng(77);
    std::vector<double> freq(logits.size(), 0.0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) freq[argmax(gumbel_softmax(logits, 1.0, rng, true))] += 1.0 / draws;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(freq[i] - p[i]));
    o.check(worst <= 0.02, "10,000 hard draws: max |frequency - softmax| = " + fmtd("%.4f", worst) + " <= 0.02");

    const std::vector<double> zero(logits.size(), 0.0);
    RngStream unused(1);
    const auto hard = gumbel_softmax(logits, 1e-3, unused, true, zero);
    const auto soft = gumbel_softmax(logits, 1e-3, unused, false, zero);
    o.check(argmax(hard) == argmax(logits) && hard[argmax(logits)] == 1.0 && soft[argmax(logits)] > 1.0 - 1e-12,
            "temperature 1e-3 with zeroed noise yields the argmax");

    // Same property through the router itself.
    const Matrix dc{{1, 0, 0}, {0, 1, 0}};
    const Matrix sc{{0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
    const std::vector<double> summary = {0.2, 0.9, 0.1};
    adapter::RouteNoise noise{{0, 0}, {0, 0, 0}};
    const auto r = adapter::route(summary, dc, sc, adapter::Phase::Train, 1e-3, unused, false, &noise);
    o.check(r.domain_weights == std::vector<double>{0, 1} && r.slot_weights == std::vector<double>{0, 1, 0},
            "router at temperature 1e-3 with zeroed noise picks the nearest centroids");
    return o;
}

double silhouette_oracle(const std::vector<double>& x, const std::vector<int>& labels) {
    long double total = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        long double in = 0, out = 0;
        int nin = 0, nout = 0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (j == i) continue;
            const long double d = std::abs(static_cast<long double>(x[i]) - x[j]);
            if (labels[j] == labels[i]) in += d, ++nin;
            else out += d, ++nout;
        }
        const long double a = in / nin, b = out / nout;
        total += (b - a) / std::max(a, b);
    }
    return static_cast<double>(total / x.size());
}

Outcome spectral_oracles() {
    Outcome o;
    const auto t0 = Clock::now();
    // Exactly antipodal bundles: the shifted-cosine affinity between them is zero.
    Matrix p(8, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        p(i, 0) = 1.0;
        p(4 + i, 0) = -1.0;
    }
    const Matrix w = cluster::shifted_cosine_affinity(p);
    double cross = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 4; j < 8; ++j) cross = std::max(cross, w(i, j));
    RngStream rng(1);
    const auto labels = cluster::spectral_cluster(p, 2, rng);
    bool exact = cross == 0.0;
    for (std::size_t i = 0; i < 8; ++i) exact = exact && (labels[i] == labels[0]) == (i < 4);
    o.check(exact, "two affinity-disconnected components recovered exactly at k = 2");

    Matrix blobs(15, 3);
    RngStream jitter(21);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 5; ++i) {
            std::vector<double> v(3, 0.0);
            v[c] = 1.0;
            for (auto& x : v) x += 0.05 * jitter.normal();
            const auto u = normalized(v);
            std::copy(u.begin(), u.end(), blobs.row_span(c * 5 + i).begin());
        }
    const auto sel = cluster::select_k(blobs, 2, 5, RngStream(1));
    o.check(sel.k_best == 3, "3-blob construction selects k = " + std::to_string(sel.k_best));

    const std::vector<double> xs = {0.0, 0.1, 10.0, 10.1};
    const std::vector<int> fl = {0, 0, 1, 1};
    Matrix fx(4, 1);
    for (std::size_t i = 0; i < 4; ++i) fx(i, 0) = xs[i];
    const double s = cluster::silhouette(fx, fl);
    const double oracle = silhouette_oracle(xs, fl);
    o.check(std::abs(s - oracle) <= 1e-12,
            "4-point silhouette " + fmtd("%.8f", s) + " matches the brute-force oracle " + fmtd("%.8f", oracle));
    o.check(std::abs(s - 0.9880) <= 1e-3, "4-point silhouette " + fmtd("%.5f", s) + " within 1e-3 of 0.9880");
    const double secs = seconds_since(t0);
    o.check(secs < 5.0, "runtime " + fmtd("%.3f", secs) + " s < 5 s");
    return o;
}

Outcome metric_fixtures() {
    Outcome o;
    using dst::State;
    using dst::Triple;
    const Triple a{"hotel", "area", "north"}, b{"hotel", "stars", "4"};
    const Triple w1{"hotel", "area", "south"}, w2{"hotel", "pricerange", "cheap"}, w3{"hotel", "parking", "yes"},
        w4{"hotel", "internet", "yes"};
    struct Case {
        const char* name;
        State pred;
        State gold;
        double jga;
        double aga;
    };
    const std::vector<Case> cases = {
        {"exact match", {a, b}, {a, b}, 1.0, 1.0},
        {"empty prediction", {}, {a, b}, 0.0, 0.0},
        {"one of two", {a}, {a, b}, 0.0, 0.5},
        {"one right, one wrong value", {a, w2}, {a, b}, 0.0, 0.0},
        {"four wrong slot names", {w1, w2, w3, w4}, {a, b}, 0.0, -2.0},
    };
    bool all = true;
    for (const auto& c : cases) {
        const double j = dst::jga({c.pred}, {c.gold});
        const double g = dst::aga({c.pred}, {c.gold});
        const bool ok = j == c.jga && g == c.aga;
        if (!ok) o.note(std::string(c.name) + ": jga " + fmtd("%g", j) + " aga " + fmtd("%g", g));
        all = all && ok;
    }
    o.check(all, "hand-derived JGA/AGA fixtures reproduce exactly (including AGA = 0.0 and -2.0)");

    RngStream rng(1000);
    const std::vector<std::string> slots = {"area", "stars", "pricerange", "parking"};
    const std::vector<std::string> values = {"a", "b", "c"};
    auto random_state = [&]() {
        State s;
        const std::size_t k = 1 + rng.below(slots.size());
        for (std::size_t i = 0; i < k; ++i)
            s.emplace("hotel", slots[rng.below(slots.size())], values[rng.below(values.size())]);
        return s;
    };
    std::size_t exact_sets = 0;
    bool implication = true;
    for (int t = 0; t < 1000; ++t) {
        std::vector<State> golds, preds;
        const std::size_t turns = 1 + rng.below(4);
        const bool copy = rng.uniform() < 0.5;
        for (std::size_t i = 0; i < turns; ++i) {
            golds.push_back(random_state());
            preds.push_back(copy ? golds.back() : random_state());
        }
        if (dst::jga(preds, golds) == 1.0) {
            ++exact_sets;
            implication = implication && dst::aga(preds, golds) == 1.0;
        }
    }
    o.check(implication && exact_sets > 0,
            "jga = 1 implies aga = 1 on 1,000 fuzzed sets (" + std::to_string(exact_sets) + " with jga = 1)");
    return o;
}

// --------------------------------------------------------------------------
// Zero-shot transfer and ablation share one grid of runs.

struct Grid {
    std::map<std::string, std::vector<double>> jga;  // variant -> per seed
    double seconds = 0.0;
    std::map<std::string, double> variant_seconds;
};

constexpr int kSeeds = 5;

pipeline::RunConfig transfer_config(int s) {
    pipeline::RunConfig cfg;
    cfg.heldout = "taxi";
    cfg.encoder.num_layers = 2;
    cfg.train.seed = 100 + static_cast<std::uint64_t>(s);
    cfg.train.epochs = 40;
    cfg.train.learning_rate = 5e-3;
    cfg.train.grad_accum_steps = 1;
    cfg.train.gumbel_temperature = 0.05;
    cfg.train.early_stop_patience = 100;
    return cfg;
}

Grid run_grid(const std::vector<std::string>& variants) {
    Grid g;
    const auto schemas = dst::builtin_schemas();
    const pipeline::RunConfig base;
    const auto table = pipeline::schema_embeddings(schemas, base.encoder.hidden_dim, base.encoder.backbone_seed);
    const auto cm = pipeline::cluster_schemas(schemas, table, std::nullopt, base.domain_range, base.slot_range, 1);
    for (int s = 0; s < kSeeds; ++s) {
        RngStream rng(100 + static_cast<std::uint64_t>(s));
        const dst::Corpus corpus{schemas, dst::generate_corpus(schemas, 60, 3, rng)};
        for (const auto& v : variants) {
            const auto t0 = Clock::now();
            const auto r = pipeline::run(pipeline::apply_variant(transfer_config(s), v), corpus, cm);
            const double secs = seconds_since(t0);
            g.jga[v].push_back(r.test.jga);
            g.variant_seconds[v] += secs;
            g.seconds += secs;
            std::fprintf(stderr, "  [grid] seed %d %-14s held-out jga %.4f (%.1f s)\n", s, v.c_str(), r.test.jga,
                         secs);
        }
    }
    return g;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::string per_seed(const std::vector<double>& v) {
    std::string out;
    for (double x : v) out += (out.empty() ? "" : " ") + fmtd("%.3f", x);
    return out;
}

Grid& grid() {
    static Grid g = run_grid({"full", "single_lora", "swap_hier", "static_fusion", "no_cluster", "kaiming"});
    return g;
}

Outcome zero_shot_transfer() {
    Outcome o;
    auto& g = grid();
    const double full = median(g.jga["full"]), single = median(g.jga["single_lora"]);
    o.note("full        " + per_seed(g.jga["full"]) + " (median " + fmtd("%.3f", full) + ")");
    o.note("single_lora " + per_seed(g.jga["single_lora"]) + " (median " + fmtd("%.3f", single) + ")");
    o.check(full - single >= 0.05, "median held-out JGA gap " + fmtd("%+.1f", 100 * (full - single)) +
                                       " points >= +5.0");
    const double secs = g.variant_seconds["full"] + g.variant_seconds["single_lora"];
    o.check(secs < 15 * 60, "runtime " + fmtd("%.0f", secs) + " s < 900 s");
    return o;
}

Outcome ablation_directionality() {
    Outcome o;
    auto& g = grid();
    const double full = median(g.jga["full"]);
    for (const std::string v : {"swap_hier", "static_fusion", "no_cluster", "kaiming"}) {
        const double m = median(g.jga[v]);
        o.check(full >= m, "full " + fmtd("%.3f", full) + " >= " + v + " " + fmtd("%.3f", m) + " (" +
                               per_seed(g.jga[v]) + ")");
    }
    return o;
}

// --------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Every regular file under `dir`, relative path -> bytes.
std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "timing.json")
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

Outcome determinism() {
    Outcome o;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "gen-data --seed 9 --dialogs 6 --turns 3 --out {d}/corpus.json"},
        {"toy-embeddings", "toy-embeddings --dim 16 --out {d}/emb.json"},
        {"cluster", "cluster --embeddings {d}/emb.json --corpus {d}/corpus.json --config {c} --out {d}/clusters.json"},
        {"train", "train --config {c} --corpus {d}/corpus.json --clusters {d}/clusters.json --out {d}/run"},
        {"eval", "eval --checkpoint {d}/run/checkpoint --corpus {d}/corpus.json --clusters {d}/clusters.json"},
        {"merge", "merge --checkpoint {d}/run/checkpoint --out {d}/merged"},
        {"eval merged", "eval --checkpoint {d}/merged --corpus {d}/corpus.json --split all"},
        {"inspect-init",
         "inspect-init --config {c} --corpus {d}/corpus.json --clusters {d}/clusters.json --out {d}/init.json"},
        {"ablate", "ablate --config {c} --corpus {d}/corpus.json --clusters {d}/clusters.json "
                   "--variants full,no_cluster,kaiming --seeds 1,2 --out {d}/ablation.csv"},
    };
    const fs::path config = g_work / "det_config.json";
    std::ofstream(config) << R"({"encoder": {"num_layers": 2, "hidden_dim": 16, "heads": 2, "ffn_dim": 32},
 "train": {"epochs": 2, "rank": 2, "grad_accum_steps": 2, "learning_rate": 0.005},
 "split": {"heldout": "taxi"}})";
    std::vector<fs::path> runs = {g_work / "det_a", g_work / "det_b"};
    bool all_ok = true;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        fs::remove_all(runs[r]);
        fs::create_directories(runs[r]);
        for (const auto& [name, tmpl] : commands) {
            std::string args = tmpl;
            for (std::size_t pos; (pos = args.find("{d}")) != std::string::npos;)
                args.replace(pos, 3, runs[r].string());
            for (std::size_t pos; (pos = args.find("{c}")) != std::string::npos;) args.replace(pos, 3, config.string());
            const std::string log = "det_" + std::to_string(r) + "_stdout.txt";
            std::ofstream(g_work / log, std::ios::app) << "## " << name << "\n";
            const int rc = run_cli(args, log);
            if (rc != 0) {
                o.check(false, name + " exited with " + std::to_string(rc));
                all_ok = false;
            }
        }
    }
    if (!all_ok) return o;
    const auto a = tree(runs[0]), b = tree(runs[1]);
    std::size_t same = 0;
    for (const auto& [path, bytes] : a) {
        auto it = b.find(path);
        if (it != b.end() && it->second == bytes) ++same;
        else o.note("differs: " + path);
    }
    o.check(same == a.size() && a.size() == b.size(),
            std::to_string(same) + " of " + std::to_string(a.size()) + " output files bit-identical across reruns");
    auto stdout_of = [&](int r) {
        std::string text = slurp(g_work / ("det_" + std::to_string(r) + "_stdout.txt"));
        const std::string dir = runs[static_cast<std::size_t>(r)].string();
        for (std::size_t pos; (pos = text.find(dir)) != std::string::npos;) text.replace(pos, dir.size(), "{d}");
        return text;
    };
    o.check(stdout_of(0) == stdout_of(1), "stdout of all 9 commands identical across reruns (output dir masked)");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: %s <hicolora CLI> <scratch dir> [criterion ...]\n", argv[0]);
        return 2;
    }
    spdlog::set_level(spdlog::level::warn);
    g_cli = fs::absolute(argv[1]).string();
    g_work = fs::absolute(argv[2]);
    fs::create_directories(g_work);
    fs::remove(g_work / "cli.log");
    for (const char* f : {"det_0_stdout.txt", "det_1_stdout.txt"}) fs::remove(g_work / f);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"residual exactness", residual_exactness},
        {"SemSVD reductions", semsvd_reductions},
        {"initial-forward preservation", initial_forward},
        {"merge equivalence", merge_equivalence},
        {"low/high consistency identity", low_high_identity},
        {"gradient fidelity", gradient_fidelity},
        {"routing statistics", routing_statistics},
        {"spectral clustering oracles", spectral_oracles},
        {"metric fixtures", metric_fixtures},
        {"zero-shot transfer (directional)", zero_shot_transfer},
        {"ablation directionality", ablation_directionality},
        {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.check(false, std::string("threw: ") + e.what());
        }
        std::printf("%s %2d %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str());
        for (const auto& n : o.notes) std::printf("        %s\n", n.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
