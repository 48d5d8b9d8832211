#include "hicolora/trainer.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>

#include "hicolora/error.hpp"

namespace hicolora::train {

using nlohmann::json;

std::string to_string(FusionMode f) { return f == FusionMode::Adaptive ? "adaptive" : "static_half"; }

FusionMode fusion_from_string(const std::string& s) {
    if (s == "adaptive") return FusionMode::Adaptive;
    if (s == "static_half") return FusionMode::StaticHalf;
    fail(ErrorKind::Config, "unknown fusion mode '" + s + "' (expected adaptive or static_half)");
}

void TrainConfig::validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::Config, "learning_rate must be >= 0");
    require(weight_decay >= 0.0, ErrorKind::Config, "weight_decay must be >= 0");
    require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
    require(grad_accum_steps >= 1, ErrorKind::Config, "grad_accum_steps must be >= 1");
    require(epochs >= 1, ErrorKind::Config, "epochs must be >= 1");
    require(early_stop_patience >= 1, ErrorKind::Config, "early_stop_patience must be >= 1");
    require(gumbel_temperature > 0.0, ErrorKind::Config, "gumbel_temperature must be positive");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Config, "alpha must lie in [0, 1]");
    require(rank >= 1, ErrorKind::Config, "rank must be >= 1");
}

void adamw_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state, const AdamConfig& cfg,
                std::span<const std::string> names, const std::vector<bool>& frozen) {
    require(params.size() == grads.size(), ErrorKind::Argument, "gradient count does not match parameter count");
    require(frozen.empty() || frozen.size() == params.size(), ErrorKind::Argument, "frozen mask size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i].rows() == grads[i].rows() && params[i].cols() == grads[i].cols(), ErrorKind::Argument,
                "gradient shape mismatch");
        if (!frozen.empty() && frozen[i]) continue;
        if (!grads[i].all_finite())
            fail(ErrorKind::Numerical,
                 "non-finite gradient for " + (i < names.size() ? names[i] : fmt::format("parameter {}", i)));
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.rows(), p.cols());
            state.v.emplace_back(p.rows(), p.cols());
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!frozen.empty() && frozen[i]) continue;
        auto& p = params[i].data();
        const auto& g = grads[i].data();
        auto& m = state.m[i].data();
        auto& v = state.v[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            p[k] *= 1.0 - cfg.lr * cfg.weight_decay;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            p[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
        }
    }
}

std::vector<Example> make_examples(const model::Model& m, const dst::Corpus& schemas,
                                   const std::vector<dst::Dialog>& dialogs) {
    std::vector<Example> out;
    for (std::size_t di = 0; di < dialogs.size(); ++di) {
        const auto& d = dialogs[di];
        const auto& dom = schemas.schema(d.domain);
        for (std::size_t t = 0; t < d.turns.size(); ++t)
            for (const auto& s : dom.slots) {
                std::string gold = dst::kNone;
                for (const auto& [gd, gs, gv] : d.turns[t].state)
                    if (gd == d.domain && gs == s.name) gold = gv;
                out.push_back({di, t, m.prompt_index(d.domain, s.name), m.value_index(gold)});
            }
    }
    return out;
}

BatchResult batch_gradient(const model::Model& m, const std::vector<dst::Dialog>& dialogs,
                           std::span<const Example> batch, adapter::Phase phase, RngStream& rng) {
    require(!batch.empty(), ErrorKind::Argument, "empty batch");
    BatchResult out;
    for (const auto& ex : batch) {
        ag::Tape tape;
        const auto bound = model::bind_params(tape, m);
        const auto ids = model::input_ids(m, dialogs[ex.dialog], ex.turn, ex.prompt);
        const auto routing = phase == adapter::Phase::Train ? model::train_routing(m, ex.prompt, rng)
                                                            : model::infer_routing(m, ex.prompt);
        const auto z = model::logits(tape, m, bound, ids, ex.prompt, routing);
        const auto loss = tape.cross_entropy(z, ex.target);
        out.loss += tape.value(loss)(0, 0);
        auto g = tape.backward(loss);
        if (out.grads.empty())
            out.grads = std::move(g);
        else
            for (std::size_t i = 0; i < g.size(); ++i) out.grads[i] += g[i];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    for (auto& g : out.grads) g *= inv;
    require(std::isfinite(out.loss), ErrorKind::Numerical, "non-finite training loss");
    return out;
}

double mean_loss(const model::Model& m, const std::vector<dst::Dialog>& dialogs, std::span<const Example> examples) {
    require(!examples.empty(), ErrorKind::Argument, "no examples");
    double total = 0.0;
    for (const auto& ex : examples) {
        const auto z = model::infer_logits(m, model::input_ids(m, dialogs[ex.dialog], ex.turn, ex.prompt), ex.prompt);
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        double s = 0.0;
        for (double v : z) s += std::exp(v - mx);
        total += mx + std::log(s) - z[ex.target];
    }
    return total / static_cast<double>(examples.size());
}

std::string RunHistory::to_json() const {
    json eps = json::array();
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& e : epochs)
        eps.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"dev_loss", opt(e.dev_loss)},
                       {"dev_jga", opt(e.dev_jga)},
                       {"dev_aga", opt(e.dev_aga)}});
    json j = {{"epochs", eps},
              {"early_stop_epoch", early_stop_epoch ? json(*early_stop_epoch) : json(nullptr)},
              {"best_epoch", best_epoch ? json(*best_epoch) : json(nullptr)},
              {"optimizer_steps", optimizer_steps},
              {"adam",
               {{"lr", adam.lr},
                {"weight_decay", adam.weight_decay},
                {"beta1", adam.beta1},
                {"beta2", adam.beta2},
                {"eps", adam.eps}}}};
    return j.dump(1) + "\n";
}

std::string RunHistory::timing_json() const {
    json secs = json::array();
    for (const auto& e : epochs) secs.push_back(e.seconds);
    return json{{"seconds_per_epoch", secs}}.dump(1) + "\n";
}

RunHistory train(model::Model& m, const dst::Corpus& schemas, const dst::Splits& splits, const TrainConfig& cfg,
                 const TrainHooks& hooks) {
    cfg.validate();
    require(!splits.train.empty(), ErrorKind::Config, "training split is empty");
    const auto examples = make_examples(m, schemas, splits.train);
    const auto dev_examples = make_examples(m, schemas, splits.dev);
    const auto layout = model::param_layout(m);
    std::vector<std::string> names;
    std::vector<bool> frozen;
    for (const auto& p : layout) {
        names.push_back(p.name);
        frozen.push_back(p.is_beta && cfg.fusion_mode == FusionMode::StaticHalf);
    }

    RunHistory hist;
    hist.adam.lr = cfg.learning_rate;
    hist.adam.weight_decay = cfg.weight_decay;
    AdamState state;
    std::vector<Matrix> params = model::flatten_params(m);
    std::vector<Matrix> best;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t bad = 0;

    const RngStream root(cfg.seed);
    RngStream data_rng = root.fork(3);
    RngStream route_rng = root.fork(4);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order(examples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        data_rng.shuffle(order);

        EpochRecord rec;
        rec.epoch = epoch;
        std::vector<Matrix> acc;
        std::size_t acc_count = 0;
        std::size_t step_in_epoch = 0;
        try {
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), start + cfg.batch_size);
                std::vector<Example> batch;
                for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
                auto res = batch_gradient(m, splits.train, batch, adapter::Phase::Train, route_rng);
                rec.train_loss += res.loss * static_cast<double>(batch.size());
                if (acc.empty())
                    acc = std::move(res.grads);
                else
                    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += res.grads[i];
                ++acc_count;
                if (acc_count < cfg.grad_accum_steps && end < order.size()) continue;

                for (auto& g : acc) g *= 1.0 / static_cast<double>(acc_count);
                for (std::size_t i = 0; i < acc.size(); ++i)
                    if (frozen[i]) acc[i] = Matrix(acc[i].rows(), acc[i].cols());
                adamw_step(params, acc, state, hist.adam, names, frozen);
                model::assign_params(m, params);
                ++hist.optimizer_steps;
                ++step_in_epoch;
                if (hooks.on_step) hooks.on_step(hist.optimizer_steps, acc);
                acc.clear();
                acc_count = 0;
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Numerical) throw;
            fail(ErrorKind::Numerical, fmt::format("epoch {} step {}: {}", epoch, step_in_epoch + 1, e.what()));
        }
        rec.train_loss /= static_cast<double>(examples.size());

        if (!dev_examples.empty()) {
            rec.dev_loss = mean_loss(m, splits.dev, dev_examples);
            require(std::isfinite(*rec.dev_loss), ErrorKind::Numerical,
                    [&] { return fmt::format("epoch {}: non-finite dev loss", epoch); });
            const auto dm = evaluate(m, schemas, splits.dev, true);
            rec.dev_jga = dm.jga;
            rec.dev_aga = dm.aga;
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        spdlog::info("epoch {}: train loss {:.5f} dev loss {} dev jga {}", epoch, rec.train_loss,
                     rec.dev_loss ? fmt::format("{:.5f}", *rec.dev_loss) : "-",
                     rec.dev_jga ? fmt::format("{:.4f}", *rec.dev_jga) : "-");
        hist.epochs.push_back(rec);

        if (!rec.dev_loss) continue;
        if (*rec.dev_loss < best_loss - cfg.min_delta) {
            best_loss = *rec.dev_loss;
            hist.best_epoch = epoch;
            best = params;
            bad = 0;
        } else if (++bad >= cfg.early_stop_patience) {
            hist.early_stop_epoch = epoch;
            spdlog::info("early stop at epoch {} (best epoch {})", epoch, hist.best_epoch.value_or(0));
            break;
        }
    }
    if (cfg.restore_best && !best.empty()) model::assign_params(m, best);
    return hist;
}

namespace {

dst::Predictor argmax_predictor(
    const model::Model& m, const std::function<std::vector<double>(std::span<const std::size_t>, std::size_t)>& f) {
    return [&m, f](const dst::Dialog& d, std::size_t turn, const dst::SlotSchema& s) {
        const std::size_t p = m.prompt_index(d.domain, s.name);
        return m.values[argmax(f(model::input_ids(m, d, turn, p), p))];
    };
}

}  // namespace

dst::Metrics evaluate(const model::Model& m, const dst::Corpus& schemas, const std::vector<dst::Dialog>& dialogs,
                      bool skip_empty_gold) {
    return dst::evaluate_predictor(schemas, dialogs,
                                   argmax_predictor(m, [&m](std::span<const std::size_t> ids,
                                                            std::size_t p) { return model::infer_logits(m, ids, p); }),
                                   skip_empty_gold);
}

dst::Metrics evaluate_merged(const model::MergedModel& mm, const dst::Corpus& schemas,
                             const std::vector<dst::Dialog>& dialogs, bool skip_empty_gold) {
    return dst::evaluate_predictor(
        schemas, dialogs,
        argmax_predictor(mm.frozen, [&mm](std::span<const std::size_t> ids,
                                          std::size_t p) { return model::merged_logits(mm, ids, p); }),
        skip_empty_gold);
}

double merge_gap(const model::Model& m, const model::MergedModel& mm, const dst::Corpus& schemas,
                 const std::vector<dst::Dialog>& dialogs) {
    double gap = 0.0;
    for (const auto& d : dialogs) {
        const auto& dom = schemas.schema(d.domain);
        for (std::size_t t = 0; t < d.turns.size(); ++t)
            for (const auto& s : dom.slots) {
                const std::size_t p = m.prompt_index(d.domain, s.name);
                const auto ids = model::input_ids(m, d, t, p);
                const auto a = model::infer_logits(m, ids, p);
                const auto b = model::merged_logits(mm, ids, p);
                for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
            }
    }
    return gap;
}

double merge_gap_random(const model::Model& m, const model::MergedModel& mm, std::size_t count, std::uint64_t seed) {
    RngStream rng(seed);
    double gap = 0.0;
    for (std::size_t q = 0; q < count; ++q) {
        const std::size_t p = rng.below(m.prompts.size());
        std::vector<std::size_t> ids(1 + rng.below(m.cfg.max_seq_len));
        for (auto& id : ids) id = rng.below(m.vocab.size());
        const auto a = model::infer_logits(m, ids, p);
        const auto b = model::merged_logits(mm, ids, p);
        for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, std::abs(a[i] - b[i]));
    }
    return gap;
}

}  // namespace hicolora::train
