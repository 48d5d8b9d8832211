#include "hicolora/model.hpp"

#include <fmt/format.h>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "hicolora/embed.hpp"
#include "hicolora/error.hpp"

namespace hicolora::model {

using ag::Tape;
using ag::Var;

void EncoderConfig::validate() const {
    require(num_layers >= 1, ErrorKind::Config, "num_layers must be >= 1");
    require(heads >= 1 && hidden_dim % heads == 0, ErrorKind::Config,
            [&] { return fmt::format("hidden_dim {} is not divisible by heads {}", hidden_dim, heads); });
    require(rank >= 1 && rank <= hidden_dim, ErrorKind::Config,
            [&] { return fmt::format("rank {} must lie in [1, hidden_dim {}]", rank, hidden_dim); });
    require(ffn_dim >= 1, ErrorKind::Config, "ffn_dim must be >= 1");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Config, "alpha must lie in [0, 1]");
    require(max_seq_len >= 2, ErrorKind::Config, "max_seq_len must be >= 2");
    require(route_temperature > 0.0, ErrorKind::Config, "routing temperature must be positive");
}

std::vector<std::string> tokenize(const std::string& text) {
    std::string s;
    s.reserve(text.size());
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (c == '?' || c == ',' || c == '-')
            s.push_back(' ');
        else
            s.push_back(static_cast<char>(std::tolower(u)));
    }
    std::vector<std::string> out;
    for (auto tok : embed::whitespace_tokens(s)) {
        while (!tok.empty() && tok.back() == ':') tok.pop_back();
        if (!tok.empty()) out.push_back(std::move(tok));
    }
    return out;
}

Vocab::Vocab(const std::vector<std::string>& tokens) {
    tokens_ = {kSep, kUnk};
    std::set<std::string> rest(tokens.begin(), tokens.end());
    rest.erase(kSep);
    rest.erase(kUnk);
    tokens_.insert(tokens_.end(), rest.begin(), rest.end());
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = i;
}

std::size_t Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? 1 : it->second;
}

PromptAttention prompt_attend(const Matrix& terms, const Matrix& descriptions, std::size_t heads) {
    require(terms.rows() > 0 && descriptions.rows() > 0, ErrorKind::Argument,
            "prompt attention needs at least one term and one description token");
    require(terms.cols() == descriptions.cols(), ErrorKind::Argument,
            "term and description vectors differ in dimension");
    const std::size_t d = terms.cols();
    require(heads >= 1 && d % heads == 0, ErrorKind::Argument, "dimension not divisible by heads");
    const std::size_t dh = d / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

    PromptAttention out;
    out.sequence = Matrix(terms.rows(), d);
    std::vector<double> w(descriptions.rows());
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * dh;
        for (std::size_t i = 0; i < terms.rows(); ++i) {
            for (std::size_t j = 0; j < descriptions.rows(); ++j) {
                double s = 0.0;
                for (std::size_t c = c0; c < c0 + dh; ++c) s += terms(i, c) * descriptions(j, c);
                w[j] = s * inv;
            }
            const auto p = softmax(w);
            for (std::size_t c = c0; c < c0 + dh; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < descriptions.rows(); ++j) acc += p[j] * descriptions(j, c);
                out.sequence(i, c) = acc;
            }
        }
    }
    out.pooled = Matrix(1, d);
    for (std::size_t i = 0; i < out.sequence.rows(); ++i)
        for (std::size_t c = 0; c < d; ++c) out.pooled(0, c) += out.sequence(i, c);
    out.pooled *= 1.0 / static_cast<double>(out.sequence.rows());
    out.summary = normalized(out.pooled.row_span(0));
    return out;
}

std::size_t Model::prompt_index(const std::string& domain, const std::string& slot) const {
    for (std::size_t i = 0; i < prompts.size(); ++i)
        if (prompts[i].domain == domain && prompts[i].slot == slot) return i;
    fail(ErrorKind::Lookup, "unknown slot prompt " + domain + "-" + slot);
}

std::size_t Model::value_index(const std::string& value) const {
    auto it = std::lower_bound(values.begin(), values.end() - 1, value);
    if (it != values.end() - 1 && *it == value) return static_cast<std::size_t>(it - values.begin());
    require(value == dst::kNone, ErrorKind::Lookup,
            [&] { return "value '" + value + "' is not in the classifier vocabulary"; });
    return none_index();
}

std::vector<std::pair<std::size_t, Proj>> Model::adapted_layers() const {
    std::vector<std::pair<std::size_t, Proj>> out;
    for (std::size_t b = 0; b < blocks.size(); ++b)
        for (std::size_t p = 0; p < 4; ++p)
            if (blocks[b].adapted[p]) out.emplace_back(b, static_cast<Proj>(p));
    return out;
}

Matrix sinusoidal_positions(std::size_t len, std::size_t d) {
    Matrix pe(len, d);
    for (std::size_t pos = 0; pos < len; ++pos)
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            pe(pos, i) = std::sin(static_cast<double>(pos) * freq);
            if (i + 1 < d) pe(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
        }
    return pe;
}

namespace {

Matrix embedding_rows(const Model& m, const std::vector<std::size_t>& ids) {
    Matrix out(ids.size(), m.d());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] < m.token_embeddings.rows(), ErrorKind::Argument,
                [&] { return fmt::format("token id {} out of range (vocab {})", ids[i], m.token_embeddings.rows()); });
        auto src = m.token_embeddings.row_span(ids[i]);
        std::copy(src.begin(), src.end(), out.row_span(i).begin());
    }
    return out;
}

bool adapts(const EncoderConfig& cfg, std::size_t p) {
    return cfg.adapt_all_projections || p == static_cast<std::size_t>(Proj::Q) ||
           p == static_cast<std::size_t>(Proj::V);
}

}  // namespace

void refresh_prompts(Model& m) {
    require(!m.terms.empty(), ErrorKind::Argument, "no high-frequency terms for prompt attention");
    std::vector<std::size_t> term_ids;
    for (const auto& t : m.terms) term_ids.push_back(m.vocab.id(t));
    const Matrix q = embedding_rows(m, term_ids);
    for (auto& p : m.prompts) {
        const auto att = prompt_attend(q, embedding_rows(m, p.tokens), m.cfg.heads);
        p.x_sa = att.pooled;
        p.summary = att.summary;
    }
}

Model build_model(const EncoderConfig& cfg, const InitSpec& init_spec, const std::vector<dst::DomainSchema>& schemas,
                  const std::vector<std::string>& vocab_text, const std::vector<std::string>& terms,
                  const Matrix& domain_centroids, const Matrix& slot_centroids) {
    cfg.validate();
    const std::size_t d = cfg.hidden_dim;
    require(domain_centroids.cols() == d && slot_centroids.cols() == d, ErrorKind::Config, [&] {
        return fmt::format("cluster centroid dimension {}/{} does not match hidden_dim {}", domain_centroids.cols(),
                           slot_centroids.cols(), d);
    });
    require(domain_centroids.rows() >= 1 && slot_centroids.rows() >= 1, ErrorKind::Config, "empty cluster set");

    Model m;
    m.cfg = cfg;
    m.terms = terms;

    std::set<std::string> vals;
    for (const auto& s : schemas)
        for (const auto& slot : s.slots) vals.insert(slot.values.begin(), slot.values.end());
    m.values.assign(vals.begin(), vals.end());
    m.values.push_back(dst::kNone);

    std::vector<std::string> toks;
    for (const auto& text : vocab_text) {
        auto t = tokenize(text);
        toks.insert(toks.end(), t.begin(), t.end());
    }
    for (const auto& s : schemas)
        for (const auto& slot : s.slots) {
            SlotPrompt p;
            p.domain = s.name;
            p.slot = slot.name;
            p.key = embed::prompt_key(s.name, slot.name, slot.question);
            auto t = tokenize(p.key);
            toks.insert(toks.end(), t.begin(), t.end());
            m.prompts.push_back(std::move(p));
        }
    for (const auto& t : terms) toks.push_back(t);
    m.vocab = Vocab(toks);
    for (auto& p : m.prompts) {
        for (const auto& t : tokenize(p.key)) p.tokens.push_back(m.vocab.id(t));
    }

    const double emb_scale = std::sqrt(static_cast<double>(d));
    m.token_embeddings = Matrix(m.vocab.size(), d);
    for (std::size_t i = 0; i < m.vocab.size(); ++i) {
        const auto v = embed::token_vector(m.vocab.tokens()[i], d, cfg.backbone_seed);
        for (std::size_t c = 0; c < d; ++c) m.token_embeddings(i, c) = v[c] * emb_scale;
    }

    RngStream backbone = RngStream(cfg.backbone_seed).fork(1);
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t b = 0; b < cfg.num_layers; ++b) {
        Block blk;
        for (auto& w : blk.w) w = random_normal(d, d, backbone, sd);
        blk.w1 = random_normal(cfg.ffn_dim, d, backbone, sd);
        blk.b1 = Matrix(1, cfg.ffn_dim);
        blk.w2 = random_normal(d, cfg.ffn_dim, backbone, 1.0 / std::sqrt(static_cast<double>(cfg.ffn_dim)));
        blk.b2 = Matrix(1, d);
        m.blocks.push_back(std::move(blk));
    }

    m.modes = adapter::assign_layer_modes(cfg.num_layers, cfg.alpha, cfg.swap_modes);
    m.domain_centroids = domain_centroids;
    m.slot_centroids = slot_centroids;
    const RngStream adapters = RngStream(init_spec.seed).fork(2);
    for (std::size_t b = 0; b < cfg.num_layers; ++b)
        for (std::size_t p = 0; p < 4; ++p) {
            if (!adapts(cfg, p)) continue;
            adapter::LayerInitOptions o;
            o.strategy = init_spec.strategy;
            o.rank = cfg.rank;
            o.lambda = init_spec.lambda;
            o.m = domain_centroids.rows();
            o.n = slot_centroids.rows();
            o.mode = m.modes[b];
            o.temperature = cfg.route_temperature;
            RngStream r = adapters.fork(b * 4 + p);
            m.blocks[b].adapted[p] = adapter::make_layer(m.blocks[b].w[p], o, slot_centroids, r).layer;
        }

    m.head_w = Matrix(m.values.size(), d);
    m.head_b = Matrix(1, m.values.size());
    refresh_prompts(m);
    return m;
}

std::vector<std::size_t> input_ids(const Model& m, const dst::Dialog& d, std::size_t turn, std::size_t prompt) {
    require(turn < d.turns.size(), ErrorKind::Argument, "turn index out of range");
    require(prompt < m.prompts.size(), ErrorKind::Lookup, "prompt index out of range");
    std::vector<std::size_t> ctx;
    for (std::size_t t = 0; t <= turn; ++t)
        for (const auto& tok : tokenize(d.turns[t].utterance)) ctx.push_back(m.vocab.id(tok));
    const auto& pt = m.prompts[prompt].tokens;
    require(pt.size() + 1 <= m.cfg.max_seq_len, ErrorKind::Argument, "slot prompt exceeds max_seq_len");
    const std::size_t room = m.cfg.max_seq_len - pt.size() - 1;
    std::vector<std::size_t> ids;
    const std::size_t skip = ctx.size() > room ? ctx.size() - room : 0;
    ids.assign(ctx.begin() + static_cast<std::ptrdiff_t>(skip), ctx.end());
    ids.push_back(m.vocab.id(Vocab::kSep));
    ids.insert(ids.end(), pt.begin(), pt.end());
    return ids;
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<ParamInfo> param_layout(const Model& m) {
    std::vector<ParamInfo> out;
    for (const auto& [b, p] : m.adapted_layers()) {
        const auto& l = *m.blocks[b].adapted[static_cast<std::size_t>(p)];
        const std::string pre = fmt::format("block{}.{}.", b, kProjNames[static_cast<std::size_t>(p)]);
        out.push_back({pre + "a_ur", l.a_ur.rows(), l.a_ur.cols(), false});
        out.push_back({pre + "b_ur", l.b_ur.rows(), l.b_ur.cols(), false});
        for (std::size_t i = 0; i < l.m(); ++i)
            out.push_back({pre + fmt::format("a_sa{}", i), l.a_sa[i].rows(), l.a_sa[i].cols(), false});
        for (std::size_t j = 0; j < l.n(); ++j)
            out.push_back({pre + fmt::format("b_sa{}", j), l.b_sa[j].rows(), l.b_sa[j].cols(), false});
        out.push_back({pre + "beta_logit", 1, 1, true});
    }
    out.push_back({"head.w", m.head_w.rows(), m.head_w.cols(), false});
    out.push_back({"head.b", m.head_b.rows(), m.head_b.cols(), false});
    return out;
}

std::vector<Matrix> flatten_params(const Model& m) {
    std::vector<Matrix> out;
    for (const auto& [b, p] : m.adapted_layers()) {
        const auto& l = *m.blocks[b].adapted[static_cast<std::size_t>(p)];
        out.push_back(l.a_ur);
        out.push_back(l.b_ur);
        for (const auto& a : l.a_sa) out.push_back(a);
        for (const auto& bm : l.b_sa) out.push_back(bm);
        out.push_back(Matrix(1, 1, l.beta_logit));
    }
    out.push_back(m.head_w);
    out.push_back(m.head_b);
    return out;
}

void assign_params(Model& m, const std::vector<Matrix>& flat) {
    const auto layout = param_layout(m);
    require(flat.size() == layout.size(), ErrorKind::Argument,
            [&] { return fmt::format("expected {} parameter tensors, got {}", layout.size(), flat.size()); });
    for (std::size_t i = 0; i < flat.size(); ++i)
        require(flat[i].rows() == layout[i].rows && flat[i].cols() == layout[i].cols, ErrorKind::Argument,
                [&] { return "shape mismatch for " + layout[i].name; });
    std::size_t k = 0;
    for (const auto& [b, p] : m.adapted_layers()) {
        auto& l = *m.blocks[b].adapted[static_cast<std::size_t>(p)];
        l.a_ur = flat[k++];
        l.b_ur = flat[k++];
        for (auto& a : l.a_sa) a = flat[k++];
        for (auto& bm : l.b_sa) bm = flat[k++];
        l.beta_logit = flat[k++](0, 0);
    }
    m.head_w = flat[k++];
    m.head_b = flat[k++];
}

Bound bind(Tape& tape, const Model& m, std::span<const Var> flat) {
    const auto adapted = m.adapted_layers();
    Bound out;
    out.layers.resize(m.blocks.size());
    std::size_t k = 0;
    for (const auto& [b, p] : adapted) {
        const auto& l = *m.blocks[b].adapted[static_cast<std::size_t>(p)];
        require(k + 3 + l.m() + l.n() <= flat.size(), ErrorKind::Argument, "too few parameter vars");
        adapter::LayerVars v;
        v.base = tape.constant(l.base);
        v.a_ur = flat[k++];
        v.b_ur = flat[k++];
        for (std::size_t i = 0; i < l.m(); ++i) v.a_sa.push_back(flat[k++]);
        for (std::size_t j = 0; j < l.n(); ++j) v.b_sa.push_back(flat[k++]);
        v.beta_logit = flat[k++];
        out.layers[b][static_cast<std::size_t>(p)] = std::move(v);
    }
    require(k + 2 == flat.size(), ErrorKind::Argument, "parameter var count does not match the model layout");
    out.head_w = flat[k++];
    out.head_b = flat[k++];
    return out;
}

Bound bind_params(Tape& tape, const Model& m) {
    std::vector<Var> vars;
    for (auto& p : flatten_params(m)) vars.push_back(tape.param(std::move(p)));
    return bind(tape, m, std::span<const Var>(vars));
}

namespace {

Bound bind_constants(Tape& tape, const Model& m) {
    std::vector<Var> vars;
    for (auto& p : flatten_params(m)) vars.push_back(tape.constant(std::move(p)));
    return bind(tape, m, std::span<const Var>(vars));
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward

Routing infer_routing(const Model& m, std::size_t prompt) {
    require(prompt < m.prompts.size(), ErrorKind::Lookup, "prompt index out of range");
    RngStream unused(0);
    const auto r = adapter::route(m.prompts[prompt].summary, m.domain_centroids, m.slot_centroids,
                                  adapter::Phase::Infer, m.cfg.route_temperature, unused, m.cfg.hard_infer_routing);
    return Routing(m.adapted_layers().size(), r);
}

Routing train_routing(const Model& m, std::size_t prompt, RngStream& rng,
                      const std::vector<adapter::RouteNoise>* frozen_noise) {
    require(prompt < m.prompts.size(), ErrorKind::Lookup, "prompt index out of range");
    const std::size_t n = m.adapted_layers().size();
    require(!frozen_noise || frozen_noise->size() == n, ErrorKind::Argument, "frozen noise count mismatch");
    Routing out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(adapter::route(m.prompts[prompt].summary, m.domain_centroids, m.slot_centroids,
                                     adapter::Phase::Train, m.cfg.route_temperature, rng, false,
                                     frozen_noise ? &(*frozen_noise)[i] : nullptr));
    return out;
}

Var encode_with(Tape& tape, const Model& m, std::span<const std::size_t> ids, const ProjFn& proj) {
    const std::size_t len = ids.size();
    require(len >= 1, ErrorKind::Argument, "empty input sequence");
    require(len <= m.cfg.max_seq_len, ErrorKind::Argument,
            [&] { return fmt::format("sequence length {} exceeds max_seq_len {}", len, m.cfg.max_seq_len); });
    Matrix x0 = embedding_rows(m, std::vector<std::size_t>(ids.begin(), ids.end()));
    if (m.cfg.use_positions) x0 += sinusoidal_positions(len, m.d());
    Var x = tape.constant(std::move(x0));

    const std::size_t heads = m.cfg.heads;
    const std::size_t dh = m.d() / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t b = 0; b < m.blocks.size(); ++b) {
        const Block& blk = m.blocks[b];
        const Var q = proj(tape, b, Proj::Q, x);
        const Var k = proj(tape, b, Proj::K, x);
        const Var v = proj(tape, b, Proj::V, x);
        std::vector<Var> outs;
        for (std::size_t h = 0; h < heads; ++h) {
            const Var qh = tape.slice_cols(q, h * dh, dh);
            const Var kh = tape.slice_cols(k, h * dh, dh);
            const Var vh = tape.slice_cols(v, h * dh, dh);
            const Var att = tape.row_softmax(tape.scale(tape.matmul_nt(qh, kh), inv));
            outs.push_back(tape.matmul(att, vh));
        }
        const Var o = proj(tape, b, Proj::O, heads == 1 ? outs[0] : tape.concat_cols(outs));
        const Var x1 = tape.layer_norm(tape.add(x, o));
        const Var f = tape.relu(tape.add_row(tape.matmul_nt(x1, tape.constant(blk.w1)), tape.constant(blk.b1)));
        const Var f2 = tape.add_row(tape.matmul_nt(f, tape.constant(blk.w2)), tape.constant(blk.b2));
        x = tape.layer_norm(tape.add(x1, f2));
    }
    return x;
}

Var encode(Tape& tape, const Model& m, const Bound& bound, std::span<const std::size_t> ids, std::size_t prompt,
           const Routing& routing) {
    require(prompt < m.prompts.size(), ErrorKind::Lookup, "prompt index out of range");
    const auto adapted = m.adapted_layers();
    require(routing.size() == adapted.size(), ErrorKind::Argument, "one routing decision per adapted layer");
    std::vector<std::array<std::size_t, 4>> slot_of(m.blocks.size());
    for (std::size_t i = 0; i < adapted.size(); ++i)
        slot_of[adapted[i].first][static_cast<std::size_t>(adapted[i].second)] = i;
    const Var x_sa = tape.constant(m.prompts[prompt].x_sa);

    auto proj = [&](Tape& t, std::size_t b, Proj p, Var x) -> Var {
        const auto pi = static_cast<std::size_t>(p);
        const auto& lv = bound.layers[b][pi];
        if (!lv) return t.matmul_nt(x, t.constant(m.blocks[b].w[pi]));
        const auto mode = m.blocks[b].adapted[pi]->mode;
        const Var h_ur = adapter::unirep_forward(t, *lv, x);
        const Var h_sa =
            adapter::semadapt_forward(t, *lv, mode, m.cfg.token_aligned_x_sa ? x : x_sa, routing[slot_of[b][pi]]);
        return adapter::fuse(t, h_ur, h_sa, lv->beta_logit);
    };
    return encode_with(tape, m, ids, proj);
}

Var encode_plain(Tape& tape, const Model& m, std::span<const std::size_t> ids) {
    return encode_with(tape, m, ids, [&](Tape& t, std::size_t b, Proj p, Var x) {
        return t.matmul_nt(x, t.constant(m.blocks[b].w[static_cast<std::size_t>(p)]));
    });
}

Var head_logits(Tape& tape, const Bound& bound, Var hidden) {
    return tape.add_row(tape.matmul_nt(tape.mean_pool_rows(hidden), bound.head_w), bound.head_b);
}

Var logits(Tape& tape, const Model& m, const Bound& bound, std::span<const std::size_t> ids, std::size_t prompt,
           const Routing& routing) {
    return head_logits(tape, bound, encode(tape, m, bound, ids, prompt, routing));
}

std::vector<double> infer_logits(const Model& m, std::span<const std::size_t> ids, std::size_t prompt) {
    Tape tape;
    const Bound bound = bind_constants(tape, m);
    const Var z = logits(tape, m, bound, ids, prompt, infer_routing(m, prompt));
    const auto row = tape.value(z).row_span(0);
    return {row.begin(), row.end()};
}

std::vector<double> predict_slot_value(const Model& m, const dst::Dialog& d, std::size_t turn,
                                       const std::string& domain, const std::string& slot) {
    const std::size_t p = m.prompt_index(domain, slot);
    return softmax(infer_logits(m, input_ids(m, d, turn, p), p));
}

// ---------------------------------------------------------------------------
// Merged inference

MergedModel merge_model(const Model& m) {
    require(!m.cfg.token_aligned_x_sa, ErrorKind::Contract,
            "token-aligned prompt features have no static bias to merge");
    MergedModel mm;
    mm.frozen = m;
    mm.w_merged.resize(m.blocks.size());
    mm.bias.assign(m.prompts.size(), std::vector<std::array<std::optional<Matrix>, 4>>(m.blocks.size()));
    const auto adapted = m.adapted_layers();
    for (std::size_t pr = 0; pr < m.prompts.size(); ++pr) {
        const Routing r = infer_routing(m, pr);
        for (std::size_t i = 0; i < adapted.size(); ++i) {
            const auto [b, p] = adapted[i];
            const auto pi = static_cast<std::size_t>(p);
            auto merged = adapter::merge_for_inference(*m.blocks[b].adapted[pi], m.prompts[pr].x_sa, r[i]);
            if (pr == 0) mm.w_merged[b][pi] = std::move(merged.w_merged);
            mm.bias[pr][b][pi] = std::move(merged.bias);
        }
    }
    for (auto& blk : mm.frozen.blocks)
        for (auto& a : blk.adapted) a.reset();
    return mm;
}

std::vector<double> merged_logits(const MergedModel& mm, std::span<const std::size_t> ids, std::size_t prompt) {
    const Model& m = mm.frozen;
    require(prompt < mm.bias.size(), ErrorKind::Lookup, "prompt index out of range");
    Tape tape;
    const Var hidden = encode_with(tape, m, ids, [&](Tape& t, std::size_t b, Proj p, Var x) {
        const auto pi = static_cast<std::size_t>(p);
        if (!mm.w_merged[b][pi]) return t.matmul_nt(x, t.constant(m.blocks[b].w[pi]));
        return t.add_row(t.matmul_nt(x, t.constant(*mm.w_merged[b][pi])), t.constant(*mm.bias[prompt][b][pi]));
    });
    const Var z =
        tape.add_row(tape.matmul_nt(tape.mean_pool_rows(hidden), tape.constant(m.head_w)), tape.constant(m.head_b));
    const auto row = tape.value(z).row_span(0);
    return {row.begin(), row.end()};
}

}  // namespace hicolora::model
