#include "hicolora/dstsim.hpp"

#include <spdlog/spdlog.h>
#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>

#include "hicolora/embed.hpp"
#include "hicolora/error.hpp"
#include "hicolora/io.hpp"

namespace hicolora::dst {

using nlohmann::json;

const SlotSchema& DomainSchema::slot(const std::string& slot_name) const {
    for (const auto& s : slots)
        if (s.name == slot_name) return s;
    fail(ErrorKind::Lookup, "domain '" + name + "' has no slot '" + slot_name + "'");
}

const DomainSchema& Corpus::schema(const std::string& domain) const {
    for (const auto& s : schemas)
        if (s.name == domain) return s;
    fail(ErrorKind::Lookup, "unknown domain '" + domain + "'");
}

bool Corpus::has_domain(const std::string& domain) const {
    return std::any_of(schemas.begin(), schemas.end(), [&](const DomainSchema& s) { return s.name == domain; });
}

void validate_schemas(const std::vector<DomainSchema>& schemas) {
    std::set<std::string> names;
    std::map<std::string, std::pair<std::string, std::vector<std::string>>> groups;
    for (const auto& d : schemas) {
        require(!d.name.empty(), ErrorKind::Config, "schema with empty domain name");
        require(names.insert(d.name).second, ErrorKind::Config, [&] { return "duplicate domain '" + d.name + "'"; });
        require(!d.slots.empty(), ErrorKind::Config, [&] { return "domain '" + d.name + "' has no slots"; });
        std::set<std::string> slot_names;
        for (const auto& s : d.slots) {
            const std::string where = d.name + "-" + s.name;
            require(slot_names.insert(s.name).second, ErrorKind::Config, [&] { return "duplicate slot " + where; });
            require(!s.values.empty(), ErrorKind::Config, [&] { return "empty value vocabulary for " + where; });
            for (const auto& v : s.values) {
                require(!v.empty() && v.find_first_of(" \t\n") == std::string::npos, ErrorKind::Config,
                        [&] { return "value '" + v + "' of " + where + " must be a single nonempty token"; });
                require(v != kNone, ErrorKind::Config, [&] { return "'none' is reserved (" + where + ")"; });
            }
            if (!s.shared_group) continue;
            std::vector<std::string> sorted = s.values;
            std::sort(sorted.begin(), sorted.end());
            auto [it, fresh] = groups.try_emplace(*s.shared_group, where, sorted);
            require(fresh || it->second.second == sorted, ErrorKind::Config, [&] {
                return "shared group '" + *s.shared_group + "': " + where + " and " + it->second.first +
                       " have different vocabularies";
            });
        }
    }
}

namespace {

std::string render(const SlotSchema& s, const std::string& value) {
    std::string phrase = s.phrase.empty() ? s.name + " {value}" : s.phrase;
    const auto pos = phrase.find("{value}");
    require(pos != std::string::npos, ErrorKind::Config,
            [&] { return "phrase for slot '" + s.name + "' lacks {value}"; });
    return phrase.replace(pos, 7, value);
}

}  // namespace

std::vector<Dialog> generate_corpus(const std::vector<DomainSchema>& schemas, std::size_t dialogs_per_domain,
                                    std::size_t turns_per_dialog, RngStream& rng) {
    require(schemas.size() >= 2, ErrorKind::Config, "at least two domain schemas are required");
    require(turns_per_dialog >= 1, ErrorKind::Config, "turns per dialog must be >= 1");
    validate_schemas(schemas);

    std::vector<Dialog> out;
    for (const auto& dom : schemas) {
        for (std::size_t k = 0; k < dialogs_per_domain; ++k) {
            Dialog d;
            d.id = fmt::format("{}-{:04d}", dom.name, k);
            d.domain = dom.name;

            std::vector<std::size_t> order(dom.slots.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);

            State state;
            std::size_t next = 0;
            for (std::size_t t = 0; t < turns_per_dialog; ++t) {
                Turn turn;
                const std::size_t left = order.size() - next;
                if (left == 0) {
                    turn.utterance = "that is all thank you";
                } else {
                    const std::size_t take = std::min<std::size_t>(left, 1 + rng.below(3));
                    std::string text = t == 0 ? "i need a " + dom.name : "the " + dom.name + " should be";
                    for (std::size_t j = 0; j < take; ++j) {
                        const SlotSchema& s = dom.slots[order[next++]];
                        const std::string& v = s.values[rng.below(s.values.size())];
                        text += (j == 0 ? " " : " and ") + render(s, v);
                        state.emplace(dom.name, s.name, v);
                    }
                    turn.utterance = std::move(text);
                }
                turn.state = state;
                d.turns.push_back(std::move(turn));
            }
            out.push_back(std::move(d));
        }
    }
    return out;
}

void validate_dialog(const Dialog& d) {
    std::set<std::string> seen;
    const State* prev = nullptr;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
        for (const auto& tok : embed::whitespace_tokens(d.turns[t].utterance)) seen.insert(tok);
        const State& st = d.turns[t].state;
        if (prev)
            require(std::includes(st.begin(), st.end(), prev->begin(), prev->end()), ErrorKind::Format,
                    [&] { return fmt::format("dialog {}: turn {} state is not cumulative", d.id, t); });
        for (const auto& [dom, slot, value] : st)
            require(seen.count(value) != 0, ErrorKind::Format, [&] {
                return fmt::format("dialog {}: value '{}' of {}-{} missing from history at turn {}", d.id, value, dom,
                                   slot, t);
            });
        prev = &st;
    }
}

std::vector<std::string> high_freq_terms(const std::vector<Dialog>& dialogs, std::size_t top_k,
                                         const std::set<std::string>& stoplist) {
    require(top_k >= 1, ErrorKind::Argument, "top_k must be >= 1");
    require(!dialogs.empty(), ErrorKind::Argument, "empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& d : dialogs)
        for (const auto& t : d.turns)
            for (const auto& tok : embed::whitespace_tokens(t.utterance))
                if (!stoplist.count(tok)) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(top_k, ranked.size()); ++i) out.push_back(ranked[i].first);
    return out;
}

double jga(const std::vector<State>& preds, const std::vector<State>& golds) {
    require(preds.size() == golds.size(), ErrorKind::Argument,
            [&] { return fmt::format("jga: {} predictions vs {} gold turns", preds.size(), golds.size()); });
    require(!golds.empty(), ErrorKind::Argument, "jga: no turns");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) hits += preds[i] == golds[i];
    return static_cast<double>(hits) / static_cast<double>(golds.size());
}

double aga(const std::vector<State>& preds, const std::vector<State>& golds, bool skip_empty_gold) {
    require(preds.size() == golds.size(), ErrorKind::Argument,
            [&] { return fmt::format("aga: {} predictions vs {} gold turns", preds.size(), golds.size()); });
    require(!golds.empty(), ErrorKind::Argument, "aga: no turns");
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        const State& g = golds[i];
        const State& p = preds[i];
        if (g.empty()) {
            require(skip_empty_gold, ErrorKind::Numerical,
                    [&] { return fmt::format("aga undefined: gold state of turn {} is empty", i); });
            spdlog::info("aga: skipping turn {} with empty gold state", i);
            continue;
        }
        std::size_t inter = 0;
        std::set<std::pair<std::string, std::string>> wrong_slots;
        for (const auto& tr : p) {
            if (g.count(tr))
                ++inter;
            else
                wrong_slots.emplace(std::get<0>(tr), std::get<1>(tr));
        }
        total += (static_cast<double>(inter) - static_cast<double>(wrong_slots.size())) / static_cast<double>(g.size());
        ++used;
    }
    require(used > 0, ErrorKind::Numerical, "aga undefined: every gold state is empty");
    return total / static_cast<double>(used);
}

Splits zero_shot_split(const std::vector<Dialog>& dialogs, const SplitSpec& spec, RngStream& rng) {
    require(spec.dev_fraction >= 0.0 && spec.dev_fraction < 1.0, ErrorKind::Config, "dev fraction must lie in [0, 1)");
    require(std::find(spec.train_domains.begin(), spec.train_domains.end(), spec.heldout_domain) ==
                spec.train_domains.end(),
            ErrorKind::Config,
            [&] { return "held-out domain '" + spec.heldout_domain + "' is also a training domain"; });
    Splits out;
    std::vector<Dialog> rest;
    for (const auto& d : dialogs) {
        if (d.domain == spec.heldout_domain)
            out.test.push_back(d);
        else if (spec.train_domains.empty() ||
                 std::find(spec.train_domains.begin(), spec.train_domains.end(), d.domain) != spec.train_domains.end())
            rest.push_back(d);
    }
    require(!out.test.empty(), ErrorKind::Config,
            [&] { return "held-out domain '" + spec.heldout_domain + "' not in corpus"; });
    rng.shuffle(rest);
    const auto n_dev = static_cast<std::size_t>(std::llround(spec.dev_fraction * static_cast<double>(rest.size())));
    if (n_dev == 0) spdlog::warn("zero_shot_split: dev split is empty");
    out.dev.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_dev));
    out.train.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_dev), rest.end());

    for (const auto* part : {&out.train, &out.dev})
        for (const auto& d : *part)
            require(d.domain != spec.heldout_domain, ErrorKind::Contract, "held-out dialog leaked into training");
    return out;
}

Metrics evaluate_predictor(const Corpus& schemas, const std::vector<Dialog>& dialogs, const Predictor& predict,
                           bool skip_empty_gold) {
    require(!dialogs.empty(), ErrorKind::Argument, "evaluation split is empty");
    std::vector<State> preds, golds;
    for (const auto& d : dialogs) {
        const DomainSchema& dom = schemas.schema(d.domain);
        State running;
        for (std::size_t t = 0; t < d.turns.size(); ++t) {
            State pred;
            for (const auto& s : dom.slots) {
                std::string v = predict(d, t, s);
                if (v != kNone) pred.emplace(d.domain, s.name, std::move(v));
            }
            preds.push_back(std::move(pred));
            golds.push_back(d.turns[t].state);
        }
    }
    Metrics m;
    m.turns = golds.size();
    m.jga = jga(preds, golds);
    m.aga = aga(preds, golds, skip_empty_gold);
    return m;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json schema_to_json(const DomainSchema& d) {
    json slots = json::array();
    for (const auto& s : d.slots) {
        json j = {{"name", s.name}, {"question", s.question}, {"values", s.values}};
        if (!s.phrase.empty()) j["phrase"] = s.phrase;
        if (s.shared_group) j["shared_group"] = *s.shared_group;
        slots.push_back(std::move(j));
    }
    return {{"name", d.name}, {"slots", std::move(slots)}};
}

DomainSchema schema_from_json(const json& j) {
    DomainSchema d;
    d.name = j.at("name").get<std::string>();
    for (const auto& s : j.at("slots")) {
        SlotSchema slot;
        slot.name = s.at("name").get<std::string>();
        slot.question = s.at("question").get<std::string>();
        slot.values = s.at("values").get<std::vector<std::string>>();
        if (s.contains("phrase")) slot.phrase = s.at("phrase").get<std::string>();
        if (s.contains("shared_group") && !s.at("shared_group").is_null())
            slot.shared_group = s.at("shared_group").get<std::string>();
        d.slots.push_back(std::move(slot));
    }
    return d;
}

json parse_or_fail(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::vector<DomainSchema> parse_schemas(const std::string& json_text) {
    const json root = parse_or_fail(json_text, "schema file");
    const json& arr = root.is_object() ? root.at("schemas") : root;
    try {
        std::vector<DomainSchema> out;
        for (const auto& d : arr) out.push_back(schema_from_json(d));
        validate_schemas(out);
        return out;
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, std::string("schema file: ") + e.what());
    }
}

std::string schemas_json(const std::vector<DomainSchema>& schemas) {
    json arr = json::array();
    for (const auto& d : schemas) arr.push_back(schema_to_json(d));
    return json{{"schemas", std::move(arr)}}.dump(1);
}

std::string corpus_json(const Corpus& corpus) {
    json schemas = json::array();
    for (const auto& d : corpus.schemas) schemas.push_back(schema_to_json(d));
    json dialogs = json::array();
    for (const auto& d : corpus.dialogs) {
        json turns = json::array();
        for (const auto& t : d.turns) {
            json state = json::array();
            for (const auto& [dom, slot, value] : t.state) state.push_back({dom, slot, value});
            turns.push_back({{"utterance", t.utterance}, {"state", std::move(state)}});
        }
        dialogs.push_back({{"id", d.id}, {"domain", d.domain}, {"turns", std::move(turns)}});
    }
    return json{{"schemas", std::move(schemas)}, {"dialogs", std::move(dialogs)}}.dump(1) + "\n";
}

Corpus parse_corpus(const std::string& json_text) {
    const json root = parse_or_fail(json_text, "corpus file");
    Corpus c;
    try {
        for (const auto& d : root.at("schemas")) c.schemas.push_back(schema_from_json(d));
        for (const auto& jd : root.at("dialogs")) {
            Dialog d;
            d.id = jd.at("id").get<std::string>();
            d.domain = jd.at("domain").get<std::string>();
            for (const auto& jt : jd.at("turns")) {
                Turn t;
                t.utterance = jt.at("utterance").get<std::string>();
                for (const auto& tr : jt.at("state")) {
                    require(tr.is_array() && tr.size() == 3, ErrorKind::Format,
                            [&] { return "dialog " + d.id + ": state entries must be [domain, slot, value]"; });
                    t.state.emplace(tr[0].get<std::string>(), tr[1].get<std::string>(), tr[2].get<std::string>());
                }
                d.turns.push_back(std::move(t));
            }
            c.dialogs.push_back(std::move(d));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("corpus file: ") + e.what());
    }
    validate_schemas(c.schemas);
    for (const auto& d : c.dialogs) {
        const DomainSchema& s = c.schema(d.domain);
        for (const auto& t : d.turns)
            for (const auto& [dom, slot, value] : t.state) {
                require(dom == d.domain, ErrorKind::Format, [&] { return "dialog " + d.id + " mixes domains"; });
                (void)s.slot(slot);
            }
    }
    return c;
}

Corpus load_corpus(const std::string& path) { return parse_corpus(io::read_file(path)); }

std::vector<DomainSchema> builtin_schemas() {
    // Questions avoid the domain word so a prompt's embedding is driven by
    // what the slot asks for; train and taxi share each slot's values.
    const std::vector<std::string> arrive = {"08:30", "09:15", "10:45", "12:00", "13:30", "15:15", "17:45", "19:00"};
    const std::vector<std::string> leave = {"07:00", "08:05", "09:40", "11:20", "12:50", "14:10", "16:30", "18:25"};
    const std::vector<std::string> to = {"cambridge", "london", "ely", "norwich"};
    const std::vector<std::string> from = {"stansted", "bishops", "kings", "peterborough"};
    auto transport = [&](const std::string& dom) {
        return DomainSchema{
            dom,
            {
                {"arriveby", "what time should it arrive by?", "arriving by {value}", arrive,
                 std::string("arrive_time")},
                {"leaveat", "what time should it leave at?", "leaving at {value}", leave, std::string("leave_time")},
                {"destination", "where should it go to?", "going to {value}", to, std::string("destination")},
                {"departure", "where should it depart from?", "departing from {value}", from, std::string("departure")},
            }};
    };
    DomainSchema hotel{"hotel",
                       {
                           {"area",
                            "which area of town is preferred?",
                            "in the {value} area",
                            {"north", "south", "east", "west", "centre"},
                            std::nullopt},
                           {"stars",
                            "how many stars are required?",
                            "with {value} stars",
                            {"two", "three", "four", "five"},
                            std::nullopt},
                           {"pricerange",
                            "what price range is preferred?",
                            "in the {value} price range",
                            {"cheap", "moderate", "expensive"},
                            std::nullopt},
                       }};
    return {transport("train"), transport("taxi"), std::move(hotel)};
}

}  // namespace hicolora::dst
