#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "hicolora/numkit.hpp"

namespace hicolora::dst {

struct SlotSchema {
    std::string name;
    std::string question;
    /// Utterance template with a "{value}" placeholder; defaults to "<name> {value}".
    std::string phrase;
    std::vector<std::string> values;
    std::optional<std::string> shared_group;
};

struct DomainSchema {
    std::string name;
    std::vector<SlotSchema> slots;

    const SlotSchema& slot(const std::string& name) const;
};

/// (domain, slot, value)
using Triple = std::tuple<std::string, std::string, std::string>;
using State = std::set<Triple>;

struct Turn {
    std::string utterance;
    State state;  // cumulative
};

struct Dialog {
    std::string id;
    std::string domain;
    std::vector<Turn> turns;
};

struct Corpus {
    std::vector<DomainSchema> schemas;
    std::vector<Dialog> dialogs;

    const DomainSchema& schema(const std::string& domain) const;
    bool has_domain(const std::string& domain) const;
};

/// Checks value vocabularies (nonempty, identical within a shared group) and
/// name uniqueness. Throws a Config error on violation.
void validate_schemas(const std::vector<DomainSchema>& schemas);

/// Template dialogs: each turn mentions 1-3 slots not yet filled; once every
/// slot is filled remaining turns carry no new information.
std::vector<Dialog> generate_corpus(const std::vector<DomainSchema>& schemas, std::size_t dialogs_per_domain,
                                    std::size_t turns_per_dialog, RngStream& rng);

/// Checks the cumulative-state and value-in-history invariants.
void validate_dialog(const Dialog& d);

/// Most frequent whitespace tokens of the utterances, ties broken
/// lexicographically.
std::vector<std::string> high_freq_terms(const std::vector<Dialog>& dialogs, std::size_t top_k,
                                         const std::set<std::string>& stoplist);

/// Fraction of turns whose predicted state equals the gold state.
double jga(const std::vector<State>& preds, const std::vector<State>& golds);

/// Mean over turns of (|gold & pred| - |unique slot names in pred - gold|) / |gold|.
/// Unclamped; empty gold turns throw unless `skip_empty_gold`.
double aga(const std::vector<State>& preds, const std::vector<State>& golds, bool skip_empty_gold = false);

struct SplitSpec {
    std::vector<std::string> train_domains;  // empty: every domain except the held-out one
    std::string heldout_domain;
    double dev_fraction = 0.1;
};

struct Splits {
    std::vector<Dialog> train;
    std::vector<Dialog> dev;
    std::vector<Dialog> test;
};

Splits zero_shot_split(const std::vector<Dialog>& dialogs, const SplitSpec& spec, RngStream& rng);

/// Predictor for one (dialog, turn, slot) query; returns a value or "none".
using Predictor = std::function<std::string(const Dialog&, std::size_t turn, const SlotSchema&)>;

struct Metrics {
    double jga = 0.0;
    double aga = 0.0;
    std::size_t turns = 0;
};

/// Predicts every slot of each dialog's domain schema per turn; "none"
/// omits the triple.
Metrics evaluate_predictor(const Corpus& schemas, const std::vector<Dialog>& dialogs, const Predictor& predict,
                           bool skip_empty_gold = false);

inline const std::string kNone = "none";

// JSON surfaces
std::vector<DomainSchema> parse_schemas(const std::string& json_text);
/// {"schemas": [...]}, readable by parse_schemas.
std::string schemas_json(const std::vector<DomainSchema>& schemas);
std::string corpus_json(const Corpus& corpus);
Corpus parse_corpus(const std::string& json_text);
Corpus load_corpus(const std::string& path);

/// Three-domain desk configuration: train and taxi share every slot's value
/// vocabulary (arriveby, leaveat, destination, departure); hotel is a venue.
std::vector<DomainSchema> builtin_schemas();

}  // namespace hicolora::dst
