#include <doctest.h>

#include <algorithm>
#include <map>

#include "hicolora/dstsim.hpp"
#include "hicolora/error.hpp"

using namespace hicolora;
using namespace hicolora::dst;

namespace {

State state(std::initializer_list<Triple> t) { return State(t); }

}  // namespace

TEST_CASE("builtin schemas validate and share transport vocabularies") {
    const auto s = builtin_schemas();
    CHECK_NOTHROW(validate_schemas(s));
    const auto& train = s[0].name == "train" ? s[0] : s[1];
    const auto& taxi = s[0].name == "taxi" ? s[0] : s[1];
    REQUIRE(train.name == "train");
    REQUIRE(taxi.name == "taxi");
    for (const auto& slot : taxi.slots) {
        REQUIRE(slot.shared_group.has_value());
        const auto& other = train.slot(slot.name);
        CHECK(other.shared_group == slot.shared_group);
        CHECK(std::set<std::string>(slot.values.begin(), slot.values.end()) ==
              std::set<std::string>(other.values.begin(), other.values.end()));
    }
}

TEST_CASE("schema validation rejects a shared group with different vocabularies") {
    auto s = builtin_schemas();
    for (auto& d : s)
        if (d.name == "taxi") d.slots[0].values.pop_back();
    CHECK_THROWS_AS(validate_schemas(s), Error);

    auto empty = builtin_schemas();
    empty.back().slots[0].values.clear();
    CHECK_THROWS_AS(validate_schemas(empty), Error);
}

TEST_CASE("generated dialogs satisfy the state invariants") {
    const auto s = builtin_schemas();
    RngStream rng(5);
    const auto dialogs = generate_corpus(s, 4, 5, rng);
    CHECK(dialogs.size() == 4 * s.size());
    for (const auto& d : dialogs) {
        CHECK(d.turns.size() == 5);
        CHECK_NOTHROW(validate_dialog(d));
        for (std::size_t t = 1; t < d.turns.size(); ++t)
            CHECK(std::includes(d.turns[t].state.begin(), d.turns[t].state.end(), d.turns[t - 1].state.begin(),
                                d.turns[t - 1].state.end()));
    }
    RngStream again(5);
    CHECK(corpus_json({s, generate_corpus(s, 4, 5, again)}) == corpus_json({s, dialogs}));

    RngStream one(1);
    const auto minimal = generate_corpus(s, 1, 1, one);
    CHECK(minimal.size() == s.size());
    for (const auto& d : minimal) CHECK(!d.turns[0].state.empty());
}

TEST_CASE("validate_dialog catches broken states") {
    Dialog d{"x", "hotel", {{"with 4 stars", state({{"hotel", "stars", "4"}})}, {"ok", {}}}};
    CHECK_THROWS_AS(validate_dialog(d), Error);
    Dialog unseen{"y", "hotel", {{"hello", state({{"hotel", "stars", "4"}})}}};
    CHECK_THROWS_AS(validate_dialog(unseen), Error);
}

TEST_CASE("high frequency terms break ties lexicographically") {
    std::vector<Dialog> d = {{"a", "x", {{"b a c a", {}}, {"c b", {}}}}};
    CHECK(high_freq_terms(d, 2, {}) == std::vector<std::string>{"a", "b"});
    CHECK(high_freq_terms(d, 5, {"a"}) == std::vector<std::string>{"b", "c"});
}

TEST_CASE("jga and aga fixtures") {
    const Triple a{"hotel", "area", "north"}, b{"hotel", "stars", "4"}, c{"hotel", "pricerange", "cheap"};
    const Triple wrong_area{"hotel", "area", "south"};
    CHECK(jga({state({a, b})}, {state({a, b})}) == 1.0);
    CHECK(jga({state({a})}, {state({a, b})}) == 0.0);
    CHECK(jga({state({a}), state({a, b})}, {state({a}), state({a})}) == 0.5);

    // (|gold & pred| - |unique wrong slot names|) / |gold|
    CHECK(aga({state({a, b})}, {state({a, b})}) == 1.0);
    CHECK(aga({state({})}, {state({a, b})}) == 0.0);
    CHECK(aga({state({a, wrong_area})}, {state({a, b})}) == doctest::Approx(0.0));
    CHECK(aga({state({wrong_area, c, Triple{"hotel", "x", "1"}, Triple{"hotel", "y", "2"}})}, {state({a, b})}) ==
          doctest::Approx(-2.0));
    CHECK(aga({state({a})}, {state({a, b})}) == doctest::Approx(0.5));

    CHECK_THROWS_AS(aga({state({})}, {state({})}), Error);
    CHECK(aga({state({}), state({a})}, {state({}), state({a})}, true) == 1.0);
    CHECK_THROWS_AS(jga({}, {}), Error);
}

TEST_CASE("oracle and silent predictors") {
    const auto s = builtin_schemas();
    RngStream rng(2);
    const Corpus corpus{s, generate_corpus(s, 3, 3, rng)};
    const Predictor oracle = [](const Dialog& d, std::size_t t, const SlotSchema& slot) {
        for (const auto& [dom, name, value] : d.turns[t].state)
            if (name == slot.name) return value;
        return kNone;
    };
    const auto perfect = evaluate_predictor(corpus, corpus.dialogs, oracle);
    CHECK(perfect.jga == 1.0);
    CHECK(perfect.aga == 1.0);
    CHECK(perfect.turns == corpus.dialogs.size() * 3);
    const auto silent = evaluate_predictor(corpus, corpus.dialogs, [](auto&&...) { return kNone; });
    CHECK(silent.jga == 0.0);
    CHECK(silent.aga == 0.0);
}

TEST_CASE("zero-shot split") {
    const auto s = builtin_schemas();
    RngStream rng(3);
    const auto dialogs = generate_corpus(s, 10, 2, rng);
    RngStream r1(4);
    const auto sp = zero_shot_split(dialogs, {{}, "taxi", 0.1}, r1);
    CHECK(sp.test.size() == 10);
    for (const auto& d : sp.test) CHECK(d.domain == "taxi");
    CHECK(sp.dev.size() == 2);
    CHECK(sp.train.size() == 18);
    for (const auto* part : {&sp.train, &sp.dev})
        for (const auto& d : *part) CHECK(d.domain != "taxi");

    RngStream r2(4);
    const auto none = zero_shot_split(dialogs, {{}, "taxi", 0.0}, r2);
    CHECK(none.dev.empty());
    CHECK(none.train.size() == 20);

    RngStream r3(4);
    CHECK_THROWS_AS(zero_shot_split(dialogs, {{}, "restaurant", 0.1}, r3), Error);
    CHECK_THROWS_AS(zero_shot_split(dialogs, {{"taxi"}, "taxi", 0.1}, r3), Error);
    const auto only_hotel = zero_shot_split(dialogs, {{"hotel"}, "taxi", 0.0}, r3);
    for (const auto& d : only_hotel.train) CHECK(d.domain == "hotel");
}

TEST_CASE("schema and corpus JSON round-trip") {
    const auto s = builtin_schemas();
    CHECK(schemas_json(parse_schemas(schemas_json(s))) == schemas_json(s));
    RngStream rng(6);
    const Corpus c{s, generate_corpus(s, 2, 2, rng)};
    CHECK(corpus_json(parse_corpus(corpus_json(c))) == corpus_json(c));
    CHECK_THROWS_AS(parse_schemas("{\"schemas\": 3}"), Error);
    CHECK_THROWS_AS(parse_corpus("not json"), Error);
}
