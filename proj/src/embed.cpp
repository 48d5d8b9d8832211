#include "hicolora/embed.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>
#include <nlohmann/json.hpp>

#include "hicolora/error.hpp"
#include "hicolora/io.hpp"

namespace hicolora::embed {

using nlohmann::json;

namespace {

// Vectors already unit length (to a few ulp) are stored verbatim so that a
// load/save cycle is bit-exact.
std::vector<double> unit(std::vector<double> v) {
    const double n = norm2(v);
    require(n > 0.0, ErrorKind::Argument, "zero vector cannot be normalized");
    if (std::abs(n - 1.0) <= 4e-16) return v;
    for (double& x : v) x /= n;
    return v;
}

}  // namespace

const std::vector<double>& EmbeddingTable::at(const std::string& key) const {
    auto it = entries.find(key);
    require(it != entries.end(), ErrorKind::Lookup, [&] { return "no embedding for key '" + key + "'"; });
    return it->second;
}

void EmbeddingTable::insert(const std::string& key, std::vector<double> v) {
    require(v.size() == dim, ErrorKind::Format, [&] {
        return "embedding '" + key + "' has length " + std::to_string(v.size()) + ", expected " + std::to_string(dim);
    });
    for (double x : v)
        require(std::isfinite(x), ErrorKind::Format, [&] { return "embedding '" + key + "' has a non-finite entry"; });
    require(norm2(v) > 0.0, ErrorKind::Format, [&] { return "embedding '" + key + "' is a zero vector"; });
    entries[key] = unit(std::move(v));
}

EmbeddingTable parse_embeddings(const std::string& json_text) {
    std::set<std::string> seen;
    std::vector<std::string> duplicates;
    json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::key && depth == 2) {
            const auto key = parsed.get<std::string>();
            if (!seen.insert(key).second) duplicates.push_back(key);
        }
        return true;
    };
    json doc;
    try {
        doc = json::parse(json_text, cb);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("embedding file is not valid JSON: ") + e.what());
    }
    for (const auto& d : duplicates) spdlog::warn("duplicate embedding key '{}': keeping the last value", d);
    require(doc.is_object() && doc.contains("dim") && doc.contains("entries"), ErrorKind::Format,
            "embedding file needs \"dim\" and \"entries\"");
    require(doc["dim"].is_number_integer() && doc["dim"].get<long long>() > 0, ErrorKind::Format,
            "embedding \"dim\" must be a positive integer");
    require(doc["entries"].is_object(), ErrorKind::Format, "embedding \"entries\" must be an object");

    EmbeddingTable table;
    table.dim = doc["dim"].get<std::size_t>();
    table.provenance = Provenance::File;
    for (const auto& [key, value] : doc["entries"].items()) {
        require(value.is_array(), ErrorKind::Format, [&] { return "embedding '" + key + "' is not an array"; });
        std::vector<double> v;
        v.reserve(value.size());
        for (const auto& x : value) {
            require(x.is_number(), ErrorKind::Format,
                    [&] { return "embedding '" + key + "' has a non-numeric entry"; });
            v.push_back(x.get<double>());
        }
        table.insert(key, std::move(v));
    }
    return table;
}

EmbeddingTable load_embeddings(const std::string& path) { return parse_embeddings(io::read_file(path)); }

std::string serialize_embeddings(const EmbeddingTable& table) {
    json doc;
    doc["dim"] = table.dim;
    doc["entries"] = json::object();
    for (const auto& [k, v] : table.entries) doc["entries"][k] = v;
    return doc.dump(1) + "\n";
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
    io::write_file_atomic(path, serialize_embeddings(table));
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    for (std::string tok; in >> tok;) out.push_back(tok);
    return out;
}

std::vector<double> token_vector(const std::string& token, std::size_t dim, std::uint64_t seed) {
    RngStream rng(splitmix64(seed) ^ fnv1a64(token));
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return normalized(v);
}

std::vector<double> toy_embed(const std::string& text, std::size_t dim, std::uint64_t seed) {
    require(dim >= 2, ErrorKind::Argument, "toy_embed needs dim >= 2");
    const auto tokens = whitespace_tokens(text);
    require(!tokens.empty(), ErrorKind::Argument, "toy_embed of empty text");
    if (tokens.size() == 1) return token_vector(tokens[0], dim, seed);
    std::vector<double> acc(dim, 0.0);
    for (const auto& t : tokens) {
        const auto v = token_vector(t, dim, seed);
        for (std::size_t i = 0; i < dim; ++i) acc[i] += v[i];
    }
    for (double& x : acc) x /= static_cast<double>(tokens.size());
    return normalized(acc);
}

std::string prompt_key(const std::string& domain, const std::string& slot, const std::string& question) {
    return domain + "-" + slot + ": " + question;
}

std::vector<double> lookup(const std::string& key, const EmbeddingTable& table,
                           const std::optional<ToyFallback>& fallback) {
    if (auto it = table.entries.find(key); it != table.entries.end()) return it->second;
    require(fallback.has_value(), ErrorKind::Lookup,
            [&] { return "no embedding for '" + key + "' and toy fallback is disabled"; });
    return toy_embed(key, fallback->dim, fallback->seed);
}

std::vector<double> embed_prompt(const std::string& domain, const std::string& slot, const std::string& question,
                                 const EmbeddingTable& table, const std::optional<ToyFallback>& fallback) {
    return lookup(prompt_key(domain, slot, question), table, fallback);
}

std::vector<double> truncate_or_pad(std::span<const double> v, std::size_t dim) {
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < std::min(dim, v.size()); ++i) out[i] = v[i];
    require(norm2(out) > 0.0, ErrorKind::Argument, "truncation left a zero vector");
    return normalized(out);
}

Matrix rows_of(const std::vector<std::vector<double>>& vectors) {
    require(!vectors.empty(), ErrorKind::Argument, "no vectors to stack");
    Matrix m(vectors.size(), vectors[0].size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        require(vectors[i].size() == m.cols(), ErrorKind::Argument, "vectors of differing length");
        std::copy(vectors[i].begin(), vectors[i].end(), m.row_span(i).begin());
    }
    return m;
}

}  // namespace hicolora::embed
