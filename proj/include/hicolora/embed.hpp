#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hicolora/numkit.hpp"

namespace hicolora::embed {

enum class Provenance { File, Toy };

/// Unit-norm text embeddings keyed by exact string.
struct EmbeddingTable {
    std::size_t dim = 0;
    std::map<std::string, std::vector<double>> entries;
    Provenance provenance = Provenance::File;

    bool contains(const std::string& key) const { return entries.count(key) != 0; }
    const std::vector<double>& at(const std::string& key) const;
    /// Inserts after normalizing; throws if the length differs from dim.
    void insert(const std::string& key, std::vector<double> v);
};

/// Reads {"dim": n, "entries": {"key": [floats...]}}. Vectors are L2-normalized
/// on load; duplicate keys keep the last value and log a warning.
EmbeddingTable load_embeddings(const std::string& path);
EmbeddingTable parse_embeddings(const std::string& json_text);
std::string serialize_embeddings(const EmbeddingTable& table);
void save_embeddings(const EmbeddingTable& table, const std::string& path);

std::vector<std::string> whitespace_tokens(const std::string& text);

/// Seeded pseudo-random unit vector for a single token.
std::vector<double> token_vector(const std::string& token, std::size_t dim, std::uint64_t seed);

/// Bag-of-words embedding: normalized mean of the token vectors.
std::vector<double> toy_embed(const std::string& text, std::size_t dim, std::uint64_t seed);

struct ToyFallback {
    std::size_t dim;
    std::uint64_t seed;
};

std::string prompt_key(const std::string& domain, const std::string& slot, const std::string& question);

/// Exact lookup of "domain-slot: question", then the toy embedder when a
/// fallback is configured.
std::vector<double> embed_prompt(const std::string& domain, const std::string& slot, const std::string& question,
                                 const EmbeddingTable& table, const std::optional<ToyFallback>& fallback);

/// Lookup by key with optional toy fallback.
std::vector<double> lookup(const std::string& key, const EmbeddingTable& table,
                           const std::optional<ToyFallback>& fallback);

/// Explicit dimension adapter: drops trailing coordinates or zero-pads, then
/// renormalizes.
std::vector<double> truncate_or_pad(std::span<const double> v, std::size_t dim);

Matrix rows_of(const std::vector<std::vector<double>>& vectors);

}  // namespace hicolora::embed
