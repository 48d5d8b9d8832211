#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hicolora/cluster.hpp"
#include "hicolora/model.hpp"
#include "hicolora/pipeline.hpp"

namespace hicolora::ckpt {

inline constexpr int kVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "params.bin";

enum class Kind { Model, Merged };
std::string to_string(Kind k);

/// FNV-1a of the canonical cluster manifest text.
std::uint64_t cluster_hash(const cluster::JointClusterModel& cm);

/// Everything needed to rebuild the frozen parts of a model.
struct Skeleton {
    pipeline::RunConfig config;
    std::vector<dst::DomainSchema> schemas;
    std::vector<std::string> vocab;  // without the special tokens
    std::vector<std::string> terms;
    Matrix domain_centroids;
    Matrix slot_centroids;
    std::uint64_t cluster_hash = 0;
};

Skeleton skeleton_of(const model::Model& m, const pipeline::RunConfig& cfg,
                     const std::vector<dst::DomainSchema>& schemas, std::uint64_t cluster_hash);
/// Deterministic rebuild: backbone, vocabulary, prompts and initialized adapters.
model::Model rebuild(const Skeleton& s);

struct Tensor {
    std::string name;
    Matrix value;
};

/// Writes params.bin (little-endian float32, row-major, in tensor order), then
/// manifest.json, each through write-then-rename. The manifest records the
/// blob hash, so a blob without its matching manifest is refused on load.
void save(const std::string& dir, Kind kind, const Skeleton& s, const std::vector<Tensor>& tensors);

struct Loaded {
    Kind kind;
    Skeleton skeleton;
    std::vector<Tensor> tensors;  // promoted to double
};

/// Refuses (Format) a blob whose hash or size disagrees with the manifest and
/// (Config) a cluster hash that differs from `expected_cluster_hash`.
Loaded load(const std::string& dir, std::optional<std::uint64_t> expected_cluster_hash = std::nullopt);

void save_model(const std::string& dir, const model::Model& m, const Skeleton& s);
model::Model load_model(const std::string& dir, std::optional<std::uint64_t> expected_cluster_hash = std::nullopt);

void save_merged(const std::string& dir, const model::MergedModel& mm, const Skeleton& s);
model::MergedModel load_merged(const std::string& dir,
                               std::optional<std::uint64_t> expected_cluster_hash = std::nullopt);

/// Rounds every entry through float32, as a save/load cycle would.
Matrix round_f32(const Matrix& m);
model::Model round_f32(model::Model m);
model::MergedModel round_f32(model::MergedModel mm);

}  // namespace hicolora::ckpt
