#include "hicolora/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hicolora/error.hpp"
#include "hicolora/io.hpp"

namespace hicolora::ckpt {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::uint64_t parse_hex(const std::string& s) {
    require(s.size() == 16, ErrorKind::Format, [&] { return "bad hash '" + s + "'"; });
    return std::stoull(s, nullptr, 16);
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r)
        rows.push_back(std::vector<double>(m.row_span(r).begin(), m.row_span(r).end()));
    return rows;
}

Matrix matrix_from(const json& j, std::size_t cols) {
    require(j.is_array() && !j.empty(), ErrorKind::Format, "centroids must be a nonempty array");
    Matrix m(j.size(), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto row = j[r].get<std::vector<double>>();
        require(row.size() == cols, ErrorKind::Format, "centroid row has the wrong width");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c];
    }
    return m;
}

std::string encode_blob(const std::vector<Tensor>& tensors) {
    std::string out;
    for (const auto& t : tensors)
        for (double v : t.value.data()) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
        }
    return out;
}

double decode_f32(const std::string& blob, std::size_t index) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[4 * index + b])) << (8 * b);
    return static_cast<double>(std::bit_cast<float>(bits));
}

std::vector<Tensor> model_tensors(const model::Model& m) {
    const auto layout = model::param_layout(m);
    const auto flat = model::flatten_params(m);
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < layout.size(); ++i) out.push_back({layout[i].name, flat[i]});
    return out;
}

std::string merged_name(std::size_t b, std::size_t p) {
    return fmt::format("block{}.{}.merged", b, model::kProjNames[p]);
}
std::string bias_name(std::size_t prompt, std::size_t b, std::size_t p) {
    return fmt::format("prompt{}.block{}.{}.bias", prompt, b, model::kProjNames[p]);
}

const Matrix& find(const std::vector<Tensor>& tensors, const std::string& name) {
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw Error(ErrorKind::Format, "checkpoint lacks tensor " + name);
}

}  // namespace

std::string to_string(Kind k) { return k == Kind::Model ? "model" : "merged"; }

std::uint64_t cluster_hash(const cluster::JointClusterModel& cm) { return fnv1a64(cluster::manifest_json(cm)); }

Skeleton skeleton_of(const model::Model& m, const pipeline::RunConfig& cfg,
                     const std::vector<dst::DomainSchema>& schemas, std::uint64_t hash) {
    Skeleton s;
    s.config = cfg;
    s.schemas = schemas;
    s.vocab.assign(m.vocab.tokens().begin() + 2, m.vocab.tokens().end());
    s.terms = m.terms;
    s.domain_centroids = m.domain_centroids;
    s.slot_centroids = m.slot_centroids;
    s.cluster_hash = hash;
    return s;
}

model::Model rebuild(const Skeleton& s) {
    return model::build_model(pipeline::encoder_config(s.config), pipeline::init_spec(s.config), s.schemas, s.vocab,
                              s.terms, s.domain_centroids, s.slot_centroids);
}

void save(const std::string& dir, Kind kind, const Skeleton& s, const std::vector<Tensor>& tensors) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, [&] { return "cannot create " + dir + ": " + ec.message(); });

    const std::string blob = encode_blob(tensors);
    json entries = json::array();
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        entries.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}, {"offset", offset}});
        offset += t.value.size();
    }
    const json manifest = {
        {"format", "hicolora-checkpoint"},
        {"version", kVersion},
        {"kind", to_string(kind)},
        {"config", json::parse(pipeline::config_json(s.config))},
        {"cluster_manifest_fnv", hex(s.cluster_hash)},
        {"schemas", json::parse(dst::schemas_json(s.schemas))["schemas"]},
        {"vocab", s.vocab},
        {"terms", s.terms},
        {"domain_centroids", matrix_json(s.domain_centroids)},
        {"slot_centroids", matrix_json(s.slot_centroids)},
        {"tensors", std::move(entries)},
        {"blob_floats", offset},
        {"blob_fnv", hex(fnv1a64(blob))},
    };
    io::write_file_atomic((fs::path(dir) / kBlobFile).string(), blob);
    io::write_file_atomic((fs::path(dir) / kManifestFile).string(), manifest.dump(1) + "\n");
}

Loaded load(const std::string& dir, std::optional<std::uint64_t> expected_cluster_hash) {
    const auto manifest_path = (fs::path(dir) / kManifestFile).string();
    const std::string text = io::read_file(manifest_path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, manifest_path + ": " + e.what());
    }
    try {
        require(j.value("format", "") == "hicolora-checkpoint", ErrorKind::Format,
                [&] { return manifest_path + " is not a checkpoint manifest"; });
        require(j.at("version").get<int>() == kVersion, ErrorKind::Format,
                [&] { return "unsupported checkpoint version " + j.at("version").dump(); });
        Loaded out;
        const auto kind = j.at("kind").get<std::string>();
        require(kind == "model" || kind == "merged", ErrorKind::Format, [&] { return "unknown kind " + kind; });
        out.kind = kind == "model" ? Kind::Model : Kind::Merged;

        auto& s = out.skeleton;
        s.config = pipeline::parse_config(j.at("config").dump());
        s.schemas = dst::parse_schemas(j.at("schemas").dump());
        s.vocab = j.at("vocab").get<std::vector<std::string>>();
        s.terms = j.at("terms").get<std::vector<std::string>>();
        const std::size_t d = s.config.encoder.hidden_dim;
        s.domain_centroids = matrix_from(j.at("domain_centroids"), d);
        s.slot_centroids = matrix_from(j.at("slot_centroids"), d);
        s.cluster_hash = parse_hex(j.at("cluster_manifest_fnv").get<std::string>());
        if (expected_cluster_hash)
            require(*expected_cluster_hash == s.cluster_hash, ErrorKind::Config, [&] {
                return fmt::format("cluster manifest hash {} does not match checkpoint {}", hex(*expected_cluster_hash),
                                   hex(s.cluster_hash));
            });

        const std::string blob = io::read_file((fs::path(dir) / kBlobFile).string());
        const auto floats = j.at("blob_floats").get<std::size_t>();
        require(blob.size() == 4 * floats, ErrorKind::Format,
                [&] { return fmt::format("blob holds {} bytes, manifest expects {}", blob.size(), 4 * floats); });
        require(fnv1a64(blob) == parse_hex(j.at("blob_fnv").get<std::string>()), ErrorKind::Format,
                "blob hash does not match the manifest");
        for (const auto& e : j.at("tensors")) {
            const auto shape = e.at("shape").get<std::vector<std::size_t>>();
            const auto offset = e.at("offset").get<std::size_t>();
            require(shape.size() == 2 && offset + shape[0] * shape[1] <= floats, ErrorKind::Format,
                    [&] { return "tensor " + e.at("name").get<std::string>() + " lies outside the blob"; });
            Matrix m(shape[0], shape[1]);
            for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = decode_f32(blob, offset + i);
            out.tensors.push_back({e.at("name").get<std::string>(), std::move(m)});
        }
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, manifest_path + ": " + e.what());
    }
}

void save_model(const std::string& dir, const model::Model& m, const Skeleton& s) {
    save(dir, Kind::Model, s, model_tensors(m));
}

model::Model load_model(const std::string& dir, std::optional<std::uint64_t> expected_cluster_hash) {
    auto l = load(dir, expected_cluster_hash);
    require(l.kind == Kind::Model, ErrorKind::Config, [&] { return dir + " holds a merged checkpoint"; });
    auto m = rebuild(l.skeleton);
    const auto layout = model::param_layout(m);
    require(layout.size() == l.tensors.size(), ErrorKind::Format, [&] {
        return fmt::format("checkpoint has {} tensors, model expects {}", l.tensors.size(), layout.size());
    });
    std::vector<Matrix> flat;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& t = l.tensors[i];
        require(t.name == layout[i].name && t.value.rows() == layout[i].rows && t.value.cols() == layout[i].cols,
                ErrorKind::Format, [&] { return "tensor " + t.name + " does not match " + layout[i].name; });
        flat.push_back(t.value);
    }
    model::assign_params(m, flat);
    return m;
}

void save_merged(const std::string& dir, const model::MergedModel& mm, const Skeleton& s) {
    std::vector<Tensor> tensors{{"head.w", mm.frozen.head_w}, {"head.b", mm.frozen.head_b}};
    for (std::size_t b = 0; b < mm.w_merged.size(); ++b)
        for (std::size_t p = 0; p < 4; ++p)
            if (mm.w_merged[b][p]) tensors.push_back({merged_name(b, p), *mm.w_merged[b][p]});
    for (std::size_t i = 0; i < mm.bias.size(); ++i)
        for (std::size_t b = 0; b < mm.bias[i].size(); ++b)
            for (std::size_t p = 0; p < 4; ++p)
                if (mm.bias[i][b][p]) tensors.push_back({bias_name(i, b, p), *mm.bias[i][b][p]});
    save(dir, Kind::Merged, s, tensors);
}

model::MergedModel load_merged(const std::string& dir, std::optional<std::uint64_t> expected_cluster_hash) {
    auto l = load(dir, expected_cluster_hash);
    require(l.kind == Kind::Merged, ErrorKind::Config, [&] { return dir + " holds an unmerged checkpoint"; });
    model::MergedModel mm;
    mm.frozen = rebuild(l.skeleton);
    mm.frozen.head_w = find(l.tensors, "head.w");
    mm.frozen.head_b = find(l.tensors, "head.b");
    const auto layers = mm.frozen.adapted_layers();
    mm.w_merged.resize(mm.frozen.blocks.size());
    mm.bias.assign(mm.frozen.prompts.size(), decltype(mm.w_merged)(mm.frozen.blocks.size()));
    for (const auto& [b, proj] : layers) {
        const auto p = static_cast<std::size_t>(proj);
        mm.w_merged[b][p] = find(l.tensors, merged_name(b, p));
        for (std::size_t i = 0; i < mm.bias.size(); ++i) mm.bias[i][b][p] = find(l.tensors, bias_name(i, b, p));
    }
    for (auto& blk : mm.frozen.blocks)
        for (auto& a : blk.adapted) a.reset();
    return mm;
}

Matrix round_f32(const Matrix& m) {
    Matrix out = m;
    for (auto& v : out.data()) v = static_cast<double>(static_cast<float>(v));
    return out;
}

model::Model round_f32(model::Model m) {
    auto flat = model::flatten_params(m);
    for (auto& t : flat) t = round_f32(t);
    model::assign_params(m, flat);
    return m;
}

model::MergedModel round_f32(model::MergedModel mm) {
    mm.frozen.head_w = round_f32(mm.frozen.head_w);
    mm.frozen.head_b = round_f32(mm.frozen.head_b);
    for (auto& blk : mm.w_merged)
        for (auto& w : blk)
            if (w) w = round_f32(*w);
    for (auto& per_prompt : mm.bias)
        for (auto& blk : per_prompt)
            for (auto& w : blk)
                if (w) w = round_f32(*w);
    return mm;
}

}  // namespace hicolora::ckpt
