#pragma once

// Checkpoint directory layout:
//
//   manifest.json  model hyperparameters, tensor names/shapes/offsets,
//                  dataset normalisation, config echo, format version
//   tensors.bin    little-endian f64, row-major, tensors concatenated in
//                  manifest order; entry i occupies exactly numel(shape_i)·8 bytes

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/data.hpp"
#include "d2v/errors.hpp"
#include "d2v/model.hpp"
#include "d2v/tensor.hpp"

namespace d2v {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "tensors.bin";

struct Checkpoint {
    ModelParams params;
    NormStats norm;  // dataset-level standardisation; empty means identity
    std::vector<std::string> channel_names;
    std::int64_t step_seconds = 0;
    bool lunar_table = false;  // whether lunar features were table-driven in training
    nlohmann::json config = nlohmann::json::object();
};

inline nlohmann::json model_config_json(const ModelConfig& c) {
    return {{"seq_len", c.seq_len},
            {"channels", c.channels},
            {"hidden", c.hidden},
            {"frequencies", c.frequencies},
            {"ff_hidden", c.ff_hidden},
            {"embedding", std::string(to_string(c.embedding))},
            {"head", std::string(to_string(c.head))},
            {"linear_horizon", c.linear_horizon}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.seq_len = j.at("seq_len").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.frequencies = j.at("frequencies").get<std::size_t>();
    c.ff_hidden = j.at("ff_hidden").get<std::size_t>();
    c.embedding = parse_embedding_kind(j.at("embedding").get<std::string>());
    c.head = parse_head_kind(j.at("head").get<std::string>());
    c.linear_horizon = j.at("linear_horizon").get<std::size_t>();
    c.validate();
    return c;
}

inline nlohmann::json manifest_json(const Checkpoint& ck) {
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : ck.params.tensors) {
        tensors.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}});
        offset += t.value.size() * 8;
    }
    return {{"format", "d2vformer-checkpoint"},
            {"version", kCheckpointVersion},
            {"model", model_config_json(ck.params.config)},
            {"tensors", tensors},
            {"blob", kBlobFile},
            {"blob_bytes", offset},
            {"normalization", {{"mean", ck.norm.mean}, {"std", ck.norm.std}}},
            {"channels", ck.channel_names},
            {"step_seconds", ck.step_seconds},
            {"lunar_table", ck.lunar_table},
            {"config", ck.config}};
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream m(dir / kManifestFile, std::ios::binary | std::ios::trunc);
        if (!m) throw ValidationError("cannot write " + (dir / kManifestFile).string());
        m << manifest_json(ck).dump(2) << '\n';
    }
    std::ofstream b(dir / kBlobFile, std::ios::binary | std::ios::trunc);
    if (!b) throw ValidationError("cannot write " + (dir / kBlobFile).string());
    for (const auto& t : ck.params.tensors) io::write_values(b, t.value.data());
    if (!b) throw ValidationError("failed writing " + (dir / kBlobFile).string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream m(dir / kManifestFile, std::ios::binary);
    if (!m) throw ValidationError("no checkpoint manifest at " + (dir / kManifestFile).string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(m);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
    }
    Checkpoint ck;
    try {
        if (j.at("format").get<std::string>() != "d2vformer-checkpoint") throw ValidationError("not a d2vformer checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) {
            throw ValidationError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
        }
        ck.params.config = model_config_from_json(j.at("model"));
        ck.norm.mean = j.at("normalization").at("mean").get<std::vector<double>>();
        ck.norm.std = j.at("normalization").at("std").get<std::vector<double>>();
        ck.channel_names = j.at("channels").get<std::vector<std::string>>();
        ck.step_seconds = j.at("step_seconds").get<std::int64_t>();
        ck.lunar_table = j.at("lunar_table").get<bool>();
        ck.config = j.at("config");

        std::ifstream b(dir / j.at("blob").get<std::string>(), std::ios::binary);
        if (!b) throw ValidationError("missing checkpoint blob in " + dir.string());
        std::uint64_t expected = 0;
        for (const auto& e : j.at("tensors")) {
            const Shape shape = e.at("shape").get<Shape>();
            if (e.at("offset").get<std::uint64_t>() != expected) {
                throw ValidationError("checkpoint tensor '" + e.at("name").get<std::string>() + "' has a bad offset");
            }
            const std::size_t n = numel(shape);
            ck.params.tensors.push_back({e.at("name").get<std::string>(), Tensor(shape, io::read_values(b, n), true)});
            expected += n * 8;
        }
        if (b.peek() != std::char_traits<char>::eof()) throw ValidationError("checkpoint blob has trailing bytes");
        if (expected != j.at("blob_bytes").get<std::uint64_t>()) throw ValidationError("checkpoint blob size mismatch");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint manifest: ") + e.what());
    }

    const auto layout = parameter_layout(ck.params.config);
    if (layout.size() != ck.params.tensors.size()) throw ValidationError("checkpoint tensors do not match model layout");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (layout[i].first != ck.params.tensors[i].name || layout[i].second != ck.params.tensors[i].value.shape()) {
            throw ValidationError("checkpoint tensor '" + ck.params.tensors[i].name + "' does not match model layout");
        }
    }
    if (!ck.norm.mean.empty() &&
        (ck.norm.mean.size() != ck.params.config.channels || ck.norm.std.size() != ck.params.config.channels)) {
        throw ValidationError("checkpoint normalisation does not match channel count");
    }
    return ck;
}

}  // namespace d2v
