#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "comp/errors.hpp"
#include "comp/model.hpp"

namespace comp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

inline constexpr int kCheckpointSchemaVersion = 1;

namespace detail {

struct TensorRef {
    std::string name;
    std::vector<std::size_t> shape;
    const double* data;
    double* mut = nullptr;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }
};

inline void collect_tensors(Model& m, std::vector<TensorRef>& out) {
    auto add_m = [&](std::string name, Matrix& mat) {
        out.push_back({std::move(name), {mat.rows(), mat.cols()}, mat.data(), mat.data()});
    };
    auto add_v = [&](std::string name, Vector& vec) {
        out.push_back({std::move(name), {vec.len()}, vec.data(), vec.data()});
    };
    add_m("embedding", m.embedding);
    add_m("pos_embedding", m.pos_embedding);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& layer = m.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        add_v(p + "ln1.scale", layer.ln1.scale);
        add_v(p + "ln1.shift", layer.ln1.shift);
        for (DenseLayer* d : layer.denses(m.config.ffn_kind)) {
            add_m(p + d->name + ".weight", d->weight);
            add_v(p + d->name + ".bias", d->bias);
            add_v(p + d->name + ".binary_mask", d->binary_mask);
            add_v(p + d->name + ".tuned_mask", d->tuned_mask);
        }
        add_v(p + "ln2.scale", layer.ln2.scale);
        add_v(p + "ln2.shift", layer.ln2.shift);
    }
    add_v("final_norm.scale", m.final_norm.scale);
    add_v("final_norm.shift", m.final_norm.shift);
    add_m("lm_head.weight", m.lm_head.weight);
    add_v("lm_head.bias", m.lm_head.bias);
}

inline std::size_t align8(std::size_t n) { return (n + 7) & ~std::size_t{7}; }

}  // namespace detail

/// Writes a checkpoint directory: manifest.json plus weights.bin holding the
/// concatenated row-major little-endian f32 tensors at 8-byte-aligned offsets.
inline void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    Model& m = const_cast<Model&>(model);
    std::vector<detail::TensorRef> tensors;
    detail::collect_tensors(m, tensors);

    nlohmann::ordered_json manifest;
    manifest["schema_version"] = kCheckpointSchemaVersion;
    nlohmann::ordered_json cfg;
    cfg["n_layers"] = model.config.n_layers;
    cfg["d_model"] = model.config.d_model;
    cfg["n_heads"] = model.config.n_heads;
    cfg["d_ff"] = model.config.d_ff;
    cfg["vocab"] = model.config.vocab;
    cfg["max_seq"] = model.config.max_seq;
    cfg["ffn_kind"] = to_string(model.config.ffn_kind);
    manifest["config"] = cfg;
    nlohmann::ordered_json origins = nlohmann::ordered_json::array();
    for (const auto& l : model.layers) origins.push_back(l.original_index);
    manifest["layer_origins"] = origins;

    std::ofstream blob(dir / "weights.bin", std::ios::binary);
    if (!blob) throw IoError("cannot write " + (dir / "weights.bin").string());

    nlohmann::ordered_json tlist = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    std::vector<float> buf;
    for (const auto& t : tensors) {
        const std::size_t bytes = t.count() * sizeof(float);
        buf.resize(t.count());
        for (std::size_t i = 0; i < t.count(); ++i) buf[i] = static_cast<float>(t.data[i]);
        blob.write(reinterpret_cast<const char*>(buf.data()),
                   static_cast<std::streamsize>(bytes));
        nlohmann::ordered_json entry;
        entry["name"] = t.name;
        entry["shape"] = t.shape;
        entry["dtype"] = "f32le";
        entry["offset"] = offset;
        entry["byte_len"] = bytes;
        tlist.push_back(entry);
        offset += bytes;
        const std::size_t padded = detail::align8(offset);
        for (std::size_t i = offset; i < padded; ++i) blob.put('\0');
        offset = padded;
    }
    manifest["tensors"] = tlist;
    blob.close();
    if (!blob) throw IoError("failed writing " + (dir / "weights.bin").string());

    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot write " + (dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";
    mf.close();
    if (!mf) throw IoError("failed writing " + (dir / "manifest.json").string());
}

inline Model load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw IoError("cannot read " + (dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const std::exception& e) {
        throw CheckpointError("malformed manifest: " + std::string(e.what()));
    }

    if (!manifest.contains("config") || !manifest.contains("tensors")) {
        throw CheckpointError("malformed manifest: missing config or tensors");
    }
    ModelConfig cfg;
    try {
        const auto& c = manifest.at("config");
        cfg.n_layers = c.at("n_layers").get<std::size_t>();
        cfg.d_model = c.at("d_model").get<std::size_t>();
        cfg.n_heads = c.at("n_heads").get<std::size_t>();
        cfg.d_ff = c.at("d_ff").get<std::size_t>();
        cfg.vocab = c.at("vocab").get<std::size_t>();
        cfg.max_seq = c.at("max_seq").get<std::size_t>();
        cfg.ffn_kind = ffn_kind_from_string(c.at("ffn_kind").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed manifest config: " + std::string(e.what()));
    }

    Rng zero(0);
    Model m = build_model(cfg, zero);
    if (manifest.contains("layer_origins")) {
        const auto& origins = manifest.at("layer_origins");
        if (origins.size() != m.layers.size())
            throw CheckpointError("layer_origins length mismatch");
        for (std::size_t i = 0; i < m.layers.size(); ++i)
            m.layers[i].original_index = origins[i].get<std::size_t>();
    }

    std::vector<detail::TensorRef> tensors;
    detail::collect_tensors(m, tensors);

    std::ifstream blob(dir / "weights.bin", std::ios::binary | std::ios::ate);
    if (!blob) throw IoError("cannot read " + (dir / "weights.bin").string());
    const std::size_t blob_size = static_cast<std::size_t>(blob.tellg());
    blob.seekg(0);

    const auto& tlist = manifest.at("tensors");
    if (tlist.size() != tensors.size()) {
        throw CheckpointError("manifest lists " + std::to_string(tlist.size()) +
                              " tensors, model needs " + std::to_string(tensors.size()));
    }
    std::size_t expected_offset = 0;
    std::vector<float> buf;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& entry = tlist[i];
        const std::string name = entry.at("name").get<std::string>();
        if (name != tensors[i].name) {
            throw CheckpointError("tensor order mismatch: expected " + tensors[i].name +
                                  ", found " + name);
        }
        if (entry.at("dtype").get<std::string>() != "f32le") {
            throw CheckpointError("tensor " + name + ": unsupported dtype");
        }
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != tensors[i].shape) {
            throw CheckpointError("tensor " + name + ": shape mismatch");
        }
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t byte_len = entry.at("byte_len").get<std::size_t>();
        if (byte_len != tensors[i].count() * sizeof(float)) {
            throw CheckpointError("tensor " + name + ": byte length mismatch");
        }
        if (offset % 8 != 0) {
            throw CheckpointError("tensor " + name + ": offset not 8-byte aligned");
        }
        if (offset < expected_offset) {
            throw CheckpointError("tensor " + name + ": overlapping offsets");
        }
        if (offset > detail::align8(expected_offset)) {
            throw CheckpointError("tensor " + name + ": gap before tensor");
        }
        if (offset + byte_len > blob_size) {
            throw CheckpointError("truncated tensor " + name);
        }
        expected_offset = offset + byte_len;

        buf.resize(tensors[i].count());
        blob.seekg(static_cast<std::streamoff>(offset));
        blob.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(byte_len));
        if (!blob) throw CheckpointError("truncated tensor " + name);
        for (std::size_t k = 0; k < buf.size(); ++k)
            tensors[i].mut[k] = static_cast<double>(buf[k]);
    }
    if (detail::align8(expected_offset) < blob_size) {
        throw CheckpointError("blob has " + std::to_string(blob_size - expected_offset) +
                              " trailing bytes beyond the manifest");
    }

    for (auto& layer : m.layers) {
        for (DenseLayer* d : layer.denses(m.config.ffn_kind)) {
            d->weight.ensure_finite("tensor " + d->name + ".weight");
            for (std::size_t j = 0; j < d->binary_mask.len(); ++j) {
                const double b = d->binary_mask[j];
                if (b != 0.0 && b != 1.0)
                    throw CheckpointError("tensor " + d->name + ".binary_mask: non-binary entry");
                if (b == 0.0 && d->tuned_mask[j] != 0.0)
                    throw CheckpointError("tensor " + d->name +
                                          ".tuned_mask: non-zero at pruned position");
            }
        }
    }
    return m;
}

}  // namespace comp
