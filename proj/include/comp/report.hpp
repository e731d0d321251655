#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "comp/errors.hpp"
#include "comp/scheduler.hpp"

namespace comp {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

/// FNV-1a 64-bit digest, reported as hex. Used to fingerprint inputs in run
/// manifests; not a cryptographic hash.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

inline std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

/// Digest of a whole checkpoint directory (manifest + blob).
inline std::string checkpoint_digest(const std::filesystem::path& dir) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char* name : {"manifest.json", "weights.bin"}) {
        std::ifstream in(dir / name, std::ios::binary);
        if (!in) throw IoError("cannot read " + (dir / name).string());
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        for (char c : bytes) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
    }
    return hex64(h);
}

/// Everything needed to reproduce a run. Embedded into every report; equal
/// manifests imply byte-equal reports. Wall-clock data deliberately lives in
/// a separate sidecar file so reports stay reproducible.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    nlohmann::ordered_json resolved_config = nlohmann::ordered_json::object();
    nlohmann::ordered_json input_digests = nlohmann::ordered_json::object();

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["tool_version"] = kToolVersion;
        j["command"] = command;
        j["seed"] = seed;
        j["resolved_config"] = resolved_config;
        j["input_digests"] = input_digests;
        return j;
    }
};

inline nlohmann::ordered_json to_json(const LayerScore& s) {
    nlohmann::ordered_json j;
    j["layer"] = s.layer;
    j["redundancy"] = s.redundancy;
    j["importance"] = s.importance;
    j["tokens_used"] = s.tokens_used;
    return j;
}

inline nlohmann::ordered_json to_json(const DenseRecord& d) {
    nlohmann::ordered_json j;
    j["dense"] = d.dense;
    j["in_dim"] = d.in_dim;
    j["out_dim"] = d.out_dim;
    j["pruned"] = d.pruned;
    j["cap"] = d.cap;
    j["variance"] = d.variance;
    j["reconstruction_rms"] = d.reconstruction_rms;
    j["kappa0"] = d.kappa0;
    j["importance_fallback"] = d.importance_fallback;
    j["tune_kept_binary"] = d.tune_kept_binary;
    j["tune_calls"] = d.tune_calls;
    return j;
}

inline nlohmann::ordered_json to_json(const LayerNeuronRecord& r) {
    nlohmann::ordered_json j;
    j["layer"] = r.layer_original;
    j["importance"] = r.importance;
    j["weight"] = r.weight;
    j["budget"] = r.budget;
    j["ratio"] = r.ratio;
    j["achieved"] = r.achieved;
    j["shortfall"] = r.shortfall;
    j["final_var_threshold"] = r.final_var_threshold;
    j["rounds"] = r.rounds;
    nlohmann::ordered_json denses = nlohmann::ordered_json::array();
    for (const auto& d : r.denses) denses.push_back(to_json(d));
    j["denses"] = denses;
    return j;
}

inline nlohmann::ordered_json to_json(const PruneReport& r, const RunManifest& manifest) {
    nlohmann::ordered_json j;
    j["schema_version"] = kReportSchemaVersion;
    j["manifest"] = manifest.to_json();
    j["strategy"] = r.strategy;
    j["input_policy"] = r.input_policy;
    j["target_ratio"] = r.target_ratio;
    j["removed_layers_requested"] = r.removed_layers_requested;
    j["removed_layers"] = r.removed_layers;
    j["params_total"] = r.params_total;
    j["removal_credit"] = r.removal_credit;
    j["neuron_budget_total"] = r.neuron_budget_total;
    j["neuron_pruned_total"] = r.neuron_pruned_total;
    j["achieved_ratio"] = r.achieved_ratio;
    j["shortfall"] = r.shortfall;

    nlohmann::ordered_json history = nlohmann::ordered_json::array();
    for (const auto& iteration : r.layer_phase.history) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (const auto& s : iteration) row.push_back(to_json(s));
        history.push_back(row);
    }
    j["layer_phase"] = {{"history", history},
                        {"removed", r.layer_phase.removed_original_indices}};

    nlohmann::ordered_json neuron = nlohmann::ordered_json::array();
    for (const auto& rec : r.neuron_phase) neuron.push_back(to_json(rec));
    j["neuron_phase"] = neuron;

    j["perplexity_before"] = r.perplexity_before;
    j["perplexity_after"] = r.perplexity_after;
    j["fidelity_kl"] = r.fidelity_kl;
    j["fidelity_logit_mse"] = r.fidelity_logit_mse;
    return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

/// Fixed 17-significant-digit formatting keeps CSV output reproducible.
inline std::string csv_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

}  // namespace comp
