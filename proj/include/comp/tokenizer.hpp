#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "comp/errors.hpp"
#include "comp/model.hpp"
#include "comp/rng.hpp"

namespace comp {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot read " + path.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw IoError("failed reading " + path.string());
    return bytes;
}

/// Samples n_samples windows of seq_len bytes at seeded-uniform offsets.
/// Byte-level tokenization: every byte is its own token id.
inline Batch byte_tokenize(const std::vector<std::uint8_t>& corpus, std::size_t seq_len,
                           std::size_t n_samples, std::uint64_t seed) {
    if (corpus.size() < seq_len) {
        throw Error("corpus too short: " + std::to_string(corpus.size()) + " bytes < seq_len " +
                    std::to_string(seq_len));
    }
    Batch batch;
    batch.n_samples = n_samples;
    batch.seq_len = seq_len;
    batch.tokens.reserve(n_samples * seq_len);
    Rng rng(seed);
    const std::uint64_t span = corpus.size() - seq_len + 1;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::size_t off = static_cast<std::size_t>(rng.uniform_below(span));
        for (std::size_t i = 0; i < seq_len; ++i)
            batch.tokens.push_back(static_cast<int>(corpus[off + i]));
    }
    return batch;
}

}  // namespace comp
