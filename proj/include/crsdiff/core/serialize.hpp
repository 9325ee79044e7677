#pragma once

// Versioned checkpoint container: magic, JSON header with a named shape
// table and free-form metadata, float32 parameter blob, and a trailing
// SHA-256 over everything before it.  Writes are atomic
// (temp file + rename).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crsdiff/core/hash.hpp"
#include "crsdiff/core/nn.hpp"

namespace crsdiff {

inline constexpr char kCkptMagic[4] = {'C', 'R', 'S', 'D'};
inline constexpr uint32_t kCkptVersion = 1;

inline void save_checkpoint(const std::string& path, const std::string& kind,
                            const nlohmann::json& meta, ParamCollector<float>& params) {
    nlohmann::json header;
    header["kind"] = kind;
    header["meta"] = meta;
    auto& table = header["params"] = nlohmann::json::array();
    int64_t blob_elems = 0;
    for (auto& it : params.items) {
        table.push_back({{"name", it.first}, {"shape", it.second->value.shape}});
        blob_elems += it.second->numel();
    }
    std::string hdr = header.dump();
    uint64_t hdr_len = hdr.size();
    uint64_t blob_len = static_cast<uint64_t>(blob_elems) * sizeof(float);

    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require<IoError>(f.good(), "cannot open checkpoint for writing: " + path);
        Sha256 h;
        auto put = [&](const void* p, size_t n) {
            f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
            h.update(p, n);
        };
        put(kCkptMagic, 4);
        put(&kCkptVersion, 4);
        put(&hdr_len, 8);
        put(hdr.data(), hdr.size());
        put(&blob_len, 8);
        for (auto& it : params.items)
            put(it.second->value.data(), static_cast<size_t>(it.second->numel()) * sizeof(float));
        std::string hex = h.hex();
        f.write(hex.data(), 64);
        require<IoError>(f.good(), "checkpoint write failed: " + path);
    }
    std::filesystem::rename(tmp, path);
}

// Loads `path` into `params`, whose collected names and shapes must match
// the stored table exactly.  Returns the metadata object.
inline nlohmann::json load_checkpoint(const std::string& path, const std::string& kind,
                                      ParamCollector<float>& params) {
    std::ifstream f(path, std::ios::binary);
    require<IoError>(f.good(), "cannot open checkpoint: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    require<IntegrityError>(bytes.size() > 4 + 4 + 8 + 8 + 64, "checkpoint truncated: " + path);
    require<IntegrityError>(std::memcmp(bytes.data(), kCkptMagic, 4) == 0,
                            "not a checkpoint file: " + path);
    uint32_t version;
    std::memcpy(&version, bytes.data() + 4, 4);
    require<IntegrityError>(version == kCkptVersion, "unsupported checkpoint version");
    std::string stored_hex(bytes.end() - 64, bytes.end());
    std::string actual = sha256_hex(bytes.data(), bytes.size() - 64);
    require<IntegrityError>(stored_hex == actual, "checkpoint digest mismatch: " + path);

    uint64_t hdr_len;
    std::memcpy(&hdr_len, bytes.data() + 8, 8);
    size_t off = 16;
    require<IntegrityError>(off + hdr_len <= bytes.size(), "checkpoint header truncated");
    nlohmann::json header = nlohmann::json::parse(std::string(bytes.data() + off, hdr_len));
    off += hdr_len;
    require<IntegrityError>(header.value("kind", "") == kind,
                            "checkpoint kind mismatch: expected " + kind + ", got " +
                                header.value("kind", "?"));
    uint64_t blob_len;
    std::memcpy(&blob_len, bytes.data() + off, 8);
    off += 8;
    require<IntegrityError>(off + blob_len + 64 == bytes.size(), "checkpoint blob size mismatch");

    const auto& table = header["params"];
    require<IntegrityError>(table.size() == params.items.size(),
                            "checkpoint parameter count mismatch");
    for (size_t i = 0; i < params.items.size(); ++i) {
        auto& it = params.items[i];
        require<IntegrityError>(table[i]["name"] == it.first,
                                "checkpoint parameter name mismatch: " + it.first);
        std::vector<int> shape = table[i]["shape"].get<std::vector<int>>();
        require<IntegrityError>(shape == it.second->value.shape,
                                "checkpoint shape mismatch for " + it.first);
        size_t n = static_cast<size_t>(it.second->numel()) * sizeof(float);
        require<IntegrityError>(off + n <= bytes.size() - 64, "checkpoint blob overrun");
        std::memcpy(it.second->value.data(), bytes.data() + off, n);
        off += n;
    }
    return header["meta"];
}

// Reads only the metadata object (no parameter verification).
inline nlohmann::json peek_checkpoint_meta(const std::string& path, std::string* kind_out = nullptr) {
    std::ifstream f(path, std::ios::binary);
    require<IoError>(f.good(), "cannot open checkpoint: " + path);
    char magic[4];
    uint32_t version;
    uint64_t hdr_len;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&hdr_len), 8);
    require<IntegrityError>(f.good() && std::memcmp(magic, kCkptMagic, 4) == 0 &&
                                version == kCkptVersion,
                            "not a checkpoint file: " + path);
    std::string hdr(hdr_len, '\0');
    f.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
    require<IntegrityError>(f.good(), "checkpoint header truncated: " + path);
    nlohmann::json header = nlohmann::json::parse(hdr);
    if (kind_out) *kind_out = header.value("kind", "");
    return header["meta"];
}

// Identity of a checkpoint file for parent-hash chains.
inline std::string checkpoint_hash(const std::string& path) { return sha256_file(path); }

}  // namespace crsdiff
