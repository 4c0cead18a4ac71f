// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Persistent activation cache: per-sample serialized b_0..b_L tensor stacks
// with integrity checking, size accounting and lifecycle (populate on the
// first epoch, reload afterwards, clear when fine-tuning finishes).
//
// On-disk layout (documented byte-exactly in docs/cache_format.md):
//   <dir>/header.json   schema version, model fingerprint, tensor geometry,
//                       entry count, payload byte total
//   <dir>/entries.bin   fixed-size records, little-endian:
//                       u64 sample_id | u32 seq_len | u64 fnv1a64(payload) |
//                       payload: (L+1) tensors of seq_len x d doubles
// Records are fixed-size because (L, d, seq_len) are pinned in the header,
// which is what makes round-trips bit-exact and sizes predictable.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgetune/hash.hpp"
#include "edgetune/tensor.hpp"

namespace edgetune {

struct CacheError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CacheMismatchError : CacheError {
    using CacheError::CacheError;
};

struct CacheEntry {
    std::uint64_t sample_id = 0;
    std::int64_t seq_len = 0;
    std::vector<Tensor> tensors;  // b_0..b_L, each seq_len x d
};

struct CacheHeader {
    int schema_version = 1;
    std::string model_fingerprint;
    int num_tensors = 0;  // L+1
    std::int64_t hidden_size = 0;
    std::int64_t seq_len = 0;
    std::int64_t entry_count = 0;
    std::int64_t payload_bytes = 0;
};

// Stable id for a token sequence, so re-presented inputs reuse their entries.
inline std::uint64_t sample_id_for_tokens(const std::vector<int>& tokens) {
    std::vector<std::int64_t> canon(tokens.begin(), tokens.end());
    return sha256_prefix64(canon.data(), canon.size() * sizeof(std::int64_t));
}

class CacheStore {
public:
    CacheStore(std::string dir, std::string model_fingerprint, int num_tensors,
               std::int64_t hidden_size, std::int64_t seq_len)
        : dir_(std::move(dir)) {
        header_.model_fingerprint = std::move(model_fingerprint);
        header_.num_tensors = num_tensors;
        header_.hidden_size = hidden_size;
        header_.seq_len = seq_len;
        std::filesystem::create_directories(dir_);
        if (std::filesystem::exists(header_path())) {
            load_existing();
        } else {
            write_header();
        }
    }

    // Open an existing cache directory without a fingerprint expectation
    // (used by the report command).
    static CacheHeader read_header(const std::string& dir) {
        std::ifstream in(dir + "/header.json");
        if (!in) throw CacheError("cache header missing in '" + dir + "'");
        nlohmann::json j;
        in >> j;
        CacheHeader h;
        h.schema_version = j.at("schema_version").get<int>();
        h.model_fingerprint = j.at("model_fingerprint").get<std::string>();
        h.num_tensors = j.at("num_tensors").get<int>();
        h.hidden_size = j.at("hidden_size").get<std::int64_t>();
        h.seq_len = j.at("seq_len").get<std::int64_t>();
        h.entry_count = j.at("entry_count").get<std::int64_t>();
        h.payload_bytes = j.at("payload_bytes").get<std::int64_t>();
        return h;
    }

    const CacheHeader& header() const { return header_; }
    const std::string& directory() const { return dir_; }
    std::int64_t entry_count() const { return header_.entry_count; }

    bool contains(std::uint64_t sample_id) const { return offsets_.count(sample_id) > 0; }

    void put(const CacheEntry& entry) {
        if (static_cast<int>(entry.tensors.size()) != header_.num_tensors)
            throw CacheError("cache put: expected " + std::to_string(header_.num_tensors) +
                             " tensors, got " + std::to_string(entry.tensors.size()));
        for (const auto& t : entry.tensors)
            if (t.rows != header_.seq_len || t.cols != header_.hidden_size)
                throw CacheError("cache put: tensor shape does not match header geometry");
        if (entry.seq_len != header_.seq_len)
            throw CacheError("cache put: entry seq_len does not match header");
        if (contains(entry.sample_id)) return;  // same tokens, same frozen activations

        std::vector<double> payload;
        payload.reserve(payload_scalars());
        for (const auto& t : entry.tensors)
            payload.insert(payload.end(), t.data.begin(), t.data.end());
        const std::uint64_t checksum =
            fnv1a64(payload.data(), payload.size() * sizeof(double));

        std::ofstream out(entries_path(), std::ios::binary | std::ios::app);
        if (!out) throw CacheError("cannot open '" + entries_path() + "' for append");
        const std::int64_t offset = header_.entry_count * record_bytes();
        write_u64(out, entry.sample_id);
        write_u32(out, static_cast<std::uint32_t>(entry.seq_len));
        write_u64(out, checksum);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * sizeof(double)));
        if (!out) throw CacheError("short write to '" + entries_path() + "'");
        out.close();

        offsets_[entry.sample_id] = offset;
        header_.entry_count += 1;
        header_.payload_bytes += static_cast<std::int64_t>(payload.size() * sizeof(double));
        write_header();
    }

    std::optional<CacheEntry> get(std::uint64_t sample_id) const {
        auto it = offsets_.find(sample_id);
        if (it == offsets_.end()) return std::nullopt;
        std::ifstream in(entries_path(), std::ios::binary);
        if (!in) throw CacheError("cannot open '" + entries_path() + "'");
        in.seekg(it->second);
        CacheEntry e;
        e.sample_id = read_u64(in);
        const std::uint32_t n = read_u32(in);
        const std::uint64_t checksum = read_u64(in);
        e.seq_len = n;
        std::vector<double> payload(payload_scalars());
        in.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * sizeof(double)));
        if (!in) throw CacheError("short read from '" + entries_path() + "'");
        if (fnv1a64(payload.data(), payload.size() * sizeof(double)) != checksum)
            throw CacheError("cache entry " + std::to_string(sample_id) +
                             " failed its checksum (corrupt payload)");
        std::size_t pos = 0;
        for (int t = 0; t < header_.num_tensors; ++t) {
            Tensor tensor(header_.seq_len, header_.hidden_size);
            std::copy(payload.begin() + pos, payload.begin() + pos + tensor.size(),
                      tensor.data.begin());
            pos += tensor.size();
            e.tensors.push_back(std::move(tensor));
        }
        return e;
    }

    void clear() {
        std::error_code ec;
        std::filesystem::remove(entries_path(), ec);
        offsets_.clear();
        header_.entry_count = 0;
        header_.payload_bytes = 0;
        write_header();
    }

    // Total bytes on disk (header + records).
    std::int64_t file_bytes() const {
        std::int64_t total = 0;
        std::error_code ec;
        auto sz = std::filesystem::file_size(entries_path(), ec);
        if (!ec) total += static_cast<std::int64_t>(sz);
        sz = std::filesystem::file_size(header_path(), ec);
        if (!ec) total += static_cast<std::int64_t>(sz);
        return total;
    }

    // Integrity sweep: every record present, shaped and checksummed.
    bool verify() const {
        for (const auto& [id, off] : offsets_) {
            (void)off;
            try {
                if (!get(id)) return false;
            } catch (const CacheError&) {
                return false;
            }
        }
        return true;
    }

    std::int64_t record_bytes() const {
        return 8 + 4 + 8 + payload_scalars() * static_cast<std::int64_t>(sizeof(double));
    }

private:
    std::int64_t payload_scalars() const {
        return static_cast<std::int64_t>(header_.num_tensors) * header_.seq_len *
               header_.hidden_size;
    }

    std::string header_path() const { return dir_ + "/header.json"; }
    std::string entries_path() const { return dir_ + "/entries.bin"; }

    void write_header() const {
        nlohmann::json j;
        j["schema_version"] = header_.schema_version;
        j["model_fingerprint"] = header_.model_fingerprint;
        j["num_tensors"] = header_.num_tensors;
        j["hidden_size"] = header_.hidden_size;
        j["seq_len"] = header_.seq_len;
        j["entry_count"] = header_.entry_count;
        j["payload_bytes"] = header_.payload_bytes;
        std::ofstream out(header_path());
        if (!out) throw CacheError("cannot write '" + header_path() + "'");
        out << j.dump(2) << "\n";
    }

    void load_existing() {
        const CacheHeader on_disk = read_header(dir_);
        // Fingerprint safety: refuse before any tensor is served.
        if (on_disk.model_fingerprint != header_.model_fingerprint)
            throw CacheMismatchError(
                "cache in '" + dir_ + "' was populated against fingerprint " +
                on_disk.model_fingerprint + ", not " + header_.model_fingerprint);
        if (on_disk.num_tensors != header_.num_tensors ||
            on_disk.hidden_size != header_.hidden_size || on_disk.seq_len != header_.seq_len)
            throw CacheMismatchError("cache in '" + dir_ + "' has a different tensor geometry");
        header_ = on_disk;
        // Rebuild the id index by scanning record headers.
        std::ifstream in(entries_path(), std::ios::binary);
        for (std::int64_t i = 0; i < header_.entry_count; ++i) {
            const std::int64_t off = i * record_bytes();
            in.seekg(off);
            const std::uint64_t id = read_u64(in);
            if (!in) throw CacheError("cache index scan failed at record " + std::to_string(i));
            offsets_[id] = off;
        }
    }

    static void write_u64(std::ofstream& out, std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
    static void write_u32(std::ofstream& out, std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    static std::uint64_t read_u64(std::ifstream& in) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    static std::uint32_t read_u32(std::ifstream& in) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    std::string dir_;
    CacheHeader header_;
    std::map<std::uint64_t, std::int64_t> offsets_;
};

}  // namespace edgetune
