// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Device runtime profiles: per-layer forward/backward times keyed by
// micro-batch slice, memory budgets and the shared-LAN link model, plus a
// deterministic synthetic generator that stands in for on-device calibration.
//
// Times are stored as integer microseconds. Everything downstream (planner
// phase sums, the event-driven simulator) does integer arithmetic on these
// values, which is what makes analytic-vs-simulated equality checks exact.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgetune/model_cost.hpp"
#include "edgetune/rng.hpp"

namespace edgetune {

struct ProfileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Link model
// ---------------------------------------------------------------------------

struct LinkProfile {
    double bandwidth_bps = 125e6;  // bytes per second (1000 Mbps default)
    double latency_ms = 0.2;       // per message

    std::int64_t latency_us() const { return std::llround(latency_ms * 1000.0); }

    void validate() const {
        if (!(bandwidth_bps > 0)) throw ProfileError("link bandwidth must be > 0");
        if (latency_ms < 0) throw ProfileError("link latency must be >= 0");
    }
};

// Pure serialization time of `bytes` onto the wire, in integer microseconds.
inline std::int64_t transfer_us(double bytes, const LinkProfile& link) {
    if (bytes <= 0) return 0;
    return std::llround(bytes / link.bandwidth_bps * 1e6);
}

// One point-to-point message: latency + bytes/bandwidth.
inline std::int64_t comm_us(double bytes, const LinkProfile& link) {
    return link.latency_us() + transfer_us(bytes, link);
}

inline double comm_time_ms(double bytes, const LinkProfile& link) {
    if (bytes < 0) throw ProfileError("comm_time: bytes must be >= 0");
    return static_cast<double>(comm_us(bytes, link)) / 1000.0;
}

// Ring allreduce of `bytes` across n devices: 2(n-1) rounds, each moving a
// 1/n chunk per device. Collapses to 2(n-1)/n * bytes/bw + 2(n-1)*latency.
inline std::int64_t ring_allreduce_us(double bytes, int n, const LinkProfile& link) {
    if (n <= 1) return 0;
    const std::int64_t per_round = transfer_us(bytes / n, link) + link.latency_us();
    return 2 * (n - 1) * per_round;
}

// Ring all-gather with per-device shard sizes; each round forwards the next
// shard along the ring, so a round lasts as long as its largest shard.
inline std::int64_t ring_allgather_us(const std::vector<double>& shard_bytes,
                                      const LinkProfile& link) {
    const int n = static_cast<int>(shard_bytes.size());
    if (n <= 1) return 0;
    std::int64_t total = 0;
    for (int round = 0; round < n - 1; ++round) {
        std::int64_t longest = 0;
        for (int dev = 0; dev < n; ++dev) {
            const int chunk = ((dev - round) % n + n) % n;
            longest = std::max(longest, transfer_us(shard_bytes[chunk], link));
        }
        total += longest + link.latency_us();
    }
    return total;
}

// Binary-tree broadcast: ceil(log2 n) rounds of the full payload.
inline std::int64_t tree_broadcast_us(double bytes, int n, const LinkProfile& link) {
    if (n <= 1) return 0;
    int rounds = 0;
    int covered = 1;
    while (covered < n) {
        covered *= 2;
        ++rounds;
    }
    return rounds * comm_us(bytes, link);
}

// ---------------------------------------------------------------------------
// Device profiles
// ---------------------------------------------------------------------------

struct LayerTiming {
    std::map<int, std::int64_t> fp_us;  // micro-batch slice -> microseconds
    std::map<int, std::int64_t> bp_us;
};

struct DeviceProfile {
    std::string device_id;
    std::int64_t memory_budget_bytes = 4 * kGiB;
    double compute_scale = 1.0;
    std::vector<LayerTiming> layers;

    std::int64_t fp_us(int layer, int beta) const { return lookup(layer, beta, true); }
    std::int64_t bp_us(int layer, int beta) const { return lookup(layer, beta, false); }

    double fp_ms(int layer, int beta) const { return fp_us(layer, beta) / 1000.0; }
    double bp_ms(int layer, int beta) const { return bp_us(layer, beta) / 1000.0; }

    bool covers(int layer, int beta) const {
        return layer >= 0 && layer < static_cast<int>(layers.size()) &&
               layers[layer].fp_us.count(beta) && layers[layer].bp_us.count(beta);
    }

private:
    std::int64_t lookup(int layer, int beta, bool fwd) const {
        if (layer < 0 || layer >= static_cast<int>(layers.size()))
            throw ProfileError("device '" + device_id + "': no timing for layer " +
                               std::to_string(layer));
        const auto& table = fwd ? layers[layer].fp_us : layers[layer].bp_us;
        auto it = table.find(beta);
        if (it == table.end())
            throw ProfileError("device '" + device_id + "': layer " + std::to_string(layer) +
                               " has no " + (fwd ? "fp" : "bp") + " entry for micro-batch slice " +
                               std::to_string(beta));
        return it->second;
    }
};

struct ProfileSet {
    std::vector<DeviceProfile> devices;  // file order defines the device ordering
    LinkProfile link;

    int num_devices() const { return static_cast<int>(devices.size()); }
    int num_layers() const { return devices.empty() ? 0 : static_cast<int>(devices[0].layers.size()); }

    void validate() const {
        if (devices.empty()) throw ProfileError("no devices");
        link.validate();
        const std::size_t layer_count = devices[0].layers.size();
        for (const auto& d : devices) {
            if (d.device_id.empty()) throw ProfileError("device with empty id");
            if (d.layers.size() != layer_count)
                throw ProfileError("device '" + d.device_id + "': expected " +
                                   std::to_string(layer_count) + " layers, got " +
                                   std::to_string(d.layers.size()));
            if (d.memory_budget_bytes < 0)
                throw ProfileError("device '" + d.device_id + "': negative memory budget");
            for (std::size_t l = 0; l < d.layers.size(); ++l) {
                if (d.layers[l].fp_us.empty() || d.layers[l].bp_us.empty())
                    throw ProfileError("device '" + d.device_id + "': layer " + std::to_string(l) +
                                       " has an empty timing table");
                for (const auto& [beta, t] : d.layers[l].fp_us)
                    if (t <= 0)
                        throw ProfileError("device '" + d.device_id + "': layer " +
                                           std::to_string(l) + " fp time must be > 0 at slice " +
                                           std::to_string(beta));
                for (const auto& [beta, t] : d.layers[l].bp_us)
                    if (t <= 0)
                        throw ProfileError("device '" + d.device_id + "': layer " +
                                           std::to_string(l) + " bp time must be > 0 at slice " +
                                           std::to_string(beta));
            }
        }
    }
};

// ---------------------------------------------------------------------------
// JSON schema (docs/profile_schema.md)
// ---------------------------------------------------------------------------

inline nlohmann::json profiles_to_json(const ProfileSet& p) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["link"] = {{"bandwidth_bytes_per_sec", p.link.bandwidth_bps},
                 {"latency_ms", p.link.latency_ms}};
    j["devices"] = nlohmann::json::array();
    for (const auto& d : p.devices) {
        nlohmann::json jd;
        jd["id"] = d.device_id;
        jd["memory_budget_bytes"] = d.memory_budget_bytes;
        jd["compute_scale"] = d.compute_scale;
        jd["layers"] = nlohmann::json::array();
        for (const auto& l : d.layers) {
            nlohmann::json jl;
            for (const auto& [beta, t] : l.fp_us) jl["fp_us"][std::to_string(beta)] = t;
            for (const auto& [beta, t] : l.bp_us) jl["bp_us"][std::to_string(beta)] = t;
            jd["layers"].push_back(jl);
        }
        j["devices"].push_back(jd);
    }
    return j;
}

inline ProfileSet profiles_from_json(const nlohmann::json& j) {
    ProfileSet p;
    if (j.value("schema_version", 1) != 1)
        throw ProfileError("unsupported profile schema version");
    if (!j.contains("devices") || !j["devices"].is_array() || j["devices"].empty())
        throw ProfileError("no devices");
    if (j.contains("link")) {
        p.link.bandwidth_bps = j["link"].value("bandwidth_bytes_per_sec", p.link.bandwidth_bps);
        p.link.latency_ms = j["link"].value("latency_ms", p.link.latency_ms);
    }
    for (const auto& jd : j["devices"]) {
        DeviceProfile d;
        d.device_id = jd.at("id").get<std::string>();
        d.memory_budget_bytes = jd.value("memory_budget_bytes", std::int64_t{4 * kGiB});
        d.compute_scale = jd.value("compute_scale", 1.0);
        for (const auto& jl : jd.at("layers")) {
            LayerTiming t;
            for (const auto& [k, v] : jl.at("fp_us").items())
                t.fp_us[std::stoi(k)] = v.get<std::int64_t>();
            for (const auto& [k, v] : jl.at("bp_us").items())
                t.bp_us[std::stoi(k)] = v.get<std::int64_t>();
            d.layers.push_back(std::move(t));
        }
        p.devices.push_back(std::move(d));
    }
    p.validate();
    return p;
}

inline ProfileSet load_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ProfileError("cannot open profile file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ProfileError("profile file '" + path + "' does not parse: " + e.what());
    }
    return profiles_from_json(j);
}

inline void save_profiles(const ProfileSet& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ProfileError("cannot write profile file '" + path + "'");
    out << profiles_to_json(p).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Synthetic profiles
// ---------------------------------------------------------------------------

struct SynthOptions {
    int beta_max = 16;                 // tables cover slices 1..beta_max
    std::int64_t seq_len = 128;        // calibration sequence length
    double ref_flops_per_us = 250000;  // 0.25 TFLOPS at compute_scale 1.0
    std::int64_t memory_budget_bytes = 4 * kGiB;
    double bandwidth_mbps = 1000;
    double latency_ms = 0.2;
};

// Deterministic for a fixed seed. Per-layer times are proportional to the
// model's per-layer FLOPs divided by the device's compute_scale, drawn from
// [1-het, 1+het]. Times scale exactly linearly in the micro-batch slice, so
// t(2*beta) == 2*t(beta) holds bitwise.
//
// The backward/forward ratio follows the fine-tuning technique: full
// fine-tuning back-propagates the whole backbone (2x), adapters/LoRA traverse
// it once plus their modules, and parallel adapters back-propagate only the
// side network, whose per-layer cost is far below the forward pass.
inline ProfileSet synthesize_profiles(const ModelSpec& spec, int n_devices, double heterogeneity,
                                      std::uint64_t rng_seed, SynthOptions opt = {}) {
    spec.validate();
    if (n_devices < 1) throw ProfileError("n_devices must be >= 1");
    if (heterogeneity < 0 || heterogeneity >= 1)
        throw ProfileError("heterogeneity must be in [0, 1)");

    const auto fwd_all = flops_estimate(spec, 1, opt.seq_len, /*cached=*/false);
    const double layer_fwd_flops = fwd_all.fwd_flops / spec.num_layers;
    const double layer_bwd_flops = fwd_all.bwd_flops / spec.num_layers;

    Rng rng(rng_seed);
    ProfileSet p;
    p.link.bandwidth_bps = opt.bandwidth_mbps * 1e6 / 8.0;
    p.link.latency_ms = opt.latency_ms;
    for (int i = 0; i < n_devices; ++i) {
        DeviceProfile d;
        d.device_id = "dev" + std::to_string(i);
        d.memory_budget_bytes = opt.memory_budget_bytes;
        d.compute_scale = heterogeneity == 0
                              ? 1.0
                              : rng.uniform(1.0 - heterogeneity, 1.0 + heterogeneity);
        const double rate = opt.ref_flops_per_us * d.compute_scale;
        // Per-sample integer baselines keep beta-scaling exact.
        const std::int64_t fp1 = std::max<std::int64_t>(1, std::llround(layer_fwd_flops / rate));
        const std::int64_t bp1 = std::max<std::int64_t>(1, std::llround(layer_bwd_flops / rate));
        for (int l = 0; l < spec.num_layers; ++l) {
            LayerTiming t;
            for (int beta = 1; beta <= opt.beta_max; ++beta) {
                t.fp_us[beta] = fp1 * beta;
                t.bp_us[beta] = bp1 * beta;
            }
            d.layers.push_back(std::move(t));
        }
        p.devices.push_back(std::move(d));
    }
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Tensor sizes
// ---------------------------------------------------------------------------

// Byte sizes of the tensors that move through the pipeline, derived from the
// model spec at a fixed sequence length. The layer-output activation and its
// gradient share a shape; what actually crosses a stage boundary depends on
// the technique (parallel adapters forward both b and a, but only the narrow
// side-network gradient flows back).
struct TensorSizes {
    ModelSpec spec;
    std::int64_t seq_len = 128;

    std::int64_t layer_activation_bytes(std::int64_t beta) const {
        return beta * seq_len * spec.hidden_size * spec.bytes_per_scalar;
    }
    std::int64_t layer_gradient_bytes(std::int64_t beta) const {
        return layer_activation_bytes(beta);  // same tensor shape
    }
    std::int64_t fwd_boundary_bytes(std::int64_t beta) const {
        std::int64_t width = spec.hidden_size;
        if (spec.technique == Technique::ParallelAdapters) width += spec.adapter_dim();
        return beta * seq_len * width * spec.bytes_per_scalar;
    }
    std::int64_t bwd_boundary_bytes(std::int64_t beta) const {
        const std::int64_t width = spec.technique == Technique::ParallelAdapters
                                       ? spec.adapter_dim()
                                       : spec.hidden_size;
        return beta * seq_len * width * spec.bytes_per_scalar;
    }
    std::int64_t stage_trainable(int first, int last) const {
        return stage_trainable_bytes(spec, first, last);
    }
};

inline TensorSizes make_tensor_sizes(const ModelSpec& spec, std::int64_t seq_len) {
    if (seq_len < 1) throw ProfileError("seq_len must be >= 1");
    return TensorSizes{spec, seq_len};
}

}  // namespace edgetune
