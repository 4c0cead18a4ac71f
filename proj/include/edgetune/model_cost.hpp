// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Architecture descriptors and the analytic cost models (parameters, FLOPs,
// memory, cache storage) shared by the planner, the schedule simulator and the
// CLI reports.
//
// Conventions, pinned here once:
//  * Encoder-decoder models are flattened into a single layer list of length
//    `num_layers`; `num_decoder_layers` of them carry an extra cross-attention
//    block whose parameters are smeared uniformly across all layers, so the
//    per-layer constant stays uniform for partitioning.
//  * Per-layer matmul parameters: attention 4*d^2 (+4*d^2 cross-attention
//    share), feed-forward 2*ffn_mult*d^2. Embeddings vocab*d are owned by the
//    first pipeline stage. Biases are counted for memory, never for FLOPs.
//  * FLOPs use the 2*params*tokens rule over matmul parameters. Attention
//    score/context products (4*seq^2*d per attention block) are an optional
//    term, off by default. Embedding lookups are not counted.
//  * Backward cost = one forward-equivalent for propagating input gradients
//    through every traversed layer, plus one forward-equivalent for weight
//    gradients of trainable modules. Full fine-tuning traverses and trains the
//    backbone (2x); Adapters/LoRA traverse it but train only the inserted
//    modules (1x backbone + 2x modules); parallel adapters never traverse it
//    (2x side network only).
//  * Optimizer state is 2x trainable bytes (Adam moments). Table-style
//    reports fold it into the activation column; the breakdown keeps it as
//    its own field.
//  * Retained-activation bytes per token, by technique (m = d/k bottleneck,
//    r = d/k side width, A = insertion points):
//      full:       (4 + 2*ffn_mult) * d            per layer
//      adapters:   (1 + ffn_mult) * d + d + 2*m    per layer
//      lora:       (1 + ffn_mult) * d + 2*d + 4*rank per layer
//      parallel:   (A+1)*(d+r) + 2*A*r             whole model
//    The parallel-adapters count enumerates exactly the tensors the toy
//    training loop keeps for backward (cached b_i inputs, the returned a_i
//    chain, and the two per-adapter bottleneck intermediates); the adapters
//    census asserts the equality. Pooled head tensors are O(d) workspace and
//    are excluded on both sides.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace edgetune {

constexpr std::int64_t kGiB = 1ll << 30;

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Technique { Full, Adapters, LoRA, ParallelAdapters };

inline std::string to_string(Technique t) {
    switch (t) {
        case Technique::Full: return "full";
        case Technique::Adapters: return "adapters";
        case Technique::LoRA: return "lora";
        case Technique::ParallelAdapters: return "parallel_adapters";
    }
    return "?";
}

inline Technique technique_from_string(const std::string& s) {
    if (s == "full") return Technique::Full;
    if (s == "adapters") return Technique::Adapters;
    if (s == "lora") return Technique::LoRA;
    if (s == "parallel_adapters") return Technique::ParallelAdapters;
    throw SpecError("unknown technique '" + s + "'");
}

struct ModelSpec {
    std::string name = "unnamed";
    int num_layers = 1;          // flattened encoder+decoder sequence
    int num_decoder_layers = 0;  // how many carry a cross-attention block
    int hidden_size = 8;         // d
    int num_heads = 1;
    int ffn_mult = 4;
    std::int64_t vocab_size = 32;
    int bytes_per_scalar = 4;
    Technique technique = Technique::ParallelAdapters;
    int adapter_reduction = 8;  // k; side/bottleneck width r = d/k
    int lora_rank = 16;
    int cache_points = 0;  // adapter insertion points; 0 means every layer
    int num_classes = 2;   // task head width

    int adapter_dim() const { return std::max(1, hidden_size / adapter_reduction); }

    int insertion_points() const { return cache_points > 0 ? cache_points : num_layers; }

    // Layer index (1-based, into b_1..b_L) tapped by adapter i in 0..A-1.
    // Taps are evenly spaced and always end at the final layer.
    int tap_layer(int i) const {
        const int a = insertion_points();
        return static_cast<int>((static_cast<std::int64_t>(i + 1) * num_layers + a - 1) / a);
    }

    void validate() const {
        if (num_layers < 1) throw SpecError(name + ": num_layers must be >= 1");
        if (hidden_size < 1) throw SpecError(name + ": hidden_size must be >= 1");
        if (num_heads < 1 || hidden_size % num_heads != 0)
            throw SpecError(name + ": hidden_size must be divisible by num_heads");
        if (num_decoder_layers < 0 || num_decoder_layers > num_layers)
            throw SpecError(name + ": num_decoder_layers out of range");
        if (vocab_size < 1) throw SpecError(name + ": vocab_size must be >= 1");
        if (bytes_per_scalar < 1) throw SpecError(name + ": bytes_per_scalar must be >= 1");
        if (cache_points < 0 || cache_points > num_layers)
            throw SpecError(name + ": cache_points out of range");
        if (technique == Technique::ParallelAdapters) {
            const int r = hidden_size / adapter_reduction;
            if (r < 1 || r > hidden_size / 2)
                throw SpecError(name + ": adapter width d/k must be in [1, d/2]");
        }
    }
};

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.name = j.value("name", s.name);
    s.num_layers = j.at("num_layers").get<int>();
    s.num_decoder_layers = j.value("num_decoder_layers", 0);
    s.hidden_size = j.at("hidden_size").get<int>();
    s.num_heads = j.value("num_heads", 1);
    s.ffn_mult = j.value("ffn_mult", 4);
    s.vocab_size = j.value("vocab_size", std::int64_t{32});
    s.bytes_per_scalar = j.value("bytes_per_scalar", 4);
    s.technique = technique_from_string(j.value("technique", std::string{"parallel_adapters"}));
    s.adapter_reduction = j.value("adapter_reduction", 8);
    s.lora_rank = j.value("lora_rank", 16);
    s.cache_points = j.value("cache_points", 0);
    s.num_classes = j.value("num_classes", 2);
    s.validate();
    return s;
}

inline nlohmann::json model_spec_to_json(const ModelSpec& s) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["name"] = s.name;
    j["num_layers"] = s.num_layers;
    j["num_decoder_layers"] = s.num_decoder_layers;
    j["hidden_size"] = s.hidden_size;
    j["num_heads"] = s.num_heads;
    j["ffn_mult"] = s.ffn_mult;
    j["vocab_size"] = s.vocab_size;
    j["bytes_per_scalar"] = s.bytes_per_scalar;
    j["technique"] = to_string(s.technique);
    j["adapter_reduction"] = s.adapter_reduction;
    j["lora_rank"] = s.lora_rank;
    j["cache_points"] = s.cache_points;
    j["num_classes"] = s.num_classes;
    return j;
}

inline ModelSpec load_model_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open model spec '" + path + "'");
    nlohmann::json j;
    in >> j;
    return model_spec_from_json(j);
}

// ---------------------------------------------------------------------------
// Parameter counts
// ---------------------------------------------------------------------------

inline std::int64_t embedding_params(const ModelSpec& s) {
    return s.vocab_size * s.hidden_size;
}

// All matmul parameters of the frozen backbone (embeddings excluded).
inline std::int64_t backbone_matmul_params(const ModelSpec& s) {
    const std::int64_t d2 = static_cast<std::int64_t>(s.hidden_size) * s.hidden_size;
    const std::int64_t attn = 4 * d2 * (s.num_layers + s.num_decoder_layers);
    const std::int64_t ffn = 2ll * s.ffn_mult * d2 * s.num_layers;
    return attn + ffn;
}

inline std::int64_t backbone_params(const ModelSpec& s) {
    return backbone_matmul_params(s) + embedding_params(s);
}

// Uniform per-layer share of backbone matmul parameters (cross-attention
// smeared); may be fractional.
inline double layer_matmul_params(const ModelSpec& s) {
    return static_cast<double>(backbone_matmul_params(s)) / s.num_layers;
}

// Inserted-module accounting. Houlsby-style adapters: one bottleneck block of
// width m = d/k per layer (two projections plus biases). LoRA: rank-`lora_rank`
// A/B pairs on all four projections of every attention block.
inline std::int64_t adapters_inline_matmul_params(const ModelSpec& s) {
    const std::int64_t m = std::max(1, s.hidden_size / s.adapter_reduction);
    return 2ll * s.hidden_size * m * s.num_layers;
}

inline std::int64_t adapters_inline_params(const ModelSpec& s) {
    const std::int64_t m = std::max(1, s.hidden_size / s.adapter_reduction);
    return adapters_inline_matmul_params(s) + (s.hidden_size + m) * s.num_layers;
}

inline std::int64_t lora_params(const ModelSpec& s) {
    const std::int64_t blocks = s.num_layers + s.num_decoder_layers;
    return 8ll * s.hidden_size * s.lora_rank * blocks;
}

// Side-network accounting for parallel adapters. The concrete block is
//   a_0 = W_down b_0,  z_i = a_{i-1} + D_i b_i,  a_i = a_{i-1} + W2 tanh(W1 z_i + u1) + u2,
//   logits = head(mean_tokens(W_up a_A + b_L)).
struct SideNetParams {
    std::int64_t matmul = 0;
    std::int64_t bias = 0;
    std::int64_t total() const { return matmul + bias; }
};

inline SideNetParams side_net_params(const ModelSpec& s) {
    const std::int64_t d = s.hidden_size;
    const std::int64_t r = s.adapter_dim();
    const std::int64_t a = s.insertion_points();
    SideNetParams p;
    p.matmul = r * d                 // W_down
               + a * (r * d + 2 * r * r)  // D_i, W1_i, W2_i
               + d * r                 // W_up
               + static_cast<std::int64_t>(s.num_classes) * d;  // head
    p.bias = a * 2 * r + s.num_classes;
    return p;
}

inline std::int64_t trainable_params(const ModelSpec& s) {
    switch (s.technique) {
        case Technique::Full: return backbone_params(s);
        case Technique::Adapters: return adapters_inline_params(s);
        case Technique::LoRA: return lora_params(s);
        case Technique::ParallelAdapters: return side_net_params(s).total();
    }
    return 0;
}

struct ParamCount {
    std::int64_t backbone = 0;
    std::int64_t trainable = 0;
};

inline ParamCount param_count(const ModelSpec& s) {
    s.validate();
    return {backbone_params(s), trainable_params(s)};
}

// ---------------------------------------------------------------------------
// FLOPs
// ---------------------------------------------------------------------------

struct FlopsEstimate {
    double fwd_flops = 0;
    double bwd_flops = 0;
};

inline double attention_score_flops(const ModelSpec& s, std::int64_t batch, std::int64_t seq) {
    // QK^T and AV, 2*seq^2*d each, per attention block.
    return 4.0 * static_cast<double>(seq) * static_cast<double>(seq) * s.hidden_size *
           static_cast<double>(batch) * (s.num_layers + s.num_decoder_layers);
}

inline double backbone_fwd_flops(const ModelSpec& s, std::int64_t batch, std::int64_t seq,
                                 bool attention_scores = false) {
    const double tokens = static_cast<double>(batch) * static_cast<double>(seq);
    double f = 2.0 * static_cast<double>(backbone_matmul_params(s)) * tokens;
    if (attention_scores) f += attention_score_flops(s, batch, seq);
    return f;
}

// Forward cost of the technique's inserted modules (zero for full).
inline double inserted_fwd_flops(const ModelSpec& s, std::int64_t batch, std::int64_t seq) {
    const double tokens = static_cast<double>(batch) * static_cast<double>(seq);
    switch (s.technique) {
        case Technique::Full: return 0.0;
        case Technique::Adapters:
            return 2.0 * static_cast<double>(adapters_inline_matmul_params(s)) * tokens;
        case Technique::LoRA:
            return 2.0 * static_cast<double>(lora_params(s)) * tokens;
        case Technique::ParallelAdapters: {
            const auto p = side_net_params(s);
            const std::int64_t head = static_cast<std::int64_t>(s.num_classes) * s.hidden_size;
            // Head runs on the pooled vector: once per sample, not per token.
            return 2.0 * static_cast<double>(p.matmul - head) * tokens +
                   2.0 * static_cast<double>(head) * static_cast<double>(batch);
        }
    }
    return 0.0;
}

inline FlopsEstimate flops_estimate(const ModelSpec& s, std::int64_t batch, std::int64_t seq,
                                    bool cached, bool attention_scores = false) {
    s.validate();
    const double backbone = backbone_fwd_flops(s, batch, seq, attention_scores);
    const double inserted = inserted_fwd_flops(s, batch, seq);
    FlopsEstimate e;
    e.fwd_flops = cached ? inserted : backbone + inserted;
    switch (s.technique) {
        case Technique::Full: e.bwd_flops = 2.0 * backbone; break;
        case Technique::Adapters:
        case Technique::LoRA: e.bwd_flops = backbone + 2.0 * inserted; break;
        case Technique::ParallelAdapters: e.bwd_flops = 2.0 * inserted; break;
    }
    return e;
}

// ---------------------------------------------------------------------------
// Memory
// ---------------------------------------------------------------------------

struct CostBreakdown {
    std::int64_t weights_bytes = 0;
    std::int64_t gradients_bytes = 0;
    std::int64_t optimizer_bytes = 0;
    std::int64_t activations_bytes = 0;
    std::int64_t total_bytes = 0;
    double fwd_flops = 0;
    double bwd_flops = 0;
};

// Retained-activation scalars per token for one backbone layer (techniques
// that traverse the backbone; see header comment for the counting rules).
inline std::int64_t traversal_retained_per_token(const ModelSpec& s) {
    switch (s.technique) {
        case Technique::Full:
            return static_cast<std::int64_t>(4 + 2 * s.ffn_mult) * s.hidden_size;
        case Technique::Adapters: {
            const std::int64_t m = std::max(1, s.hidden_size / s.adapter_reduction);
            return static_cast<std::int64_t>(1 + s.ffn_mult) * s.hidden_size + s.hidden_size +
                   2 * m;
        }
        case Technique::LoRA:
            return static_cast<std::int64_t>(1 + s.ffn_mult) * s.hidden_size +
                   2ll * s.hidden_size + 4ll * s.lora_rank;
        case Technique::ParallelAdapters:
            return 0;  // handled per tap, not per layer
    }
    return 0;
}

// Retained-activation bytes for layers [first..last] of one micro-batch slice
// of `beta` sequences. For parallel adapters this is the cached b_i taps plus
// the side-network chain; for the others it is the per-layer traversal count.
inline std::int64_t stage_activation_bytes(const ModelSpec& s, int first, int last,
                                           std::int64_t beta, std::int64_t seq) {
    const std::int64_t tokens = beta * seq;
    std::int64_t scalars = 0;
    if (s.technique == Technique::ParallelAdapters) {
        const std::int64_t d = s.hidden_size;
        const std::int64_t r = s.adapter_dim();
        const int a = s.insertion_points();
        std::int64_t taps_here = 0;
        for (int i = 0; i < a; ++i) {
            const int t = s.tap_layer(i);
            if (t >= first + 1 && t <= last + 1) ++taps_here;
        }
        scalars = taps_here * (d + 3 * r);
        if (first == 0) scalars += d + r;  // b_0 and a_0
    } else {
        scalars = static_cast<std::int64_t>(last - first + 1) * traversal_retained_per_token(s);
    }
    return scalars * tokens * s.bytes_per_scalar;
}

// Resident weight bytes for a stage holding layers [first..last]. The first
// stage owns the embeddings; the side network's end caps live on the edge
// stages. With `cached` set (phase-2 training) the backbone is released and
// only trainables stay resident.
inline std::int64_t stage_weight_bytes(const ModelSpec& s, int first, int last,
                                       bool cached = false) {
    const bool first_stage = first == 0;
    const bool last_stage = last == s.num_layers - 1;
    const std::int64_t layers = last - first + 1;
    double w = 0;
    if (!(s.technique == Technique::ParallelAdapters && cached)) {
        w += layer_matmul_params(s) * static_cast<double>(layers);
        if (first_stage) w += static_cast<double>(embedding_params(s));
    }
    switch (s.technique) {
        case Technique::Full: break;
        case Technique::Adapters:
            w += static_cast<double>(adapters_inline_params(s)) * layers / s.num_layers;
            break;
        case Technique::LoRA:
            w += static_cast<double>(lora_params(s)) * layers / s.num_layers;
            break;
        case Technique::ParallelAdapters: {
            const std::int64_t d = s.hidden_size;
            const std::int64_t r = s.adapter_dim();
            const int a = s.insertion_points();
            std::int64_t p = 0;
            for (int i = 0; i < a; ++i) {
                const int t = s.tap_layer(i);
                if (t >= first + 1 && t <= last + 1) p += r * d + 2 * r * r + 2 * r;
            }
            if (first_stage) p += r * d;                                        // W_down
            if (last_stage) p += d * r + static_cast<std::int64_t>(s.num_classes) * (d + 1);
            w += static_cast<double>(p);
            break;
        }
    }
    return static_cast<std::int64_t>(w * s.bytes_per_scalar);
}

inline std::int64_t stage_trainable_bytes(const ModelSpec& s, int first, int last) {
    const std::int64_t layers = last - first + 1;
    double p = 0;
    switch (s.technique) {
        case Technique::Full:
            p = layer_matmul_params(s) * static_cast<double>(layers);
            if (first == 0) p += static_cast<double>(embedding_params(s));
            break;
        case Technique::Adapters:
            p = static_cast<double>(adapters_inline_params(s)) * layers / s.num_layers;
            break;
        case Technique::LoRA:
            p = static_cast<double>(lora_params(s)) * layers / s.num_layers;
            break;
        case Technique::ParallelAdapters: {
            std::int64_t q = 0;
            const std::int64_t d = s.hidden_size;
            const std::int64_t r = s.adapter_dim();
            for (int i = 0; i < s.insertion_points(); ++i) {
                const int t = s.tap_layer(i);
                if (t >= first + 1 && t <= last + 1) q += r * d + 2 * r * r + 2 * r;
            }
            if (first == 0) q += r * d;
            if (last == s.num_layers - 1)
                q += d * r + static_cast<std::int64_t>(s.num_classes) * (d + 1);
            p = static_cast<double>(q);
            break;
        }
    }
    return static_cast<std::int64_t>(p * s.bytes_per_scalar);
}

inline CostBreakdown memory_breakdown(const ModelSpec& s, std::int64_t batch, std::int64_t seq,
                                      bool cached = false) {
    s.validate();
    if (batch < 1 || seq < 1) throw SpecError("batch and seq_len must be >= 1");
    CostBreakdown b;
    b.weights_bytes = stage_weight_bytes(s, 0, s.num_layers - 1, cached);
    b.gradients_bytes = trainable_params(s) * s.bytes_per_scalar;
    b.optimizer_bytes = 2 * b.gradients_bytes;
    b.activations_bytes = stage_activation_bytes(s, 0, s.num_layers - 1, batch, seq);
    b.total_bytes =
        b.weights_bytes + b.gradients_bytes + b.optimizer_bytes + b.activations_bytes;
    const auto f = flops_estimate(s, batch, seq, cached);
    b.fwd_flops = f.fwd_flops;
    b.bwd_flops = f.bwd_flops;
    return b;
}

// ---------------------------------------------------------------------------
// Activation-cache storage
// ---------------------------------------------------------------------------

// Storage is seq * d * taps * bytes_per_scalar per sequence. `taps` defaults
// to the model's insertion points; the toy cache stores b_0..b_L and
// therefore measures against taps = L+1.
inline std::int64_t cache_storage_bytes(const ModelSpec& s, std::int64_t num_samples,
                                        std::int64_t seq, int taps = -1) {
    s.validate();
    if (num_samples < 0 || seq < 0) throw SpecError("counts must be >= 0");
    const std::int64_t t = taps < 0 ? s.insertion_points() : taps;
    return num_samples * seq * s.hidden_size * t * s.bytes_per_scalar;
}

}  // namespace edgetune
