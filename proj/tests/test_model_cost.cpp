// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cmath>

#include "edgetune/model_cost.hpp"
#include "edgetune/rng.hpp"
#include "test_paths.hpp"

using namespace edgetune;

namespace {

ModelSpec t5_large() { return load_model_spec(data_path("t5_large.json")); }
ModelSpec t5_base() { return load_model_spec(data_path("t5_base.json")); }

ModelSpec with_technique(ModelSpec s, Technique t) {
    s.technique = t;
    return s;
}

double pct(std::int64_t part, std::int64_t whole) {
    return 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

}  // namespace

TEST_CASE("spec validation rejects malformed configurations") {
    ModelSpec s;
    s.num_layers = 0;
    CHECK_THROWS_AS(s.validate(), SpecError);
    s = ModelSpec{};
    s.hidden_size = 10;
    s.num_heads = 4;  // not divisible
    CHECK_THROWS_AS(s.validate(), SpecError);
    s = ModelSpec{};
    s.hidden_size = 16;
    s.num_heads = 4;
    s.technique = Technique::ParallelAdapters;
    s.adapter_reduction = 1;  // r == d violates r <= d/2
    CHECK_THROWS_AS(s.validate(), SpecError);
}

TEST_CASE("backbone parameter count reproduces the 0.74B encoder-decoder config") {
    const auto spec = t5_large();
    const auto pc = param_count(spec);
    // 48 flattened layers at 12*d^2, cross-attention on the 24 decoder layers,
    // tied vocab embedding.
    CHECK(pc.backbone == 737542144);
    CHECK(std::abs(static_cast<double>(pc.backbone) - 737e6) / 737e6 < 0.05);
}

TEST_CASE("full fine-tuning trains exactly the backbone") {
    const auto spec = with_technique(t5_large(), Technique::Full);
    const auto pc = param_count(spec);
    CHECK(pc.trainable == pc.backbone);
}

TEST_CASE("inserted-module trainable shares match the published footprint table") {
    const auto base = t5_large();
    const auto pc = param_count(base);

    const auto adapters = param_count(with_technique(base, Technique::Adapters));
    CHECK(std::abs(pct(adapters.trainable, pc.backbone) - 1.70) < 0.3);

    const auto lora = param_count(with_technique(base, Technique::LoRA));
    CHECK(std::abs(pct(lora.trainable, pc.backbone) - 1.26) < 0.3);
}

TEST_CASE("side-network parameter count matches the documented per-adapter formula") {
    // d=16, k=8 -> r=2, two adapters, b_0 projection, output projection and a
    // two-way head: 32 + 2*(32+4+2+4+2) + 32 + 34 = 186, by hand.
    ModelSpec s;
    s.name = "tiny";
    s.num_layers = 2;
    s.hidden_size = 16;
    s.num_heads = 4;
    s.vocab_size = 8;
    s.technique = Technique::ParallelAdapters;
    s.adapter_reduction = 8;
    s.num_classes = 2;
    const auto pc = param_count(s);
    CHECK(pc.trainable == 186);
}

TEST_CASE("memory breakdown reproduces the weights and gradients columns") {
    const auto spec = with_technique(t5_large(), Technique::Full);
    const auto mem = memory_breakdown(spec, 16, 128);
    const double weights_gib = static_cast<double>(mem.weights_bytes) / kGiB;
    CHECK(std::abs(weights_gib - 2.75) / 2.75 < 0.02);
    CHECK(mem.gradients_bytes == mem.weights_bytes);  // every parameter trainable
    CHECK(mem.total_bytes == mem.weights_bytes + mem.gradients_bytes + mem.optimizer_bytes +
                                 mem.activations_bytes);
}

TEST_CASE("technique ordering: activation and backward-cost ranking") {
    const auto base = t5_large();
    const auto full = memory_breakdown(with_technique(base, Technique::Full), 16, 128);
    const auto adapters = memory_breakdown(with_technique(base, Technique::Adapters), 16, 128);
    const auto lora = memory_breakdown(with_technique(base, Technique::LoRA), 16, 128);
    const auto parallel =
        memory_breakdown(with_technique(base, Technique::ParallelAdapters), 16, 128);

    CHECK(parallel.activations_bytes < adapters.activations_bytes);
    CHECK(parallel.activations_bytes < lora.activations_bytes);
    CHECK(lora.activations_bytes < full.activations_bytes);
    CHECK(adapters.activations_bytes < full.activations_bytes);

    CHECK(parallel.bwd_flops < adapters.bwd_flops);
    CHECK(parallel.bwd_flops < lora.bwd_flops);
    CHECK(adapters.bwd_flops < full.bwd_flops);
    CHECK(lora.bwd_flops < full.bwd_flops);
}

TEST_CASE("cache mode keeps only the side network resident") {
    const auto spec = t5_large();
    const auto cached = memory_breakdown(spec, 16, 128, /*cached=*/true);
    CHECK(cached.weights_bytes == trainable_params(spec) * spec.bytes_per_scalar);
    const auto uncached = memory_breakdown(spec, 16, 128, /*cached=*/false);
    CHECK(cached.weights_bytes < uncached.weights_bytes);
}

TEST_CASE("flops: cached forward removes exactly the backbone share") {
    const auto spec = t5_large();
    const auto cached = flops_estimate(spec, 4, 64, true);
    const auto full = flops_estimate(spec, 4, 64, false);
    CHECK(cached.fwd_flops + backbone_fwd_flops(spec, 4, 64) == full.fwd_flops);
    CHECK(cached.fwd_flops == inserted_fwd_flops(spec, 4, 64));
}

TEST_CASE("flops: forward share for inserted-module techniques") {
    const auto spec = with_technique(t5_large(), Technique::Adapters);
    const auto f = flops_estimate(spec, 16, 128, false);
    const double share = f.fwd_flops / (f.fwd_flops + f.bwd_flops);
    CHECK(share >= 0.44);
    CHECK(share <= 0.66);
}

TEST_CASE("flops and memory are nondecreasing in batch, seq, layers and width") {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        ModelSpec s;
        s.name = "prop";
        s.num_heads = 1 + static_cast<int>(rng.below(4));
        s.hidden_size = s.num_heads * (2 + static_cast<int>(rng.below(6))) * 4;
        s.num_layers = 1 + static_cast<int>(rng.below(6));
        s.num_decoder_layers = static_cast<int>(rng.below(s.num_layers + 1));
        s.vocab_size = 64 + static_cast<int>(rng.below(512));
        s.technique = static_cast<Technique>(rng.below(4));
        s.adapter_reduction = 4;
        s.lora_rank = 2 + static_cast<int>(rng.below(8));
        s.validate();
        const std::int64_t batch = 1 + static_cast<int>(rng.below(8));
        const std::int64_t seq = 1 + static_cast<int>(rng.below(64));

        const auto m0 = memory_breakdown(s, batch, seq);
        const auto m_batch = memory_breakdown(s, batch + 1, seq);
        const auto m_seq = memory_breakdown(s, batch, seq + 3);
        CHECK(m_batch.activations_bytes >= m0.activations_bytes);
        CHECK(m_seq.activations_bytes >= m0.activations_bytes);
        CHECK(m_batch.fwd_flops >= m0.fwd_flops);
        CHECK(m_seq.fwd_flops >= m0.fwd_flops);

        ModelSpec deeper = s;
        deeper.num_layers += 1;
        const auto m_deep = memory_breakdown(deeper, batch, seq);
        CHECK(m_deep.total_bytes >= m0.total_bytes);
        CHECK(m_deep.fwd_flops >= m0.fwd_flops);

        ModelSpec wider = s;
        wider.hidden_size += s.num_heads * 4;
        const auto m_wide = memory_breakdown(wider, batch, seq);
        CHECK(m_wide.total_bytes >= m0.total_bytes);
        CHECK(m_wide.fwd_flops >= m0.fwd_flops);
    }
}

TEST_CASE("cache storage follows samples x seq x d x taps x bytes") {
    const auto base = t5_base();
    // 500 samples of 30 tokens at the 12 insertion points: ~0.515 GiB, under
    // a gigabyte of flash.
    const std::int64_t bytes = cache_storage_bytes(base, 500, 30);
    CHECK(bytes == 500ll * 30 * 768 * 12 * 4);
    CHECK(bytes < 1000000000ll);
    CHECK(static_cast<double>(bytes) / kGiB == doctest::Approx(0.515).epsilon(0.01));

    CHECK(cache_storage_bytes(base, 0, 30) == 0);

    ModelSpec toy = load_model_spec(data_path("toy_spec.json"));
    CHECK(cache_storage_bytes(toy, 3, 4, toy.num_layers + 1) == 3ll * 4 * 16 * 3 * 8);
}

TEST_CASE("stage decompositions add up to the whole-model figures") {
    for (Technique t : {Technique::Full, Technique::Adapters, Technique::LoRA,
                        Technique::ParallelAdapters}) {
        const auto spec = with_technique(t5_base(), t);
        const int L = spec.num_layers;
        for (int cut = 0; cut < L - 1; cut += 5) {
            CHECK(stage_weight_bytes(spec, 0, cut) + stage_weight_bytes(spec, cut + 1, L - 1) ==
                  stage_weight_bytes(spec, 0, L - 1));
            CHECK(stage_trainable_bytes(spec, 0, cut) +
                      stage_trainable_bytes(spec, cut + 1, L - 1) ==
                  stage_trainable_bytes(spec, 0, L - 1));
            CHECK(stage_activation_bytes(spec, 0, cut, 2, 16) +
                      stage_activation_bytes(spec, cut + 1, L - 1, 2, 16) ==
                  stage_activation_bytes(spec, 0, L - 1, 2, 16));
        }
    }
}

TEST_CASE("model spec json round-trips") {
    const auto spec = t5_large();
    const auto j = model_spec_to_json(spec);
    const auto back = model_spec_from_json(j);
    CHECK(back.name == spec.name);
    CHECK(back.num_layers == spec.num_layers);
    CHECK(back.cache_points == spec.cache_points);
    CHECK(back.technique == spec.technique);
}
