// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one line per criterion, PASS or FAIL, nonzero exit if
// anything fails. Invoke as: acceptance_tests <path-to-edgetune-cli>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgetune/adapters_core.hpp"
#include "edgetune/cache_store.hpp"
#include "edgetune/manifest.hpp"
#include "edgetune/model_cost.hpp"
#include "edgetune/pipeline_sim.hpp"
#include "edgetune/planner.hpp"
#include "edgetune/profile.hpp"
#include "test_paths.hpp"

std::string g_cli_path;  // satisfies test_paths.hpp; set from argv in main

using namespace edgetune;
using nlohmann::json;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& what) {
    if (!cond) throw Failure(what);
}

std::string tmp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "edgetune_acceptance";
    std::filesystem::create_directories(dir);
    return dir.string();
}

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + g_cli_path + "\" " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --------------------------------------------------------------------------
// 1. Planner optimality against the exhaustive oracle
// --------------------------------------------------------------------------
std::string criterion_planner_optimality() {
    const auto t0 = std::chrono::steady_clock::now();
    int instances = 0;
    for (int seed = 1; seed <= 50; ++seed) {
        ModelSpec spec;
        spec.name = "acc1";
        spec.num_layers = 2 + seed % 7;  // <= 8
        spec.hidden_size = 64;
        spec.num_heads = 4;
        spec.vocab_size = 256;
        spec.technique = Technique::ParallelAdapters;
        spec.adapter_reduction = 8;
        spec.validate();
        const int n = 1 + seed % 4;  // <= 4
        const double het = 0.5 * ((seed % 3) / 2.0);
        const auto profiles = synthesize_profiles(spec, n, het, seed);
        const int B = 12, M = 6;
        const auto table = dp_partition(spec, profiles, B, M, 32);
        const auto oracle = brute_force_oracle(spec, profiles, B, M, 32);
        for (int s = 1; s <= table.S; ++s)
            require(table.value_us(spec.num_layers - 1, n, s) == oracle.best_slowest_us[s],
                    "seed " + std::to_string(seed) + ": W mismatch at s=" + std::to_string(s));
        const auto plan = select_plan(spec, profiles, B, M, 32);
        require(plan.objective_us == oracle.best_total_us,
                "seed " + std::to_string(seed) + ": objective mismatch");
        ++instances;
    }
    const double elapsed = seconds_since(t0);
    require(elapsed < 60.0, "suite exceeded 60 s");
    std::ostringstream os;
    os << instances << " instances exact in " << elapsed << " s";
    return os.str();
}

// --------------------------------------------------------------------------
// 2. Analytic phases equal the simulated makespan at clock resolution
// --------------------------------------------------------------------------
std::string criterion_analytic_agreement() {
    int plans = 0;
    auto check_plan = [&](int L, int s, int devs_per_stage, int B, int M, bool fat_link) {
        ModelSpec spec;
        spec.name = "acc2";
        spec.num_layers = L;
        spec.hidden_size = 64;
        spec.num_heads = 4;
        spec.vocab_size = 256;
        spec.technique = Technique::ParallelAdapters;
        spec.adapter_reduction = 8;
        spec.validate();
        auto profiles = synthesize_profiles(spec, s * devs_per_stage, 0.0, 7);
        if (fat_link) {
            profiles.link.bandwidth_bps = 1e15;
            profiles.link.latency_ms = 0.0;
        }
        std::vector<StageAssignment> stages;
        const int per = L / s;
        for (int i = 0; i < s; ++i) {
            StageAssignment st;
            st.first_layer = i * per;
            st.last_layer = (i + 1) * per - 1;
            for (int r = 0; r < devs_per_stage; ++r)
                st.device_indices.push_back(i * devs_per_stage + r);
            stages.push_back(st);
        }
        const auto plan = finish_plan(spec, profiles, stages, B, M, 32);
        const auto trace = simulate_1f1b(spec, profiles, plan);
        require(trace.makespan_us == plan.phases.total_us(),
                "mismatch at L=" + std::to_string(L) + " s=" + std::to_string(s) +
                    " M=" + std::to_string(M) + ": sim " + std::to_string(trace.makespan_us) +
                    " vs " + std::to_string(plan.phases.total_us()));
        ++plans;
    };
    for (int s : {1, 2, 3, 4})
        for (int M : {1, 2, 4, 8}) check_plan(12, s, 1, 4, M, /*fat_link=*/true);
    for (int M : {2, 6}) check_plan(8, 2, 2, 4, M, /*fat_link=*/true);
    // real links: warmup and drain absorb the transfers for up to two
    // micro-batches (beyond that the gradient round trip bubbles in)
    check_plan(8, 2, 1, 4, 2, false);
    check_plan(9, 3, 1, 4, 2, false);
    check_plan(8, 4, 2, 8, 2, false);
    check_plan(12, 1, 2, 8, 8, false);  // single stage never transfers
    return std::to_string(plans) + " plans, zero microsecond difference";
}

// --------------------------------------------------------------------------
// 3. Footprint-table arithmetic
// --------------------------------------------------------------------------
std::string criterion_footprint_table() {
    auto spec = load_model_spec(data_path("t5_large.json"));
    spec.technique = Technique::Full;
    const auto mem = memory_breakdown(spec, 16, 128);
    const double weights_gib = static_cast<double>(mem.weights_bytes) / kGiB;
    const double grads_gib = static_cast<double>(mem.gradients_bytes) / kGiB;
    require(std::abs(weights_gib - 2.75) / 2.75 < 0.02, "full weights off: " +
                                                            std::to_string(weights_gib));
    require(std::abs(grads_gib - 2.75) / 2.75 < 0.02, "full gradients off");

    const auto backbone = param_count(spec).backbone;
    spec.technique = Technique::Adapters;
    const double adapters_pct =
        100.0 * static_cast<double>(param_count(spec).trainable) / backbone;
    require(std::abs(adapters_pct - 1.70) < 0.3,
            "adapters share " + std::to_string(adapters_pct));
    spec.technique = Technique::LoRA;
    const double lora_pct = 100.0 * static_cast<double>(param_count(spec).trainable) / backbone;
    require(std::abs(lora_pct - 1.26) < 0.3, "lora share " + std::to_string(lora_pct));
    std::ostringstream os;
    os << "weights " << weights_gib << " GiB, adapters " << adapters_pct << "%, lora "
       << lora_pct << "%";
    return os.str();
}

// --------------------------------------------------------------------------
// 4. Cache storage bound and serialized-file agreement
// --------------------------------------------------------------------------
std::string criterion_cache_storage() {
    const auto base = load_model_spec(data_path("t5_base.json"));
    const std::int64_t bytes = cache_storage_bytes(base, 500, 30);
    require(bytes < 1000000000ll, "500x30 cache exceeds 1 GB");

    const auto toy = load_model_spec(data_path("toy_spec.json"));
    const auto bb = build_backbone(toy, 4);
    const auto dir = tmp_dir() + "/crit4_cache";
    std::filesystem::remove_all(dir);
    const std::int64_t seq = 8, samples = 64;
    CacheStore cache(dir, bb.fingerprint(), toy.num_layers + 1, toy.hidden_size, seq);
    const auto dataset = make_toy_dataset(bb, samples, seq, 5);
    for (const auto& s : dataset) {
        CacheEntry e;
        e.sample_id = sample_id_for_tokens(s.tokens);
        e.seq_len = seq;
        e.tensors = backbone_forward(bb, s.tokens);
        cache.put(e);
    }
    // serialized tensor payload follows the formula exactly; whole files add
    // only record headers and the json header, within the 5% bound
    const double formula = static_cast<double>(
        cache_storage_bytes(toy, cache.entry_count(), seq, toy.num_layers + 1));
    require(static_cast<double>(cache.header().payload_bytes) == formula,
            "payload bytes diverge from the formula");
    const double actual = static_cast<double>(cache.file_bytes());
    const double file_err = std::abs(actual - formula) / formula;
    require(file_err < 0.05, "file " + std::to_string(actual) + " vs formula " +
                                 std::to_string(formula));
    std::filesystem::remove_all(dir);
    std::ostringstream os;
    os << "500x30 cache " << static_cast<double>(bytes) / 1e9 << " GB, payload exact, file within "
       << file_err * 100 << "%";
    return os.str();
}

// --------------------------------------------------------------------------
// 5. Gradient correctness on the fixed fixture
// --------------------------------------------------------------------------
std::string criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    ModelSpec spec;
    spec.name = "acc5";
    spec.num_layers = 3;
    spec.hidden_size = 16;
    spec.num_heads = 1;
    spec.vocab_size = 32;
    spec.bytes_per_scalar = 8;
    spec.technique = Technique::ParallelAdapters;
    spec.adapter_reduction = 4;  // r = 4
    spec.validate();
    const auto bb = build_backbone(spec, 31);
    auto st = init_adapters(spec, 32, 0.05);
    const std::vector<int> tokens{2, 9, 14, 7, 23};  // n = 5
    const int label = 1;
    Census cz;
    const auto b = backbone_forward(bb, tokens, &cz);
    const auto f = adapters_forward(st, b, &cz);
    Tensor dlogits;
    softmax_ce(f.logits, label, &dlogits);
    const auto grads = adapters_backward(st, b, f, dlogits, &cz);
    require(cz.backbone_bwd_flops() == 0, "backbone backward census not zero");

    auto g = const_cast<AdapterGrads&>(grads).parameters();
    auto p = st.parameters();
    const double h = 1e-5;
    double worst = 0;
    int count = 0;
    for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::int64_t e = 0; e < p[t]->size(); ++e) {
            const double keep = p[t]->data[e];
            p[t]->data[e] = keep + h;
            const double up = softmax_ce(adapters_forward(st, b).logits, label);
            p[t]->data[e] = keep - h;
            const double down = softmax_ce(adapters_forward(st, b).logits, label);
            p[t]->data[e] = keep;
            const double fd = (up - down) / (2 * h);
            const double err = std::abs(g[t]->data[e] - fd) / std::max(std::abs(fd), 1e-6);
            worst = std::max(worst, err);
            ++count;
        }
    }
    require(worst <= 1e-4, "worst relative error " + std::to_string(worst));
    const double elapsed = seconds_since(t0);
    require(elapsed < 30.0, "gradient check exceeded 30 s");
    std::ostringstream os;
    os << count << " parameters, worst relative error " << worst << ", backbone bwd flops 0, "
       << elapsed << " s";
    return os.str();
}

// --------------------------------------------------------------------------
// 6. Cache equivalence over three epochs
// --------------------------------------------------------------------------
std::string criterion_cache_equivalence() {
    const auto spec = load_model_spec(data_path("toy_spec.json"));
    const auto bb = build_backbone(spec, 81);
    const auto dataset = make_toy_dataset(bb, 6, 8, 83);
    const double lr = 0.05;

    auto plain = init_adapters(spec, 82);
    std::vector<std::vector<double>> plain_losses;
    for (int e = 0; e < 3; ++e)
        plain_losses.push_back(train_epoch(plain, bb, dataset, nullptr, lr).losses);

    const auto dir = tmp_dir() + "/crit6_cache";
    std::filesystem::remove_all(dir);
    CacheStore cache(dir, bb.fingerprint(), spec.num_layers + 1, spec.hidden_size, 8);
    auto cached = init_adapters(spec, 82);
    double max_diff = 0;
    for (int e = 0; e < 3; ++e) {
        const auto res = train_epoch(cached, bb, dataset, &cache, lr);
        for (std::size_t i = 0; i < dataset.size(); ++i)
            max_diff = std::max(max_diff, std::abs(res.losses[i] - plain_losses[e][i]));
    }
    require(max_diff <= 1e-12, "per-step loss diff " + std::to_string(max_diff));
    auto pa = plain.parameters();
    auto pb = cached.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        require(bitwise_equal(*pa[i], *pb[i]), "final parameters differ");
    // backbone activations are bitwise invariant across epochs
    for (const auto& s : dataset) {
        const auto fresh = backbone_forward(bb, s.tokens);
        const auto entry = cache.get(sample_id_for_tokens(s.tokens));
        require(entry.has_value(), "cache entry missing");
        for (std::size_t i = 0; i < fresh.size(); ++i)
            require(bitwise_equal(fresh[i], entry->tensors[i]), "cached activation drifted");
    }
    std::filesystem::remove_all(dir);
    std::ostringstream os;
    os << "max per-step loss diff " << max_diff << ", final parameters bitwise equal";
    return os.str();
}

// --------------------------------------------------------------------------
// 7. Modeled cached-epoch speedup inside the reported band
// --------------------------------------------------------------------------
std::string criterion_cached_speedup() {
    const auto spec = load_model_spec(data_path("t5_large.json"));
    const auto profiles = synthesize_profiles(spec, 8, 0.0, 1);
    const auto plan = select_plan(spec, profiles, 8, 4, 128);
    const std::int64_t samples = 64;
    const auto phase1 = phase1_epoch_us(spec, profiles, plan, samples);
    CachedEpochOptions opt;
    opt.micro_batch_size = 8;
    opt.num_micro_batches = 4;
    opt.seq_len = 128;
    std::vector<int> devices(profiles.num_devices());
    for (int i = 0; i < profiles.num_devices(); ++i) devices[i] = i;
    const auto cached = simulate_cached_epoch(spec, profiles, devices, samples, opt);
    const double reduction =
        100.0 * (1.0 - static_cast<double>(cached.makespan_us) / static_cast<double>(phase1));
    require(reduction >= 26.0 && reduction <= 80.0,
            "reduction " + std::to_string(reduction) + "% outside [26, 80]");
    std::ostringstream os;
    os << "per-epoch latency reduction " << reduction << "% (phase-1 " << phase1 / 1000
       << " ms, cached " << cached.makespan_us / 1000 << " ms)";
    return os.str();
}

// --------------------------------------------------------------------------
// 8. Planner scale: 48 layers, 16 devices, under three seconds
// --------------------------------------------------------------------------
std::string criterion_planner_scale() {
    const auto spec = load_model_spec(data_path("t5_large.json"));
    const auto profiles = synthesize_profiles(spec, 16, 0.3, 7);
    const auto t0 = std::chrono::steady_clock::now();
    const auto plan = select_plan(spec, profiles, 16, 4, 128);
    const double elapsed = seconds_since(t0);
    require(elapsed < 3.0, "planning took " + std::to_string(elapsed) + " s");
    std::ostringstream os;
    os << "planned " << plan.num_stages << " stage(s) in " << elapsed << " s";
    return os.str();
}

// --------------------------------------------------------------------------
// 9. Qualitative grouping reproduction on the bundled fixture
// --------------------------------------------------------------------------
std::string criterion_grouping() {
    const auto spec = load_model_spec(data_path("bart_large_2x.json"));
    const auto profiles = load_profiles(data_path("profiles_jetson8.json"));
    const std::int64_t full_weights =
        stage_weight_bytes(spec, 0, spec.num_layers - 1);
    require(full_weights > profiles.devices[0].memory_budget_bytes,
            "fixture model fits a single device; grouping pressure missing");

    const auto plan = select_plan(spec, profiles, 8, 8, 128);
    require(plan.num_stages == 2, "expected 2 stages, got " + std::to_string(plan.num_stages));
    for (const auto& st : plan.stages)
        require(st.group_size() == 4, "expected 4-device groups");

    // the forced 8-stage straight pipeline is strictly worse on the objective
    std::vector<StageAssignment> straight;
    for (int i = 0; i < 8; ++i) {
        StageAssignment st;
        st.first_layer = i * 3;
        st.last_layer = i * 3 + 2;
        st.device_indices = {i};
        straight.push_back(st);
    }
    const auto forced = finish_plan(spec, profiles, straight, 8, 8, 128);
    require(plan.objective_us < forced.objective_us,
            "selected plan does not beat the straight pipeline");
    std::ostringstream os;
    os << "2 stages x 4 devices, objective " << plan.objective_ms() << " ms vs straight "
       << forced.objective_ms() << " ms";
    return os.str();
}

// --------------------------------------------------------------------------
// 10. Manifest reruns reproduce artifacts byte for byte
// --------------------------------------------------------------------------
std::string criterion_determinism() {
    const std::string dir = tmp_dir() + "/crit10";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const std::string model = data_path("bart_large_2x.json");
    const std::string fixture = data_path("profiles_jetson8.json");

    struct Step {
        std::string args;
        std::string primary;  // manifest lives at primary + ".manifest.json"
    };
    const std::vector<Step> steps = {
        {"profile-synth --model " + data_path("toy_spec.json") +
             " --n 4 --het 0.5 --seed 7 --seq 8 --out " + dir + "/profiles.json",
         dir + "/profiles.json"},
        {"plan --model " + model + " --profiles " + fixture + " -B 8 -M 8 --seq 128 --out " +
             dir + "/plan.json",
         dir + "/plan.json"},
        {"simulate --model " + model + " --profiles " + fixture + " --plan " + dir +
             "/plan.json --trace " + dir + "/trace.json --svg " + dir + "/trace.svg",
         dir + "/trace.json"},
        {"tune-toy --spec " + data_path("toy_spec.json") +
             " --samples 4 --epochs 2 --cache --seed 9 --seq 6 --report " + dir + "/tune.json",
         dir + "/tune.json"},
        {"report --model " + model + " --profiles " + fixture + " --plan " + dir +
             "/plan.json --trace " + dir + "/trace.json -B 8 --seq 128 --out " + dir +
             "/report.json --flops-svg " + dir + "/flops.svg --memory-svg " + dir +
             "/memory.svg",
         dir + "/report.json"},
    };
    int artifacts = 0;
    for (const auto& step : steps) {
        require(run_cli(step.args) == 0, "subcommand failed: " + step.args);
        const auto manifest = load_manifest(step.primary + ".manifest.json");
        std::map<std::string, std::string> digests;
        for (const auto& out : manifest.outputs) digests[out] = sha256_file(out);
        digests[step.primary + ".manifest.json"] = sha256_file(step.primary + ".manifest.json");
        require(run_cli("rerun --manifest " + step.primary + ".manifest.json") == 0,
                "rerun failed for " + step.primary);
        for (const auto& [path, digest] : digests) {
            require(sha256_file(path) == digest, "artifact changed on rerun: " + path);
            ++artifacts;
        }
    }
    std::filesystem::remove_all(dir);
    return std::to_string(artifacts) + " artifacts byte-identical across reruns";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) g_cli_path = argv[1];
    struct Criterion {
        int id;
        const char* name;
        std::function<std::string()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "planner optimality vs exhaustive oracle", criterion_planner_optimality},
        {2, "analytic phases == simulated makespan", criterion_analytic_agreement},
        {3, "memory footprint table arithmetic", criterion_footprint_table},
        {4, "activation cache storage bound", criterion_cache_storage},
        {5, "adapter gradient correctness", criterion_gradients},
        {6, "cached training equivalence", criterion_cache_equivalence},
        {7, "cached-epoch latency reduction band", criterion_cached_speedup},
        {8, "planner scale under three seconds", criterion_planner_scale},
        {9, "two-stage by four-device grouping", criterion_grouping},
        {10, "byte-identical reruns from manifests", criterion_determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        try {
            const std::string detail = c.run();
            std::printf("PASS  criterion %2d: %s — %s\n", c.id, c.name, detail.c_str());
        } catch (const std::exception& e) {
            std::printf("FAIL  criterion %2d: %s — %s\n", c.id, c.name, e.what());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures == 0) std::printf("all %zu criteria passed\n", criteria.size());
    else std::printf("%d criteria FAILED\n", failures);
    return failures == 0 ? 0 : 1;
}
