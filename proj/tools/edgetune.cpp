// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// edgetune CLI: synthesize or load device profiles, plan the hybrid
// data+pipeline parallel fine-tuning schedule, simulate it, run the toy
// side-network trainer, and bundle reports. Every subcommand emits a run
// manifest from which `edgetune rerun` reproduces its artifacts byte for
// byte.
//
// Exit codes: 0 success, 2 invalid input, 3 infeasible plan, 4 oracle
// mismatch, 5 I/O failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "edgetune/adapters_core.hpp"
#include "edgetune/cache_store.hpp"
#include "edgetune/manifest.hpp"
#include "edgetune/model_cost.hpp"
#include "edgetune/pipeline_sim.hpp"
#include "edgetune/planner.hpp"
#include "edgetune/profile.hpp"
#include "edgetune/trace_export.hpp"

namespace et = edgetune;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalidInput = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitOracleMismatch = 4;
constexpr int kExitIo = 5;

struct SynthSpec {
    int n = 0;
    double het = 0.0;
    std::uint64_t seed = 1;
    et::SynthOptions opt;
};

// --synth n=<k>,het=<h>,seed=<s>[,beta_max=..,budget_gib=..,bandwidth_mbps=..,
//         latency_ms=..,rate=..,seq=..]
SynthSpec parse_synth(const std::string& text) {
    SynthSpec s;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw et::SpecError("--synth expects key=value pairs, got '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string val = item.substr(eq + 1);
        if (key == "n") s.n = std::stoi(val);
        else if (key == "het") s.het = std::stod(val);
        else if (key == "seed") s.seed = std::stoull(val);
        else if (key == "beta_max") s.opt.beta_max = std::stoi(val);
        else if (key == "budget_gib")
            s.opt.memory_budget_bytes = static_cast<std::int64_t>(std::stod(val) * et::kGiB);
        else if (key == "bandwidth_mbps") s.opt.bandwidth_mbps = std::stod(val);
        else if (key == "latency_ms") s.opt.latency_ms = std::stod(val);
        else if (key == "rate") s.opt.ref_flops_per_us = std::stod(val);
        else if (key == "seq") s.opt.seq_len = std::stoll(val);
        else throw et::SpecError("--synth: unknown key '" + key + "'");
    }
    if (s.n < 1) throw et::SpecError("--synth: n must be >= 1");
    return s;
}

et::ProfileSet acquire_profiles(const std::string& profiles_path, const std::string& synth,
                                const et::ModelSpec& spec, et::RunManifest& manifest) {
    if (!profiles_path.empty()) {
        manifest.add_input(profiles_path);
        return et::load_profiles(profiles_path);
    }
    if (synth.empty())
        throw et::SpecError("either --profiles or --synth is required");
    const SynthSpec s = parse_synth(synth);
    manifest.effective["synth"] = synth;
    return et::synthesize_profiles(spec, s.n, s.het, s.seed, s.opt);
}

std::string grouping_string(const et::PlanConfig& plan) {
    std::string s;
    for (std::size_t i = 0; i < plan.stages.size(); ++i) {
        if (i) s += "+";
        s += std::to_string(plan.stages[i].group_size());
    }
    return std::to_string(plan.num_stages) + " stages (" + s + " devices)";
}

int run(const std::vector<std::string>& args);

// ---------------------------------------------------------------------------
// profile-synth
// ---------------------------------------------------------------------------

int cmd_profile_synth(const std::string& model_path, int n, double het, std::uint64_t seed,
                      int beta_max, double budget_gib, double bandwidth_mbps, double latency_ms,
                      double rate, std::int64_t seq, const std::string& out,
                      const std::vector<std::string>& argv) {
    et::RunManifest manifest;
    manifest.subcommand = "profile-synth";
    manifest.argv = argv;
    manifest.add_input(model_path);
    const auto spec = et::load_model_spec(model_path);
    et::SynthOptions opt;
    opt.beta_max = beta_max;
    opt.memory_budget_bytes = static_cast<std::int64_t>(budget_gib * et::kGiB);
    opt.bandwidth_mbps = bandwidth_mbps;
    opt.latency_ms = latency_ms;
    opt.ref_flops_per_us = rate;
    opt.seq_len = seq;
    manifest.effective = {{"model", model_path},   {"n", n},
                          {"het", het},            {"seed", seed},
                          {"beta_max", beta_max},  {"budget_gib", budget_gib},
                          {"bandwidth_mbps", bandwidth_mbps}, {"latency_ms", latency_ms},
                          {"rate", rate},          {"seq", seq},
                          {"out", out}};
    const auto profiles = et::synthesize_profiles(spec, n, het, seed, opt);
    et::atomic_write_file(out, et::profiles_to_json(profiles).dump(2) + "\n");
    manifest.outputs = {out};
    manifest.write(out + ".manifest.json");
    std::cout << "wrote " << out << " (" << n << " devices, " << spec.num_layers
              << " layers)\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

int cmd_plan(const std::string& model_path, const std::string& profiles_path,
             const std::string& synth, int B, int M, std::int64_t seq, const std::string& out,
             bool oracle, const std::vector<std::string>& argv) {
    et::RunManifest manifest;
    manifest.subcommand = "plan";
    manifest.argv = argv;
    manifest.add_input(model_path);
    const auto spec = et::load_model_spec(model_path);
    const auto profiles = acquire_profiles(profiles_path, synth, spec, manifest);
    manifest.effective["model"] = model_path;
    manifest.effective["micro_batch_size"] = B;
    manifest.effective["num_micro_batches"] = M;
    manifest.effective["seq_len"] = seq;
    manifest.effective["oracle"] = oracle;
    manifest.effective["out"] = out;

    const auto plan = et::select_plan(spec, profiles, B, M, seq);
    if (oracle) {
        const auto res = et::brute_force_oracle(spec, profiles, B, M, seq);
        if (!res.best_total_plan || res.best_total_us != plan.objective_us) {
            std::cerr << "oracle mismatch: planner " << plan.objective_us << " us, oracle "
                      << res.best_total_us << " us\n";
            return kExitOracleMismatch;
        }
        std::cout << "oracle agrees (" << res.enumerated << " plans enumerated)\n";
    }
    et::atomic_write_file(out, et::plan_to_json(plan, profiles).dump(2) + "\n");
    manifest.outputs = {out};
    manifest.write(out + ".manifest.json");
    std::cout << "plan: " << grouping_string(plan) << ", predicted "
              << plan.objective_ms() << " ms per mini-batch\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& model_path, const std::string& profiles_path,
                 const std::string& synth, const std::string& plan_path,
                 const std::string& trace_out, const std::string& svg_out, bool cached,
                 std::int64_t samples, const std::string& cache_dir, double disk_mbps,
                 const std::vector<std::string>& argv) {
    et::RunManifest manifest;
    manifest.subcommand = "simulate";
    manifest.argv = argv;
    manifest.add_input(model_path);
    manifest.add_input(plan_path);
    const auto spec = et::load_model_spec(model_path);
    const auto profiles = acquire_profiles(profiles_path, synth, spec, manifest);
    std::ifstream pin(plan_path);
    if (!pin) throw et::IoError("cannot open plan '" + plan_path + "'");
    json pj;
    pin >> pj;
    const auto plan = et::plan_from_json(pj, spec, profiles);
    manifest.effective = {{"model", model_path}, {"plan", plan_path},
                          {"cached", cached},    {"samples", samples},
                          {"cache_dir", cache_dir}, {"disk_mbps", disk_mbps},
                          {"trace", trace_out},  {"svg", svg_out}};

    et::ScheduleTrace trace;
    if (!cached) {
        trace = et::simulate_1f1b(spec, profiles, plan);
    } else {
        if (cache_dir.empty())
            throw et::SpecError(
                "--cached requires --cache-dir pointing at a populated activation cache");
        const auto header = et::CacheStore::read_header(cache_dir);  // throws if missing
        if (header.entry_count == 0)
            throw et::SpecError("activation cache in '" + cache_dir + "' is empty");
        et::CachedEpochOptions opt;
        opt.micro_batch_size = plan.micro_batch_size;
        opt.num_micro_batches = plan.num_micro_batches;
        opt.disk_mbps = disk_mbps;
        opt.seq_len = plan.seq_len;
        opt.reload_bytes_per_sample = header.payload_bytes / header.entry_count;
        std::vector<int> devices(profiles.num_devices());
        for (int i = 0; i < profiles.num_devices(); ++i) devices[i] = i;
        const std::int64_t count = samples > 0 ? samples : header.entry_count;
        trace = et::simulate_cached_epoch(spec, profiles, devices, count, opt);
    }
    et::atomic_write_file(trace_out, et::trace_to_json(trace).dump(2) + "\n");
    manifest.outputs = {trace_out};
    if (!svg_out.empty()) {
        et::atomic_write_file(svg_out, et::render_gantt_svg(trace));
        manifest.outputs.push_back(svg_out);
    }
    manifest.write(trace_out + ".manifest.json");
    std::cout << "simulated makespan " << trace.makespan_ms() << " ms ("
              << trace.events.size() << " events)\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// tune-toy
// ---------------------------------------------------------------------------

int cmd_tune_toy(const std::string& spec_path, int samples, int epochs, bool use_cache,
                 std::string cache_dir, std::uint64_t seed, double lr, std::int64_t seq,
                 bool keep_cache, const std::string& report_out,
                 const std::vector<std::string>& argv) {
    et::RunManifest manifest;
    manifest.subcommand = "tune-toy";
    manifest.argv = argv;
    manifest.add_input(spec_path);
    const auto spec = et::load_model_spec(spec_path);
    if (cache_dir.empty()) cache_dir = report_out + ".cache";
    manifest.effective = {{"spec", spec_path}, {"samples", samples}, {"epochs", epochs},
                          {"cache", use_cache}, {"cache_dir", cache_dir}, {"seed", seed},
                          {"lr", lr},           {"seq", seq},         {"report", report_out},
                          {"keep_cache", keep_cache}};

    const auto backbone = et::build_backbone(spec, seed);
    const auto dataset = et::make_toy_dataset(backbone, samples, seq, seed + 2);

    json report;
    report["schema_version"] = 1;
    report["model"] = spec.name;
    report["seed"] = seed;

    auto run_training = [&](et::CacheStore* cache) {
        auto adapters = et::init_adapters(spec, seed + 1);
        json epochs_json = json::array();
        std::vector<std::vector<double>> losses;
        for (int e = 0; e < epochs; ++e) {
            auto res = et::train_epoch(adapters, backbone, dataset, cache, lr);
            losses.push_back(res.losses);
            epochs_json.push_back(
                {{"losses", res.losses},
                 {"census",
                  {{"backbone_fwd_flops", res.census.backbone_fwd_flops()},
                   {"backbone_bwd_flops", res.census.backbone_bwd_flops()},
                   {"adapter_fwd_flops", res.census.adapter_fwd_flops()},
                   {"adapter_bwd_flops", res.census.adapter_bwd_flops()},
                   {"retained_peak_bytes", res.census.retained_peak_bytes}}}});
        }
        return std::make_pair(std::move(adapters), std::move(epochs_json));
    };

    auto [adapters_plain, epochs_plain] = run_training(nullptr);
    report["epochs"] = epochs_plain;

    if (use_cache) {
        et::CacheStore cache(cache_dir, backbone.fingerprint(), spec.num_layers + 1,
                             spec.hidden_size, seq);
        auto [adapters_cached, epochs_cached] = run_training(&cache);
        report["epochs_cached"] = epochs_cached;
        report["cache"] = {{"dir", cache_dir},
                           {"entries", cache.entry_count()},
                           {"file_bytes", cache.file_bytes()},
                           {"formula_bytes",
                            et::cache_storage_bytes(spec, cache.entry_count(), seq,
                                                    spec.num_layers + 1)}};
        // Paired-run equivalence: the frozen backbone makes cached activations
        // bit-exact, so trajectories must agree step for step.
        double max_diff = 0;
        for (int e = 0; e < epochs; ++e)
            for (int i = 0; i < samples; ++i)
                max_diff = std::max(max_diff,
                                    std::abs(epochs_plain[e]["losses"][i].get<double>() -
                                             epochs_cached[e]["losses"][i].get<double>()));
        bool bitwise = true;
        auto pa = adapters_plain.parameters();
        auto pb = adapters_cached.parameters();
        for (std::size_t i = 0; i < pa.size() && bitwise; ++i)
            bitwise = et::bitwise_equal(*pa[i], *pb[i]);
        report["equivalence"] = {{"max_step_loss_diff", max_diff},
                                 {"final_params_bitwise_equal", bitwise}};
        if (!keep_cache) {
            cache.clear();
            std::error_code ec;
            std::filesystem::remove_all(cache_dir, ec);
        }
    }

    et::atomic_write_file(report_out, report.dump(2) + "\n");
    manifest.outputs = {report_out};
    manifest.write(report_out + ".manifest.json");
    std::cout << "tuned " << epochs << " epoch(s) over " << samples << " samples";
    if (use_cache)
        std::cout << ", cached/uncached max step loss diff "
                  << report["equivalence"]["max_step_loss_diff"].get<double>();
    std::cout << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const std::string& model_path, const std::string& profiles_path,
               const std::string& synth, const std::string& plan_path,
               const std::string& trace_path, const std::string& tune_path,
               const std::string& cache_dir, int B, std::int64_t seq, const std::string& out,
               const std::string& flops_svg, const std::string& memory_svg,
               const std::vector<std::string>& argv) {
    et::RunManifest manifest;
    manifest.subcommand = "report";
    manifest.argv = argv;
    manifest.add_input(model_path);
    const auto spec = et::load_model_spec(model_path);
    manifest.effective = {{"model", model_path}, {"plan", plan_path}, {"trace", trace_path},
                          {"tune", tune_path},   {"cache_dir", cache_dir}, {"batch", B},
                          {"seq", seq},          {"out", out}};

    json report;
    report["schema_version"] = 1;
    report["model"] = spec.name;
    report["batch"] = B;
    report["seq_len"] = seq;

    // Cost tables across techniques; the "activations" column folds optimizer
    // state in, following the usual footprint-table convention.
    const auto gib = [](std::int64_t bytes) {
        return static_cast<double>(bytes) / static_cast<double>(et::kGiB);
    };
    std::vector<et::BarDatum> flops_bars, mem_bars;
    report["techniques"] = json::object();
    for (et::Technique t : {et::Technique::Full, et::Technique::Adapters, et::Technique::LoRA,
                            et::Technique::ParallelAdapters}) {
        et::ModelSpec s = spec;
        s.technique = t;
        const auto pc = et::param_count(s);
        const auto mem = et::memory_breakdown(s, B, seq);
        json jt;
        jt["trainable_params"] = pc.trainable;
        jt["trainable_percent"] =
            100.0 * static_cast<double>(pc.trainable) / static_cast<double>(pc.backbone);
        jt["weights_gib"] = gib(mem.weights_bytes);
        jt["activations_gib"] = gib(mem.activations_bytes + mem.optimizer_bytes);
        jt["gradients_gib"] = gib(mem.gradients_bytes);
        jt["total_gib"] = gib(mem.total_bytes);
        jt["fwd_flops"] = mem.fwd_flops;
        jt["bwd_flops"] = mem.bwd_flops;
        if (t == et::Technique::ParallelAdapters) {
            const auto cached = et::flops_estimate(s, B, seq, /*cached=*/true);
            const auto memc = et::memory_breakdown(s, B, seq, /*cached=*/true);
            jt["cached"] = {{"fwd_flops", cached.fwd_flops},
                            {"bwd_flops", cached.bwd_flops},
                            {"weights_gib", gib(memc.weights_bytes)},
                            {"total_gib", gib(memc.total_bytes)}};
        }
        report["techniques"][et::to_string(t)] = jt;
        flops_bars.push_back({et::to_string(t), {mem.fwd_flops / 1e12, mem.bwd_flops / 1e12}});
        mem_bars.push_back({et::to_string(t),
                            {gib(mem.weights_bytes), gib(mem.activations_bytes + mem.optimizer_bytes),
                             gib(mem.gradients_bytes)}});
    }
    {
        et::ModelSpec s = spec;
        s.technique = et::Technique::Full;
        report["inference"] = {
            {"weights_gib", gib(et::backbone_params(s) * s.bytes_per_scalar)}};
    }
    report["backbone_params"] = et::backbone_params(spec);
    report["cache_storage"] = {
        {"samples_500_seq_30_bytes", et::cache_storage_bytes(spec, 500, 30)}};

    std::optional<et::ProfileSet> profiles;
    if (!profiles_path.empty() || !synth.empty())
        profiles = acquire_profiles(profiles_path, synth, spec, manifest);

    if (!plan_path.empty()) {
        if (!profiles) throw et::SpecError("--plan requires --profiles or --synth");
        manifest.add_input(plan_path);
        std::ifstream pin(plan_path);
        json pj;
        pin >> pj;
        const auto plan = et::plan_from_json(pj, spec, *profiles);
        json jp;
        jp["num_stages"] = plan.num_stages;
        jp["group_sizes"] = plan.group_sizes();
        jp["grouping"] = grouping_string(plan);
        jp["objective_ms"] = plan.objective_ms();
        jp["phases"] = {{"beginning_ms", plan.phases.beginning_ms()},
                        {"execution_ms", plan.phases.execution_ms()},
                        {"ending_ms", plan.phases.ending_ms()}};
        // Sensitivity of the objective to the micro-batch count choice.
        json sens = json::array();
        for (int m : {std::max(1, plan.num_micro_batches / 2), plan.num_micro_batches,
                      plan.num_micro_batches * 2}) {
            auto stages = plan.stages;
            const auto alt = et::finish_plan(spec, *profiles, stages, plan.micro_batch_size, m,
                                             plan.seq_len);
            sens.push_back({{"num_micro_batches", m}, {"objective_ms", alt.objective_ms()}});
        }
        jp["micro_batch_count_sensitivity"] = sens;
        report["plan"] = jp;
    }

    if (!trace_path.empty()) {
        manifest.add_input(trace_path);
        const auto trace = et::import_trace(trace_path);
        report["trace"] = {{"makespan_ms", trace.makespan_ms()},
                           {"events", trace.events.size()},
                           {"phases",
                            {{"beginning_us", trace.phases.beginning_us},
                             {"execution_us", trace.phases.execution_us},
                             {"ending_us", trace.phases.ending_us}}}};
    }

    if (!tune_path.empty()) {
        manifest.add_input(tune_path);
        std::ifstream tin(tune_path);
        json tj;
        tin >> tj;
        json censuses = json::array();
        for (const auto& key : {"epochs", "epochs_cached"}) {
            if (!tj.contains(key)) continue;
            for (const auto& epoch : tj[key]) censuses.push_back(epoch["census"]);
        }
        report["census"] = {{"model", tj.value("model", std::string{})},
                            {"per_epoch", censuses}};
        if (tj.contains("equivalence")) report["census"]["equivalence"] = tj["equivalence"];
    }

    if (!cache_dir.empty()) {
        const auto header = et::CacheStore::read_header(cache_dir);
        et::CacheStore store(cache_dir, header.model_fingerprint, header.num_tensors,
                             header.hidden_size, header.seq_len);
        bool ok = true;
        std::string detail;
        try {
            ok = store.verify();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        report["cache"] = {{"dir", cache_dir},
                           {"entries", header.entry_count},
                           {"payload_bytes", header.payload_bytes},
                           {"fingerprint", header.model_fingerprint},
                           {"integrity", ok ? "ok" : ("failed: " + detail)}};
        std::cout << "cache " << cache_dir << ": " << header.entry_count << " entries, "
                  << header.payload_bytes << " payload bytes, fingerprint "
                  << header.model_fingerprint << ", integrity " << (ok ? "ok" : "FAILED")
                  << "\n";
    }

    et::atomic_write_file(out, report.dump(2) + "\n");
    manifest.outputs = {out};
    if (!flops_svg.empty()) {
        et::atomic_write_file(flops_svg, et::render_bars_svg("fine-tuning FLOPs (" + spec.name +
                                                                 ", per mini-batch)",
                                                             {"forward", "backward"}, flops_bars,
                                                             "TFLOP"));
        manifest.outputs.push_back(flops_svg);
    }
    if (!memory_svg.empty()) {
        et::atomic_write_file(memory_svg,
                              et::render_bars_svg("memory footprint (" + spec.name + ")",
                                                  {"weights", "activations", "gradients"},
                                                  mem_bars, "GiB"));
        manifest.outputs.push_back(memory_svg);
    }
    manifest.write(out + ".manifest.json");
    std::cout << "wrote " << out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// rerun
// ---------------------------------------------------------------------------

int cmd_rerun(const std::string& manifest_path) {
    const auto m = et::load_manifest(manifest_path);
    for (const auto& [path, digest] : m.inputs) {
        const std::string now = et::sha256_file(path);
        if (now != digest)
            throw et::SpecError("input '" + path + "' changed since the manifest was written");
    }
    return run(m.argv);
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args) {
    CLI::App app{"planner, schedule simulator and toy trainer for collaborative edge "
                 "fine-tuning with side adapters and activation caching"};
    app.require_subcommand(1);

    // profile-synth
    std::string ps_model, ps_out;
    int ps_n = 8, ps_beta = 16;
    double ps_het = 0.0, ps_budget = 4.0, ps_bw = 1000.0, ps_lat = 0.2, ps_rate = 250000.0;
    std::uint64_t ps_seed = 1;
    std::int64_t ps_seq = 128;
    auto* ps = app.add_subcommand("profile-synth", "generate synthetic device profiles");
    ps->add_option("--model", ps_model)->required();
    ps->add_option("--n", ps_n);
    ps->add_option("--het", ps_het);
    ps->add_option("--seed", ps_seed);
    ps->add_option("--beta-max", ps_beta);
    ps->add_option("--budget-gib", ps_budget);
    ps->add_option("--bandwidth-mbps", ps_bw);
    ps->add_option("--latency-ms", ps_lat);
    ps->add_option("--rate", ps_rate);
    ps->add_option("--seq", ps_seq);
    ps->add_option("--out", ps_out)->required();

    // plan
    std::string pl_model, pl_profiles, pl_synth, pl_out;
    int pl_B = 8, pl_M = 4;
    std::int64_t pl_seq = 128;
    bool pl_oracle = false;
    auto* pl = app.add_subcommand("plan", "choose stage partition and device grouping");
    pl->add_option("--model", pl_model)->required();
    pl->add_option("--profiles", pl_profiles);
    pl->add_option("--synth", pl_synth);
    pl->add_option("-B,--micro-batch-size", pl_B);
    pl->add_option("-M,--micro-batches", pl_M);
    pl->add_option("--seq", pl_seq);
    pl->add_option("--out", pl_out)->required();
    pl->add_flag("--oracle", pl_oracle, "cross-check against exhaustive search");

    // simulate
    std::string si_model, si_profiles, si_synth, si_plan, si_trace, si_svg, si_cache_dir;
    bool si_cached = false;
    std::int64_t si_samples = 0;
    double si_disk = 100.0;
    auto* si = app.add_subcommand("simulate", "run the deterministic schedule simulator");
    si->add_option("--model", si_model)->required();
    si->add_option("--profiles", si_profiles);
    si->add_option("--synth", si_synth);
    si->add_option("--plan", si_plan)->required();
    si->add_option("--trace", si_trace)->required();
    si->add_option("--svg", si_svg);
    si->add_flag("--cached", si_cached, "simulate a cached data-parallel epoch");
    si->add_option("--samples", si_samples);
    si->add_option("--cache-dir", si_cache_dir);
    si->add_option("--disk-mbps", si_disk);

    // tune-toy
    std::string tt_spec, tt_report, tt_cache_dir;
    int tt_samples = 8, tt_epochs = 3;
    bool tt_cache = false, tt_keep = false;
    std::uint64_t tt_seed = 1;
    double tt_lr = 0.05;
    std::int64_t tt_seq = 8;
    auto* tt = app.add_subcommand("tune-toy", "train the toy side network end to end");
    tt->add_option("--spec", tt_spec)->required();
    tt->add_option("--samples", tt_samples);
    tt->add_option("--epochs", tt_epochs);
    tt->add_flag("--cache", tt_cache, "populate and reuse the activation cache");
    tt->add_option("--cache-dir", tt_cache_dir);
    tt->add_option("--seed", tt_seed);
    tt->add_option("--lr", tt_lr);
    tt->add_option("--seq", tt_seq);
    tt->add_flag("--keep-cache", tt_keep, "skip the end-of-run cache clear");
    tt->add_option("--report", tt_report)->required();

    // report
    std::string rp_model, rp_profiles, rp_synth, rp_plan, rp_trace, rp_tune, rp_cache, rp_out,
        rp_fsvg, rp_msvg;
    int rp_B = 16;
    std::int64_t rp_seq = 128;
    auto* rp = app.add_subcommand("report",
                                  "aggregate cost tables, plan/trace/census summaries");
    rp->add_option("--model", rp_model)->required();
    rp->add_option("--profiles", rp_profiles);
    rp->add_option("--synth", rp_synth);
    rp->add_option("--plan", rp_plan);
    rp->add_option("--trace", rp_trace);
    rp->add_option("--tune", rp_tune, "toy training report to fold in (censuses, equivalence)");
    rp->add_option("--cache-dir", rp_cache);
    rp->add_option("-B,--batch", rp_B);
    rp->add_option("--seq", rp_seq);
    rp->add_option("--out", rp_out)->required();
    rp->add_option("--flops-svg", rp_fsvg);
    rp->add_option("--memory-svg", rp_msvg);

    // rerun
    std::string rr_manifest;
    auto* rr = app.add_subcommand("rerun", "re-execute a run from its manifest");
    rr->add_option("--manifest", rr_manifest)->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return kExitOk;
        }
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalidInput;
    }

    if (ps->parsed())
        return cmd_profile_synth(ps_model, ps_n, ps_het, ps_seed, ps_beta, ps_budget, ps_bw,
                                 ps_lat, ps_rate, ps_seq, ps_out, args);
    if (pl->parsed())
        return cmd_plan(pl_model, pl_profiles, pl_synth, pl_B, pl_M, pl_seq, pl_out, pl_oracle,
                        args);
    if (si->parsed())
        return cmd_simulate(si_model, si_profiles, si_synth, si_plan, si_trace, si_svg, si_cached,
                            si_samples, si_cache_dir, si_disk, args);
    if (tt->parsed())
        return cmd_tune_toy(tt_spec, tt_samples, tt_epochs, tt_cache, tt_cache_dir, tt_seed,
                            tt_lr, tt_seq, tt_keep, tt_report, args);
    if (rp->parsed())
        return cmd_report(rp_model, rp_profiles, rp_synth, rp_plan, rp_trace, rp_tune, rp_cache,
                          rp_B, rp_seq, rp_out, rp_fsvg, rp_msvg, args);
    if (rr->parsed()) return cmd_rerun(rr_manifest);
    return kExitInvalidInput;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return run(args);
    } catch (const et::InfeasiblePlanError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const et::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalidInput;
    }
}
