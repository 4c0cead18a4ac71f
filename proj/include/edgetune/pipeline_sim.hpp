// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic discrete-event simulation of the hybrid-parallel schedule:
// the 1F1B micro-batch pipeline for phase-1 fine-tuning, the cached
// data-parallel epoch for later phases, and the one-off redistribution step
// between them.
//
// Modeling choices, fixed here:
//  * The event clock is integer microseconds; profile tables are already
//    integral, transfer times round half-up once per message.
//  * Each micro-batch is subdivided across a stage's replicas, so every
//    replica runs a slice of every micro-batch (samples are assigned to
//    replicas round-robin as contiguous slices). Stage boundaries exchange
//    per-pair sample overlaps.
//  * Compute is one lane per device; transfers get one outgoing and one
//    incoming lane and overlap freely with compute. A receive completes one
//    link latency after its send finishes serializing.
//  * Stage i of s admits at most s-i in-flight micro-batches (warmup s-i-1,
//    then strict one-forward-one-backward alternation).
//  * Gradient AllReduce covers only the stage's trainable (adapter) bytes and
//    runs per device group after its last backward cell; mini-batches are
//    synchronous SGD steps and do not overlap each other.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgetune/model_cost.hpp"
#include "edgetune/planner.hpp"
#include "edgetune/profile.hpp"

namespace edgetune {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class EventKind {
    FwdCell,
    BwdCell,
    SendAct,
    RecvAct,
    SendGrad,
    RecvGrad,
    AllReduce,
    Redistribute,
    CacheLoad
};

inline std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::FwdCell: return "fwd";
        case EventKind::BwdCell: return "bwd";
        case EventKind::SendAct: return "send_act";
        case EventKind::RecvAct: return "recv_act";
        case EventKind::SendGrad: return "send_grad";
        case EventKind::RecvGrad: return "recv_grad";
        case EventKind::AllReduce: return "allreduce";
        case EventKind::Redistribute: return "redistribute";
        case EventKind::CacheLoad: return "cache_load";
    }
    return "?";
}

inline EventKind event_kind_from_string(const std::string& s) {
    for (EventKind k : {EventKind::FwdCell, EventKind::BwdCell, EventKind::SendAct,
                        EventKind::RecvAct, EventKind::SendGrad, EventKind::RecvGrad,
                        EventKind::AllReduce, EventKind::Redistribute, EventKind::CacheLoad})
        if (to_string(k) == s) return k;
    throw SimError("unknown event kind '" + s + "'");
}

struct SimEvent {
    int device = 0;
    std::string device_id;
    EventKind kind = EventKind::FwdCell;
    int micro_batch = -1;  // 1-based; -1 for collectives
    int stage = -1;
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;
};

inline bool operator==(const SimEvent& a, const SimEvent& b) {
    return a.device == b.device && a.device_id == b.device_id && a.kind == b.kind &&
           a.micro_batch == b.micro_batch && a.stage == b.stage && a.start_us == b.start_us &&
           a.end_us == b.end_us;
}

struct ScheduleTrace {
    std::vector<SimEvent> events;
    std::int64_t makespan_us = 0;
    PhaseLatencies phases;
    std::vector<std::int64_t> per_device_peak_bytes;

    double makespan_ms() const { return makespan_us / 1000.0; }
};

namespace detail {

inline void sort_events(std::vector<SimEvent>& ev) {
    std::stable_sort(ev.begin(), ev.end(), [](const SimEvent& a, const SimEvent& b) {
        if (a.start_us != b.start_us) return a.start_us < b.start_us;
        if (a.device != b.device) return a.device < b.device;
        if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
        return a.micro_batch < b.micro_batch;
    });
}

// Sample-slice overlap between sender replica `r` of a group of `n_from` and
// receiver replica `q` of a group of `n_to`, for micro-batches of B samples.
inline int slice_overlap(int B, int n_from, int r, int n_to, int q) {
    const int from_lo = r * (B / n_from), from_hi = (r + 1) * (B / n_from);
    const int to_lo = q * (B / n_to), to_hi = (q + 1) * (B / n_to);
    return std::max(0, std::min(from_hi, to_hi) - std::max(from_lo, to_lo));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Phase 1: hybrid data+pipeline parallel mini-batch under 1F1B
// ---------------------------------------------------------------------------

inline ScheduleTrace simulate_1f1b(const ModelSpec& spec, const ProfileSet& profiles,
                                   const PlanConfig& plan) {
    spec.validate();
    profiles.validate();
    const int S = plan.num_stages;
    const int M = plan.num_micro_batches;
    const int B = plan.micro_batch_size;
    if (M < 1) throw SimError("need at least one micro-batch");
    const auto sizes = make_tensor_sizes(spec, plan.seq_len);

    struct Op {
        bool fwd = true;
        int mb = 1;      // 1-based micro-batch id
        bool ar = false;
    };
    struct Replica {
        int stage = 0;
        int index_in_group = 0;
        int device = 0;
        int beta = 1;
        std::vector<Op> ops;
        std::size_t next = 0;
        std::int64_t compute_free = 0;
        std::int64_t out_free = 0;
        std::int64_t fwd_cell_us = 0;
        std::int64_t bwd_cell_us = 0;
        std::int64_t last_end = 0;
    };

    std::vector<Replica> reps;
    std::vector<std::vector<int>> stage_reps(S);  // replica ids per stage
    for (int i = 0; i < S; ++i) {
        const auto& st = plan.stages[i];
        const int n = st.group_size();
        if (n == 0 || B % n != 0)
            throw SimError("stage " + std::to_string(i) + ": micro-batch " + std::to_string(B) +
                           " not divisible by group size " + std::to_string(n));
        const int beta = B / n;
        for (int r = 0; r < n; ++r) {
            Replica rep;
            rep.stage = i;
            rep.index_in_group = r;
            rep.device = st.device_indices[r];
            rep.beta = beta;
            for (int l = st.first_layer; l <= st.last_layer; ++l) {
                rep.fwd_cell_us += profiles.devices[rep.device].fp_us(l, beta);
                rep.bwd_cell_us += profiles.devices[rep.device].bp_us(l, beta);
            }
            const int warmup = std::min(S - 1 - i, M);
            for (int m = 1; m <= warmup; ++m) rep.ops.push_back({true, m, false});
            for (int m = warmup + 1; m <= M; ++m) {
                rep.ops.push_back({true, m, false});
                rep.ops.push_back({false, m - warmup, false});
            }
            for (int m = M - warmup + 1; m <= M; ++m) rep.ops.push_back({false, m, false});
            if (n > 1) rep.ops.push_back({false, -1, true});
            stage_reps[i].push_back(static_cast<int>(reps.size()));
            reps.push_back(std::move(rep));
        }
    }

    // ready[to_replica][mb-1]: arrival time of the needed tensor, or empty.
    const auto R = reps.size();
    std::vector<std::vector<std::optional<std::int64_t>>> act_ready(R), grad_ready(R);
    std::vector<std::vector<bool>> fwd_done(R), bwd_done(R);
    for (std::size_t r = 0; r < R; ++r) {
        act_ready[r].resize(M);
        grad_ready[r].resize(M);
        fwd_done[r].assign(M, false);
        bwd_done[r].assign(M, false);
    }

    std::vector<SimEvent> events;
    const std::int64_t lat = profiles.link.latency_us();

    auto emit = [&](int rep_id, EventKind kind, int mb, std::int64_t s, std::int64_t e) {
        const auto& rep = reps[rep_id];
        events.push_back({rep.device, profiles.devices[rep.device].device_id, kind, mb, rep.stage,
                          s, e});
    };

    // Sends fire as soon as the producing cell finishes; the out lane
    // serializes them in (micro-batch, receiver) order.
    auto send_to_stage = [&](int rep_id, int to_stage, int mb, bool fwd, std::int64_t done_at) {
        auto& rep = reps[rep_id];
        const int n_from = static_cast<int>(stage_reps[rep.stage].size());
        const int n_to = static_cast<int>(stage_reps[to_stage].size());
        const std::int64_t per_sample =
            fwd ? sizes.fwd_boundary_bytes(1) : sizes.bwd_boundary_bytes(1);
        for (int q = 0; q < n_to; ++q) {
            const int overlap =
                detail::slice_overlap(B, n_from, rep.index_in_group, n_to, q);
            if (overlap == 0) continue;
            const std::int64_t bytes = per_sample * overlap;
            const std::int64_t start = std::max(rep.out_free, done_at);
            const std::int64_t end = start + transfer_us(static_cast<double>(bytes), profiles.link);
            rep.out_free = end;
            const std::int64_t arrival = end + lat;
            const int to_rep = stage_reps[to_stage][q];
            emit(rep_id, fwd ? EventKind::SendAct : EventKind::SendGrad, mb, start, end);
            emit(to_rep, fwd ? EventKind::RecvAct : EventKind::RecvGrad, mb, arrival, arrival);
            auto& slot = fwd ? act_ready[to_rep][mb - 1] : grad_ready[to_rep][mb - 1];
            slot = slot ? std::max(*slot, arrival) : arrival;
        }
    };

    // A forward op is resolvable once every upstream replica has run that
    // micro-batch (its sends, and hence this replica's arrival, are known).
    auto resolvable = [&](int rep_id) -> std::optional<std::int64_t> {
        auto& rep = reps[rep_id];
        if (rep.next >= rep.ops.size()) return std::nullopt;
        const Op op = rep.ops[rep.next];
        if (op.ar) {
            std::int64_t start = 0;
            for (int other : stage_reps[rep.stage]) {
                if (reps[other].next + 1 != reps[other].ops.size()) return std::nullopt;
                start = std::max(start, reps[other].last_end);
            }
            return start;
        }
        if (op.fwd) {
            if (rep.stage == 0) return rep.compute_free;
            for (int up : stage_reps[rep.stage - 1])
                if (detail::slice_overlap(B, static_cast<int>(stage_reps[rep.stage - 1].size()),
                                          reps[up].index_in_group,
                                          static_cast<int>(stage_reps[rep.stage].size()),
                                          rep.index_in_group) > 0 &&
                    !fwd_done[up][op.mb - 1])
                    return std::nullopt;
            return std::max(rep.compute_free, act_ready[rep_id][op.mb - 1].value_or(0));
        }
        if (rep.stage == S - 1)
            return rep.compute_free;  // loss is immediate after the forward
        for (int down : stage_reps[rep.stage + 1])
            if (detail::slice_overlap(B, static_cast<int>(stage_reps[rep.stage + 1].size()),
                                      reps[down].index_in_group,
                                      static_cast<int>(stage_reps[rep.stage].size()),
                                      rep.index_in_group) > 0 &&
                !bwd_done[down][op.mb - 1])
                return std::nullopt;
        return std::max(rep.compute_free, grad_ready[rep_id][op.mb - 1].value_or(0));
    };

    std::size_t remaining = 0;
    for (const auto& rep : reps) remaining += rep.ops.size();

    // In-flight activation accounting for peak-memory checks.
    std::vector<int> inflight(R, 0), inflight_peak(R, 0);

    while (remaining > 0) {
        int pick = -1;
        std::int64_t pick_start = 0;
        for (std::size_t r = 0; r < R; ++r) {
            auto start = resolvable(static_cast<int>(r));
            if (!start) continue;
            if (pick < 0 || *start < pick_start ||
                (*start == pick_start && reps[r].device < reps[pick].device)) {
                pick = static_cast<int>(r);
                pick_start = *start;
            }
        }
        if (pick < 0) throw SimError("schedule deadlock (inconsistent plan)");
        auto& rep = reps[pick];
        const Op op = rep.ops[rep.next];
        if (op.ar) {
            const auto& st = plan.stages[rep.stage];
            const std::int64_t dur = ring_allreduce_us(
                static_cast<double>(sizes.stage_trainable(st.first_layer, st.last_layer)),
                st.group_size(), profiles.link);
            for (int other : stage_reps[rep.stage]) {
                emit(other, EventKind::AllReduce, -1, pick_start, pick_start + dur);
                reps[other].next++;
                reps[other].last_end = pick_start + dur;
                --remaining;
            }
            continue;
        }
        const std::int64_t dur = op.fwd ? rep.fwd_cell_us : rep.bwd_cell_us;
        const std::int64_t end = pick_start + dur;
        emit(pick, op.fwd ? EventKind::FwdCell : EventKind::BwdCell, op.mb, pick_start, end);
        rep.compute_free = end;
        rep.last_end = end;
        rep.next++;
        --remaining;
        if (op.fwd) {
            inflight[pick]++;
            inflight_peak[pick] = std::max(inflight_peak[pick], inflight[pick]);
            fwd_done[pick][op.mb - 1] = true;
            if (rep.stage + 1 < S) send_to_stage(pick, rep.stage + 1, op.mb, true, end);
        } else {
            inflight[pick]--;
            bwd_done[pick][op.mb - 1] = true;
            if (rep.stage > 0) send_to_stage(pick, rep.stage - 1, op.mb, false, end);
        }
    }

    ScheduleTrace trace;
    trace.events = std::move(events);
    detail::sort_events(trace.events);
    for (const auto& e : trace.events) trace.makespan_us = std::max(trace.makespan_us, e.end_us);

    // Phase boundaries measured off the last stage's timeline.
    std::int64_t first_fwd_start = 0, last_bwd_end = 0;
    for (std::size_t r = 0; r < R; ++r) {
        if (reps[r].stage != S - 1) continue;
        for (const auto& e : trace.events) {
            if (e.device != reps[r].device || e.stage != S - 1) continue;
            if (e.kind == EventKind::FwdCell && e.micro_batch == 1)
                first_fwd_start = std::max(first_fwd_start, e.start_us);
            if (e.kind == EventKind::BwdCell) last_bwd_end = std::max(last_bwd_end, e.end_us);
        }
    }
    trace.phases.beginning_us = first_fwd_start;
    trace.phases.execution_us = last_bwd_end - first_fwd_start;
    trace.phases.ending_us = trace.makespan_us - last_bwd_end;

    trace.per_device_peak_bytes.assign(profiles.num_devices(), 0);
    for (std::size_t r = 0; r < R; ++r) {
        const auto& st = plan.stages[reps[r].stage];
        const std::int64_t bytes =
            stage_weight_bytes(spec, st.first_layer, st.last_layer) +
            3 * stage_trainable_bytes(spec, st.first_layer, st.last_layer) +
            static_cast<std::int64_t>(inflight_peak[r]) *
                stage_activation_bytes(spec, st.first_layer, st.last_layer, reps[r].beta,
                                       plan.seq_len);
        trace.per_device_peak_bytes[reps[r].device] = bytes;
    }
    return trace;
}

// Epoch of phase-1 training: synchronous mini-batches, one pipeline run each.
inline std::int64_t phase1_epoch_us(const ModelSpec& spec, const ProfileSet& profiles,
                                    const PlanConfig& plan, std::int64_t num_samples) {
    const std::int64_t per_mini =
        static_cast<std::int64_t>(plan.num_micro_batches) * plan.micro_batch_size;
    const std::int64_t minis = (num_samples + per_mini - 1) / per_mini;
    return minis * simulate_1f1b(spec, profiles, plan).makespan_us;
}

// ---------------------------------------------------------------------------
// Phase 2: cached data-parallel epoch
// ---------------------------------------------------------------------------

struct CachedEpochOptions {
    int micro_batch_size = 8;   // B, split across the device group
    int num_micro_batches = 4;  // M micro-batches per synchronous mini-batch
    double disk_mbps = 100.0;   // embedded-flash reload rate
    // Bytes reloaded per sample; -1 derives seq*d*(taps+1)*bytes_per_scalar
    // from the model spec (the +1 is the cached b_0), matching the
    // cache-store size law. Pass the measured per-sample record size when a
    // real cache directory is available.
    std::int64_t reload_bytes_per_sample = -1;
    std::int64_t seq_len = 128;
};

inline ScheduleTrace simulate_cached_epoch(const ModelSpec& spec, const ProfileSet& profiles,
                                           const std::vector<int>& device_indices,
                                           std::int64_t num_samples, CachedEpochOptions opt) {
    spec.validate();
    profiles.validate();
    if (device_indices.empty()) throw SimError("cached epoch needs at least one device");
    if (num_samples < 1) throw SimError("cached epoch needs samples");
    const int n = static_cast<int>(device_indices.size());
    const int B = opt.micro_batch_size;
    if (B % n != 0)
        throw SimError("micro-batch " + std::to_string(B) + " not divisible by " +
                       std::to_string(n) + " devices");
    const int beta = B / n;
    const int L = spec.num_layers;

    std::int64_t per_sample_bytes = opt.reload_bytes_per_sample;
    if (per_sample_bytes < 0)
        per_sample_bytes = cache_storage_bytes(spec, 1, opt.seq_len, spec.insertion_points() + 1);
    const double disk_bytes_per_us = opt.disk_mbps;  // MB/s == bytes/us
    const std::int64_t load_us =
        std::llround(static_cast<double>(per_sample_bytes) * beta / disk_bytes_per_us);

    // Adapter-only forward scaled off the profiled full forward; the profiled
    // backward is already adapter-only for this technique.
    const auto cached_f = flops_estimate(spec, 1, opt.seq_len, /*cached=*/true);
    const auto full_f = flops_estimate(spec, 1, opt.seq_len, /*cached=*/false);
    const double gamma = full_f.fwd_flops > 0 ? cached_f.fwd_flops / full_f.fwd_flops : 0.0;

    const std::int64_t steps = (num_samples + B - 1) / B;
    const std::int64_t trainable =
        stage_trainable_bytes(spec, 0, L - 1);

    ScheduleTrace trace;
    std::vector<std::int64_t> free_at(n, 0);
    std::int64_t step_in_mini = 0;
    auto flush_allreduce = [&]() {
        if (n == 1) return;  // nothing to synchronize against
        std::int64_t start = 0;
        for (const auto t : free_at) start = std::max(start, t);
        const std::int64_t dur =
            ring_allreduce_us(static_cast<double>(trainable), n, profiles.link);
        for (int r = 0; r < n; ++r) {
            trace.events.push_back({device_indices[r],
                                    profiles.devices[device_indices[r]].device_id,
                                    EventKind::AllReduce, -1, 0, start, start + dur});
            free_at[r] = start + dur;
        }
    };

    for (std::int64_t step = 0; step < steps; ++step) {
        const int mb = static_cast<int>(step % opt.num_micro_batches) + 1;
        for (int r = 0; r < n; ++r) {
            const int dev = device_indices[r];
            std::int64_t fwd = 0, bwd = 0;
            for (int l = 0; l < L; ++l) {
                fwd += profiles.devices[dev].fp_us(l, beta);
                bwd += profiles.devices[dev].bp_us(l, beta);
            }
            const std::int64_t fwd_scaled =
                std::max<std::int64_t>(1, std::llround(static_cast<double>(fwd) * gamma));
            std::int64_t t = free_at[r];
            trace.events.push_back({dev, profiles.devices[dev].device_id, EventKind::CacheLoad,
                                    mb, 0, t, t + load_us});
            t += load_us;
            trace.events.push_back({dev, profiles.devices[dev].device_id, EventKind::FwdCell, mb,
                                    0, t, t + fwd_scaled});
            t += fwd_scaled;
            trace.events.push_back({dev, profiles.devices[dev].device_id, EventKind::BwdCell, mb,
                                    0, t, t + bwd});
            t += bwd;
            free_at[r] = t;
        }
        if (++step_in_mini == opt.num_micro_batches) {
            flush_allreduce();
            step_in_mini = 0;
        }
    }
    if (step_in_mini != 0) flush_allreduce();

    detail::sort_events(trace.events);
    for (const auto& e : trace.events) trace.makespan_us = std::max(trace.makespan_us, e.end_us);
    trace.phases.execution_us = trace.makespan_us;
    trace.per_device_peak_bytes.assign(profiles.num_devices(), 0);
    const std::int64_t peak = stage_weight_bytes(spec, 0, L - 1, /*cached=*/true) +
                              3 * trainable +
                              stage_activation_bytes(spec, 0, L - 1, beta, opt.seq_len);
    for (int dev : device_indices) trace.per_device_peak_bytes[dev] = peak;
    return trace;
}

// ---------------------------------------------------------------------------
// Redistribution between phase 1 and phase 2
// ---------------------------------------------------------------------------

struct RedistributionResult {
    std::int64_t total_us = 0;
    std::int64_t allgather_us = 0;
    std::int64_t broadcast_us = 0;
    std::vector<SimEvent> events;  // one per device per ring round

    double total_ms() const { return total_us / 1000.0; }
};

// After phase 1 each stage's replicas hold their sample slice of the taps
// their layers produced. Every device must end with the complete cache and
// the full adapter parameters: ring all-gather over the device ordering plus
// a tree broadcast of the adapters.
inline RedistributionResult simulate_redistribution(const ModelSpec& spec,
                                                    const ProfileSet& profiles,
                                                    const PlanConfig& plan,
                                                    std::int64_t num_samples) {
    const auto sizes = make_tensor_sizes(spec, plan.seq_len);
    const std::int64_t per_tap_sample_bytes =
        plan.seq_len * spec.hidden_size * spec.bytes_per_scalar;

    std::vector<double> shard_bytes;
    std::vector<int> ring_devices;
    for (int i = 0; i < plan.num_stages; ++i) {
        const auto& st = plan.stages[i];
        int taps = 0;
        for (int a = 0; a < spec.insertion_points(); ++a) {
            const int t = spec.tap_layer(a);
            if (t >= st.first_layer + 1 && t <= st.last_layer + 1) ++taps;
        }
        if (st.first_layer == 0) ++taps;  // b_0
        const double shard = static_cast<double>(per_tap_sample_bytes) * taps *
                             static_cast<double>(num_samples) / st.group_size();
        for (int d : st.device_indices) {
            shard_bytes.push_back(shard);
            ring_devices.push_back(d);
        }
    }
    const int n = static_cast<int>(ring_devices.size());
    RedistributionResult res;
    if (n <= 1) return res;

    res.allgather_us = ring_allgather_us(shard_bytes, profiles.link);
    res.broadcast_us = tree_broadcast_us(
        static_cast<double>(sizes.stage_trainable(0, spec.num_layers - 1)), n, profiles.link);
    res.total_us = res.allgather_us + res.broadcast_us;

    // Round-by-round events mirror ring_allgather_us exactly.
    std::int64_t t = 0;
    for (int round = 0; round < n - 1; ++round) {
        std::int64_t longest = 0;
        for (int dev = 0; dev < n; ++dev) {
            const int chunk = ((dev - round) % n + n) % n;
            longest = std::max(longest, transfer_us(shard_bytes[chunk], profiles.link));
        }
        const std::int64_t dur = longest + profiles.link.latency_us();
        for (int dev = 0; dev < n; ++dev)
            res.events.push_back({ring_devices[dev],
                                  profiles.devices[ring_devices[dev]].device_id,
                                  EventKind::Redistribute, round + 1, -1, t, t + dur});
        t += dur;
    }
    return res;
}

}  // namespace edgetune
