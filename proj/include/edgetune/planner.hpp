// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline planning: balanced stage partitioning by dynamic programming over
// (layer prefix, device prefix, stage count), the data-parallel stage-time /
// OOM model, phase-latency evaluation, stage-count selection, and an
// exhaustive oracle for small instances.
//
// The DP state W(y, n, s) is the slowest-stage time of the optimally balanced
// sub-pipeline over layers 0..y using the first n devices in s stages. The
// last stage always takes a contiguous suffix of the device ordering, so the
// overall device assignment is a contiguous ordered partition. A stage's time
// is infinite when the micro-batch is not divisible by the group size or when
// any member device would exceed its memory budget; the memory model is
// stage weights + trainable gradients + optimizer moments + one micro-batch
// slice of retained activations. Ties break toward the smaller split point,
// then the smaller suffix group, then the smaller stage count, which makes
// plans reproducible byte for byte.

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "edgetune/model_cost.hpp"
#include "edgetune/profile.hpp"

namespace edgetune {

struct PlanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasiblePlanError : PlanError {
    using PlanError::PlanError;
};

constexpr std::int64_t kInfeasibleUs = std::numeric_limits<std::int64_t>::max();

struct StageAssignment {
    int first_layer = 0;
    int last_layer = 0;
    std::vector<int> device_indices;  // indices into the profile ordering

    int group_size() const { return static_cast<int>(device_indices.size()); }
};

struct PhaseLatencies {
    std::int64_t beginning_us = 0;
    std::int64_t execution_us = 0;
    std::int64_t ending_us = 0;

    std::int64_t total_us() const { return beginning_us + execution_us + ending_us; }
    double beginning_ms() const { return beginning_us / 1000.0; }
    double execution_ms() const { return execution_us / 1000.0; }
    double ending_ms() const { return ending_us / 1000.0; }
    double total_ms() const { return total_us() / 1000.0; }
};

struct PlanConfig {
    std::string model_name;
    int num_stages = 1;
    std::vector<StageAssignment> stages;
    int micro_batch_size = 1;   // B
    int num_micro_batches = 1;  // M
    std::int64_t seq_len = 128;
    PhaseLatencies phases;
    std::int64_t objective_us = 0;
    std::vector<std::int64_t> per_device_peak_bytes;  // indexed like the profile set

    double objective_ms() const { return objective_us / 1000.0; }
    std::vector<int> group_sizes() const {
        std::vector<int> g;
        for (const auto& st : stages) g.push_back(st.group_size());
        return g;
    }
};

// ---------------------------------------------------------------------------
// Stage time (the OOM-or-max-sum model)
// ---------------------------------------------------------------------------

namespace detail {

// Precomputed tables so the DP inner loop stays O(group size).
struct PlannerContext {
    const ModelSpec* spec = nullptr;
    const ProfileSet* profiles = nullptr;
    int B = 1;
    std::int64_t seq_len = 128;
    int L = 0;
    int N = 0;

    // prefix[d][beta][l] = sum over layers < l of fp+bp at that slice
    std::map<int, std::vector<std::vector<std::int64_t>>> prefix_by_beta;
    // per stage range [x..y]
    std::vector<std::vector<std::int64_t>> weight_bytes, trainable_bytes, act_bytes_per_seq;

    std::int64_t stage_sum_us(int device, int beta, int x, int y) const {
        const auto& pfx = prefix_by_beta.at(beta)[device];
        return pfx[y + 1] - pfx[x];
    }

    std::int64_t stage_memory_bytes(int x, int y, int beta, int inflight = 1) const {
        return weight_bytes[x][y] + 3 * trainable_bytes[x][y] +
               static_cast<std::int64_t>(inflight) * act_bytes_per_seq[x][y] * beta;
    }
};

inline PlannerContext make_context(const ModelSpec& spec, const ProfileSet& profiles, int B,
                                   std::int64_t seq_len) {
    spec.validate();
    profiles.validate();
    if (B < 1) throw PlanError("micro-batch size must be >= 1");
    if (profiles.num_layers() != spec.num_layers)
        throw PlanError("profile covers " + std::to_string(profiles.num_layers()) +
                        " layers but model '" + spec.name + "' has " +
                        std::to_string(spec.num_layers));
    PlannerContext ctx;
    ctx.spec = &spec;
    ctx.profiles = &profiles;
    ctx.B = B;
    ctx.seq_len = seq_len;
    ctx.L = spec.num_layers;
    ctx.N = profiles.num_devices();

    for (int m = 1; m <= ctx.N; ++m) {
        if (B % m != 0) continue;
        const int beta = B / m;
        if (ctx.prefix_by_beta.count(beta)) continue;
        auto& per_device = ctx.prefix_by_beta[beta];
        per_device.resize(ctx.N);
        for (int d = 0; d < ctx.N; ++d) {
            auto& pfx = per_device[d];
            pfx.assign(ctx.L + 1, 0);
            for (int l = 0; l < ctx.L; ++l) {
                if (!profiles.devices[d].covers(l, beta))
                    throw ProfileError("device '" + profiles.devices[d].device_id + "': layer " +
                                       std::to_string(l) + " has no timing at micro-batch slice " +
                                       std::to_string(beta));
                pfx[l + 1] = pfx[l] + profiles.devices[d].fp_us(l, beta) +
                             profiles.devices[d].bp_us(l, beta);
            }
        }
    }

    ctx.weight_bytes.assign(ctx.L, std::vector<std::int64_t>(ctx.L, 0));
    ctx.trainable_bytes.assign(ctx.L, std::vector<std::int64_t>(ctx.L, 0));
    ctx.act_bytes_per_seq.assign(ctx.L, std::vector<std::int64_t>(ctx.L, 0));
    for (int x = 0; x < ctx.L; ++x) {
        for (int y = x; y < ctx.L; ++y) {
            ctx.weight_bytes[x][y] = stage_weight_bytes(spec, x, y);
            ctx.trainable_bytes[x][y] = stage_trainable_bytes(spec, x, y);
            ctx.act_bytes_per_seq[x][y] = stage_activation_bytes(spec, x, y, 1, seq_len);
        }
    }
    return ctx;
}

// Time of one stage over layers [x..y] on devices [dev_first, dev_last] of the
// ordering. Infinite when B is not divisible by the group size or a device
// would run out of memory.
inline std::int64_t stage_time_us(const PlannerContext& ctx, int x, int y, int dev_first,
                                  int dev_last) {
    const int n_group = dev_last - dev_first + 1;
    if (n_group < 1 || ctx.B % n_group != 0) return kInfeasibleUs;
    const int beta = ctx.B / n_group;
    const std::int64_t need = ctx.stage_memory_bytes(x, y, beta);
    std::int64_t worst = 0;
    for (int d = dev_first; d <= dev_last; ++d) {
        if (need > ctx.profiles->devices[d].memory_budget_bytes) return kInfeasibleUs;
        worst = std::max(worst, ctx.stage_sum_us(d, beta, x, y));
    }
    return worst;
}

}  // namespace detail

// Public single-stage probe, in milliseconds (infinity when infeasible).
inline double stage_time_ms(const ModelSpec& spec, const ProfileSet& profiles, int first_layer,
                            int last_layer, const std::vector<int>& device_indices, int B,
                            std::int64_t seq_len) {
    if (first_layer > last_layer) throw PlanError("stage layer range is empty");
    if (device_indices.empty()) throw PlanError("stage device group is empty");
    auto ctx = detail::make_context(spec, profiles, B, seq_len);
    // The probe accepts any contiguous run of the ordering.
    for (std::size_t i = 1; i < device_indices.size(); ++i)
        if (device_indices[i] != device_indices[i - 1] + 1)
            throw PlanError("device group must be contiguous in the profile ordering");
    const std::int64_t t = detail::stage_time_us(ctx, first_layer, last_layer,
                                                 device_indices.front(), device_indices.back());
    return t == kInfeasibleUs ? std::numeric_limits<double>::infinity() : t / 1000.0;
}

// ---------------------------------------------------------------------------
// Dynamic programming table
// ---------------------------------------------------------------------------

struct DpTable {
    int L = 0, N = 0, S = 0;
    int micro_batch_size = 1;
    std::int64_t seq_len = 128;
    // w[y][n][s], back_q / back_m hold the winning split point and suffix size
    std::vector<std::int64_t> w;
    std::vector<int> back_q, back_m;

    std::size_t idx(int y, int n, int s) const {
        return (static_cast<std::size_t>(y) * (N + 1) + n) * (S + 1) + s;
    }
    std::int64_t value_us(int y, int n, int s) const { return w[idx(y, n, s)]; }
    double value_ms(int y, int n, int s) const {
        const auto v = value_us(y, n, s);
        return v == kInfeasibleUs ? std::numeric_limits<double>::infinity() : v / 1000.0;
    }
    bool feasible(int s) const { return value_us(L - 1, N, s) != kInfeasibleUs; }
};

inline DpTable dp_partition(const ModelSpec& spec, const ProfileSet& profiles, int B, int M,
                            std::int64_t seq_len = 128) {
    (void)M;  // M enters the stage-count objective, not the balance recurrence
    auto ctx = detail::make_context(spec, profiles, B, seq_len);
    DpTable t;
    t.L = ctx.L;
    t.N = ctx.N;
    t.S = std::min(ctx.N, ctx.L);
    t.micro_batch_size = B;
    t.seq_len = seq_len;
    t.w.assign(static_cast<std::size_t>(t.L) * (t.N + 1) * (t.S + 1), kInfeasibleUs);
    t.back_q.assign(t.w.size(), -1);
    t.back_m.assign(t.w.size(), -1);

    for (int y = 0; y < t.L; ++y)
        for (int n = 1; n <= t.N; ++n)
            t.w[t.idx(y, n, 1)] = detail::stage_time_us(ctx, 0, y, 0, n - 1);

    for (int s = 2; s <= t.S; ++s) {
        for (int y = 0; y < t.L; ++y) {
            for (int n = 1; n <= t.N; ++n) {
                std::int64_t best = kInfeasibleUs;
                int best_q = -1, best_m = -1;
                for (int q = 0; q < y; ++q) {
                    for (int m = 1; m < n; ++m) {
                        const std::int64_t head = t.w[t.idx(q, n - m, s - 1)];
                        if (head == kInfeasibleUs) continue;
                        const std::int64_t tail =
                            detail::stage_time_us(ctx, q + 1, y, n - m, n - 1);
                        if (tail == kInfeasibleUs) continue;
                        const std::int64_t cand = std::max(head, tail);
                        if (cand < best) {  // first hit wins: smallest q, then m
                            best = cand;
                            best_q = q;
                            best_m = m;
                        }
                    }
                }
                t.w[t.idx(y, n, s)] = best;
                t.back_q[t.idx(y, n, s)] = best_q;
                t.back_m[t.idx(y, n, s)] = best_m;
            }
        }
    }
    return t;
}

// Rebuild the stage list for s stages from the backpointers.
inline std::vector<StageAssignment> reconstruct_stages(const DpTable& t, int s) {
    if (s < 1 || s > t.S || !t.feasible(s))
        throw InfeasiblePlanError("no feasible " + std::to_string(s) + "-stage plan");
    std::vector<StageAssignment> rev;
    int y = t.L - 1, n = t.N, level = s;
    while (level > 1) {
        const int q = t.back_q[t.idx(y, n, level)];
        const int m = t.back_m[t.idx(y, n, level)];
        StageAssignment st;
        st.first_layer = q + 1;
        st.last_layer = y;
        for (int d = n - m; d < n; ++d) st.device_indices.push_back(d);
        rev.push_back(std::move(st));
        y = q;
        n -= m;
        --level;
    }
    StageAssignment st;
    st.first_layer = 0;
    st.last_layer = y;
    for (int d = 0; d < n; ++d) st.device_indices.push_back(d);
    rev.push_back(std::move(st));
    std::reverse(rev.begin(), rev.end());
    return rev;
}

// ---------------------------------------------------------------------------
// Phase latencies (beginning / execution / ending)
// ---------------------------------------------------------------------------

namespace detail {

struct StageTerms {
    std::vector<std::int64_t> e_f, e_b, ar;  // per stage
    std::vector<std::int64_t> c_f, c_b;      // per boundary i -> i+1
};

inline StageTerms stage_terms(const ModelSpec& spec, const ProfileSet& profiles,
                              const PlanConfig& plan) {
    const auto sizes = make_tensor_sizes(spec, plan.seq_len);
    const int s = plan.num_stages;
    StageTerms tm;
    tm.e_f.resize(s);
    tm.e_b.resize(s);
    tm.ar.resize(s);
    tm.c_f.assign(std::max(0, s - 1), 0);
    tm.c_b.assign(std::max(0, s - 1), 0);
    for (int i = 0; i < s; ++i) {
        const auto& st = plan.stages[i];
        const int beta = plan.micro_batch_size / st.group_size();
        std::int64_t ef = 0, eb = 0;
        for (int d : st.device_indices) {
            std::int64_t f = 0, b = 0;
            for (int l = st.first_layer; l <= st.last_layer; ++l) {
                f += profiles.devices[d].fp_us(l, beta);
                b += profiles.devices[d].bp_us(l, beta);
            }
            ef = std::max(ef, f);
            eb = std::max(eb, b);
        }
        tm.e_f[i] = ef;
        tm.e_b[i] = eb;
        tm.ar[i] = ring_allreduce_us(
            static_cast<double>(sizes.stage_trainable(st.first_layer, st.last_layer)),
            st.group_size(), profiles.link);
    }
    for (int i = 0; i + 1 < s; ++i) {
        const int slice = plan.micro_batch_size /
                          std::min(plan.stages[i].group_size(), plan.stages[i + 1].group_size());
        tm.c_f[i] = comm_us(static_cast<double>(sizes.fwd_boundary_bytes(slice)), profiles.link);
        tm.c_b[i] = comm_us(static_cast<double>(sizes.bwd_boundary_bytes(slice)), profiles.link);
    }
    return tm;
}

}  // namespace detail

inline PhaseLatencies phase_latencies(const ModelSpec& spec, const ProfileSet& profiles,
                                      const PlanConfig& plan) {
    const auto tm = detail::stage_terms(spec, profiles, plan);
    const int s = plan.num_stages;
    PhaseLatencies ph;
    for (int i = 0; i + 1 < s; ++i) ph.beginning_us += tm.e_f[i] + tm.c_f[i];
    ph.execution_us =
        static_cast<std::int64_t>(plan.num_micro_batches) * (tm.e_f[s - 1] + tm.e_b[s - 1]);
    std::int64_t worst = 0;
    for (int i = 0; i < s; ++i) {
        std::int64_t tail = tm.ar[i];
        for (int j = i; j + 1 < s; ++j) tail += tm.e_b[j] + tm.c_b[j];
        worst = std::max(worst, tail);
    }
    ph.ending_us = worst;
    return ph;
}

// Predicted per-device peak memory under 1F1B: stage index i of s keeps at
// most s-i micro-batch slices of activations in flight on top of its static
// weights, gradients and optimizer moments.
inline std::vector<std::int64_t> plan_peak_memory_bytes(const ModelSpec& spec,
                                                        const ProfileSet& profiles,
                                                        const PlanConfig& plan) {
    std::vector<std::int64_t> peak(profiles.num_devices(), 0);
    for (int i = 0; i < plan.num_stages; ++i) {
        const auto& st = plan.stages[i];
        const int beta = plan.micro_batch_size / st.group_size();
        const int inflight = plan.num_stages - i;
        const std::int64_t bytes =
            stage_weight_bytes(spec, st.first_layer, st.last_layer) +
            3 * stage_trainable_bytes(spec, st.first_layer, st.last_layer) +
            static_cast<std::int64_t>(inflight) *
                stage_activation_bytes(spec, st.first_layer, st.last_layer, beta, plan.seq_len);
        for (int d : st.device_indices) peak[d] = bytes;
    }
    return peak;
}

// Assemble a plan (forced or reconstructed) and evaluate its phases. Stage
// ranges must tile 0..L-1 contiguously and the device groups must partition
// the whole profile ordering without reuse.
inline PlanConfig finish_plan(const ModelSpec& spec, const ProfileSet& profiles,
                              std::vector<StageAssignment> stages, int B, int M,
                              std::int64_t seq_len) {
    PlanConfig plan;
    plan.model_name = spec.name;
    plan.num_stages = static_cast<int>(stages.size());
    plan.stages = std::move(stages);
    plan.micro_batch_size = B;
    plan.num_micro_batches = M;
    plan.seq_len = seq_len;
    if (plan.stages.empty()) throw PlanError("plan has no stages");
    int expect_layer = 0;
    std::vector<bool> used(profiles.num_devices(), false);
    for (const auto& st : plan.stages) {
        if (st.first_layer != expect_layer || st.last_layer < st.first_layer)
            throw PlanError("stage layer ranges must tile the model contiguously");
        expect_layer = st.last_layer + 1;
        if (st.group_size() == 0 || B % st.group_size() != 0)
            throw InfeasiblePlanError("micro-batch " + std::to_string(B) +
                                      " not divisible by group size " +
                                      std::to_string(st.group_size()));
        for (int d : st.device_indices) {
            if (d < 0 || d >= profiles.num_devices() || used[d])
                throw PlanError("device groups must partition the profile set without reuse");
            used[d] = true;
        }
    }
    if (expect_layer != spec.num_layers)
        throw PlanError("stage layer ranges must cover every model layer");
    for (bool u : used)
        if (!u) throw PlanError("device groups must cover every profiled device");
    plan.phases = phase_latencies(spec, profiles, plan);
    plan.objective_us = plan.phases.total_us();
    plan.per_device_peak_bytes = plan_peak_memory_bytes(spec, profiles, plan);
    return plan;
}

// Stage-count selection: balance first (the DP), then pick the stage count s
// whose balanced configuration minimizes beginning+execution+ending. Ties
// break toward the smaller s. Feasibility is the stage-time model's own OOM
// branch; the reported per-device peak additionally shows the 1F1B in-flight
// stack-up.
inline PlanConfig select_plan(const ModelSpec& spec, const ProfileSet& profiles, int B, int M,
                              std::int64_t seq_len = 128) {
    const DpTable table = dp_partition(spec, profiles, B, M, seq_len);
    std::optional<PlanConfig> best;
    for (int s = 1; s <= table.S; ++s) {
        if (!table.feasible(s)) continue;
        PlanConfig plan = finish_plan(spec, profiles, reconstruct_stages(table, s), B, M, seq_len);
        if (!best || plan.objective_us < best->objective_us) best = std::move(plan);
    }
    if (!best) throw InfeasiblePlanError("no feasible plan");
    return *best;
}

// ---------------------------------------------------------------------------
// Brute-force oracle
// ---------------------------------------------------------------------------

struct OracleResult {
    std::vector<std::int64_t> best_slowest_us;  // indexed by stage count, [0] unused
    std::int64_t best_total_us = kInfeasibleUs;
    std::optional<PlanConfig> best_total_plan;
    std::int64_t enumerated = 0;
};

namespace detail {

template <typename Fn>
void for_each_composition(int total, int parts, std::vector<int>& acc, Fn&& fn) {
    if (parts == 1) {
        acc.push_back(total);
        fn(acc);
        acc.pop_back();
        return;
    }
    for (int take = 1; take <= total - (parts - 1); ++take) {
        acc.push_back(take);
        for_each_composition(total - take, parts - 1, acc, fn);
        acc.pop_back();
    }
}

// Stage time by direct summation, independent of the planner's prefix-sum
// tables: max over the group of the plain per-layer fp+bp sums, with the same
// divisibility and memory rules.
inline std::int64_t direct_stage_time_us(const ModelSpec& spec, const ProfileSet& profiles,
                                         int B, std::int64_t seq_len, int x, int y, int dev_first,
                                         int dev_last) {
    const int n_group = dev_last - dev_first + 1;
    if (n_group < 1 || B % n_group != 0) return kInfeasibleUs;
    const int beta = B / n_group;
    const std::int64_t need = stage_weight_bytes(spec, x, y) +
                              3 * stage_trainable_bytes(spec, x, y) +
                              stage_activation_bytes(spec, x, y, beta, seq_len);
    std::int64_t worst = 0;
    for (int d = dev_first; d <= dev_last; ++d) {
        if (need > profiles.devices[d].memory_budget_bytes) return kInfeasibleUs;
        std::int64_t sum = 0;
        for (int l = x; l <= y; ++l)
            sum += profiles.devices[d].fp_us(l, beta) + profiles.devices[d].bp_us(l, beta);
        worst = std::max(worst, sum);
    }
    return worst;
}

}  // namespace detail

// Exhaustive verifier, guarded to small instances. The balance values come
// from plain enumeration over contiguous layer partitions crossed with
// contiguous ordered device partitions (no recurrence); the winning
// configuration is then rebuilt with the documented selection rule (smallest
// split point, then smallest suffix group, applied from the last stage
// backward) and the stage-count choice minimizes the three-phase total, ties
// toward fewer stages — the same two-step semantics the planner implements.
inline OracleResult brute_force_oracle(const ModelSpec& spec, const ProfileSet& profiles, int B,
                                       int M, std::int64_t seq_len = 128) {
    if (spec.num_layers > 10 || profiles.num_devices() > 5)
        throw PlanError("oracle guard: instance too large (L <= 10, devices <= 5)");
    spec.validate();
    profiles.validate();
    const int L = spec.num_layers, N = profiles.num_devices();
    const int S = std::min(L, N);
    OracleResult res;
    res.best_slowest_us.assign(S + 1, kInfeasibleUs);

    // w_enum[y][n][s]: best slowest-stage time over layers 0..y on the first
    // n devices in s stages, by enumeration.
    auto idx = [&](int y, int n, int s) {
        return (static_cast<std::size_t>(y) * (N + 1) + n) * (S + 1) + s;
    };
    std::vector<std::int64_t> w_enum(static_cast<std::size_t>(L) * (N + 1) * (S + 1),
                                     kInfeasibleUs);
    std::vector<int> layer_parts, dev_parts;
    for (int y = 0; y < L; ++y) {
        for (int n = 1; n <= N; ++n) {
            for (int s = 1; s <= std::min({S, y + 1, n}); ++s) {
                std::int64_t best = kInfeasibleUs;
                detail::for_each_composition(y + 1, s, layer_parts, [&](const std::vector<int>& lp) {
                    detail::for_each_composition(n, s, dev_parts, [&](const std::vector<int>& dp) {
                        if (y == L - 1 && n == N) ++res.enumerated;
                        int layer = 0, dev = 0;
                        std::int64_t slowest = 0;
                        for (int i = 0; i < s && slowest != kInfeasibleUs; ++i) {
                            const std::int64_t t = detail::direct_stage_time_us(
                                spec, profiles, B, seq_len, layer, layer + lp[i] - 1, dev,
                                dev + dp[i] - 1);
                            slowest = t == kInfeasibleUs ? kInfeasibleUs : std::max(slowest, t);
                            layer += lp[i];
                            dev += dp[i];
                        }
                        best = std::min(best, slowest);
                    });
                });
                w_enum[idx(y, n, s)] = best;
            }
        }
    }
    for (int s = 1; s <= S; ++s) res.best_slowest_us[s] = w_enum[idx(L - 1, N, s)];

    // Rebuild the configuration for stage count s with the documented rule.
    auto rebuild = [&](int s_target) {
        std::vector<StageAssignment> rev;
        int y = L - 1, n = N;
        for (int level = s_target; level > 1; --level) {
            const std::int64_t target = w_enum[idx(y, n, level)];
            bool found = false;
            for (int q = 0; q < y && !found; ++q) {
                for (int m = 1; m < n && !found; ++m) {
                    const std::int64_t head = w_enum[idx(q, n - m, level - 1)];
                    if (head == kInfeasibleUs) continue;
                    const std::int64_t tail = detail::direct_stage_time_us(
                        spec, profiles, B, seq_len, q + 1, y, n - m, n - 1);
                    if (tail == kInfeasibleUs || std::max(head, tail) != target) continue;
                    StageAssignment st;
                    st.first_layer = q + 1;
                    st.last_layer = y;
                    for (int d = n - m; d < n; ++d) st.device_indices.push_back(d);
                    rev.push_back(std::move(st));
                    y = q;
                    n -= m;
                    found = true;
                }
            }
        }
        StageAssignment st;
        st.first_layer = 0;
        st.last_layer = y;
        for (int d = 0; d < n; ++d) st.device_indices.push_back(d);
        rev.push_back(std::move(st));
        std::reverse(rev.begin(), rev.end());
        return rev;
    };

    for (int s = 1; s <= S; ++s) {
        if (res.best_slowest_us[s] == kInfeasibleUs) continue;
        PlanConfig plan = finish_plan(spec, profiles, rebuild(s), B, M, seq_len);
        if (plan.phases.total_us() < res.best_total_us) {
            res.best_total_us = plan.phases.total_us();
            res.best_total_plan = std::move(plan);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Plan JSON (docs/plan_schema.md)
// ---------------------------------------------------------------------------

inline nlohmann::json plan_to_json(const PlanConfig& p, const ProfileSet& profiles) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["model"] = p.model_name;
    j["num_stages"] = p.num_stages;
    j["micro_batch_size"] = p.micro_batch_size;
    j["num_micro_batches"] = p.num_micro_batches;
    j["seq_len"] = p.seq_len;
    j["objective_ms"] = p.objective_ms();
    j["phases"] = {{"beginning_ms", p.phases.beginning_ms()},
                   {"execution_ms", p.phases.execution_ms()},
                   {"ending_ms", p.phases.ending_ms()}};
    j["stages"] = nlohmann::json::array();
    for (const auto& st : p.stages) {
        nlohmann::json js;
        js["layers"] = {st.first_layer, st.last_layer};
        js["devices"] = nlohmann::json::array();
        for (int d : st.device_indices) js["devices"].push_back(profiles.devices[d].device_id);
        j["stages"].push_back(js);
    }
    j["per_device_peak_bytes"] = nlohmann::json::object();
    for (int d = 0; d < profiles.num_devices(); ++d)
        j["per_device_peak_bytes"][profiles.devices[d].device_id] = p.per_device_peak_bytes[d];
    return j;
}

inline PlanConfig plan_from_json(const nlohmann::json& j, const ModelSpec& spec,
                                 const ProfileSet& profiles) {
    std::map<std::string, int> index_of;
    for (int d = 0; d < profiles.num_devices(); ++d)
        index_of[profiles.devices[d].device_id] = d;
    std::vector<StageAssignment> stages;
    for (const auto& js : j.at("stages")) {
        StageAssignment st;
        st.first_layer = js.at("layers")[0].get<int>();
        st.last_layer = js.at("layers")[1].get<int>();
        for (const auto& id : js.at("devices")) {
            auto it = index_of.find(id.get<std::string>());
            if (it == index_of.end())
                throw PlanError("plan references unknown device '" + id.get<std::string>() + "'");
            st.device_indices.push_back(it->second);
        }
        stages.push_back(std::move(st));
    }
    return finish_plan(spec, profiles, std::move(stages), j.at("micro_batch_size").get<int>(),
                       j.at("num_micro_batches").get<int>(), j.at("seq_len").get<std::int64_t>());
}

}  // namespace edgetune
