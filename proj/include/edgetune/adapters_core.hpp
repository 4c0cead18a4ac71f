// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy-scale exact numerics for side-network fine-tuning: a frozen transformer
// backbone, the adapter chain
//
//   a_0 = W_down b_0
//   z_i = a_{i-1} + D_i b_{tap(i)}
//   a_i = a_{i-1} + W2_i tanh(W1_i z_i + u1_i) + u2_i
//   logits = head( mean_tokens( W_up a_A + b_L ) )
//
// with hand-written backpropagation that touches adapter parameters only, a
// deterministic SGD training loop with optional activation caching, and the
// instrumented censuses (flop counts, retained tensors) that serve as oracles
// for the analytic cost models.
//
// The backbone layer is multi-head softmax attention plus a two-linear
// feed-forward block, both with residual connections and no biases; weights
// are seeded Gaussians and never updated. All math is in 64-bit floats.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgetune/cache_store.hpp"
#include "edgetune/hash.hpp"
#include "edgetune/model_cost.hpp"
#include "edgetune/rng.hpp"
#include "edgetune/tensor.hpp"

namespace edgetune {

// ---------------------------------------------------------------------------
// Frozen backbone
// ---------------------------------------------------------------------------

struct BackboneLayer {
    Tensor wq, wk, wv, wo;  // d x d
    Tensor w1;              // ffn*d x d
    Tensor w2;              // d x ffn*d
};

struct BackboneState {
    ModelSpec spec;
    Tensor embedding;  // vocab x d
    std::vector<BackboneLayer> layers;

    std::string fingerprint() const {
        std::uint64_t h = fnv1a64(embedding.data.data(), embedding.data.size() * sizeof(double));
        for (const auto& l : layers)
            for (const Tensor* t : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w1, &l.w2})
                h = fnv1a64(t->data.data(), t->data.size() * sizeof(double), h);
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%016llx-L%d-d%d",
                      static_cast<unsigned long long>(h), spec.num_layers, spec.hidden_size);
        return buf;
    }
};

namespace detail {

inline Tensor seeded_gaussian(std::int64_t rows, std::int64_t cols, double stddev, Rng& rng) {
    Tensor t(rows, cols);
    for (auto& v : t.data) v = rng.gaussian(0.0, stddev);
    return t;
}

}  // namespace detail

inline BackboneState build_backbone(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    BackboneState b;
    b.spec = spec;
    Rng rng(seed);
    const int d = spec.hidden_size;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    b.embedding = detail::seeded_gaussian(spec.vocab_size, d, 1.0, rng);
    for (int l = 0; l < spec.num_layers; ++l) {
        BackboneLayer layer;
        layer.wq = detail::seeded_gaussian(d, d, sd, rng);
        layer.wk = detail::seeded_gaussian(d, d, sd, rng);
        layer.wv = detail::seeded_gaussian(d, d, sd, rng);
        layer.wo = detail::seeded_gaussian(d, d, sd, rng);
        layer.w1 = detail::seeded_gaussian(spec.ffn_mult * d, d, sd, rng);
        layer.w2 = detail::seeded_gaussian(d, spec.ffn_mult * d, sd, rng);
        b.layers.push_back(std::move(layer));
    }
    return b;
}

// b_0..b_L for one token sequence. Pure function of (weights, input).
inline std::vector<Tensor> backbone_forward(const BackboneState& bb, const std::vector<int>& tokens,
                                            Census* cz = nullptr) {
    if (tokens.empty()) throw NumericsError("empty token sequence");
    const int d = bb.spec.hidden_size;
    const int heads = bb.spec.num_heads;
    const int dh = d / heads;
    const std::int64_t n = static_cast<std::int64_t>(tokens.size());
    if (cz) cz->set_phase(Phase::BackboneFwd);

    Tensor x(n, d);
    for (std::int64_t i = 0; i < n; ++i) {
        if (tokens[i] < 0 || tokens[i] >= bb.spec.vocab_size)
            throw NumericsError("token id " + std::to_string(tokens[i]) + " out of vocabulary");
        for (int j = 0; j < d; ++j) x.at(i, j) = bb.embedding.at(tokens[i], j);
    }

    std::vector<Tensor> b;
    b.push_back(x);
    census_retain(cz, x);

    for (const auto& layer : bb.layers) {
        const Tensor& in = b.back();
        Tensor q = matmul_nt(in, layer.wq, cz);
        Tensor k = matmul_nt(in, layer.wk, cz);
        Tensor v = matmul_nt(in, layer.wv, cz);
        Tensor ctx(n, d);
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int h = 0; h < heads; ++h) {
            // scores = softmax(Q_h K_h^T / sqrt(dh)), ctx_h = scores V_h
            Tensor scores(n, n);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < n; ++j) {
                    double acc = 0;
                    for (int e = 0; e < dh; ++e)
                        acc += q.at(i, h * dh + e) * k.at(j, h * dh + e);
                    scores.at(i, j) = acc * inv_sqrt;
                }
            if (cz) cz->add_flops(2 * n * n * dh);
            for (std::int64_t i = 0; i < n; ++i) {
                double mx = scores.at(i, 0);
                for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, scores.at(i, j));
                double sum = 0;
                for (std::int64_t j = 0; j < n; ++j) {
                    scores.at(i, j) = std::exp(scores.at(i, j) - mx);
                    sum += scores.at(i, j);
                }
                for (std::int64_t j = 0; j < n; ++j) scores.at(i, j) /= sum;
            }
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < n; ++j) {
                    const double p = scores.at(i, j);
                    for (int e = 0; e < dh; ++e) ctx.at(i, h * dh + e) += p * v.at(j, h * dh + e);
                }
            if (cz) cz->add_flops(2 * n * n * dh);
        }
        Tensor attn = matmul_nt(ctx, layer.wo, cz);
        add_inplace(attn, in);  // residual
        Tensor hidden = relu_map(matmul_nt(attn, layer.w1, cz));
        Tensor out = matmul_nt(hidden, layer.w2, cz);
        add_inplace(out, attn);  // residual
        census_retain(cz, out);
        b.push_back(std::move(out));
    }
    if (cz) cz->set_phase(Phase::Idle);
    return b;
}

// ---------------------------------------------------------------------------
// Side network
// ---------------------------------------------------------------------------

struct Adapter {
    Tensor d_proj;  // r x d
    Tensor w1, w2;  // r x r
    Tensor u1, u2;  // 1 x r biases
};

struct AdapterState {
    ModelSpec spec;
    Tensor w_down;  // r x d
    std::vector<Adapter> adapters;
    Tensor w_up;    // d x r
    Tensor head_w;  // C x d
    Tensor head_b;  // 1 x C

    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> ps{&w_down};
        for (auto& a : adapters)
            for (Tensor* t : {&a.d_proj, &a.w1, &a.u1, &a.w2, &a.u2}) ps.push_back(t);
        ps.push_back(&w_up);
        ps.push_back(&head_w);
        ps.push_back(&head_b);
        return ps;
    }
    std::vector<const Tensor*> parameters() const {
        auto ps = const_cast<AdapterState*>(this)->parameters();
        return {ps.begin(), ps.end()};
    }
};

// Gradients mirror the parameter layout.
using AdapterGrads = AdapterState;

inline AdapterState init_adapters(const ModelSpec& spec, std::uint64_t seed, double stddev = 0.02) {
    spec.validate();
    AdapterState s;
    s.spec = spec;
    Rng rng(seed);
    const int d = spec.hidden_size;
    const int r = spec.adapter_dim();
    s.w_down = detail::seeded_gaussian(r, d, stddev, rng);
    for (int i = 0; i < spec.insertion_points(); ++i) {
        Adapter a;
        a.d_proj = detail::seeded_gaussian(r, d, stddev, rng);
        a.w1 = detail::seeded_gaussian(r, r, stddev, rng);
        a.w2 = detail::seeded_gaussian(r, r, stddev, rng);
        a.u1 = Tensor(1, r);
        a.u2 = Tensor(1, r);
        s.adapters.push_back(std::move(a));
    }
    s.w_up = detail::seeded_gaussian(d, r, stddev, rng);
    s.head_w = detail::seeded_gaussian(spec.num_classes, d, stddev, rng);
    s.head_b = Tensor(1, spec.num_classes);
    return s;
}

inline AdapterGrads zero_like(const AdapterState& s) {
    AdapterGrads g = s;
    for (Tensor* t : g.parameters()) std::fill(t->data.begin(), t->data.end(), 0.0);
    return g;
}

struct AdapterForward {
    std::vector<Tensor> a;     // a_0..a_A
    std::vector<Tensor> z, s;  // per adapter bottleneck intermediates
    Tensor pooled;             // 1 x d
    Tensor logits;             // 1 x C
};

inline AdapterForward adapters_forward(const AdapterState& st, const std::vector<Tensor>& b,
                                       Census* cz = nullptr) {
    const auto& spec = st.spec;
    if (static_cast<int>(b.size()) != spec.num_layers + 1)
        throw NumericsError("expected " + std::to_string(spec.num_layers + 1) +
                            " backbone activations, got " + std::to_string(b.size()));
    const std::int64_t n = b[0].rows;
    for (const auto& t : b)
        if (t.rows != n || t.cols != spec.hidden_size)
            throw NumericsError("backbone activation shape mismatch");
    if (cz) cz->set_phase(Phase::AdapterFwd);

    AdapterForward f;
    f.a.push_back(matmul_nt(b[0], st.w_down, cz));  // a_0
    census_retain(cz, f.a[0]);
    for (std::size_t i = 0; i < st.adapters.size(); ++i) {
        const auto& ad = st.adapters[i];
        const Tensor& tap = b[spec.tap_layer(static_cast<int>(i))];
        Tensor z = matmul_nt(tap, ad.d_proj, cz);
        add_inplace(z, f.a.back());
        Tensor h = matmul_nt(z, ad.w1, cz);
        add_rowvec_inplace(h, ad.u1);
        Tensor s = tanh_map(h);
        Tensor g = matmul_nt(s, ad.w2, cz);
        add_rowvec_inplace(g, ad.u2);
        Tensor a_next = add(f.a.back(), g);
        census_retain(cz, z);
        census_retain(cz, s);
        census_retain(cz, a_next);
        f.z.push_back(std::move(z));
        f.s.push_back(std::move(s));
        f.a.push_back(std::move(a_next));
    }
    Tensor u = matmul_nt(f.a.back(), st.w_up, cz);
    add_inplace(u, b.back());  // side output sums with the backbone's final layer
    f.pooled = Tensor(1, spec.hidden_size);
    for (std::int64_t i = 0; i < n; ++i)
        for (int j = 0; j < spec.hidden_size; ++j) f.pooled.at(0, j) += u.at(i, j);
    scale_inplace(f.pooled, 1.0 / static_cast<double>(n));
    f.logits = matmul_nt(f.pooled, st.head_w, cz);
    add_rowvec_inplace(f.logits, st.head_b);
    if (cz) cz->set_phase(Phase::Idle);
    return f;
}

// Softmax cross-entropy against one label; returns loss and d(loss)/d(logits).
inline double softmax_ce(const Tensor& logits, int label, Tensor* dlogits = nullptr) {
    if (label < 0 || label >= logits.cols) throw NumericsError("label out of range");
    double mx = logits.at(0, 0);
    for (std::int64_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(0, j));
    double sum = 0;
    std::vector<double> p(logits.cols);
    for (std::int64_t j = 0; j < logits.cols; ++j) {
        p[j] = std::exp(logits.at(0, j) - mx);
        sum += p[j];
    }
    for (auto& v : p) v /= sum;
    if (dlogits) {
        *dlogits = Tensor(1, logits.cols);
        for (std::int64_t j = 0; j < logits.cols; ++j) dlogits->at(0, j) = p[j];
        dlogits->at(0, label) -= 1.0;
    }
    return -std::log(std::max(p[label], 1e-300));
}

// Backward pass through the side network only: gradients for every adapter
// parameter, and no operation anywhere near backbone weights (the census
// records zero backbone-backward flops by construction).
inline AdapterGrads adapters_backward(const AdapterState& st, const std::vector<Tensor>& b,
                                      const AdapterForward& f, const Tensor& dlogits,
                                      Census* cz = nullptr) {
    const auto& spec = st.spec;
    const std::int64_t n = b[0].rows;
    if (cz) cz->set_phase(Phase::AdapterBwd);
    AdapterGrads g = zero_like(st);

    g.head_w = matmul_tn(dlogits, f.pooled, cz);  // C x d
    g.head_b = dlogits;
    Tensor dpooled = matmul(dlogits, st.head_w, cz);  // 1 x d
    // u feeds pooled via a mean over tokens; b_L enters additively (no grad kept).
    Tensor du(n, spec.hidden_size);
    for (std::int64_t i = 0; i < n; ++i)
        for (int j = 0; j < spec.hidden_size; ++j)
            du.at(i, j) = dpooled.at(0, j) / static_cast<double>(n);
    g.w_up = matmul_tn(du, f.a.back(), cz);  // d x r
    Tensor da = matmul(du, st.w_up, cz);     // n x r

    for (int i = static_cast<int>(st.adapters.size()) - 1; i >= 0; --i) {
        const auto& ad = st.adapters[i];
        const Tensor& dg = da;  // a_i = a_{i-1} + g_i
        g.adapters[i].u2 = column_sums(dg);
        g.adapters[i].w2 = matmul_tn(dg, f.s[i], cz);  // r x r
        Tensor ds = matmul(dg, ad.w2, cz);
        Tensor dh = ds;  // tanh'(h) = 1 - s^2
        for (std::int64_t e = 0; e < dh.size(); ++e)
            dh.data[e] *= 1.0 - f.s[i].data[e] * f.s[i].data[e];
        g.adapters[i].u1 = column_sums(dh);
        g.adapters[i].w1 = matmul_tn(dh, f.z[i], cz);
        Tensor dz = matmul(dh, ad.w1, cz);
        g.adapters[i].d_proj = matmul_tn(dz, b[spec.tap_layer(i)], cz);  // r x d, tap grad dropped
        add_inplace(da, dz);  // z_i = a_{i-1} + ... contributes to d(a_{i-1})
    }
    g.w_down = matmul_tn(da, b[0], cz);  // r x d, b_0 grad dropped
    if (cz) cz->set_phase(Phase::Idle);
    return g;
}

inline void sgd_step(AdapterState& st, const AdapterGrads& g, double lr) {
    auto ps = st.parameters();
    auto gs = const_cast<AdapterGrads&>(g).parameters();
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (std::int64_t e = 0; e < ps[i]->size(); ++e)
            ps[i]->data[e] -= lr * gs[i]->data[e];
}

// ---------------------------------------------------------------------------
// Toy task and training loop
// ---------------------------------------------------------------------------

struct ToySample {
    std::vector<int> tokens;
    int label = 0;
};

// Labels are linearly separable in the mean embedding: sign of <mean b_0, w*>
// for a seeded direction w*.
inline std::vector<ToySample> make_toy_dataset(const BackboneState& bb, int count,
                                               std::int64_t seq_len, std::uint64_t seed) {
    Rng rng(seed);
    const int d = bb.spec.hidden_size;
    std::vector<double> w(d);
    for (auto& v : w) v = rng.gaussian();
    std::vector<ToySample> samples;
    for (int i = 0; i < count; ++i) {
        ToySample s;
        for (std::int64_t t = 0; t < seq_len; ++t)
            s.tokens.push_back(static_cast<int>(rng.below(bb.spec.vocab_size)));
        double dot = 0;
        for (std::int64_t t = 0; t < seq_len; ++t)
            for (int j = 0; j < d; ++j) dot += bb.embedding.at(s.tokens[t], j) * w[j];
        s.label = dot > 0 ? 1 : 0;
        samples.push_back(std::move(s));
    }
    return samples;
}

struct EpochResult {
    std::vector<double> losses;  // one per step, deterministic sample order
    Census census;               // flops and retained-tensor peaks for this epoch
};

// One epoch of per-sample SGD. Without a populated cache the backbone runs
// and (if a cache is attached) writes each sample's b_0..b_L; once entries
// exist the backbone forward is skipped entirely and activations come off
// disk bit-exact, so the training trajectory is unchanged.
inline EpochResult train_epoch(AdapterState& st, const BackboneState& bb,
                               const std::vector<ToySample>& dataset, CacheStore* cache,
                               double learning_rate, bool require_cache = false) {
    EpochResult res;
    for (const auto& sample : dataset) {
        std::vector<Tensor> b;
        const std::uint64_t id = sample_id_for_tokens(sample.tokens);
        if (cache && cache->contains(id)) {
            auto entry = cache->get(id);
            b = std::move(entry->tensors);
            res.census.set_phase(Phase::AdapterFwd);
            for (const auto& t : b) census_retain(&res.census, t);
            res.census.set_phase(Phase::Idle);
        } else if (require_cache) {
            throw CacheError("cache miss for sample id " + std::to_string(id) +
                             " with cache-only mode requested");
        } else {
            b = backbone_forward(bb, sample.tokens, &res.census);
            if (cache) {
                CacheEntry e;
                e.sample_id = id;
                e.seq_len = static_cast<std::int64_t>(sample.tokens.size());
                e.tensors = b;
                cache->put(e);
            }
        }
        auto fwd = adapters_forward(st, b, &res.census);
        Tensor dlogits;
        res.losses.push_back(softmax_ce(fwd.logits, sample.label, &dlogits));
        auto grads = adapters_backward(st, b, fwd, dlogits, &res.census);
        sgd_step(st, grads, learning_rate);
        res.census.release_all();
    }
    return res;
}

}  // namespace edgetune
