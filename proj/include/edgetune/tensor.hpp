// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0
//
// Row-major 64-bit matrices sized for toy-scale exact numerics, plus the
// instrumentation census used as an oracle by the cost models: multiply-add
// counts per training phase and a registry of tensors retained for backward.
// Census rules: matrix products count 2*p*q*r, elementwise ops and bias adds
// count nothing, and only per-token tensors registered via retain() enter the
// retained-bytes ledger.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace edgetune {

struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Phase { Idle = 0, BackboneFwd, BackboneBwd, AdapterFwd, AdapterBwd };

struct Census {
    std::int64_t flops[5] = {0, 0, 0, 0, 0};
    std::int64_t retained_current_bytes = 0;
    std::int64_t retained_peak_bytes = 0;
    Phase phase = Phase::Idle;

    void set_phase(Phase p) { phase = p; }
    void add_flops(std::int64_t f) { flops[static_cast<int>(phase)] += f; }
    void retain(std::int64_t bytes) {
        retained_current_bytes += bytes;
        retained_peak_bytes = std::max(retained_peak_bytes, retained_current_bytes);
    }
    void release_all() { retained_current_bytes = 0; }

    std::int64_t backbone_fwd_flops() const { return flops[static_cast<int>(Phase::BackboneFwd)]; }
    std::int64_t backbone_bwd_flops() const { return flops[static_cast<int>(Phase::BackboneBwd)]; }
    std::int64_t adapter_fwd_flops() const { return flops[static_cast<int>(Phase::AdapterFwd)]; }
    std::int64_t adapter_bwd_flops() const { return flops[static_cast<int>(Phase::AdapterBwd)]; }
};

struct Tensor {
    std::int64_t rows = 0, cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::int64_t r, std::int64_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::int64_t r, std::int64_t c) { return data[r * cols + c]; }
    double at(std::int64_t r, std::int64_t c) const { return data[r * cols + c]; }
    std::int64_t size() const { return rows * cols; }
    std::int64_t bytes() const { return size() * static_cast<std::int64_t>(sizeof(double)); }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

inline void census_retain(Census* cz, const Tensor& t) {
    if (cz) cz->retain(t.bytes());
}

// y = a * b
inline Tensor matmul(const Tensor& a, const Tensor& b, Census* cz = nullptr) {
    if (a.cols != b.rows) throw NumericsError("matmul shape mismatch");
    Tensor y(a.rows, b.cols);
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t k = 0; k < a.cols; ++k) {
            const double v = a.at(i, k);
            for (std::int64_t j = 0; j < b.cols; ++j) y.at(i, j) += v * b.at(k, j);
        }
    if (cz) cz->add_flops(2 * a.rows * a.cols * b.cols);
    return y;
}

// y = a * b^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b, Census* cz = nullptr) {
    if (a.cols != b.cols) throw NumericsError("matmul_nt shape mismatch");
    Tensor y(a.rows, b.rows);
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t j = 0; j < b.rows; ++j) {
            double acc = 0;
            for (std::int64_t k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(j, k);
            y.at(i, j) = acc;
        }
    if (cz) cz->add_flops(2 * a.rows * a.cols * b.rows);
    return y;
}

// y = a^T * b
inline Tensor matmul_tn(const Tensor& a, const Tensor& b, Census* cz = nullptr) {
    if (a.rows != b.rows) throw NumericsError("matmul_tn shape mismatch");
    Tensor y(a.cols, b.cols);
    for (std::int64_t k = 0; k < a.rows; ++k)
        for (std::int64_t i = 0; i < a.cols; ++i) {
            const double v = a.at(k, i);
            for (std::int64_t j = 0; j < b.cols; ++j) y.at(i, j) += v * b.at(k, j);
        }
    if (cz) cz->add_flops(2 * a.cols * a.rows * b.cols);
    return y;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw NumericsError("add shape mismatch");
    Tensor y = a;
    for (std::int64_t i = 0; i < y.size(); ++i) y.data[i] += b.data[i];
    return y;
}

inline void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw NumericsError("add shape mismatch");
    for (std::int64_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

// Add a 1 x cols row vector to every row.
inline void add_rowvec_inplace(Tensor& a, const Tensor& v) {
    if (v.rows != 1 || v.cols != a.cols) throw NumericsError("row vector shape mismatch");
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t j = 0; j < a.cols; ++j) a.at(i, j) += v.at(0, j);
}

inline Tensor column_sums(const Tensor& a) {
    Tensor y(1, a.cols);
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t j = 0; j < a.cols; ++j) y.at(0, j) += a.at(i, j);
    return y;
}

inline Tensor tanh_map(const Tensor& a) {
    Tensor y = a;
    for (auto& v : y.data) v = std::tanh(v);
    return y;
}

inline Tensor relu_map(const Tensor& a) {
    Tensor y = a;
    for (auto& v : y.data) v = v > 0 ? v : 0.0;
    return y;
}

inline void scale_inplace(Tensor& a, double c) {
    for (auto& v : a.data) v *= c;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::int64_t i = 0; i < a.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

}  // namespace edgetune
