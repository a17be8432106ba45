// Minimal dense row-major matrix plus the handful of numeric helpers the
// rest of the library needs. Everything is double precision; the model is
// desk-scale and the test suite leans on finite-difference gradient checks.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tinyembed {

using Vector = std::vector<double>;

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {
        if (r < 0 || c < 0) {
            throw std::invalid_argument("Matrix: negative dimension");
        }
    }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return data.size(); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

inline double l2_norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

// y = W x, W: out x in
inline void matvec(const Matrix& w, const double* x, double* y) {
    for (int o = 0; o < w.rows; ++o) {
        y[o] = dot(std::span<const double>(w.row(o), static_cast<size_t>(w.cols)),
                   std::span<const double>(x, static_cast<size_t>(w.cols)));
    }
}

// y += W^T d, W: out x in, d: out
inline void matvec_transposed_acc(const Matrix& w, const double* d, double* y) {
    for (int o = 0; o < w.rows; ++o) {
        const double* row = w.row(o);
        const double dv = d[o];
        for (int i = 0; i < w.cols; ++i) {
            y[i] += row[i] * dv;
        }
    }
}

// dW += d (outer) x, d: out, x: in
inline void outer_acc(Matrix& dw, const double* d, const double* x) {
    for (int o = 0; o < dw.rows; ++o) {
        double* row = dw.row(o);
        const double dv = d[o];
        for (int i = 0; i < dw.cols; ++i) {
            row[i] += dv * x[i];
        }
    }
}

inline bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

// splitmix64; used to derive independent sub-seeds from one master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace tinyembed
