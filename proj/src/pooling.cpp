#include "tinyembed/pooling.hpp"

#include <cmath>
#include <stdexcept>

namespace tinyembed {

namespace {

constexpr double kNormFloor = 1e-300;

void normalize_or_throw(Vector& v) {
    const double norm = l2_norm(v);
    if (!(norm > kNormFloor)) {
        throw std::invalid_argument("pool: cannot normalize a zero vector");
    }
    for (double& x : v) {
        x /= norm;
    }
}

}  // namespace

const char* pool_kind_name(PoolKind kind) {
    switch (kind) {
        case PoolKind::mean: return "mean";
        case PoolKind::last_token: return "last_token";
        case PoolKind::eos_token: return "eos_token";
    }
    throw std::invalid_argument("pool_kind_name: bad kind");
}

PoolKind pool_kind_from_name(const std::string& name) {
    if (name == "mean") return PoolKind::mean;
    if (name == "last_token" || name == "last") return PoolKind::last_token;
    if (name == "eos_token" || name == "eos") return PoolKind::eos_token;
    throw std::invalid_argument("unknown pooling strategy: " + name);
}

Embedding pool(const Matrix& hidden, PoolingStrategy strategy, std::optional<int> eos_position) {
    if (hidden.rows < 1) {
        throw std::invalid_argument("pool: empty hidden states");
    }
    Embedding out;
    out.source_len = hidden.rows;
    out.strategy = strategy;
    out.values.assign(static_cast<size_t>(hidden.cols), 0.0);

    switch (strategy.kind) {
        case PoolKind::mean:
            for (int t = 0; t < hidden.rows; ++t) {
                const double* row = hidden.row(t);
                for (int i = 0; i < hidden.cols; ++i) {
                    out.values[static_cast<size_t>(i)] += row[i];
                }
            }
            for (double& v : out.values) {
                v /= hidden.rows;
            }
            break;
        case PoolKind::last_token: {
            const double* row = hidden.row(hidden.rows - 1);
            out.values.assign(row, row + hidden.cols);
            break;
        }
        case PoolKind::eos_token: {
            if (!eos_position.has_value()) {
                throw std::invalid_argument("pool: eos_token pooling requires eos_position");
            }
            if (*eos_position < 0 || *eos_position >= hidden.rows) {
                throw std::invalid_argument("pool: eos_position out of range");
            }
            const double* row = hidden.row(*eos_position);
            out.values.assign(row, row + hidden.cols);
            break;
        }
    }

    if (strategy.normalize) {
        normalize_or_throw(out.values);
    }
    return out;
}

Matrix pool_gradient(PoolingStrategy strategy, const Vector& upstream, int seq_len,
                     std::optional<int> eos_position) {
    if (seq_len < 1) {
        throw std::invalid_argument("pool_gradient: seq_len must be >= 1");
    }
    const int d = static_cast<int>(upstream.size());
    Matrix grad(seq_len, d);
    switch (strategy.kind) {
        case PoolKind::mean:
            for (int t = 0; t < seq_len; ++t) {
                double* row = grad.row(t);
                for (int i = 0; i < d; ++i) {
                    row[i] = upstream[static_cast<size_t>(i)] / seq_len;
                }
            }
            break;
        case PoolKind::last_token: {
            double* row = grad.row(seq_len - 1);
            for (int i = 0; i < d; ++i) {
                row[i] = upstream[static_cast<size_t>(i)];
            }
            break;
        }
        case PoolKind::eos_token: {
            if (!eos_position.has_value() || *eos_position < 0 || *eos_position >= seq_len) {
                throw std::invalid_argument("pool_gradient: eos_position invalid");
            }
            double* row = grad.row(*eos_position);
            for (int i = 0; i < d; ++i) {
                row[i] = upstream[static_cast<size_t>(i)];
            }
            break;
        }
    }
    return grad;
}

Embedding pool_mean_masked(const Matrix& hidden, const std::vector<int>& rows, bool normalize) {
    if (rows.empty()) {
        throw std::invalid_argument("pool_mean_masked: no rows selected");
    }
    Embedding out;
    out.source_len = hidden.rows;
    out.strategy = {PoolKind::mean, normalize};
    out.values.assign(static_cast<size_t>(hidden.cols), 0.0);
    for (int t : rows) {
        if (t < 0 || t >= hidden.rows) {
            throw std::invalid_argument("pool_mean_masked: row out of range");
        }
        const double* row = hidden.row(t);
        for (int i = 0; i < hidden.cols; ++i) {
            out.values[static_cast<size_t>(i)] += row[i];
        }
    }
    for (double& v : out.values) {
        v /= static_cast<double>(rows.size());
    }
    if (normalize) {
        normalize_or_throw(out.values);
    }
    return out;
}

}  // namespace tinyembed
