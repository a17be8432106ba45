// Token-to-sentence reduction: mean, last-token, or EOS-token pooling.
#pragma once

#include <optional>
#include <string>

#include "tinyembed/tensor.hpp"

namespace tinyembed {

enum class PoolKind { mean, last_token, eos_token };

const char* pool_kind_name(PoolKind kind);
PoolKind pool_kind_from_name(const std::string& name);

struct PoolingStrategy {
    PoolKind kind = PoolKind::mean;
    bool normalize = true;  // L2-normalize the pooled vector
};

struct Embedding {
    Vector values;
    int source_len = 0;
    PoolingStrategy strategy;
};

// eos_position selects the row for eos_token pooling and must be a valid row.
// Throws on empty input, missing eos_position, or a zero vector under
// normalization.
Embedding pool(const Matrix& hidden, PoolingStrategy strategy,
               std::optional<int> eos_position = std::nullopt);

// Gradient of the un-normalized reduction: routes `upstream` back onto the
// token rows. Normalization, when wanted, is the similarity's job.
Matrix pool_gradient(PoolingStrategy strategy, const Vector& upstream, int seq_len,
                     std::optional<int> eos_position = std::nullopt);

// Mean over a subset of rows (masked pooling for prompt-token exclusion).
// `rows` must be non-empty and in range.
Embedding pool_mean_masked(const Matrix& hidden, const std::vector<int>& rows, bool normalize);

}  // namespace tinyembed
