// Cosine similarity and the in-batch InfoNCE loss with temperature, plus its
// analytic gradient. Row i of `anchors` is pulled toward row i of `positives`
// against the other B-1 positives in the batch.
#pragma once

#include <span>

#include "tinyembed/tensor.hpp"

namespace tinyembed {

// dot(u,v)/(|u||v|), clamped to [-1, 1]. Throws on zero vectors.
double cosine_sim(std::span<const double> u, std::span<const double> v);

struct ContrastiveBatch {
    Matrix anchors;    // B x d
    Matrix positives;  // B x d
    double temperature = 0.2;

    void validate() const;  // throws on B < 2, shape mismatch, non-finite rows, tau <= 0
};

double infonce_loss(const ContrastiveBatch& batch);

struct InfonceGrads {
    Matrix anchors;
    Matrix positives;
};

InfonceGrads infonce_grad(const ContrastiveBatch& batch);

}  // namespace tinyembed
