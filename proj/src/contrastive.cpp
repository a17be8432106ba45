#include "tinyembed/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tinyembed {

double cosine_sim(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine_sim: dimension mismatch");
    }
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (!(nu > 0.0) || !(nv > 0.0)) {
        throw std::invalid_argument("cosine_sim: zero vector");
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

void ContrastiveBatch::validate() const {
    if (anchors.rows < 2) {
        throw std::invalid_argument("contrastive batch: need B >= 2 for in-batch negatives");
    }
    if (!anchors.same_shape(positives)) {
        throw std::invalid_argument("contrastive batch: anchors/positives shape mismatch");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("contrastive batch: temperature must be positive");
    }
    if (!all_finite(anchors.data) || !all_finite(positives.data)) {
        throw std::invalid_argument("contrastive batch: non-finite embedding");
    }
}

namespace {

// Pairwise cosine similarities; also exposes the row norms for the gradient.
struct SimTable {
    Matrix s;  // B x B, s[i][j] = cos(a_i, p_j)
    Vector anchor_norm, positive_norm;
};

SimTable similarity_table(const ContrastiveBatch& batch) {
    const int b = batch.anchors.rows;
    const int d = batch.anchors.cols;
    SimTable table;
    table.s = Matrix(b, b);
    table.anchor_norm.resize(static_cast<size_t>(b));
    table.positive_norm.resize(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        table.anchor_norm[static_cast<size_t>(i)] =
            l2_norm(std::span<const double>(batch.anchors.row(i), static_cast<size_t>(d)));
        table.positive_norm[static_cast<size_t>(i)] =
            l2_norm(std::span<const double>(batch.positives.row(i), static_cast<size_t>(d)));
    }
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            table.s.at(i, j) =
                cosine_sim(std::span<const double>(batch.anchors.row(i), static_cast<size_t>(d)),
                           std::span<const double>(batch.positives.row(j), static_cast<size_t>(d)));
        }
    }
    return table;
}

}  // namespace

double infonce_loss(const ContrastiveBatch& batch) {
    batch.validate();
    const int b = batch.anchors.rows;
    const SimTable table = similarity_table(batch);

    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* row = table.s.row(i);
        double max_z = -1e300;
        for (int j = 0; j < b; ++j) {
            max_z = std::max(max_z, row[j] / batch.temperature);
        }
        double lse = 0.0;
        for (int j = 0; j < b; ++j) {
            lse += std::exp(row[j] / batch.temperature - max_z);
        }
        loss += -(row[i] / batch.temperature) + max_z + std::log(lse);
    }
    return loss / b;
}

InfonceGrads infonce_grad(const ContrastiveBatch& batch) {
    batch.validate();
    const int b = batch.anchors.rows;
    const int d = batch.anchors.cols;
    const SimTable table = similarity_table(batch);

    // dL/ds_ij = (softmax_j(s_ij / tau) - delta_ij) / (B * tau)
    Matrix ds(b, b);
    for (int i = 0; i < b; ++i) {
        const double* row = table.s.row(i);
        double max_z = -1e300;
        for (int j = 0; j < b; ++j) {
            max_z = std::max(max_z, row[j] / batch.temperature);
        }
        double z = 0.0;
        for (int j = 0; j < b; ++j) {
            ds.at(i, j) = std::exp(row[j] / batch.temperature - max_z);
            z += ds.at(i, j);
        }
        for (int j = 0; j < b; ++j) {
            ds.at(i, j) = (ds.at(i, j) / z - (i == j ? 1.0 : 0.0)) / (b * batch.temperature);
        }
    }

    InfonceGrads grads;
    grads.anchors = Matrix(b, d);
    grads.positives = Matrix(b, d);
    for (int i = 0; i < b; ++i) {
        const double na = table.anchor_norm[static_cast<size_t>(i)];
        const double* ai = batch.anchors.row(i);
        double* gai = grads.anchors.row(i);
        for (int j = 0; j < b; ++j) {
            const double g = ds.at(i, j);
            if (g == 0.0) {
                continue;
            }
            const double np = table.positive_norm[static_cast<size_t>(j)];
            const double s = table.s.at(i, j);
            const double* pj = batch.positives.row(j);
            double* gpj = grads.positives.row(j);
            const double inv_na_np = 1.0 / (na * np);
            for (int e = 0; e < d; ++e) {
                gai[e] += g * (pj[e] * inv_na_np - s * ai[e] / (na * na));
                gpj[e] += g * (ai[e] * inv_na_np - s * pj[e] / (np * np));
            }
        }
    }
    return grads;
}

}  // namespace tinyembed
