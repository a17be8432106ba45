// Evaluation: k-means++ clustering scored by V-measure, and a multinomial
// logistic-regression probe for classification, both over embeddings.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tinyembed/corpus.hpp"
#include "tinyembed/embedder.hpp"
#include "tinyembed/tensor.hpp"

namespace tinyembed {

// Seeded k-means++ init, Lloyd iterations to an assignment fixpoint; empty
// clusters are re-seeded from the point farthest from its center.
std::vector<int> kmeans(const Matrix& points, int k, uint64_t seed, int max_iters = 100);

struct ClusteringReport {
    double v_measure = 0.0;
    double homogeneity = 0.0;
    double completeness = 0.0;
    int n_clusters = 0;
    uint64_t seed = 0;
};

ClusteringReport v_measure(std::span<const int> labels_true, std::span<const int> labels_pred);

struct ClassificationReport {
    double accuracy = 0.0;
    std::vector<double> precision;  // per class id, dense from 0
    std::vector<double> recall;
    std::vector<std::vector<int>> confusion;  // [true][pred]
    int train_size = 0;
    int test_size = 0;
};

// Embeds every text (template applied when the embedder carries one), runs
// k-means with k = number of gold classes, scores with V-measure.
ClusteringReport cluster_eval(const Embedder& embedder, const LabeledDataset& dataset,
                              uint64_t seed);

// Multinomial logistic-regression probe: full-batch gradient descent,
// 100 epochs at learning rate 0.1, seeded init. Throws when the training
// labels hold a single class or test labels are unseen in training.
ClassificationReport classify_eval(const Embedder& embedder, const LabeledDataset& train,
                                   const LabeledDataset& test, uint64_t seed);

// Probe on precomputed embeddings; classify_eval delegates here.
ClassificationReport logistic_probe(const Matrix& train_x, std::span<const int> train_y,
                                    const Matrix& test_x, std::span<const int> test_y,
                                    uint64_t seed, int epochs = 100, double lr = 0.1);

}  // namespace tinyembed
