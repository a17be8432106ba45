#include "tinyembed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace tinyembed {

namespace {

double sq_dist(const double* a, const double* b, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

std::vector<int> kmeans(const Matrix& points, int k, uint64_t seed, int max_iters) {
    const int n = points.rows;
    const int d = points.cols;
    if (k < 1) {
        throw std::invalid_argument("kmeans: k must be >= 1");
    }
    if (k > n) {
        throw std::invalid_argument("kmeans: k exceeds the number of points");
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // k-means++ seeding
    Matrix centers(k, d);
    std::vector<double> dist2(static_cast<size_t>(n));
    {
        const int first = static_cast<int>(rng() % static_cast<uint64_t>(n));
        std::copy(points.row(first), points.row(first) + d, centers.row(0));
        for (int i = 0; i < n; ++i) {
            dist2[static_cast<size_t>(i)] = sq_dist(points.row(i), centers.row(0), d);
        }
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (double v : dist2) {
                total += v;
            }
            int chosen = -1;
            if (total > 0.0) {
                const double r = unit(rng) * total;
                double cum = 0.0;
                for (int i = 0; i < n; ++i) {
                    cum += dist2[static_cast<size_t>(i)];
                    if (r < cum) {
                        chosen = i;
                        break;
                    }
                }
            }
            if (chosen < 0) {
                chosen = static_cast<int>(rng() % static_cast<uint64_t>(n));
            }
            std::copy(points.row(chosen), points.row(chosen) + d, centers.row(c));
            for (int i = 0; i < n; ++i) {
                dist2[static_cast<size_t>(i)] =
                    std::min(dist2[static_cast<size_t>(i)], sq_dist(points.row(i), centers.row(c), d));
            }
        }
    }

    std::vector<int> assign(static_cast<size_t>(n), -1);
    std::vector<int> counts(static_cast<size_t>(k));
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(points.row(i), centers.row(0), d);
            for (int c = 1; c < k; ++c) {
                const double dd = sq_dist(points.row(i), centers.row(c), d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            if (assign[static_cast<size_t>(i)] != best) {
                assign[static_cast<size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) {
            break;
        }

        centers.fill(0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            const int c = assign[static_cast<size_t>(i)];
            ++counts[static_cast<size_t>(c)];
            const double* p = points.row(i);
            double* ctr = centers.row(c);
            for (int e = 0; e < d; ++e) {
                ctr[e] += p[e];
            }
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                // re-seed from the point farthest from its own center
                int farthest = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const int owner = assign[static_cast<size_t>(i)];
                    if (counts[static_cast<size_t>(owner)] <= 1) {
                        continue;
                    }
                    const double dd = sq_dist(points.row(i), centers.row(owner), d);
                    if (dd > far_d) {
                        far_d = dd;
                        farthest = i;
                    }
                }
                std::copy(points.row(farthest), points.row(farthest) + d, centers.row(c));
                counts[static_cast<size_t>(c)] = 1;
            } else {
                double* ctr = centers.row(c);
                for (int e = 0; e < d; ++e) {
                    ctr[e] /= counts[static_cast<size_t>(c)];
                }
            }
        }
    }
    return assign;
}

ClusteringReport v_measure(std::span<const int> labels_true, std::span<const int> labels_pred) {
    if (labels_true.size() != labels_pred.size()) {
        throw std::invalid_argument("v_measure: label length mismatch");
    }
    if (labels_true.empty()) {
        throw std::invalid_argument("v_measure: empty labelings");
    }
    const double n = static_cast<double>(labels_true.size());

    std::map<int, double> count_c, count_k;
    std::map<std::pair<int, int>, double> joint;
    for (size_t i = 0; i < labels_true.size(); ++i) {
        count_c[labels_true[i]] += 1.0;
        count_k[labels_pred[i]] += 1.0;
        joint[{labels_true[i], labels_pred[i]}] += 1.0;
    }

    double h_c = 0.0, h_k = 0.0;
    for (const auto& [c, cnt] : count_c) {
        h_c -= (cnt / n) * std::log(cnt / n);
    }
    for (const auto& [k, cnt] : count_k) {
        h_k -= (cnt / n) * std::log(cnt / n);
    }
    double h_c_given_k = 0.0, h_k_given_c = 0.0;
    for (const auto& [ck, cnt] : joint) {
        h_c_given_k -= (cnt / n) * std::log(cnt / count_k.at(ck.second));
        h_k_given_c -= (cnt / n) * std::log(cnt / count_c.at(ck.first));
    }

    ClusteringReport report;
    report.homogeneity = h_c > 0.0 ? 1.0 - h_c_given_k / h_c : 1.0;
    report.completeness = h_k > 0.0 ? 1.0 - h_k_given_c / h_k : 1.0;
    const double hc_sum = report.homogeneity + report.completeness;
    report.v_measure = hc_sum > 0.0 ? 2.0 * report.homogeneity * report.completeness / hc_sum : 0.0;
    report.n_clusters = static_cast<int>(count_k.size());
    return report;
}

ClusteringReport cluster_eval(const Embedder& embedder, const LabeledDataset& dataset,
                              uint64_t seed) {
    dataset.validate();
    const Matrix embeddings = embedder.embed_all(dataset.texts);
    const int k = dataset.n_classes();
    const std::vector<int> assignments = kmeans(embeddings, k, seed);
    ClusteringReport report = v_measure(dataset.labels, assignments);
    report.seed = seed;
    return report;
}

ClassificationReport logistic_probe(const Matrix& train_x, std::span<const int> train_y,
                                    const Matrix& test_x, std::span<const int> test_y,
                                    uint64_t seed, int epochs, double lr) {
    const int n = train_x.rows;
    const int d = train_x.cols;
    if (n < 1 || static_cast<size_t>(n) != train_y.size()) {
        throw std::invalid_argument("logistic_probe: bad training data");
    }
    std::set<int> class_set(train_y.begin(), train_y.end());
    if (class_set.size() < 2) {
        throw std::invalid_argument("logistic_probe: training labels hold a single class");
    }
    for (int y : test_y) {
        if (class_set.count(y) == 0) {
            throw std::invalid_argument("logistic_probe: test label unseen in training");
        }
    }
    std::vector<int> classes(class_set.begin(), class_set.end());
    const int n_classes = static_cast<int>(classes.size());
    std::map<int, int> to_dense;
    for (int c = 0; c < n_classes; ++c) {
        to_dense[classes[static_cast<size_t>(c)]] = c;
    }

    // weights with bias column
    Matrix w(n_classes, d + 1);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.01);
    for (double& v : w.data) {
        v = gauss(rng);
    }

    std::vector<double> logits(static_cast<size_t>(n_classes));
    Matrix grad(n_classes, d + 1);
    for (int epoch = 0; epoch < epochs; ++epoch) {
        grad.fill(0.0);
        for (int i = 0; i < n; ++i) {
            const double* x = train_x.row(i);
            double max_z = -1e300;
            for (int c = 0; c < n_classes; ++c) {
                const double* wc = w.row(c);
                double z = wc[d];  // bias
                for (int e = 0; e < d; ++e) {
                    z += wc[e] * x[e];
                }
                logits[static_cast<size_t>(c)] = z;
                max_z = std::max(max_z, z);
            }
            double sum = 0.0;
            for (double& z : logits) {
                z = std::exp(z - max_z);
                sum += z;
            }
            const int target = to_dense.at(train_y[static_cast<size_t>(i)]);
            for (int c = 0; c < n_classes; ++c) {
                const double p = logits[static_cast<size_t>(c)] / sum;
                const double delta = p - (c == target ? 1.0 : 0.0);
                double* gc = grad.row(c);
                for (int e = 0; e < d; ++e) {
                    gc[e] += delta * x[e];
                }
                gc[d] += delta;
            }
        }
        for (size_t i = 0; i < w.data.size(); ++i) {
            w.data[i] -= lr * grad.data[i] / n;
        }
    }

    ClassificationReport report;
    report.train_size = n;
    report.test_size = test_x.rows;
    report.confusion.assign(static_cast<size_t>(n_classes),
                            std::vector<int>(static_cast<size_t>(n_classes), 0));
    int correct = 0;
    for (int i = 0; i < test_x.rows; ++i) {
        const double* x = test_x.row(i);
        int best = 0;
        double best_z = -1e300;
        for (int c = 0; c < n_classes; ++c) {
            const double* wc = w.row(c);
            double z = wc[d];
            for (int e = 0; e < d; ++e) {
                z += wc[e] * x[e];
            }
            if (z > best_z) {
                best_z = z;
                best = c;
            }
        }
        const int truth = to_dense.at(test_y[static_cast<size_t>(i)]);
        ++report.confusion[static_cast<size_t>(truth)][static_cast<size_t>(best)];
        correct += best == truth ? 1 : 0;
    }
    report.accuracy = test_x.rows > 0 ? static_cast<double>(correct) / test_x.rows : 0.0;
    report.precision.assign(static_cast<size_t>(n_classes), 0.0);
    report.recall.assign(static_cast<size_t>(n_classes), 0.0);
    for (int c = 0; c < n_classes; ++c) {
        int pred_total = 0, true_total = 0;
        for (int o = 0; o < n_classes; ++o) {
            pred_total += report.confusion[static_cast<size_t>(o)][static_cast<size_t>(c)];
            true_total += report.confusion[static_cast<size_t>(c)][static_cast<size_t>(o)];
        }
        const int tp = report.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
        report.precision[static_cast<size_t>(c)] =
            pred_total > 0 ? static_cast<double>(tp) / pred_total : 0.0;
        report.recall[static_cast<size_t>(c)] =
            true_total > 0 ? static_cast<double>(tp) / true_total : 0.0;
    }
    return report;
}

ClassificationReport classify_eval(const Embedder& embedder, const LabeledDataset& train,
                                   const LabeledDataset& test, uint64_t seed) {
    train.validate();
    if (test.texts.empty() || test.texts.size() != test.labels.size()) {
        throw std::invalid_argument("classify_eval: bad test dataset");
    }
    const Matrix train_x = embedder.embed_all(train.texts);
    const Matrix test_x = embedder.embed_all(test.texts);
    return logistic_probe(train_x, train.labels, test_x, test.labels, seed);
}

}  // namespace tinyembed
