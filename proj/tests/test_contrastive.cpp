#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tinyembed/contrastive.hpp"

using namespace tinyembed;

namespace {

Matrix random_rows(int rows, int cols, uint64_t seed) {
    Matrix m(rows, cols);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    for (double& v : m.data) {
        v = gauss(rng);
    }
    return m;
}

}  // namespace

TEST_CASE("cosine similarity basics") {
    Vector a = {1.0, 0.0};
    Vector b = {-1.0, 0.0};
    Vector c = {0.0, 2.0};
    CHECK(cosine_sim(a, a) == doctest::Approx(1.0));
    CHECK(cosine_sim(a, c) == doctest::Approx(0.0));
    CHECK(cosine_sim(a, b) == doctest::Approx(-1.0));
    Vector zero = {0.0, 0.0};
    CHECK_THROWS(cosine_sim(a, zero));
    Vector longer = {1.0, 2.0, 3.0};
    CHECK_THROWS(cosine_sim(a, longer));
}

TEST_CASE("cosine similarity is clamped against rounding") {
    Vector u = {1e-160, 2e-160, -3e-160};
    CHECK(cosine_sim(u, u) <= 1.0);
    CHECK(cosine_sim(u, u) >= -1.0);
}

TEST_CASE("degenerate batch loss is exactly ln(B)") {
    for (int b : {2, 4, 7}) {
        ContrastiveBatch batch;
        batch.anchors = Matrix(b, 3);
        batch.positives = Matrix(b, 3);
        for (int i = 0; i < b; ++i) {
            batch.anchors.at(i, 0) = 1.0;
            batch.anchors.at(i, 2) = -2.0;
            batch.positives.at(i, 0) = 1.0;
            batch.positives.at(i, 2) = -2.0;
        }
        batch.temperature = 0.2;
        CHECK(std::fabs(infonce_loss(batch) - std::log(static_cast<double>(b))) < 1e-9);
    }
}

TEST_CASE("separable B=2 batch hits its closed form at tau=0.2") {
    ContrastiveBatch batch;
    batch.anchors = Matrix(2, 2);
    batch.positives = Matrix(2, 2);
    batch.anchors.at(0, 0) = 1.0;   // a0 = e_x, p0 = e_x
    batch.anchors.at(1, 1) = 1.0;   // a1 = e_y, p1 = e_y
    batch.positives.at(0, 0) = 1.0;
    batch.positives.at(1, 1) = 1.0;
    batch.temperature = 0.2;
    // s(a_i, p_i) = 1, s(a_i, p_j) = 0: per-example loss log(1 + e^{-1/tau})
    const double expected = std::log1p(std::exp(-5.0));
    CHECK(std::fabs(infonce_loss(batch) - expected) < 1e-9);
    CHECK(expected == doctest::Approx(0.006715).epsilon(1e-3));
}

TEST_CASE("tiny temperature drives the separable loss to zero") {
    ContrastiveBatch batch;
    batch.anchors = Matrix(2, 2);
    batch.positives = Matrix(2, 2);
    batch.anchors.at(0, 0) = 1.0;
    batch.anchors.at(1, 1) = 1.0;
    batch.positives.at(0, 0) = 1.0;
    batch.positives.at(1, 1) = 1.0;
    batch.temperature = 1e-3;
    CHECK(infonce_loss(batch) < 1e-12);
    CHECK(infonce_loss(batch) >= 0.0);
}

TEST_CASE("batch validation rejects bad inputs") {
    ContrastiveBatch batch;
    batch.anchors = random_rows(1, 4, 1);
    batch.positives = random_rows(1, 4, 2);
    CHECK_THROWS(infonce_loss(batch));  // B < 2

    batch.anchors = random_rows(3, 4, 1);
    batch.positives = random_rows(3, 5, 2);
    CHECK_THROWS(infonce_loss(batch));  // shape mismatch

    batch.positives = random_rows(3, 4, 2);
    batch.temperature = 0.0;
    CHECK_THROWS(infonce_loss(batch));

    batch.temperature = 0.2;
    batch.anchors.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(infonce_loss(batch));
}

TEST_CASE("loss is permutation-equivariant in the pair order") {
    ContrastiveBatch batch;
    batch.anchors = random_rows(5, 6, 10);
    batch.positives = random_rows(5, 6, 11);
    batch.temperature = 0.2;
    const double base = infonce_loss(batch);

    std::vector<int> perm = {3, 0, 4, 1, 2};
    ContrastiveBatch permuted = batch;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 6; ++j) {
            permuted.anchors.at(i, j) = batch.anchors.at(perm[i], j);
            permuted.positives.at(i, j) = batch.positives.at(perm[i], j);
        }
    }
    CHECK(infonce_loss(permuted) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("loss is invariant to positive rescaling of the embeddings") {
    ContrastiveBatch batch;
    batch.anchors = random_rows(4, 5, 20);
    batch.positives = random_rows(4, 5, 21);
    batch.temperature = 0.3;
    const double base = infonce_loss(batch);

    ContrastiveBatch scaled = batch;
    for (double& v : scaled.anchors.data) {
        v *= 3.7;
    }
    for (double& v : scaled.positives.data) {
        v *= 0.11;
    }
    CHECK(infonce_loss(scaled) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("raising a diagonal similarity lowers the loss") {
    ContrastiveBatch batch;
    batch.anchors = random_rows(4, 5, 30);
    batch.positives = random_rows(4, 5, 31);
    batch.temperature = 0.2;
    const double before = infonce_loss(batch);
    CHECK(before >= 0.0);

    // pull p_0 toward a_0
    for (int j = 0; j < 5; ++j) {
        batch.positives.at(0, j) = 0.2 * batch.positives.at(0, j) + 0.8 * batch.anchors.at(0, j);
    }
    CHECK(infonce_loss(batch) < before);
}

TEST_CASE("analytic InfoNCE gradient matches finite differences") {
    ContrastiveBatch batch;
    batch.anchors = random_rows(4, 8, 40);
    batch.positives = random_rows(4, 8, 41);
    batch.temperature = 0.2;

    InfonceGrads grads = infonce_grad(batch);
    auto objective = [&]() { return infonce_loss(batch); };

    auto numeric_a = testsupport::central_differences(batch.anchors.data, objective);
    auto cmp_a = testsupport::compare_gradients(grads.anchors.data, numeric_a);
    CHECK(cmp_a.max_rel_error < 1e-4);

    auto numeric_p = testsupport::central_differences(batch.positives.data, objective);
    auto cmp_p = testsupport::compare_gradients(grads.positives.data, numeric_p);
    CHECK(cmp_p.max_rel_error < 1e-4);
}

TEST_CASE("identical embeddings give anchor gradients that cancel rowwise") {
    ContrastiveBatch batch;
    batch.anchors = Matrix(4, 3);
    batch.positives = Matrix(4, 3);
    for (int i = 0; i < 4; ++i) {
        batch.anchors.at(i, 0) = 0.6;
        batch.anchors.at(i, 1) = -0.8;
        batch.positives.at(i, 0) = 0.6;
        batch.positives.at(i, 1) = -0.8;
    }
    batch.temperature = 0.2;
    InfonceGrads grads = infonce_grad(batch);
    // all similarities tie, so every row's pull and push balance exactly
    for (double v : grads.anchors.data) {
        CHECK(std::fabs(v) < 1e-12);
    }
    for (double v : grads.positives.data) {
        CHECK(std::fabs(v) < 1e-12);
    }
}
