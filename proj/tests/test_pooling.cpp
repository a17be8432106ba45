#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tinyembed/model.hpp"
#include "tinyembed/pooling.hpp"

using namespace tinyembed;

namespace {

Matrix rows_2x2() {
    Matrix m(2, 2);
    m.at(0, 0) = 1;
    m.at(0, 1) = 2;
    m.at(1, 0) = 3;
    m.at(1, 1) = 4;
    return m;
}

}  // namespace

TEST_CASE("mean pooling is the arithmetic mean of rows") {
    Embedding e = pool(rows_2x2(), {PoolKind::mean, false});
    CHECK(e.values == Vector{2.0, 3.0});
    CHECK(e.source_len == 2);
}

TEST_CASE("last-token pooling returns the final row") {
    Embedding e = pool(rows_2x2(), {PoolKind::last_token, false});
    CHECK(e.values == Vector{3.0, 4.0});
}

TEST_CASE("eos pooling picks the indicated row and demands a position") {
    Embedding e = pool(rows_2x2(), {PoolKind::eos_token, false}, 0);
    CHECK(e.values == Vector{1.0, 2.0});
    CHECK_THROWS(pool(rows_2x2(), {PoolKind::eos_token, false}));
    CHECK_THROWS(pool(rows_2x2(), {PoolKind::eos_token, false}, 2));
}

TEST_CASE("identical rows pool to that row under every strategy") {
    Matrix m(3, 2);
    for (int t = 0; t < 3; ++t) {
        m.at(t, 0) = -1.5;
        m.at(t, 1) = 0.5;
    }
    for (PoolKind kind : {PoolKind::mean, PoolKind::last_token, PoolKind::eos_token}) {
        Embedding e = pool(m, {kind, false}, 1);
        CHECK(e.values[0] == doctest::Approx(-1.5));
        CHECK(e.values[1] == doctest::Approx(0.5));
    }
}

TEST_CASE("length-1 sequences make last-token and mean pooling coincide") {
    Matrix m(1, 3);
    m.at(0, 0) = 2;
    m.at(0, 1) = -7;
    m.at(0, 2) = 0.25;
    CHECK(pool(m, {PoolKind::mean, false}).values == pool(m, {PoolKind::last_token, false}).values);
}

TEST_CASE("mean pooling is invariant to row permutation") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    Matrix m(5, 4);
    for (double& v : m.data) {
        v = gauss(rng);
    }
    Embedding base = pool(m, {PoolKind::mean, false});

    std::vector<int> perm = {4, 2, 0, 3, 1};
    Matrix shuffled(5, 4);
    for (int t = 0; t < 5; ++t) {
        std::copy(m.row(perm[t]), m.row(perm[t]) + 4, shuffled.row(t));
    }
    Embedding permuted = pool(shuffled, {PoolKind::mean, false});
    for (int i = 0; i < 4; ++i) {
        CHECK(permuted.values[i] == doctest::Approx(base.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("normalization gives unit norm and rejects the zero vector") {
    Matrix m(2, 3);
    m.at(0, 0) = 3.0;
    m.at(1, 0) = 1.0;
    Embedding e = pool(m, {PoolKind::mean, true});
    CHECK(l2_norm(e.values) == doctest::Approx(1.0).epsilon(1e-6));

    Matrix zero(2, 3);
    CHECK_THROWS(pool(zero, {PoolKind::mean, true}));
    CHECK_NOTHROW(pool(zero, {PoolKind::mean, false}));
}

TEST_CASE("empty hidden states are rejected") {
    CHECK_THROWS(pool(Matrix(0, 4), {PoolKind::mean, false}));
}

TEST_CASE("pool_gradient routes upstream as specified") {
    Matrix mean_grad = pool_gradient({PoolKind::mean, false}, Vector{2.0, 4.0}, 2);
    CHECK(mean_grad.at(0, 0) == 1.0);
    CHECK(mean_grad.at(0, 1) == 2.0);
    CHECK(mean_grad.at(1, 0) == 1.0);
    CHECK(mean_grad.at(1, 1) == 2.0);

    Matrix last_grad = pool_gradient({PoolKind::last_token, false}, Vector{1.0, -1.0}, 3);
    for (int t = 0; t < 2; ++t) {
        CHECK(last_grad.at(t, 0) == 0.0);
        CHECK(last_grad.at(t, 1) == 0.0);
    }
    CHECK(last_grad.at(2, 0) == 1.0);
    CHECK(last_grad.at(2, 1) == -1.0);

    Matrix eos_grad = pool_gradient({PoolKind::eos_token, false}, Vector{5.0}, 3, 1);
    CHECK(eos_grad.at(0, 0) == 0.0);
    CHECK(eos_grad.at(1, 0) == 5.0);
    CHECK(eos_grad.at(2, 0) == 0.0);
}

TEST_CASE("pool gradients match finite differences through the model") {
    ModelConfig config;
    config.vocab_size = 12;
    config.d_model = 8;
    config.n_layers = 1;
    config.n_heads = 2;
    config.d_ff = 16;
    config.max_seq_len = 8;
    config.seed = 4;
    Parameters params = init_parameters(config);
    std::vector<int> ids = {3, 7, 1};

    std::mt19937_64 rng(8);
    std::normal_distribution<double> gauss;
    Vector upstream(static_cast<size_t>(config.d_model));
    for (double& v : upstream) {
        v = gauss(rng);
    }

    for (PoolKind kind : {PoolKind::mean, PoolKind::last_token, PoolKind::eos_token}) {
        PoolingStrategy strategy{kind, false};
        const std::optional<int> eos_pos =
            kind == PoolKind::eos_token ? std::optional<int>(2) : std::nullopt;

        auto objective = [&]() {
            ForwardResult res = forward(config, params, ids);
            Embedding e = pool(res.hidden.values, strategy, eos_pos);
            double acc = 0.0;
            for (size_t i = 0; i < upstream.size(); ++i) {
                acc += e.values[i] * upstream[i];
            }
            return acc;
        };

        ForwardOptions opts;
        opts.want_cache = true;
        ForwardResult res = forward(config, params, ids, opts);
        Matrix hidden_grad =
            pool_gradient(strategy, upstream, static_cast<int>(ids.size()), eos_pos);
        BackwardResult analytic = backward(config, params, res.cache, hidden_grad);

        auto numeric = testsupport::central_differences(params.layers[0].q.data, objective);
        auto cmp = testsupport::compare_gradients(analytic.params.layers[0].q.data, numeric);
        CHECK(cmp.max_rel_error < 1e-4);

        auto numeric_emb = testsupport::central_differences(params.embedding.data, objective);
        auto cmp_emb = testsupport::compare_gradients(analytic.params.embedding.data, numeric_emb);
        CHECK(cmp_emb.max_rel_error < 1e-4);
    }
}

TEST_CASE("masked mean pooling averages only the selected rows") {
    Matrix m(3, 2);
    m.at(0, 0) = 10;
    m.at(1, 0) = 2;
    m.at(1, 1) = 4;
    m.at(2, 0) = 4;
    m.at(2, 1) = -4;
    Embedding e = pool_mean_masked(m, {1, 2}, false);
    CHECK(e.values[0] == doctest::Approx(3.0));
    CHECK(e.values[1] == doctest::Approx(0.0));
    CHECK_THROWS(pool_mean_masked(m, {}, false));
    CHECK_THROWS(pool_mean_masked(m, {3}, false));
}
