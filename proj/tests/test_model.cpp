#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "tinyembed/lora.hpp"
#include "tinyembed/model.hpp"

using namespace tinyembed;

namespace {

ModelConfig tiny_config() {
    ModelConfig config;
    config.vocab_size = 20;
    config.d_model = 16;
    config.n_layers = 2;
    config.n_heads = 2;
    config.d_ff = 32;
    config.max_seq_len = 16;
    config.seed = 42;
    return config;
}

Matrix random_upstream(int rows, int cols, uint64_t seed) {
    Matrix u(rows, cols);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    for (double& v : u.data) {
        v = gauss(rng);
    }
    return u;
}

// Scalar objective <hidden, U>; its gradient w.r.t. hidden is exactly U.
double project_hidden(const ModelConfig& config, const Parameters& params,
                      const std::vector<int>& ids, const Matrix& u) {
    ForwardResult res = forward(config, params, ids);
    double acc = 0.0;
    for (size_t i = 0; i < u.data.size(); ++i) {
        acc += res.hidden.values.data[i] * u.data[i];
    }
    return acc;
}

}  // namespace

TEST_CASE("init is deterministic and validates dimensions") {
    ModelConfig config = tiny_config();
    Parameters a = init_parameters(config);
    Parameters b = init_parameters(config);
    CHECK(parameter_checksum(a) == parameter_checksum(b));

    config.seed = 43;
    Parameters c = init_parameters(config);
    CHECK(parameter_checksum(a) != parameter_checksum(c));

    ModelConfig bad = tiny_config();
    bad.d_model = 8;
    bad.n_heads = 3;
    CHECK_THROWS(init_parameters(bad));
    ModelConfig zero = tiny_config();
    zero.n_layers = 0;
    CHECK_THROWS(init_parameters(zero));
}

TEST_CASE("parameter count matches the hand-summed closed form") {
    ModelConfig config;
    config.vocab_size = 100;
    config.d_model = 16;
    config.n_layers = 2;
    config.n_heads = 2;
    config.d_ff = 32;
    config.max_seq_len = 8;

    // independent tally: sum of shape products
    const int64_t emb = 100 * 16;
    const int64_t attn = 4 * (16 * 16);
    const int64_t mlp = (32 * 16) + (32 * 16) + (16 * 32);
    const int64_t norms = 16 + 16;
    const int64_t expected = emb + 2 * (attn + mlp + norms) + 16;
    CHECK(parameter_count(config) == expected);

    Parameters params = init_parameters(config);
    int64_t actual = static_cast<int64_t>(params.embedding.size());
    for (const LayerParams& layer : params.layers) {
        for (Site s : kAllSites) {
            actual += static_cast<int64_t>(layer.site(s).size());
        }
        actual += static_cast<int64_t>(layer.norm1.size() + layer.norm2.size());
    }
    actual += static_cast<int64_t>(params.final_norm.size());
    CHECK(actual == expected);
}

TEST_CASE("single-token attention map is [[1.0]]") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    ForwardOptions opts;
    opts.want_attention = true;
    ForwardResult res = forward(config, params, std::vector<int>{3}, opts);
    for (int l = 0; l < config.n_layers; ++l) {
        for (int h = 0; h < config.n_heads; ++h) {
            const Matrix& map = res.attention.weights[l][h];
            REQUIRE(map.rows == 1);
            CHECK(map.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("attention rows sum to 1 and future positions are exactly zero") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    std::vector<int> ids = {1, 4, 9, 2, 7, 7, 3};
    ForwardOptions opts;
    opts.want_attention = true;
    ForwardResult res = forward(config, params, ids, opts);
    for (const auto& layer : res.attention.weights) {
        for (const Matrix& map : layer) {
            for (int i = 0; i < map.rows; ++i) {
                double sum = 0.0;
                for (int j = 0; j < map.cols; ++j) {
                    if (j > i) {
                        CHECK(map.at(i, j) == 0.0);
                    } else {
                        CHECK(map.at(i, j) >= 0.0);
                        sum += map.at(i, j);
                    }
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("causal prefix property: appending tokens never changes earlier rows") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    std::vector<int> ids = {5, 2, 11};
    std::vector<int> extended = {5, 2, 11, 8, 1};
    ForwardResult small = forward(config, params, ids);
    ForwardResult big = forward(config, params, extended);
    for (int t = 0; t < static_cast<int>(ids.size()); ++t) {
        for (int i = 0; i < config.d_model; ++i) {
            CHECK(big.hidden.values.at(t, i) ==
                  doctest::Approx(small.hidden.values.at(t, i)).epsilon(1e-6));
        }
    }
}

TEST_CASE("editing a later token leaves earlier hidden rows unchanged") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    std::vector<int> ids = {5, 2, 11, 8, 1};
    std::vector<int> edited = ids;
    edited[3] = 14;  // positions 0..2 must be unaffected
    ForwardResult a = forward(config, params, ids);
    ForwardResult b = forward(config, params, edited);
    for (int t = 0; t < 3; ++t) {
        for (int i = 0; i < config.d_model; ++i) {
            CHECK(b.hidden.values.at(t, i) == doctest::Approx(a.hidden.values.at(t, i)).epsilon(1e-6));
        }
    }
}

TEST_CASE("forward validates sequence length and token ids") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    std::vector<int> too_long(static_cast<size_t>(config.max_seq_len + 1), 1);
    CHECK_THROWS(forward(config, params, too_long));
    CHECK_THROWS(forward(config, params, std::vector<int>{config.vocab_size}));
    CHECK_THROWS(forward(config, params, std::vector<int>{-1}));
    CHECK_THROWS(forward(config, params, std::vector<int>{}));
}

TEST_CASE("forward and backward are bit-reproducible") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    std::vector<int> ids = {3, 1, 4, 1, 5};
    ForwardOptions opts;
    opts.want_cache = true;
    ForwardResult r1 = forward(config, params, ids, opts);
    ForwardResult r2 = forward(config, params, ids, opts);
    CHECK(r1.hidden.values.data == r2.hidden.values.data);

    Matrix upstream = random_upstream(5, config.d_model, 99);
    BackwardResult g1 = backward(config, params, r1.cache, upstream);
    BackwardResult g2 = backward(config, params, r2.cache, upstream);
    CHECK(parameter_checksum(g1.params) == parameter_checksum(g2.params));
}

TEST_CASE("zero upstream gradient yields all-zero parameter gradients") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    std::vector<int> ids = {3, 1, 4};
    ForwardOptions opts;
    opts.want_cache = true;
    ForwardResult res = forward(config, params, ids, opts);
    Matrix upstream(3, config.d_model);
    BackwardResult grads = backward(config, params, res.cache, upstream);
    CHECK(parameter_checksum(grads.params) == parameter_checksum(zero_like(config)));
}

TEST_CASE("backward rejects a mis-shaped upstream gradient") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    ForwardOptions opts;
    opts.want_cache = true;
    ForwardResult res = forward(config, params, std::vector<int>{3, 1}, opts);
    CHECK_THROWS(backward(config, params, res.cache, Matrix(3, config.d_model)));
    CHECK_THROWS(backward(config, params, res.cache, Matrix(2, config.d_model + 1)));
}

TEST_CASE("every parameter gradient matches central finite differences") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    std::vector<int> ids = {3, 7, 1, 12, 5};
    const Matrix upstream = random_upstream(5, config.d_model, 7);

    ForwardOptions opts;
    opts.want_cache = true;
    ForwardResult res = forward(config, params, ids, opts);
    BackwardResult analytic = backward(config, params, res.cache, upstream);

    auto objective = [&]() { return project_hidden(config, params, ids, upstream); };
    auto check_tensor = [&](std::vector<double>& values, const std::vector<double>& grad,
                            const char* name) {
        const auto numeric = testsupport::central_differences(values, objective);
        const auto cmp = testsupport::compare_gradients(grad, numeric);
        INFO("tensor ", name, " worst component ", cmp.worst_index, " analytic ",
             cmp.analytic_at_worst, " numeric ", cmp.numeric_at_worst);
        CHECK(cmp.max_rel_error < 1e-4);
    };

    check_tensor(params.embedding.data, analytic.params.embedding.data, "embedding");
    for (int l = 0; l < config.n_layers; ++l) {
        for (Site s : kAllSites) {
            check_tensor(params.layers[l].site(s).data, analytic.params.layers[l].site(s).data,
                         site_name(s));
        }
        check_tensor(params.layers[l].norm1, analytic.params.layers[l].norm1, "norm1");
        check_tensor(params.layers[l].norm2, analytic.params.layers[l].norm2, "norm2");
    }
    check_tensor(params.final_norm, analytic.params.final_norm, "final_norm");
}

TEST_CASE("gradient reaches only the embedding rows the graph touches") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    std::vector<int> ids = {3, 9};
    ForwardOptions opts;
    opts.want_cache = true;
    ForwardResult res = forward(config, params, ids, opts);

    // upstream only at position 0: causality keeps token 9 out of the graph
    Matrix upstream(2, config.d_model);
    for (int i = 0; i < config.d_model; ++i) {
        upstream.at(0, i) = 1.0;
    }
    BackwardResult grads = backward(config, params, res.cache, upstream);
    double row3 = 0.0, row9 = 0.0, row5 = 0.0;
    for (int i = 0; i < config.d_model; ++i) {
        row3 += std::fabs(grads.params.embedding.at(3, i));
        row9 += std::fabs(grads.params.embedding.at(9, i));
        row5 += std::fabs(grads.params.embedding.at(5, i));
    }
    CHECK(row3 > 0.0);
    CHECK(row9 == 0.0);  // only reachable through future positions
    CHECK(row5 == 0.0);  // never in the sequence
}

TEST_CASE("model checkpoint round trip is exact") {
    testsupport::TempDir dir("model");
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    save_model(config, params, dir.file("base.ntc"));
    auto [loaded_config, loaded_params] = load_model(dir.file("base.ntc"));
    CHECK(loaded_config.vocab_size == config.vocab_size);
    CHECK(loaded_config.max_seq_len == config.max_seq_len);
    CHECK(parameter_checksum(loaded_params) == parameter_checksum(params));
}

// Golden value frozen after the finite-difference suite first passed; guards
// against silent numerical drift in the forward pass.
TEST_CASE("fixed seed and input give the frozen hidden-state checksum") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    ForwardResult res = forward(config, params, std::vector<int>{3, 1, 4, 1, 5});
    double acc = 0.0;
    for (size_t i = 0; i < res.hidden.values.data.size(); ++i) {
        acc += res.hidden.values.data[i] * static_cast<double>(i % 7 + 1);
    }
    CHECK(acc == doctest::Approx(115.62277669761762).epsilon(1e-12));
}
