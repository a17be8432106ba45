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
    config.seed = 17;
    return config;
}

void randomize_adapters(AdapterWeights& adapters, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.2);
    for (auto& layer : adapters.layers) {
        for (auto& slot : layer) {
            if (slot.has_value()) {
                for (double& v : slot->a.data) {
                    v = gauss(rng);
                }
                for (double& v : slot->b.data) {
                    v = gauss(rng);
                }
            }
        }
    }
}

}  // namespace

TEST_CASE("freshly attached adapter is bit-identical to the base model") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    LoraSpec spec;
    AdaptedModel adapted = attach(config, params, spec, 1);

    std::vector<int> ids = {4, 9, 1, 6};
    ForwardResult base = forward(config, params, ids);
    LoraRuntime runtime = adapted.eval_runtime();
    ForwardOptions opts;
    opts.lora = &runtime;
    ForwardResult with_adapter = forward(config, adapted.base, ids, opts);
    CHECK(base.hidden.values.data == with_adapter.hidden.values.data);
}

TEST_CASE("the key projection and unknown sites are rejected") {
    LoraSpec spec;
    spec.sites = {Site::k};
    CHECK_THROWS(spec.validate());
    spec.sites = {};
    CHECK_THROWS(spec.validate());
    CHECK_THROWS(site_from_name("key"));
    CHECK(site_from_name("gate") == Site::gate);

    LoraSpec bad_rank;
    bad_rank.rank = 0;
    CHECK_THROWS(bad_rank.validate());
    LoraSpec bad_p;
    bad_p.dropout_p = 1.0;
    CHECK_THROWS(bad_p.validate());
}

TEST_CASE("trainable parameter count matches the closed form") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    LoraSpec spec;
    spec.rank = 8;
    AdaptedModel adapted = attach(config, params, spec, 3);

    // 2 layers * rank * sum over sites of (in + out)
    int64_t per_layer = 0;
    for (Site s : spec.sites) {
        const auto [in_dim, out_dim] = site_dims(config, s);
        per_layer += static_cast<int64_t>(spec.rank) * (in_dim + out_dim);
    }
    CHECK(adapted.adapters.trainable_count() == config.n_layers * per_layer);
}

TEST_CASE("merge of a fresh adapter returns the base parameters exactly") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    AdaptedModel adapted = attach(config, params, LoraSpec{}, 5);
    Parameters merged = merge(adapted);
    CHECK(parameter_checksum(merged) == parameter_checksum(params));
}

TEST_CASE("merged and adapted forward agree on random inputs") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    AdaptedModel adapted = attach(config, params, LoraSpec{}, 5);
    randomize_adapters(adapted.adapters, 77);

    Parameters merged = merge(adapted);
    Parameters merged_again = merge(adapted);
    CHECK(parameter_checksum(merged) == parameter_checksum(merged_again));

    std::mt19937_64 rng(123);
    LoraRuntime runtime = adapted.eval_runtime();
    for (int trial = 0; trial < 25; ++trial) {
        const int len = 1 + static_cast<int>(rng() % 8);
        std::vector<int> ids(static_cast<size_t>(len));
        for (int& id : ids) {
            id = static_cast<int>(rng() % config.vocab_size);
        }
        ForwardOptions opts;
        opts.lora = &runtime;
        ForwardResult a = forward(config, adapted.base, ids, opts);
        ForwardResult m = forward(config, merged, ids);
        for (size_t i = 0; i < a.hidden.values.data.size(); ++i) {
            CHECK(std::fabs(a.hidden.values.data[i] - m.hidden.values.data[i]) < 1e-5);
        }
    }
}

TEST_CASE("eval mode is deterministic; p=0 train mode equals eval mode") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    LoraSpec spec;
    spec.dropout_p = 0.0;
    AdaptedModel adapted = attach(config, params, spec, 5);
    randomize_adapters(adapted.adapters, 9);

    std::vector<int> ids = {2, 8, 8, 3};
    LoraRuntime eval_rt = adapted.eval_runtime();
    ForwardOptions eval_opts;
    eval_opts.lora = &eval_rt;
    ForwardResult e1 = forward(config, adapted.base, ids, eval_opts);
    ForwardResult e2 = forward(config, adapted.base, ids, eval_opts);
    CHECK(e1.hidden.values.data == e2.hidden.values.data);

    std::mt19937_64 rng(1);
    LoraRuntime train_rt{&adapted.adapters, true, &rng};
    ForwardOptions train_opts;
    train_opts.lora = &train_rt;
    ForwardResult t = forward(config, adapted.base, ids, train_opts);
    CHECK(t.hidden.values.data == e1.hidden.values.data);
}

TEST_CASE("train-mode dropout keep rate stays within 3 sigma of 1-p") {
    ModelConfig config = tiny_config();
    config.n_layers = 1;
    Parameters params = init_parameters(config);
    LoraSpec spec;
    spec.dropout_p = 0.5;
    spec.sites = {Site::q};
    AdaptedModel adapted = attach(config, params, spec, 5);

    std::mt19937_64 rng(31);
    LoraRuntime runtime{&adapted.adapters, true, &rng};
    ForwardOptions opts;
    opts.lora = &runtime;
    opts.want_cache = true;

    std::vector<int> ids(10, 3);
    int64_t kept = 0;
    int64_t total = 0;
    while (total < 10000) {
        ForwardResult res = forward(config, adapted.base, ids, opts);
        const Matrix& mask = res.cache.layers[0].adapter_mask[static_cast<int>(Site::q)];
        REQUIRE(mask.rows == static_cast<int>(ids.size()));
        for (double v : mask.data) {
            kept += v != 0.0 ? 1 : 0;
            CHECK((v == 0.0 || v == doctest::Approx(2.0)));  // inverted dropout scale
        }
        total += static_cast<int64_t>(mask.data.size());
    }
    const double p_keep = 0.5;
    const double sigma = std::sqrt(p_keep * (1 - p_keep) / static_cast<double>(total));
    CHECK(std::fabs(static_cast<double>(kept) / static_cast<double>(total) - p_keep) < 3.0 * sigma);
}

TEST_CASE("adapter gradients match finite differences (dropout off)") {
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    LoraSpec spec;
    spec.rank = 3;
    spec.dropout_p = 0.0;
    AdaptedModel adapted = attach(config, params, spec, 5);
    randomize_adapters(adapted.adapters, 21);

    std::vector<int> ids = {4, 2, 13, 7};
    Matrix upstream(4, config.d_model);
    std::mt19937_64 rng(55);
    std::normal_distribution<double> gauss;
    for (double& v : upstream.data) {
        v = gauss(rng);
    }

    LoraRuntime runtime = adapted.eval_runtime();
    ForwardOptions opts;
    opts.lora = &runtime;
    opts.want_cache = true;
    ForwardResult res = forward(config, adapted.base, ids, opts);
    BackwardResult analytic = backward(config, adapted.base, res.cache, upstream, &runtime);
    REQUIRE(analytic.adapters != nullptr);

    auto objective = [&]() {
        ForwardResult r = forward(config, adapted.base, ids, ForwardOptions{false, false, &runtime});
        double acc = 0.0;
        for (size_t i = 0; i < upstream.data.size(); ++i) {
            acc += r.hidden.values.data[i] * upstream.data[i];
        }
        return acc;
    };

    for (size_t l = 0; l < adapted.adapters.layers.size(); ++l) {
        for (int s = 0; s < kNumSites; ++s) {
            auto& slot = adapted.adapters.layers[l][s];
            if (!slot.has_value()) {
                continue;
            }
            auto& gslot = analytic.adapters->layers[l][s];
            REQUIRE(gslot.has_value());
            auto numeric_a = testsupport::central_differences(slot->a.data, objective);
            auto cmp_a = testsupport::compare_gradients(gslot->a.data, numeric_a);
            CHECK(cmp_a.max_rel_error < 1e-4);
            auto numeric_b = testsupport::central_differences(slot->b.data, objective);
            auto cmp_b = testsupport::compare_gradients(gslot->b.data, numeric_b);
            CHECK(cmp_b.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("adapter gradients match finite differences through a frozen dropout mask") {
    ModelConfig config = tiny_config();
    config.n_layers = 1;
    Parameters params = init_parameters(config);
    LoraSpec spec;
    spec.rank = 2;
    spec.dropout_p = 0.3;
    spec.sites = {Site::q, Site::down};
    AdaptedModel adapted = attach(config, params, spec, 5);
    randomize_adapters(adapted.adapters, 21);

    std::vector<int> ids = {4, 2, 7};
    Matrix upstream(3, config.d_model);
    std::mt19937_64 gen(100);
    std::normal_distribution<double> gauss;
    for (double& v : upstream.data) {
        v = gauss(gen);
    }

    // Re-seeding before every evaluation freezes the dropout mask, which makes
    // the train-mode pipeline a deterministic function of the weights.
    constexpr uint64_t kMaskSeed = 2024;
    auto run_forward = [&](bool cache) {
        std::mt19937_64 rng(kMaskSeed);
        LoraRuntime runtime{&adapted.adapters, true, &rng};
        ForwardOptions opts;
        opts.lora = &runtime;
        opts.want_cache = cache;
        return forward(config, adapted.base, ids, opts);
    };

    ForwardResult res = run_forward(true);
    LoraRuntime grad_rt{&adapted.adapters, true, nullptr};
    BackwardResult analytic = backward(config, adapted.base, res.cache, upstream, &grad_rt);

    auto objective = [&]() {
        ForwardResult r = run_forward(false);
        double acc = 0.0;
        for (size_t i = 0; i < upstream.data.size(); ++i) {
            acc += r.hidden.values.data[i] * upstream.data[i];
        }
        return acc;
    };

    for (int s : {static_cast<int>(Site::q), static_cast<int>(Site::down)}) {
        auto& slot = adapted.adapters.layers[0][s];
        auto& gslot = analytic.adapters->layers[0][s];
        REQUIRE(slot.has_value());
        REQUIRE(gslot.has_value());
        auto numeric_a = testsupport::central_differences(slot->a.data, objective);
        CHECK(testsupport::compare_gradients(gslot->a.data, numeric_a).max_rel_error < 1e-4);
        auto numeric_b = testsupport::central_differences(slot->b.data, objective);
        CHECK(testsupport::compare_gradients(gslot->b.data, numeric_b).max_rel_error < 1e-4);
    }
}

TEST_CASE("adapter checkpoint round trip") {
    testsupport::TempDir dir("lora");
    ModelConfig config = tiny_config();
    Parameters params = init_parameters(config);
    LoraSpec spec;
    spec.rank = 4;
    spec.alpha = 8.0;
    AdaptedModel adapted = attach(config, params, spec, 5);
    randomize_adapters(adapted.adapters, 7);

    save_adapter(adapted.adapters, dir.file("adapter.ntc"));
    AdapterWeights loaded = load_adapter(dir.file("adapter.ntc"));
    CHECK(loaded.spec.rank == 4);
    CHECK(loaded.spec.alpha == 8.0);
    CHECK(loaded.spec.sites.size() == adapted.adapters.spec.sites.size());
    for (size_t l = 0; l < loaded.layers.size(); ++l) {
        for (int s = 0; s < kNumSites; ++s) {
            CHECK(loaded.layers[l][s].has_value() == adapted.adapters.layers[l][s].has_value());
            if (loaded.layers[l][s].has_value()) {
                CHECK(loaded.layers[l][s]->a.data == adapted.adapters.layers[l][s]->a.data);
                CHECK(loaded.layers[l][s]->b.data == adapted.adapters.layers[l][s]->b.data);
            }
        }
    }
}
