#include "tinyembed/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "tinyembed/contrastive.hpp"
#include "tinyembed/embedder.hpp"
#include "tinyembed/prompts.hpp"

namespace tinyembed {

void TrainConfig::validate() const {
    if (batch_size < 2) {
        throw std::invalid_argument("train config: batch_size must be >= 2 (in-batch negatives)");
    }
    if (!(learning_rate > 0.0) || !(temperature > 0.0)) {
        throw std::invalid_argument("train config: learning_rate and temperature must be positive");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw std::invalid_argument("train config: dropout_p must lie in [0, 1)");
    }
    if (max_steps < 0 || eval_every < 1 || checkpoint_every < 1) {
        throw std::invalid_argument("train config: bad step schedule");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("train config: betas must lie in (0, 1)");
    }
}

void adamw_step(std::vector<double>& weights, const std::vector<double>& grads, AdamWState& state,
                double lr, double beta1, double beta2, double eps, double weight_decay) {
    if (weights.size() != grads.size() || weights.size() != state.m.size()) {
        throw std::invalid_argument("adamw_step: shape mismatch");
    }
    state.t += 1;
    const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bias2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < weights.size(); ++i) {
        const double g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        const double m_hat = state.m[i] / bias1;
        const double v_hat = state.v[i] / bias2;
        weights[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * weights[i]);
    }
}

namespace {

struct EncodedItem {
    std::vector<int> ids;
    std::optional<int> eos_position;
};

// One forward/backward unit of work per pair side.
struct ItemState {
    EncodedItem encoded;
    ForwardCache cache;
    Vector pooled;
};

EncodedItem encode_for_training(const std::string& text, const Vocabulary& vocab,
                                const std::optional<PromptTemplate>& tmpl, PoolKind kind) {
    EncodedItem out;
    std::string prompted = text;
    if (tmpl.has_value()) {
        prompted = apply_template(*tmpl, text).text;
    }
    out.ids = encode(prompted, vocab).ids;
    if (out.ids.empty()) {
        throw std::runtime_error("training: text tokenized to nothing: " + text);
    }
    if (kind == PoolKind::eos_token) {
        out.ids.push_back(vocab.eos_id);
        out.eos_position = static_cast<int>(out.ids.size()) - 1;
    }
    return out;
}

template <typename Fn>
void parallel_for(size_t count, int jobs, Fn&& body) {
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
    if (workers == 1) {
        for (size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                }
            }
        });
    }
    for (std::thread& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

void dump_bad_batch(const std::string& out_dir, int step,
                    const std::vector<const PositivePair*>& batch) {
    nlohmann::json dump;
    dump["step"] = step;
    dump["pairs"] = nlohmann::json::array();
    for (const PositivePair* pair : batch) {
        dump["pairs"].push_back({{"anchor", pair->anchor}, {"positive", pair->positive}});
    }
    std::ofstream out((std::filesystem::path(out_dir) / "diagnostic_batch.json").string());
    out << dump.dump(2) << '\n';
}

}  // namespace

TrainReport train(AdaptedModel& model, const Vocabulary& vocab, const PairCorpus& pairs,
                  const TrainConfig& config, const LabeledDataset& validation,
                  const std::string& out_dir) {
    config.validate();
    if (static_cast<int>(pairs.pairs.size()) < config.batch_size) {
        throw std::invalid_argument("train: corpus smaller than one batch (" +
                                    std::to_string(pairs.pairs.size()) + " < " +
                                    std::to_string(config.batch_size) + ")");
    }
    std::filesystem::create_directories(out_dir);

    // the run's dropout setting lives on the adapter spec from here on
    model.adapters.spec.dropout_p = config.dropout_p;

    std::optional<PromptTemplate> tmpl;
    if (!config.template_name.empty()) {
        tmpl = lookup_template(config.template_name);
    }

    Embedder validation_embedder;
    validation_embedder.config = &model.config;
    validation_embedder.params = &model.base;
    validation_embedder.adapters = &model.adapters;
    validation_embedder.vocab = &vocab;
    validation_embedder.tmpl = tmpl;
    validation_embedder.pooling = config.pooling;
    validation_embedder.jobs = config.jobs;

    const uint64_t eval_seed = mix_seed(config.seed, 0xE);
    TrainReport report;

    auto save_checkpoint = [&](int step) {
        const std::string name = "adapter_step_" + std::to_string(step) + ".ntc";
        save_adapter(model.adapters, (std::filesystem::path(out_dir) / name).string(),
                     {{"step", std::to_string(step)}});
        return name;
    };

    std::map<int, std::string> checkpoints;
    auto evaluate = [&](int step) {
        const ClusteringReport score = cluster_eval(validation_embedder, validation, eval_seed);
        report.eval_scores.emplace_back(step, score.v_measure);
        checkpoints[step] = save_checkpoint(step);
    };

    evaluate(0);

    // AdamW state per adapter tensor, laid out as (layer, site) -> {A, B}
    struct SiteStates {
        AdamWState a;
        AdamWState b;
    };
    std::vector<std::array<std::optional<SiteStates>, kNumSites>> opt_states(
        model.adapters.layers.size());
    for (size_t l = 0; l < model.adapters.layers.size(); ++l) {
        for (int s = 0; s < kNumSites; ++s) {
            const auto& slot = model.adapters.layers[l][s];
            if (slot.has_value()) {
                opt_states[l][s].emplace(
                    SiteStates{AdamWState(slot->a.data.size()), AdamWState(slot->b.data.size())});
            }
        }
    }

    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 1));
    std::vector<size_t> order(pairs.pairs.size());
    for (size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    size_t cursor = 0;

    const PoolingStrategy train_pooling{config.pooling.kind, false};  // cosine normalizes

    for (int step = 1; step <= config.max_steps; ++step) {
        if (cursor + static_cast<size_t>(config.batch_size) > order.size()) {
            // drop the incomplete tail; reshuffle for the next epoch
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            cursor = 0;
        }
        std::vector<const PositivePair*> batch;
        batch.reserve(static_cast<size_t>(config.batch_size));
        for (int i = 0; i < config.batch_size; ++i) {
            batch.push_back(&pairs.pairs[order[cursor++]]);
        }

        // forward both sides of every pair; item index = 2*pair + side
        const size_t n_items = batch.size() * 2;
        std::vector<ItemState> items(n_items);
        parallel_for(n_items, config.jobs, [&](size_t idx) {
            const PositivePair& pair = *batch[idx / 2];
            const bool is_positive = idx % 2 == 1;
            const std::string& text = is_positive ? pair.positive : pair.anchor;
            ItemState& item = items[idx];
            item.encoded = encode_for_training(text, vocab, tmpl, config.pooling.kind);

            std::mt19937_64 dropout_rng(
                mix_seed(config.seed, 0x7000000ULL + static_cast<uint64_t>(step) * 4096 + idx));
            LoraRuntime runtime{&model.adapters, true, &dropout_rng};
            ForwardOptions opts;
            opts.want_cache = true;
            opts.lora = &runtime;
            ForwardResult res = forward(model.config, model.base, item.encoded.ids, opts);
            item.cache = std::move(res.cache);
            item.pooled =
                pool(res.hidden.values, train_pooling, item.encoded.eos_position).values;
        });

        ContrastiveBatch cbatch;
        cbatch.temperature = config.temperature;
        cbatch.anchors = Matrix(config.batch_size, model.config.d_model);
        cbatch.positives = Matrix(config.batch_size, model.config.d_model);
        for (int i = 0; i < config.batch_size; ++i) {
            std::copy(items[2 * i].pooled.begin(), items[2 * i].pooled.end(),
                      cbatch.anchors.row(i));
            std::copy(items[2 * i + 1].pooled.begin(), items[2 * i + 1].pooled.end(),
                      cbatch.positives.row(i));
        }

        double loss = 0.0;
        try {
            loss = infonce_loss(cbatch);
        } catch (const std::exception&) {
            loss = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(loss)) {
            dump_bad_batch(out_dir, step, batch);
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                     " (offending batch dumped to diagnostic_batch.json)");
        }
        report.step_loss.push_back(loss);

        const InfonceGrads grads = infonce_grad(cbatch);

        // backward per item; adapter gradients reduced afterwards in a fixed
        // order so the result is independent of the worker count
        std::vector<std::shared_ptr<AdapterGrads>> item_grads(n_items);
        parallel_for(n_items, config.jobs, [&](size_t idx) {
            const ItemState& item = items[idx];
            const bool is_positive = idx % 2 == 1;
            const int row = static_cast<int>(idx / 2);
            Vector upstream(static_cast<size_t>(model.config.d_model));
            const Matrix& source = is_positive ? grads.positives : grads.anchors;
            std::copy(source.row(row), source.row(row) + model.config.d_model, upstream.begin());
            const Matrix hidden_grad =
                pool_gradient(train_pooling, upstream, static_cast<int>(item.encoded.ids.size()),
                              item.encoded.eos_position);
            LoraRuntime runtime{&model.adapters, true, nullptr};
            BackwardResult back =
                backward(model.config, model.base, item.cache, hidden_grad, &runtime);
            item_grads[idx] = back.adapters;
        });

        AdapterGrads total = zero_adapter_grads(model.adapters);
        for (const auto& g : item_grads) {
            accumulate(total, *g);
        }

        for (size_t l = 0; l < model.adapters.layers.size(); ++l) {
            for (int s = 0; s < kNumSites; ++s) {
                auto& slot = model.adapters.layers[l][s];
                if (!slot.has_value()) {
                    continue;
                }
                auto& g = total.layers[l][s];
                auto& st = opt_states[l][s];
                adamw_step(slot->a.data, g->a.data, st->a, config.learning_rate, config.beta1,
                           config.beta2, config.adam_eps, config.weight_decay);
                adamw_step(slot->b.data, g->b.data, st->b, config.learning_rate, config.beta1,
                           config.beta2, config.adam_eps, config.weight_decay);
            }
        }

        if (step % config.eval_every == 0 || step == config.max_steps) {
            evaluate(step);
        } else if (step % config.checkpoint_every == 0) {
            checkpoints[step] = save_checkpoint(step);
        }
    }

    // best recorded validation score, earliest step on ties
    const auto best = std::max_element(
        report.eval_scores.begin(), report.eval_scores.end(),
        [](const auto& a, const auto& b) { return a.second < b.second; });
    report.best_step = best->first;
    report.best_score = best->second;
    report.best_checkpoint_path = checkpoints.at(report.best_step);
    return report;
}

void save_train_report(const TrainReport& report, const std::string& path) {
    nlohmann::json j;
    j["step_loss"] = report.step_loss;
    j["eval_scores"] = nlohmann::json::array();
    for (const auto& [step, score] : report.eval_scores) {
        j["eval_scores"].push_back({{"step", step}, {"v_measure", score}});
    }
    j["best_step"] = report.best_step;
    j["best_score"] = report.best_score;
    j["best_checkpoint_path"] = report.best_checkpoint_path;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out << j.dump(2) << '\n';
}

TrainReport load_train_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    nlohmann::json j = nlohmann::json::parse(in);
    TrainReport report;
    report.step_loss = j["step_loss"].get<std::vector<double>>();
    for (const auto& entry : j["eval_scores"]) {
        report.eval_scores.emplace_back(entry["step"].get<int>(), entry["v_measure"].get<double>());
    }
    report.best_step = j["best_step"].get<int>();
    report.best_score = j["best_score"].get<double>();
    report.best_checkpoint_path = j["best_checkpoint_path"].get<std::string>();
    return report;
}

}  // namespace tinyembed
