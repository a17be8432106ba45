// Contrastive LoRA fine-tuning: sample pair batches, wrap both sides in the
// training template, encode, forward, pool, InfoNCE, and backprop into the
// adapter weights only. Validation clustering runs on a schedule and the
// best-scoring checkpoint is retained.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tinyembed/corpus.hpp"
#include "tinyembed/eval.hpp"
#include "tinyembed/lora.hpp"
#include "tinyembed/pooling.hpp"
#include "tinyembed/tokenizer.hpp"

namespace tinyembed {

struct TrainConfig {
    double learning_rate = 5e-5;
    int batch_size = 120;
    double temperature = 0.2;
    double dropout_p = 0.05;
    int max_steps = 100;
    int checkpoint_every = 50;
    int eval_every = 10;
    uint64_t seed = 0;
    PoolingStrategy pooling{PoolKind::last_token, true};
    std::string template_name = "CCW";  // empty string trains without a prompt

    // AdamW on adapter weights; decoupled weight decay
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;

    int jobs = 1;

    void validate() const;
};

struct TrainReport {
    std::vector<double> step_loss;                    // index = step - 1
    std::vector<std::pair<int, double>> eval_scores;  // (step, validation v-measure)
    int best_step = 0;
    std::string best_checkpoint_path;  // relative to the output directory
    double best_score = 0.0;
};

// AdamW moments for one tensor; step() is the single testable update rule.
struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    int64_t t = 0;

    explicit AdamWState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adamw_step(std::vector<double>& weights, const std::vector<double>& grads, AdamWState& state,
                double lr, double beta1, double beta2, double eps, double weight_decay);

// Trains adapters in place. Checkpoints land in out_dir; validation runs at
// step 0, every eval_every steps, and at the final step.
TrainReport train(AdaptedModel& model, const Vocabulary& vocab, const PairCorpus& pairs,
                  const TrainConfig& config, const LabeledDataset& validation,
                  const std::string& out_dir);

void save_train_report(const TrainReport& report, const std::string& path);
TrainReport load_train_report(const std::string& path);

}  // namespace tinyembed
