// tinyembed command line: vocab building, synthetic data, augmentation,
// contrastive LoRA training, clustering/classification evaluation, and
// attention-profile export. Every artifact-producing command writes a
// manifest alongside its outputs; `replay` re-executes a manifest into a
// fresh destination and must reproduce the primary outputs byte for byte.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tinyembed/attention.hpp"
#include "tinyembed/augment.hpp"
#include "tinyembed/clients.hpp"
#include "tinyembed/contrastive.hpp"
#include "tinyembed/corpus.hpp"
#include "tinyembed/embedder.hpp"
#include "tinyembed/eval.hpp"
#include "tinyembed/lora.hpp"
#include "tinyembed/model.hpp"
#include "tinyembed/pooling.hpp"
#include "tinyembed/prompts.hpp"
#include "tinyembed/tokenizer.hpp"
#include "tinyembed/trainer.hpp"

#ifndef TINYEMBED_BUILD_ID
#define TINYEMBED_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tinyembed;

namespace {

// exit codes per command contract
constexpr int kExitSchema = 2;
constexpr int kExitClientExhaustion = 3;
constexpr int kExitNonFiniteLoss = 4;
constexpr int kExitDataset = 5;
constexpr int kExitAttention = 6;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return json::parse(in);
}

void write_manifest(const std::string& command, const json& args,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    double wall_sec, const std::string& manifest_path) {
    json manifest;
    manifest["command"] = command;
    manifest["args"] = args;
    manifest["seed"] = args.value("seed", 0ULL);
    manifest["build_id"] = TINYEMBED_BUILD_ID;
    manifest["inputs"] = inputs;
    manifest["outputs"] = outputs;
    manifest["wall_clock_sec"] = wall_sec;
    std::ofstream out(manifest_path);
    if (!out) {
        throw std::runtime_error("cannot write manifest " + manifest_path);
    }
    out << manifest.dump(2) << '\n';
}

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ModelConfig model_config_from_args(const json& args, int vocab_size) {
    ModelConfig config;
    config.vocab_size = vocab_size;
    config.d_model = args.value("d_model", 32);
    config.n_layers = args.value("n_layers", 2);
    config.n_heads = args.value("n_heads", 4);
    config.d_ff = args.value("d_ff", 64);
    config.max_seq_len = args.value("max_seq_len", 64);
    config.seed = args.value("model_seed", mix_seed(args.value("seed", 0ULL), 11));
    config.validate();
    return config;
}

PoolingStrategy pooling_from_args(const json& args) {
    PoolingStrategy strategy;
    strategy.kind = pool_kind_from_name(args.value("pooling", "last_token"));
    strategy.normalize = args.value("normalize", true);
    return strategy;
}

std::optional<PromptTemplate> template_from_args(const json& args) {
    const std::string name = args.value("template", "");
    if (name.empty() || name == "none") {
        return std::nullopt;
    }
    if (args.contains("template_file")) {
        for (const PromptTemplate& t : load_templates(args["template_file"].get<std::string>())) {
            if (t.name == name) {
                return t;
            }
        }
        throw std::runtime_error("template '" + name + "' not found in " +
                                 args["template_file"].get<std::string>());
    }
    return lookup_template(name);
}

struct LoadedModel {
    ModelConfig config;
    Parameters params;
    std::optional<AdapterWeights> adapters;
};

LoadedModel load_model_and_adapter(const json& args) {
    LoadedModel loaded;
    auto [config, params] = load_model(args.at("checkpoint").get<std::string>());
    loaded.config = config;
    loaded.params = std::move(params);
    if (args.contains("adapter") && !args["adapter"].get<std::string>().empty()) {
        loaded.adapters = load_adapter(args["adapter"].get<std::string>());
    }
    return loaded;
}

// ---------------------------------------------------------------- commands

int run_vocab(const json& args) {
    Stopwatch timer;
    const std::string in_path = args.at("in").get<std::string>();
    const std::string out_path = args.at("out").get<std::string>();
    RawCorpus corpus = load_raw_jsonl(in_path);
    Vocabulary vocab = build_vocab(corpus.texts, args.value("max_size", 512));
    save_vocab(vocab, out_path);
    write_manifest("vocab", args, {in_path}, {out_path}, timer.seconds(),
                   out_path + ".manifest.json");
    std::cout << "vocab: " << vocab.size() << " tokens -> " << out_path << "\n";
    return 0;
}

int run_synth(const json& args) {
    Stopwatch timer;
    SyntheticSpec spec;
    std::vector<std::string> inputs;
    if (args.contains("spec")) {
        spec = load_synthetic_spec(args["spec"].get<std::string>());
        inputs.push_back(args["spec"].get<std::string>());
    } else {
        spec = default_synthetic_spec(args.value("clusters", 4), args.value("samples", 50),
                                      args.value("mixture", 0.3), args.value("seed", 0ULL));
        spec.sentence_len_min = args.value("len_min", spec.sentence_len_min);
        spec.sentence_len_max = args.value("len_max", spec.sentence_len_max);
    }
    if (args.contains("seed")) {
        spec.seed = args["seed"].get<uint64_t>();
    }
    LabeledDataset dataset = generate_synthetic(spec);

    const std::string out_path = args.at("out").get<std::string>();
    save_labeled_jsonl(dataset, out_path);
    std::vector<std::string> outputs = {out_path};
    if (args.contains("raw_out")) {
        RawCorpus raw;
        for (size_t i = 0; i < dataset.texts.size(); ++i) {
            raw.ids.push_back(std::to_string(i));
            raw.texts.push_back(dataset.texts[i]);
        }
        save_raw_jsonl(raw, args["raw_out"].get<std::string>());
        outputs.push_back(args["raw_out"].get<std::string>());
    }
    write_manifest("synth", args, inputs, outputs, timer.seconds(), out_path + ".manifest.json");
    std::cout << "synth: " << dataset.texts.size() << " texts, " << dataset.n_classes()
              << " clusters -> " << out_path << "\n";
    return 0;
}

int run_augment(const json& args) {
    Stopwatch timer;
    const std::string in_path = args.at("in").get<std::string>();
    const std::string out_path = args.at("out").get<std::string>();

    RawCorpus corpus = load_raw_jsonl(in_path);
    std::vector<AugMethod> methods;
    for (const auto& name : args.at("methods")) {
        methods.push_back(aug_method_from_name(name.get<std::string>()));
    }
    AugmentConfig config;
    if (args.contains("config")) {
        const json c = load_json_file(args["config"].get<std::string>());
        config.deletion_p = c.value("deletion_p", config.deletion_p);
        config.char_noise_p = c.value("char_noise_p", config.char_noise_p);
        config.pivot_language = c.value("pivot_language", config.pivot_language);
        if (c.contains("paraphrase_prompt_ids")) {
            config.paraphrase_prompt_ids = c["paraphrase_prompt_ids"].get<std::vector<int>>();
        }
        config.max_response_len = c.value("max_response_len", config.max_response_len);
        config.allow_identity_positive =
            c.value("allow_identity_positive", config.allow_identity_positive);
        config.max_in_flight = c.value("max_in_flight", config.max_in_flight);
    }

    const bool mock = args.value("mock_clients", false);
    std::shared_ptr<JsonEndpoint> mt_endpoint, llm_endpoint;
    std::optional<TranslationClient> translation;
    std::optional<ParaphraseClient> paraphrase;
    const bool needs_mt = std::count(methods.begin(), methods.end(), AugMethod::back_translation) > 0;
    const bool needs_llm = std::count(methods.begin(), methods.end(), AugMethod::llm_paraphrase) > 0;
    if (needs_mt) {
        mt_endpoint = mock ? make_mock_translation_endpoint() : make_translation_endpoint_from_env();
        translation.emplace(mt_endpoint);
    }
    if (needs_llm) {
        llm_endpoint = mock ? make_mock_paraphrase_endpoint() : make_paraphrase_endpoint_from_env();
        paraphrase.emplace(llm_endpoint);
    }
    AugmentClients clients;
    clients.translation = translation.has_value() ? &*translation : nullptr;
    clients.paraphrase = paraphrase.has_value() ? &*paraphrase : nullptr;

    PairCorpusResult result =
        build_pair_corpus(corpus.texts, methods, config, clients, args.value("seed", 0ULL));
    PairCorpus pairs;
    pairs.pairs = std::move(result.pairs);
    save_pairs_jsonl(pairs, out_path);
    write_manifest("augment", args, {in_path}, {out_path}, timer.seconds(),
                   out_path + ".manifest.json");
    std::cout << "augment: " << pairs.pairs.size() << " pairs -> " << out_path << "\n";

    if (!result.errors.empty()) {
        std::cerr << "augment: " << result.errors.size() << " item(s) failed:\n";
        for (const auto& e : result.errors) {
            std::cerr << "  text " << e.text_index << " " << aug_method_name(e.method);
            if (e.prompt_id.has_value()) {
                std::cerr << " prompt " << *e.prompt_id;
            }
            std::cerr << ": " << e.message << " (attempts: " << e.attempts << ")\n";
        }
        return kExitClientExhaustion;
    }
    return 0;
}

TrainConfig train_config_from_args(const json& args) {
    TrainConfig config;
    config.learning_rate = args.value("learning_rate", config.learning_rate);
    config.batch_size = args.value("batch_size", config.batch_size);
    config.temperature = args.value("temperature", config.temperature);
    config.dropout_p = args.value("dropout", config.dropout_p);
    config.max_steps = args.value("max_steps", config.max_steps);
    config.checkpoint_every = args.value("checkpoint_every", config.checkpoint_every);
    config.eval_every = args.value("eval_every", config.eval_every);
    config.seed = args.value("seed", 0ULL);
    config.pooling = pooling_from_args(args);
    config.template_name = args.value("template", std::string("CCW"));
    if (config.template_name == "none") {
        config.template_name.clear();
    }
    config.weight_decay = args.value("weight_decay", config.weight_decay);
    config.jobs = args.value("jobs", 1);
    config.validate();
    return config;
}

int run_train(const json& args) {
    Stopwatch timer;
    const std::string out_dir = args.at("out_dir").get<std::string>();
    fs::create_directories(out_dir);

    Vocabulary vocab = load_vocab(args.at("vocab").get<std::string>());
    PairCorpus pairs = load_pairs_jsonl(args.at("pairs").get<std::string>());
    LabeledDataset validation = load_labeled_jsonl(args.at("validation").get<std::string>());

    ModelConfig model_config = model_config_from_args(args, vocab.size());
    Parameters base = init_parameters(model_config);

    LoraSpec spec;
    spec.rank = args.value("lora_rank", 8);
    spec.alpha = args.value("lora_alpha", 16.0);
    if (args.contains("lora_sites")) {
        spec.sites.clear();
        for (const auto& name : args["lora_sites"]) {
            spec.sites.push_back(site_from_name(name.get<std::string>()));
        }
    }
    TrainConfig train_config = train_config_from_args(args);
    spec.dropout_p = train_config.dropout_p;

    AdaptedModel model = attach(model_config, base, spec, mix_seed(train_config.seed, 13));
    save_model(model_config, base, (fs::path(out_dir) / "base.ntc").string());

    TrainReport report = train(model, vocab, pairs, train_config, validation, out_dir);
    save_train_report(report, (fs::path(out_dir) / "report.json").string());

    write_manifest("train", args,
                   {args.at("pairs").get<std::string>(), args.at("vocab").get<std::string>(),
                    args.at("validation").get<std::string>()},
                   {out_dir}, timer.seconds(), (fs::path(out_dir) / "manifest.json").string());
    std::cout << "train: best step " << report.best_step << " (v-measure " << report.best_score
              << "), checkpoints in " << out_dir << "\n";
    return 0;
}

Embedder embedder_from(const LoadedModel& loaded, const Vocabulary& vocab, const json& args) {
    Embedder embedder;
    embedder.config = &loaded.config;
    embedder.params = &loaded.params;
    embedder.adapters = loaded.adapters.has_value() ? &*loaded.adapters : nullptr;
    embedder.vocab = &vocab;
    embedder.tmpl = template_from_args(args);
    embedder.pooling = pooling_from_args(args);
    embedder.mask_prompt_tokens = args.value("mask_prompt", false);
    embedder.jobs = args.value("jobs", 1);
    return embedder;
}

json clustering_report_to_json(const ClusteringReport& report) {
    return json{{"v_measure", report.v_measure},
                {"homogeneity", report.homogeneity},
                {"completeness", report.completeness},
                {"n_clusters", report.n_clusters},
                {"seed", report.seed}};
}

int run_eval(const json& args) {
    Stopwatch timer;
    Vocabulary vocab = load_vocab(args.at("vocab").get<std::string>());
    LabeledDataset dataset = load_labeled_jsonl(args.at("dataset").get<std::string>());
    const std::string task = args.value("task", "cluster");
    const uint64_t seed = args.value("seed", 0ULL);
    const std::string out_path = args.at("out").get<std::string>();

    json result;
    std::vector<std::string> inputs = {args.at("dataset").get<std::string>(),
                                       args.at("vocab").get<std::string>()};

    if (args.contains("compare")) {
        // one row per checkpoint[:adapter], columns mean/last_token v-measure
        result["task"] = "cluster";
        result["rows"] = json::array();
        std::printf("%-40s %12s %12s\n", "checkpoint", "mean", "last_token");
        for (const auto& item : args["compare"]) {
            const std::string entry = item.get<std::string>();
            const size_t colon = entry.find(':');
            json sub_args = args;
            sub_args["checkpoint"] = entry.substr(0, colon);
            if (colon != std::string::npos) {
                sub_args["adapter"] = entry.substr(colon + 1);
            } else {
                sub_args.erase("adapter");
            }
            LoadedModel loaded = load_model_and_adapter(sub_args);
            json row;
            row["checkpoint"] = entry;
            for (const char* kind : {"mean", "last_token"}) {
                sub_args["pooling"] = kind;
                Embedder embedder = embedder_from(loaded, vocab, sub_args);
                ClusteringReport report = cluster_eval(embedder, dataset, seed);
                row[kind] = report.v_measure;
            }
            std::printf("%-40s %12.4f %12.4f\n", entry.c_str(), row["mean"].get<double>(),
                        row["last_token"].get<double>());
            result["rows"].push_back(row);
            inputs.push_back(entry);
        }
    } else {
        LoadedModel loaded = load_model_and_adapter(args);
        Embedder embedder = embedder_from(loaded, vocab, args);
        inputs.push_back(args.at("checkpoint").get<std::string>());
        if (task == "cluster") {
            ClusteringReport report = cluster_eval(embedder, dataset, seed);
            result = clustering_report_to_json(report);
            result["task"] = "cluster";
            std::printf("v_measure     %.4f\nhomogeneity   %.4f\ncompleteness  %.4f\n",
                        report.v_measure, report.homogeneity, report.completeness);
        } else if (task == "classify") {
            LabeledDataset train_set = load_labeled_jsonl(args.at("train_dataset").get<std::string>());
            inputs.push_back(args.at("train_dataset").get<std::string>());
            ClassificationReport report = classify_eval(embedder, train_set, dataset, seed);
            result["task"] = "classify";
            result["accuracy"] = report.accuracy;
            result["precision"] = report.precision;
            result["recall"] = report.recall;
            result["train_size"] = report.train_size;
            result["test_size"] = report.test_size;
            std::printf("accuracy      %.4f (train %d, test %d)\n", report.accuracy,
                        report.train_size, report.test_size);
        } else {
            throw std::invalid_argument("eval: task must be cluster or classify");
        }
    }

    std::ofstream out(out_path);
    out << result.dump(2) << '\n';
    write_manifest("eval", args, inputs, {out_path}, timer.seconds(), out_path + ".manifest.json");
    return 0;
}

int run_embed(const json& args) {
    Stopwatch timer;
    Vocabulary vocab = load_vocab(args.at("vocab").get<std::string>());
    RawCorpus corpus = load_raw_jsonl(args.at("in").get<std::string>());
    LoadedModel loaded = load_model_and_adapter(args);
    Embedder embedder = embedder_from(loaded, vocab, args);

    const Matrix embeddings = embedder.embed_all(corpus.texts);
    const std::string out_path = args.at("out").get<std::string>();
    std::ofstream out(out_path);
    if (!out) {
        throw std::runtime_error("cannot open " + out_path + " for writing");
    }
    for (int i = 0; i < embeddings.rows; ++i) {
        json record;
        record["id"] = corpus.ids[static_cast<size_t>(i)];
        record["vector"] = std::vector<double>(embeddings.row(i), embeddings.row(i) + embeddings.cols);
        record["strategy"] = pool_kind_name(embedder.pooling.kind);
        out << record.dump() << '\n';
    }
    write_manifest("embed", args,
                   {args.at("in").get<std::string>(), args.at("checkpoint").get<std::string>()},
                   {out_path}, timer.seconds(), out_path + ".manifest.json");
    std::cout << "embed: " << embeddings.rows << " vectors -> " << out_path << "\n";
    return 0;
}

int run_attn(const json& args) {
    Stopwatch timer;
    Vocabulary vocab = load_vocab(args.at("vocab").get<std::string>());
    LoadedModel loaded = load_model_and_adapter(args);
    Embedder embedder = embedder_from(loaded, vocab, args);

    const std::string text = args.at("text").get<std::string>();
    const std::string out_path = args.at("out").get<std::string>();
    const std::string checkpoint_id = args.at("checkpoint").get<std::string>();
    const std::string template_name = args.value("template", "");

    AttentionProfile profile = final_token_profile(embedder, text);
    save_profile_csv(profile, out_path, checkpoint_id, template_name);
    const std::string json_path = out_path + ".json";
    save_profile_json(profile, json_path, checkpoint_id, template_name);

    if (args.value("per_head", false)) {
        const auto heads = final_token_profile_per_head(embedder, text);
        for (size_t h = 0; h < heads.size(); ++h) {
            save_profile_csv(heads[h], out_path + ".head" + std::to_string(h) + ".csv",
                             checkpoint_id, template_name);
        }
    }
    write_manifest("attn", args, {checkpoint_id}, {out_path, json_path}, timer.seconds(),
                   out_path + ".manifest.json");
    const double mass = content_mass(profile, profile.content);
    std::cout << "attn: " << profile.tokens.size() << " tokens, content mass " << mass << " -> "
              << out_path << "\n";
    return 0;
}

int dispatch(const std::string& command, const json& args) {
    if (command == "vocab") return run_vocab(args);
    if (command == "synth") return run_synth(args);
    if (command == "augment") return run_augment(args);
    if (command == "train") return run_train(args);
    if (command == "eval") return run_eval(args);
    if (command == "embed") return run_embed(args);
    if (command == "attn") return run_attn(args);
    throw std::runtime_error("unknown command in manifest: " + command);
}

// Maps exceptions to the per-command exit codes.
int guarded(const std::string& command, const json& args) {
    try {
        return dispatch(command, args);
    } catch (const ClientError& e) {
        std::cerr << command << ": client error: " << e.what() << " (attempts: " << e.attempts
                  << ")\n";
        return kExitClientExhaustion;
    } catch (const std::exception& e) {
        const std::string what = e.what();
        std::cerr << command << ": " << what << "\n";
        if (what.find("schema errors") != std::string::npos) {
            return kExitSchema;
        }
        if (what.find("non-finite loss") != std::string::npos) {
            return kExitNonFiniteLoss;
        }
        if (command == "eval" &&
            (what.find("dataset") != std::string::npos || what.find("label") != std::string::npos)) {
            return kExitDataset;
        }
        if (command == "attn") {
            return kExitAttention;
        }
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale sentence-embedding laboratory"};
    app.require_subcommand(1);

    json args;
    auto add_seed = [&args](CLI::App* cmd) {
        cmd->add_option_function<uint64_t>(
               "--seed", [&args](uint64_t v) { args["seed"] = v; },
               "master seed; all randomness derives from it")
            ->default_val(0);
    };
    auto opt = [&args](CLI::App* cmd, const std::string& flag, const std::string& key,
                       const std::string& help, bool required = false) {
        auto* o = cmd->add_option_function<std::string>(
            flag, [&args, key](const std::string& v) { args[key] = v; }, help);
        if (required) {
            o->required();
        }
        return o;
    };
    auto opt_int = [&args](CLI::App* cmd, const std::string& flag, const std::string& key,
                           const std::string& help) {
        return cmd->add_option_function<int>(
            flag, [&args, key](int v) { args[key] = v; }, help);
    };
    auto opt_double = [&args](CLI::App* cmd, const std::string& flag, const std::string& key,
                              const std::string& help) {
        return cmd->add_option_function<double>(
            flag, [&args, key](double v) { args[key] = v; }, help);
    };
    auto opt_flag = [&args](CLI::App* cmd, const std::string& flag, const std::string& key,
                            const std::string& help) {
        return cmd->add_flag_function(
            flag, [&args, key](int64_t count) { args[key] = count > 0; }, help);
    };

    CLI::App* vocab_cmd = app.add_subcommand("vocab", "build a vocabulary from a raw corpus");
    opt(vocab_cmd, "--in", "in", "raw corpus JSONL", true);
    opt(vocab_cmd, "--out", "out", "vocabulary TSV", true);
    opt_int(vocab_cmd, "--max-size", "max_size", "vocabulary cap incl. specials");
    add_seed(vocab_cmd);

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic clustering dataset");
    opt(synth_cmd, "--spec", "spec", "synthetic spec JSON");
    opt_int(synth_cmd, "--clusters", "clusters", "number of clusters (built-in pools)");
    opt_int(synth_cmd, "--samples", "samples", "samples per cluster");
    opt_double(synth_cmd, "--mixture", "mixture", "shared-vocab mixture ratio");
    opt_int(synth_cmd, "--len-min", "len_min", "min sentence length");
    opt_int(synth_cmd, "--len-max", "len_max", "max sentence length");
    opt(synth_cmd, "--out", "out", "labeled dataset JSONL", true);
    opt(synth_cmd, "--raw-out", "raw_out", "also write the texts as a raw corpus");
    add_seed(synth_cmd);

    CLI::App* augment_cmd = app.add_subcommand("augment", "build positive pairs from a raw corpus");
    opt(augment_cmd, "--in", "in", "raw corpus JSONL", true);
    opt(augment_cmd, "--out", "out", "pair corpus JSONL", true);
    augment_cmd
        ->add_option_function<std::vector<std::string>>(
            "--methods",
            [&args](const std::vector<std::string>& methods) {
                args["methods"] = json::array();
                for (const auto& m : methods) {
                    args["methods"].push_back(m);
                }
            },
            "deletion,swap,char_noise,back_translation,llm_paraphrase,identity")
        ->required()
        ->delimiter(',');
    opt(augment_cmd, "--config", "config", "augmentation config JSON");
    opt_flag(augment_cmd, "--mock-clients", "mock_clients",
             "use deterministic offline MT/LLM clients");
    add_seed(augment_cmd);

    CLI::App* train_cmd = app.add_subcommand("train", "contrastive LoRA fine-tuning");
    opt(train_cmd, "--pairs", "pairs", "pair corpus JSONL", true);
    opt(train_cmd, "--vocab", "vocab", "vocabulary TSV", true);
    opt(train_cmd, "--validation", "validation", "labeled validation JSONL", true);
    opt(train_cmd, "--out-dir", "out_dir", "output directory", true);
    opt(train_cmd, "--template", "template", "prompt template name (or 'none')");
    opt(train_cmd, "--pooling", "pooling", "mean | last_token | eos_token");
    opt_int(train_cmd, "--d-model", "d_model", "model width");
    opt_int(train_cmd, "--n-layers", "n_layers", "transformer layers");
    opt_int(train_cmd, "--n-heads", "n_heads", "attention heads");
    opt_int(train_cmd, "--d-ff", "d_ff", "feed-forward width");
    opt_int(train_cmd, "--max-seq-len", "max_seq_len", "maximum sequence length");
    opt_int(train_cmd, "--batch-size", "batch_size", "pairs per step");
    opt_int(train_cmd, "--max-steps", "max_steps", "optimizer steps");
    opt_int(train_cmd, "--eval-every", "eval_every", "validation cadence");
    opt_int(train_cmd, "--checkpoint-every", "checkpoint_every", "checkpoint cadence");
    opt_double(train_cmd, "--learning-rate", "learning_rate", "AdamW learning rate");
    opt_double(train_cmd, "--temperature", "temperature", "InfoNCE temperature");
    opt_double(train_cmd, "--dropout", "dropout", "adapter dropout probability");
    opt_int(train_cmd, "--lora-rank", "lora_rank", "adapter rank");
    opt_double(train_cmd, "--lora-alpha", "lora_alpha", "adapter alpha");
    opt_int(train_cmd, "--jobs", "jobs", "worker threads for batch encoding");
    add_seed(train_cmd);

    CLI::App* eval_cmd = app.add_subcommand("eval", "cluster or classify with a checkpoint");
    opt(eval_cmd, "--checkpoint", "checkpoint", "model checkpoint (.ntc)");
    opt(eval_cmd, "--adapter", "adapter", "adapter checkpoint (.ntc)");
    opt(eval_cmd, "--dataset", "dataset", "labeled dataset JSONL", true);
    opt(eval_cmd, "--train-dataset", "train_dataset", "training split for the probe");
    opt(eval_cmd, "--task", "task", "cluster | classify");
    opt(eval_cmd, "--template", "template", "prompt template name");
    opt(eval_cmd, "--pooling", "pooling", "mean | last_token | eos_token");
    opt(eval_cmd, "--vocab", "vocab", "vocabulary TSV", true);
    opt(eval_cmd, "--out", "out", "report JSON", true);
    opt_flag(eval_cmd, "--mask-prompt", "mask_prompt", "mean-pool only content tokens");
    opt_int(eval_cmd, "--jobs", "jobs", "worker threads");
    eval_cmd->add_option_function<std::vector<std::string>>(
        "--compare",
        [&args](const std::vector<std::string>& items) {
            args["compare"] = json::array();
            for (const auto& item : items) {
                args["compare"].push_back(item);
            }
        },
        "checkpoint[:adapter] entries for a comparison grid");
    add_seed(eval_cmd);

    CLI::App* embed_cmd = app.add_subcommand("embed", "export embeddings as JSONL");
    opt(embed_cmd, "--checkpoint", "checkpoint", "model checkpoint (.ntc)", true);
    opt(embed_cmd, "--adapter", "adapter", "adapter checkpoint (.ntc)");
    opt(embed_cmd, "--in", "in", "raw corpus JSONL", true);
    opt(embed_cmd, "--vocab", "vocab", "vocabulary TSV", true);
    opt(embed_cmd, "--out", "out", "embedding JSONL", true);
    opt(embed_cmd, "--template", "template", "prompt template name");
    opt(embed_cmd, "--pooling", "pooling", "mean | last_token | eos_token");
    opt_flag(embed_cmd, "--mask-prompt", "mask_prompt", "mean-pool only content tokens");
    opt_int(embed_cmd, "--jobs", "jobs", "worker threads");
    add_seed(embed_cmd);

    CLI::App* attn_cmd = app.add_subcommand("attn", "export the final token's attention profile");
    opt(attn_cmd, "--checkpoint", "checkpoint", "model checkpoint (.ntc)", true);
    opt(attn_cmd, "--adapter", "adapter", "adapter checkpoint (.ntc)");
    opt(attn_cmd, "--vocab", "vocab", "vocabulary TSV", true);
    opt(attn_cmd, "--text", "text", "probe sentence", true);
    opt(attn_cmd, "--template", "template", "prompt template name");
    opt(attn_cmd, "--out", "out", "profile CSV (a JSON mirror lands next to it)", true);
    opt_flag(attn_cmd, "--per-head", "per_head", "also export per-head profiles");
    add_seed(attn_cmd);

    CLI::App* replay_cmd = app.add_subcommand("replay", "re-run a command from its manifest");
    std::string manifest_path, out_override;
    replay_cmd->add_option("manifest", manifest_path, "manifest JSON path")->required();
    replay_cmd->add_option("--out", out_override, "redirect the primary output path");

    CLI11_PARSE(app, argc, argv);

    if (replay_cmd->parsed()) {
        try {
            const json manifest = load_json_file(manifest_path);
            const std::string command = manifest.at("command").get<std::string>();
            json replay_args = manifest.at("args");
            if (!out_override.empty()) {
                if (replay_args.contains("out_dir")) {
                    replay_args["out_dir"] = out_override;
                } else {
                    replay_args["out"] = out_override;
                }
            }
            return guarded(command, replay_args);
        } catch (const std::exception& e) {
            std::cerr << "replay: " << e.what() << "\n";
            return 1;
        }
    }
    for (CLI::App* cmd : app.get_subcommands()) {
        return guarded(cmd->get_name(), args);
    }
    return 1;
}
