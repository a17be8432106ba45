#include "tinyembed/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace tinyembed {

namespace {

using nlohmann::json;

// Streams a JSONL file through `consume(line_no, json)`; collects schema
// problems and throws one error naming the first few offending lines.
template <typename Fn>
void for_each_jsonl_record(const std::string& path, Fn&& consume) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::vector<std::string> problems;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (!utf8_valid(line)) {
            problems.push_back("line " + std::to_string(line_no) + ": invalid UTF-8");
        } else {
            try {
                consume(line_no, json::parse(line));
            } catch (const std::exception& e) {
                problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (problems.size() >= 5) {
            break;
        }
    }
    if (!problems.empty()) {
        std::string message = path + ": schema errors\n";
        for (const std::string& p : problems) {
            message += "  " + p + "\n";
        }
        throw std::runtime_error(message);
    }
}

std::string require_string(const json& record, const char* key) {
    if (!record.contains(key) || !record[key].is_string()) {
        throw std::runtime_error(std::string("missing string field \"") + key + "\"");
    }
    return record[key].get<std::string>();
}

}  // namespace

bool utf8_valid(const std::string& text) {
    size_t i = 0;
    const auto cont = [&](size_t k) {
        return i + k < text.size() && (static_cast<unsigned char>(text[i + k]) & 0xC0) == 0x80;
    };
    while (i < text.size()) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            i += 1;
        } else if ((c & 0xE0) == 0xC0 && c >= 0xC2 && cont(1)) {
            i += 2;
        } else if ((c & 0xF0) == 0xE0 && cont(1) && cont(2)) {
            i += 3;
        } else if ((c & 0xF8) == 0xF0 && c <= 0xF4 && cont(1) && cont(2) && cont(3)) {
            i += 4;
        } else {
            return false;
        }
    }
    return true;
}

int LabeledDataset::n_classes() const {
    std::set<int> distinct(labels.begin(), labels.end());
    return static_cast<int>(distinct.size());
}

void LabeledDataset::validate() const {
    if (texts.size() != labels.size()) {
        throw std::runtime_error("labeled dataset: texts/labels length mismatch");
    }
    if (texts.empty()) {
        throw std::runtime_error("labeled dataset: empty");
    }
    if (n_classes() < 2) {
        throw std::runtime_error("labeled dataset: needs at least 2 distinct labels");
    }
}

RawCorpus load_raw_jsonl(const std::string& path) {
    RawCorpus corpus;
    for_each_jsonl_record(path, [&](int line_no, const json& record) {
        corpus.texts.push_back(require_string(record, "text"));
        corpus.ids.push_back(record.contains("id") ? require_string(record, "id")
                                                   : std::to_string(line_no - 1));
    });
    return corpus;
}

LabeledDataset load_labeled_jsonl(const std::string& path) {
    LabeledDataset dataset;
    dataset.name = path;
    for_each_jsonl_record(path, [&](int, const json& record) {
        dataset.texts.push_back(require_string(record, "text"));
        if (!record.contains("label") || !record["label"].is_number_integer()) {
            throw std::runtime_error("missing integer field \"label\"");
        }
        dataset.labels.push_back(record["label"].get<int>());
    });
    dataset.validate();
    return dataset;
}

PairCorpus load_pairs_jsonl(const std::string& path) {
    PairCorpus corpus;
    for_each_jsonl_record(path, [&](int, const json& record) {
        PositivePair pair;
        pair.anchor = require_string(record, "anchor");
        pair.positive = require_string(record, "positive");
        pair.method = aug_method_from_name(require_string(record, "method"));
        if (record.contains("prompt_id") && !record["prompt_id"].is_null()) {
            pair.prompt_id = record["prompt_id"].get<int>();
        }
        if (record.contains("seed")) {
            pair.seed = record["seed"].get<uint64_t>();
        }
        if (pair.anchor.empty() || pair.positive.empty()) {
            throw std::runtime_error("empty anchor or positive");
        }
        corpus.pairs.push_back(std::move(pair));
    });
    return corpus;
}

void save_raw_jsonl(const RawCorpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    for (size_t i = 0; i < corpus.texts.size(); ++i) {
        json record{{"id", corpus.ids[i]}, {"text", corpus.texts[i]}};
        out << record.dump() << '\n';
    }
}

void save_labeled_jsonl(const LabeledDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    for (size_t i = 0; i < dataset.texts.size(); ++i) {
        json record{{"text", dataset.texts[i]}, {"label", dataset.labels[i]}};
        out << record.dump() << '\n';
    }
}

void save_pairs_jsonl(const PairCorpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    for (const PositivePair& pair : corpus.pairs) {
        json record{{"anchor", pair.anchor},
                    {"positive", pair.positive},
                    {"method", aug_method_name(pair.method)},
                    {"prompt_id", pair.prompt_id.has_value() ? json(*pair.prompt_id) : json(nullptr)},
                    {"seed", pair.seed}};
        out << record.dump() << '\n';
    }
}

void SyntheticSpec::validate() const {
    if (n_clusters < 2 || samples_per_cluster < 1) {
        throw std::invalid_argument("synthetic spec: need >= 2 clusters and >= 1 sample each");
    }
    if (static_cast<int>(vocab_per_cluster.size()) != n_clusters) {
        throw std::invalid_argument("synthetic spec: one word pool required per cluster");
    }
    if (sentence_len_min < 1 || sentence_len_max < sentence_len_min) {
        throw std::invalid_argument("synthetic spec: bad sentence length range");
    }
    if (mixture_ratio < 0.0 || mixture_ratio > 1.0) {
        throw std::invalid_argument("synthetic spec: mixture_ratio must lie in [0, 1]");
    }
    if (mixture_ratio > 0.0 && shared_vocab.empty()) {
        throw std::invalid_argument("synthetic spec: mixture_ratio > 0 needs a shared pool");
    }
    std::set<std::string> seen;
    for (const auto& pool : vocab_per_cluster) {
        if (pool.empty()) {
            throw std::invalid_argument("synthetic spec: empty cluster pool");
        }
        for (const std::string& w : pool) {
            if (!seen.insert(w).second) {
                throw std::invalid_argument("synthetic spec: cluster pools overlap on \"" + w + "\"");
            }
        }
    }
    for (const std::string& w : shared_vocab) {
        if (seen.count(w) != 0) {
            throw std::invalid_argument("synthetic spec: shared pool overlaps cluster pool on \"" +
                                        w + "\"");
        }
    }
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> length(spec.sentence_len_min, spec.sentence_len_max);

    LabeledDataset dataset;
    dataset.name = "synthetic";
    for (int cluster = 0; cluster < spec.n_clusters; ++cluster) {
        const auto& pool = spec.vocab_per_cluster[static_cast<size_t>(cluster)];
        std::uniform_int_distribution<size_t> from_pool(0, pool.size() - 1);
        std::uniform_int_distribution<size_t> from_shared(
            0, spec.shared_vocab.empty() ? 0 : spec.shared_vocab.size() - 1);
        for (int s = 0; s < spec.samples_per_cluster; ++s) {
            const int len = length(rng);
            std::string text;
            for (int w = 0; w < len; ++w) {
                const bool shared = !spec.shared_vocab.empty() && unit(rng) < spec.mixture_ratio;
                const std::string& word =
                    shared ? spec.shared_vocab[from_shared(rng)] : pool[from_pool(rng)];
                if (!text.empty()) {
                    text.push_back(' ');
                }
                text += word;
            }
            dataset.texts.push_back(std::move(text));
            dataset.labels.push_back(cluster);
        }
    }
    return dataset;
}

SyntheticSpec default_synthetic_spec(int n_clusters, int samples_per_cluster, double mixture_ratio,
                                     uint64_t seed) {
    static const std::vector<std::vector<std::string>> pools = {
        {"goal", "striker", "league", "referee", "stadium", "match", "coach", "penalty", "trophy",
         "defender", "kick", "squad"},
        {"recipe", "oven", "butter", "flour", "simmer", "spice", "dough", "roast", "garlic",
         "dessert", "bake", "broth"},
        {"kernel", "compiler", "socket", "binary", "cache", "thread", "packet", "server", "debug",
         "router", "chip", "code"},
        {"violin", "melody", "chord", "tempo", "orchestra", "drum", "singer", "concert", "rhythm",
         "piano", "tune", "choir"},
        {"galaxy", "orbit", "telescope", "comet", "nebula", "lunar", "probe", "eclipse", "asteroid",
         "cosmos", "star", "rocket"},
        {"harvest", "tractor", "meadow", "barn", "cattle", "plough", "orchard", "grain", "pasture",
         "fence", "seed", "soil"},
        {"verdict", "jury", "statute", "court", "appeal", "clause", "attorney", "tribunal",
         "witness", "ruling", "judge", "case"},
        {"reef", "tide", "plankton", "harbor", "vessel", "current", "kelp", "lagoon", "buoy",
         "shoal", "wave", "sail"},
    };
    if (n_clusters < 2 || n_clusters > static_cast<int>(pools.size())) {
        throw std::invalid_argument("default_synthetic_spec: supports 2.." +
                                    std::to_string(pools.size()) + " clusters");
    }
    SyntheticSpec spec;
    spec.n_clusters = n_clusters;
    spec.samples_per_cluster = samples_per_cluster;
    spec.vocab_per_cluster.assign(pools.begin(), pools.begin() + n_clusters);
    spec.shared_vocab = {"the", "a", "and", "of", "in", "was", "near", "with",
                         "it",  "on", "very", "this", "that", "they", "had", "for"};
    spec.mixture_ratio = mixture_ratio;
    spec.seed = seed;
    return spec;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    json j = json::parse(in);
    SyntheticSpec spec;
    spec.n_clusters = j.value("n_clusters", spec.n_clusters);
    spec.samples_per_cluster = j.value("samples_per_cluster", spec.samples_per_cluster);
    if (j.contains("vocab_per_cluster")) {
        spec.vocab_per_cluster = j["vocab_per_cluster"].get<std::vector<std::vector<std::string>>>();
    }
    if (j.contains("shared_vocab")) {
        spec.shared_vocab = j["shared_vocab"].get<std::vector<std::string>>();
    }
    spec.sentence_len_min = j.value("sentence_len_min", spec.sentence_len_min);
    spec.sentence_len_max = j.value("sentence_len_max", spec.sentence_len_max);
    spec.mixture_ratio = j.value("mixture_ratio", spec.mixture_ratio);
    spec.seed = j.value("seed", spec.seed);
    spec.validate();
    return spec;
}

void save_synthetic_spec(const SyntheticSpec& spec, const std::string& path) {
    json j;
    j["n_clusters"] = spec.n_clusters;
    j["samples_per_cluster"] = spec.samples_per_cluster;
    j["vocab_per_cluster"] = spec.vocab_per_cluster;
    j["shared_vocab"] = spec.shared_vocab;
    j["sentence_len_min"] = spec.sentence_len_min;
    j["sentence_len_max"] = spec.sentence_len_max;
    j["mixture_ratio"] = spec.mixture_ratio;
    j["seed"] = spec.seed;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out << j.dump(2) << '\n';
}

}  // namespace tinyembed
