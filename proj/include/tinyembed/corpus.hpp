// Dataset ingestion: JSONL raw/pair/labeled corpora plus the synthetic
// desk-scale clustering dataset generator.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tinyembed/augment.hpp"

namespace tinyembed {

enum class Split { train, test };

struct LabeledDataset {
    std::vector<std::string> texts;
    std::vector<int> labels;
    std::string name;
    Split split = Split::train;

    int n_classes() const;
    void validate() const;  // equal lengths, >= 2 distinct labels
};

struct RawCorpus {
    std::vector<std::string> ids;
    std::vector<std::string> texts;
};

struct PairCorpus {
    std::vector<PositivePair> pairs;
};

// JSONL schemas: raw {"text": str, "id"?: str}; labeled {"text": str,
// "label": int}; pairs {"anchor": str, "positive": str, "method": str,
// "prompt_id": int|null, "seed": int}. Schema violations fail fast, naming
// up to the first 5 offending lines; invalid UTF-8 is rejected.
RawCorpus load_raw_jsonl(const std::string& path);
LabeledDataset load_labeled_jsonl(const std::string& path);
PairCorpus load_pairs_jsonl(const std::string& path);  // empty file -> empty corpus

void save_raw_jsonl(const RawCorpus& corpus, const std::string& path);
void save_labeled_jsonl(const LabeledDataset& dataset, const std::string& path);
void save_pairs_jsonl(const PairCorpus& corpus, const std::string& path);

bool utf8_valid(const std::string& text);

struct SyntheticSpec {
    int n_clusters = 4;
    int samples_per_cluster = 50;
    std::vector<std::vector<std::string>> vocab_per_cluster;  // pairwise disjoint
    std::vector<std::string> shared_vocab;
    int sentence_len_min = 5;
    int sentence_len_max = 12;
    double mixture_ratio = 0.3;  // probability a word comes from the shared pool
    uint64_t seed = 0;

    void validate() const;  // throws on overlapping pools or bad ranges
};

// Each text samples words from its cluster pool, mixing in shared-pool words
// at mixture_ratio; labels are cluster indices. Deterministic under seed.
LabeledDataset generate_synthetic(const SyntheticSpec& spec);

// Built-in themed word pools for quick experiments; supports up to 8 clusters.
SyntheticSpec default_synthetic_spec(int n_clusters, int samples_per_cluster, double mixture_ratio,
                                     uint64_t seed);

SyntheticSpec load_synthetic_spec(const std::string& path);  // JSON config file
void save_synthetic_spec(const SyntheticSpec& spec, const std::string& path);

}  // namespace tinyembed
