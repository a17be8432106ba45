// Positive-pair generation: random deletion, random swap, character-level
// noise, back-translation through a pivot language, and LLM paraphrasing.
// Local methods are pure functions of (text, seed); the client-backed ones
// go through tinyembed::clients and report per-item failures without
// aborting the batch.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinyembed/clients.hpp"

namespace tinyembed {

enum class AugMethod { deletion, swap, char_noise, back_translation, llm_paraphrase, identity };

const char* aug_method_name(AugMethod method);
AugMethod aug_method_from_name(const std::string& name);

struct PositivePair {
    std::string anchor;
    std::string positive;
    AugMethod method = AugMethod::identity;
    std::optional<int> prompt_id;  // set for llm_paraphrase
    uint64_t seed = 0;
};

struct AugmentConfig {
    double deletion_p = 0.10;
    double char_noise_p = 0.05;
    std::string pivot_language = "de";
    std::vector<int> paraphrase_prompt_ids = {0, 1, 2, 3, 4};
    size_t max_response_len = 4000;   // longer paraphrases are rejected
    bool allow_identity_positive = false;  // accept client results equal to the anchor
    int max_in_flight = 4;            // concurrent client requests

    void validate() const;
};

// The five paraphrase instruction templates, each with one [X] placeholder.
const std::vector<std::string>& paraphrase_prompts();

std::string random_deletion(const std::string& text, double p, uint64_t seed);
std::string random_swap(const std::string& text, uint64_t seed);
std::string char_noise(const std::string& text, double p, uint64_t seed);

// en -> pivot -> en round trip. Throws ClientError on failure.
std::string back_translate(const std::string& text, TranslationClient& client,
                           const std::string& pivot_language = "de");

// Sends the prompt_id-th template with [X] substituted; returns the response
// stripped of surrounding whitespace and quotes. Throws on bad prompt_id,
// client failure, or an empty/overlong response.
std::string llm_paraphrase(const std::string& text, int prompt_id, ParaphraseClient& client,
                           size_t max_response_len = 4000);

struct AugmentClients {
    TranslationClient* translation = nullptr;
    ParaphraseClient* paraphrase = nullptr;
};

struct PairCorpusError {
    size_t text_index = 0;
    AugMethod method = AugMethod::identity;
    std::optional<int> prompt_id;
    std::string message;
    int attempts = 0;
};

struct PairCorpusResult {
    std::vector<PositivePair> pairs;
    std::vector<PairCorpusError> errors;
};

// One pair per (text, method) — and per prompt id for llm_paraphrase. Client
// errors are collected, never thrown; local methods are deterministic in
// (seed, text index, method). Client results equal to the anchor are dropped
// unless config.allow_identity_positive is set.
PairCorpusResult build_pair_corpus(std::span<const std::string> texts,
                                   std::span<const AugMethod> methods, const AugmentConfig& config,
                                   const AugmentClients& clients, uint64_t seed);

}  // namespace tinyembed
