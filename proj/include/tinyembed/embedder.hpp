// Text-to-vector pipeline: optional prompt template, tokenize, forward
// through the (optionally adapted) model, pool. Batch embedding fans out
// across threads with results written slot-wise, so the output is identical
// for any worker count.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinyembed/lora.hpp"
#include "tinyembed/model.hpp"
#include "tinyembed/pooling.hpp"
#include "tinyembed/prompts.hpp"
#include "tinyembed/tokenizer.hpp"

namespace tinyembed {

struct Embedder {
    const ModelConfig* config = nullptr;
    const Parameters* params = nullptr;
    const AdapterWeights* adapters = nullptr;  // optional; always eval mode here
    const Vocabulary* vocab = nullptr;
    std::optional<PromptTemplate> tmpl;
    PoolingStrategy pooling{PoolKind::mean, true};
    bool mask_prompt_tokens = false;  // mean-pool only over the content span
    int jobs = 1;

    // Prompted text (or the raw text) plus the token rows that belong to the
    // original content; eos pooling appends the eos id here.
    struct Encoded {
        std::vector<int> ids;
        std::vector<Token> tokens;
        std::vector<int> content_rows;
        std::optional<int> eos_position;
        std::string prompted_text;
        ContentSpan content;
    };

    Encoded encode_text(const std::string& text) const;
    Vector embed(const std::string& text) const;
    Matrix embed_all(std::span<const std::string> texts) const;
};

}  // namespace tinyembed
