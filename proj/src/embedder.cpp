#include "tinyembed/embedder.hpp"

#include <atomic>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace tinyembed {

Embedder::Encoded Embedder::encode_text(const std::string& text) const {
    if (text.empty()) {
        throw std::invalid_argument("embed: empty text");
    }
    Encoded out;
    if (tmpl.has_value()) {
        PromptedText prompted = apply_template(*tmpl, text);
        out.prompted_text = std::move(prompted.text);
        out.content = prompted.content;
    } else {
        out.prompted_text = text;
        out.content = {0, static_cast<int>(text.size())};
    }
    TokenSequence seq = encode(out.prompted_text, *vocab);
    out.ids = std::move(seq.ids);
    out.tokens = std::move(seq.tokens);
    for (size_t t = 0; t < out.tokens.size(); ++t) {
        if (out.tokens[t].begin >= out.content.begin && out.tokens[t].end <= out.content.end) {
            out.content_rows.push_back(static_cast<int>(t));
        }
    }
    if (pooling.kind == PoolKind::eos_token) {
        out.ids.push_back(vocab->eos_id);
        out.eos_position = static_cast<int>(out.ids.size()) - 1;
    }
    return out;
}

Vector Embedder::embed(const std::string& text) const {
    const Encoded encoded = encode_text(text);
    LoraRuntime runtime{adapters, false, nullptr};
    ForwardOptions opts;
    if (adapters != nullptr) {
        opts.lora = &runtime;
    }
    ForwardResult res = forward(*config, *params, encoded.ids, opts);
    if (mask_prompt_tokens && pooling.kind == PoolKind::mean) {
        if (encoded.content_rows.empty()) {
            throw std::runtime_error("embed: no content tokens to pool over");
        }
        return pool_mean_masked(res.hidden.values, encoded.content_rows, pooling.normalize).values;
    }
    return pool(res.hidden.values, pooling, encoded.eos_position).values;
}

Matrix Embedder::embed_all(std::span<const std::string> texts) const {
    Matrix out(static_cast<int>(texts.size()), config->d_model);
    if (texts.empty()) {
        return out;
    }
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(texts.size())));
    if (workers == 1) {
        for (size_t i = 0; i < texts.size(); ++i) {
            const Vector v = embed(texts[i]);
            std::memcpy(out.row(static_cast<int>(i)), v.data(), sizeof(double) * v.size());
        }
        return out;
    }
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error_message;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (size_t i = next.fetch_add(1); i < texts.size(); i = next.fetch_add(1)) {
                if (failed.load()) {
                    return;
                }
                try {
                    const Vector v = embed(texts[i]);
                    std::memcpy(out.row(static_cast<int>(i)), v.data(), sizeof(double) * v.size());
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    failed.store(true);
                    error_message = e.what();
                }
            }
        });
    }
    for (std::thread& t : pool) {
        t.join();
    }
    if (failed.load()) {
        throw std::runtime_error("embed_all: " + error_message);
    }
    return out;
}

}  // namespace tinyembed
