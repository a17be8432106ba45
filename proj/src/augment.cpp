#include "tinyembed/augment.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "tinyembed/tensor.hpp"

namespace tinyembed {

namespace {

// Augmentation operates on whitespace-separated words, punctuation attached.
std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
        words.push_back(w);
    }
    return words;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const std::string& w : words) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        out += w;
    }
    return out;
}

std::string strip_quotes_and_space(std::string s) {
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    size_t begin = 0;
    size_t end = s.size();
    while (begin < end && is_space(s[begin])) {
        ++begin;
    }
    while (end > begin && is_space(s[end - 1])) {
        --end;
    }
    if (end - begin >= 2 && ((s[begin] == '"' && s[end - 1] == '"') ||
                             (s[begin] == '\'' && s[end - 1] == '\''))) {
        ++begin;
        --end;
    }
    while (begin < end && is_space(s[begin])) {
        ++begin;
    }
    while (end > begin && is_space(s[end - 1])) {
        --end;
    }
    return s.substr(begin, end - begin);
}

}  // namespace

const char* aug_method_name(AugMethod method) {
    switch (method) {
        case AugMethod::deletion: return "deletion";
        case AugMethod::swap: return "swap";
        case AugMethod::char_noise: return "char_noise";
        case AugMethod::back_translation: return "back_translation";
        case AugMethod::llm_paraphrase: return "llm_paraphrase";
        case AugMethod::identity: return "identity";
    }
    throw std::invalid_argument("aug_method_name: bad method");
}

AugMethod aug_method_from_name(const std::string& name) {
    for (AugMethod m : {AugMethod::deletion, AugMethod::swap, AugMethod::char_noise,
                        AugMethod::back_translation, AugMethod::llm_paraphrase, AugMethod::identity}) {
        if (name == aug_method_name(m)) {
            return m;
        }
    }
    throw std::invalid_argument("unknown augmentation method: " + name);
}

void AugmentConfig::validate() const {
    if (deletion_p < 0.0 || deletion_p >= 1.0 || char_noise_p < 0.0 || char_noise_p >= 1.0) {
        throw std::invalid_argument("augment config: probabilities must lie in [0, 1)");
    }
    for (int id : paraphrase_prompt_ids) {
        if (id < 0 || id >= static_cast<int>(paraphrase_prompts().size())) {
            throw std::invalid_argument("augment config: paraphrase prompt id out of range");
        }
    }
    if (max_in_flight < 1) {
        throw std::invalid_argument("augment config: max_in_flight must be >= 1");
    }
}

const std::vector<std::string>& paraphrase_prompts() {
    static const std::vector<std::string> prompts = {
        "Rewrite the following sentence with more detail, keeping the original meaning. "
        "Respond with only the rewritten sentence: \"[X]\"",
        "Paraphrase this sentence using simpler language. "
        "Respond with only the rewritten sentence: \"[X]\"",
        "You're a high school teacher. Explain this sentence to your students in your own words. "
        "Respond with only the explanation: \"[X]\"",
        "Write a metaphor that expresses the same idea as this sentence. "
        "Respond with only the metaphor: \"[X]\"",
        "After reading this sentence, what is a natural question someone might ask? "
        "Respond with only the question: \"[X]\"",
    };
    return prompts;
}

std::string random_deletion(const std::string& text, double p, uint64_t seed) {
    std::vector<std::string> words = split_words(text);
    if (words.empty()) {
        throw std::invalid_argument("random_deletion: text has no words");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::string> kept;
    for (const std::string& w : words) {
        if (unit(rng) >= p) {
            kept.push_back(w);
        }
    }
    if (kept.empty()) {
        // never emit an empty positive: retain one word uniformly
        std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
        kept.push_back(words[pick(rng)]);
    }
    return join_words(kept);
}

std::string random_swap(const std::string& text, uint64_t seed) {
    std::vector<std::string> words = split_words(text);
    if (words.size() < 2) {
        return join_words(words);
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
    const size_t i = pick(rng);
    size_t j = pick(rng);
    while (j == i) {
        j = pick(rng);
    }
    std::swap(words[i], words[j]);
    return join_words(words);
}

std::string char_noise(const std::string& text, double p, uint64_t seed) {
    std::vector<std::string> words = split_words(text);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::string& w : words) {
        if (w.size() < 2) {
            continue;
        }
        if (unit(rng) < p) {
            std::uniform_int_distribution<size_t> pick(0, w.size() - 2);
            const size_t at = pick(rng);
            std::swap(w[at], w[at + 1]);
        }
    }
    return join_words(words);
}

std::string back_translate(const std::string& text, TranslationClient& client,
                           const std::string& pivot_language) {
    const std::string pivot = client.translate(text, "en", pivot_language);
    return client.translate(pivot, pivot_language, "en");
}

std::string llm_paraphrase(const std::string& text, int prompt_id, ParaphraseClient& client,
                           size_t max_response_len) {
    const auto& prompts = paraphrase_prompts();
    if (prompt_id < 0 || prompt_id >= static_cast<int>(prompts.size())) {
        throw std::out_of_range("llm_paraphrase: prompt_id must be in [0, " +
                                std::to_string(prompts.size()) + ")");
    }
    std::string prompt = prompts[static_cast<size_t>(prompt_id)];
    const size_t at = prompt.find("[X]");
    prompt = prompt.substr(0, at) + text + prompt.substr(at + 3);

    std::string response = strip_quotes_and_space(client.complete(prompt));
    if (response.empty()) {
        throw ClientError("paraphrase response empty after stripping", 1, false);
    }
    if (response.size() > max_response_len) {
        throw ClientError("paraphrase response exceeds " + std::to_string(max_response_len) +
                              " characters",
                          1, false);
    }
    return response;
}

PairCorpusResult build_pair_corpus(std::span<const std::string> texts,
                                   std::span<const AugMethod> methods, const AugmentConfig& config,
                                   const AugmentClients& clients, uint64_t seed) {
    if (texts.empty()) {
        throw std::invalid_argument("build_pair_corpus: no texts");
    }
    config.validate();

    struct Job {
        size_t text_index;
        AugMethod method;
        std::optional<int> prompt_id;
        uint64_t seed;
    };
    std::vector<Job> jobs;
    for (size_t i = 0; i < texts.size(); ++i) {
        for (size_t m = 0; m < methods.size(); ++m) {
            const AugMethod method = methods[m];
            const uint64_t job_seed = mix_seed(seed, i * 64 + m * 8);
            if (method == AugMethod::llm_paraphrase) {
                for (int pid : config.paraphrase_prompt_ids) {
                    jobs.push_back({i, method, pid, mix_seed(job_seed, static_cast<uint64_t>(pid))});
                }
            } else {
                jobs.push_back({i, method, std::nullopt, job_seed});
            }
        }
    }

    struct Slot {
        std::optional<PositivePair> pair;
        std::optional<PairCorpusError> error;
    };
    std::vector<Slot> slots(jobs.size());

    auto run_job = [&](size_t idx) {
        const Job& job = jobs[idx];
        const std::string& anchor = texts[job.text_index];
        PositivePair pair;
        pair.anchor = anchor;
        pair.method = job.method;
        pair.prompt_id = job.prompt_id;
        pair.seed = job.seed;
        try {
            switch (job.method) {
                case AugMethod::deletion:
                    pair.positive = random_deletion(anchor, config.deletion_p, job.seed);
                    break;
                case AugMethod::swap:
                    pair.positive = random_swap(anchor, job.seed);
                    break;
                case AugMethod::char_noise:
                    pair.positive = char_noise(anchor, config.char_noise_p, job.seed);
                    break;
                case AugMethod::identity:
                    pair.positive = anchor;
                    break;
                case AugMethod::back_translation: {
                    if (clients.translation == nullptr) {
                        throw ClientError("no translation client configured", 0, false);
                    }
                    pair.positive =
                        back_translate(anchor, *clients.translation, config.pivot_language);
                    if (!config.allow_identity_positive && pair.positive == anchor) {
                        throw ClientError("degenerate positive: round trip returned the anchor", 1,
                                          false);
                    }
                    break;
                }
                case AugMethod::llm_paraphrase: {
                    if (clients.paraphrase == nullptr) {
                        throw ClientError("no paraphrase client configured", 0, false);
                    }
                    pair.positive = llm_paraphrase(anchor, *job.prompt_id, *clients.paraphrase,
                                                   config.max_response_len);
                    if (!config.allow_identity_positive && pair.positive == anchor) {
                        throw ClientError("degenerate positive: paraphrase returned the anchor", 1,
                                          false);
                    }
                    break;
                }
            }
            if (pair.positive.empty()) {
                throw std::runtime_error("augmentation produced an empty positive");
            }
            slots[idx].pair = std::move(pair);
        } catch (const ClientError& e) {
            slots[idx].error = PairCorpusError{job.text_index, job.method, job.prompt_id, e.what(),
                                               e.attempts};
        } catch (const std::exception& e) {
            slots[idx].error = PairCorpusError{job.text_index, job.method, job.prompt_id, e.what(), 0};
        }
    };

    const bool has_client_jobs =
        std::any_of(jobs.begin(), jobs.end(), [](const Job& j) {
            return j.method == AugMethod::back_translation || j.method == AugMethod::llm_paraphrase;
        });
    const int workers = has_client_jobs ? std::min<int>(config.max_in_flight,
                                                        static_cast<int>(jobs.size()))
                                        : 1;
    if (workers <= 1) {
        for (size_t i = 0; i < jobs.size(); ++i) {
            run_job(i);
        }
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
                    run_job(i);
                }
            });
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }

    // reassemble in input order
    PairCorpusResult result;
    for (Slot& slot : slots) {
        if (slot.pair.has_value()) {
            result.pairs.push_back(std::move(*slot.pair));
        } else if (slot.error.has_value()) {
            result.errors.push_back(std::move(*slot.error));
        }
    }
    return result;
}

}  // namespace tinyembed
