#include "tinyembed/clients.hpp"

#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>
#include <vector>

#include <httplib.h>

namespace tinyembed {

namespace {

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

std::string require_text_field(const nlohmann::json& response) {
    if (!response.contains("text") || !response["text"].is_string()) {
        throw ClientError("response missing \"text\" field", 1, false);
    }
    std::string text = response["text"].get<std::string>();
    if (text.empty()) {
        throw ClientError("service returned an empty text", 1, false);
    }
    return text;
}

class MockTranslationEndpoint : public JsonEndpoint {
  public:
    nlohmann::json post(const nlohmann::json& request) override {
        const std::string text = request.at("text").get<std::string>();
        const std::string target = request.at("target").get<std::string>();
        std::vector<std::string> words = split_words(text);
        if (target != "en") {
            // "translate": tag each word so the pivot text is visibly foreign
            for (std::string& w : words) {
                w = "de:" + w;
            }
        } else {
            for (std::string& w : words) {
                if (w.rfind("de:", 0) == 0) {
                    w = w.substr(3);
                }
            }
            // imperfect round trip: swap the first two words
            if (words.size() >= 2) {
                std::swap(words[0], words[1]);
            }
        }
        return nlohmann::json{{"text", join_words(words)}};
    }
};

class MockParaphraseEndpoint : public JsonEndpoint {
  public:
    nlohmann::json post(const nlohmann::json& request) override {
        const std::string prompt = request.at("prompt").get<std::string>();
        const size_t open = prompt.find('"');
        const size_t close = prompt.rfind('"');
        std::string sentence = (open == std::string::npos || close <= open)
                                   ? prompt
                                   : prompt.substr(open + 1, close - open - 1);
        // rotate by a prompt-dependent amount so each template yields a
        // distinct deterministic paraphrase
        std::vector<std::string> words = split_words(sentence);
        if (words.size() >= 2) {
            const size_t shift = 1 + prompt.size() % (words.size() - 1);
            std::rotate(words.begin(), words.begin() + static_cast<long>(shift), words.end());
        } else {
            words.push_back("indeed");
        }
        return nlohmann::json{{"text", join_words(words)}};
    }
};

}  // namespace

HttpJsonEndpoint::HttpJsonEndpoint(std::string url, std::string token, int max_retries,
                                   int backoff_ms)
    : token_(std::move(token)), max_retries_(max_retries), backoff_ms_(backoff_ms) {
    // split scheme://host:port/path into client target and request path
    const size_t scheme = url.find("://");
    const size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const size_t slash = url.find('/', host_start);
    if (slash == std::string::npos) {
        host_ = url;
        path_ = "/";
    } else {
        host_ = url.substr(0, slash);
        path_ = url.substr(slash);
    }
}

nlohmann::json HttpJsonEndpoint::post(const nlohmann::json& request) {
    const std::string body = request.dump();
    std::string last_error;
    for (int attempt = 1; attempt <= max_retries_; ++attempt) {
        httplib::Client client(host_);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(30, 0);
        httplib::Headers headers;
        if (!token_.empty()) {
            headers.emplace("Authorization", "Bearer " + token_);
        }
        auto res = client.Post(path_, headers, body, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                throw ClientError(std::string("invalid JSON from service: ") + e.what(), attempt,
                                  false);
            }
        }
        if (res && res->status >= 400 && res->status < 500) {
            throw ClientError("service rejected request with status " + std::to_string(res->status),
                              attempt, false);
        }
        last_error = res ? "status " + std::to_string(res->status)
                         : "transport error " + httplib::to_string(res.error());
        if (attempt < max_retries_) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
        }
    }
    throw ClientError("retries exhausted: " + last_error, max_retries_, true);
}

std::string TranslationClient::translate(const std::string& text, const std::string& source,
                                         const std::string& target) {
    nlohmann::json request{{"text", text}, {"source", source}, {"target", target}};
    return require_text_field(endpoint_->post(request));
}

std::string ParaphraseClient::complete(const std::string& prompt) {
    nlohmann::json request{{"prompt", prompt}};
    return require_text_field(endpoint_->post(request));
}

std::shared_ptr<JsonEndpoint> make_mock_translation_endpoint() {
    return std::make_shared<MockTranslationEndpoint>();
}

std::shared_ptr<JsonEndpoint> make_mock_paraphrase_endpoint() {
    return std::make_shared<MockParaphraseEndpoint>();
}

namespace {

std::shared_ptr<JsonEndpoint> endpoint_from_env(const char* url_var, const char* token_var) {
    const char* url = std::getenv(url_var);
    if (url == nullptr || *url == '\0') {
        throw std::runtime_error(std::string(url_var) + " is not set");
    }
    const char* token = std::getenv(token_var);
    return std::make_shared<HttpJsonEndpoint>(url, token ? token : "");
}

}  // namespace

std::shared_ptr<JsonEndpoint> make_translation_endpoint_from_env() {
    return endpoint_from_env("MT_ENDPOINT", "MT_TOKEN");
}

std::shared_ptr<JsonEndpoint> make_paraphrase_endpoint_from_env() {
    return endpoint_from_env("LLM_ENDPOINT", "LLM_TOKEN");
}

}  // namespace tinyembed
