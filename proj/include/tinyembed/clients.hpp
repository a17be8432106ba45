// External text services used by augmentation: a translation endpoint and a
// paraphrase endpoint. Both speak JSON over one abstract interface so tests
// and offline runs can swap in deterministic mocks.
#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace tinyembed {

class ClientError : public std::runtime_error {
  public:
    ClientError(const std::string& message, int attempts, bool retryable)
        : std::runtime_error(message), attempts(attempts), retryable(retryable) {}
    int attempts = 0;
    bool retryable = false;
};

class JsonEndpoint {
  public:
    virtual ~JsonEndpoint() = default;
    // Throws ClientError on failure; never returns a partial result.
    virtual nlohmann::json post(const nlohmann::json& request) = 0;
};

// POSTs to `url` with optional bearer token; retries with exponential backoff.
class HttpJsonEndpoint : public JsonEndpoint {
  public:
    HttpJsonEndpoint(std::string url, std::string token, int max_retries = 3,
                     int backoff_ms = 100);
    nlohmann::json post(const nlohmann::json& request) override;

  private:
    std::string host_;
    std::string path_;
    std::string token_;
    int max_retries_;
    int backoff_ms_;
};

// request {"text":..., "source":..., "target":...} -> response {"text":...}
class TranslationClient {
  public:
    explicit TranslationClient(std::shared_ptr<JsonEndpoint> endpoint) : endpoint_(std::move(endpoint)) {}
    std::string translate(const std::string& text, const std::string& source,
                          const std::string& target);

  private:
    std::shared_ptr<JsonEndpoint> endpoint_;
};

// request {"prompt":...} -> response {"text":...}
class ParaphraseClient {
  public:
    explicit ParaphraseClient(std::shared_ptr<JsonEndpoint> endpoint) : endpoint_(std::move(endpoint)) {}
    std::string complete(const std::string& prompt);

  private:
    std::shared_ptr<JsonEndpoint> endpoint_;
};

// Deterministic offline stand-in for the MT service: the de-leg swaps the
// first two words so a round trip is meaning-preserving but not the identity.
std::shared_ptr<JsonEndpoint> make_mock_translation_endpoint();

// Deterministic offline stand-in for the LLM service: extracts the quoted
// sentence from the prompt and rotates its words, differently per prompt.
std::shared_ptr<JsonEndpoint> make_mock_paraphrase_endpoint();

// Reads MT_ENDPOINT/MT_TOKEN or LLM_ENDPOINT/LLM_TOKEN from the environment.
// Throws when the endpoint variable is unset.
std::shared_ptr<JsonEndpoint> make_translation_endpoint_from_env();
std::shared_ptr<JsonEndpoint> make_paraphrase_endpoint_from_env();

}  // namespace tinyembed
