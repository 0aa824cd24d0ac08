#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dsim/error.hpp"

namespace dsim {

/// A failed completion request. Transient failures (timeouts, connection
/// errors, 429, 5xx) are retried by the generator; others are not.
class LlmError : public Error {
public:
    LlmError(std::string message, bool transient)
        : Error(std::move(message)), transient_(transient) {}

    bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

/// Sends a prompt, returns the completion text. Implementations must be safe
/// to call from several threads at once.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual std::string complete(const std::string& prompt) = 0;
};

struct HttpClientConfig {
    /// Full endpoint URL, e.g. https://api.example.com/v1/completions
    std::string url;
    std::string token;
    std::string model = "text-davinci-003";
    double temperature = 0.7;
    int max_tokens = 1024;
    std::chrono::seconds timeout{60};

    /// Reads key=value lines (url, token, model, temperature, max_tokens,
    /// timeout_seconds) from an optional file, then applies DSIM_LLM_URL,
    /// DSIM_LLM_TOKEN, DSIM_LLM_MODEL, DSIM_LLM_TEMPERATURE, DSIM_LLM_MAX_TOKENS.
    static HttpClientConfig from_file_and_env(const std::optional<std::filesystem::path>& file);
};

/// JSON-over-HTTP completion client. Sends
/// {"model", "prompt", "temperature", "max_tokens"} with a bearer token and
/// reads choices[0].text (or choices[0].message.content).
class HttpLlmClient final : public LlmClient {
public:
    explicit HttpLlmClient(HttpClientConfig config);
    std::string complete(const std::string& prompt) override;

private:
    HttpClientConfig config_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;
};

/// Replays recorded completions from a JSONL file of {"prompt", "completion"}.
/// Unknown prompts fail permanently.
class FixtureLlmClient final : public LlmClient {
public:
    explicit FixtureLlmClient(std::map<std::string, std::string> completions);
    static FixtureLlmClient load(const std::filesystem::path& path);
    std::string complete(const std::string& prompt) override;

private:
    std::map<std::string, std::string> completions_;
};

/// Deterministic offline generator: answers the main prompt with five
/// descriptions built from the sentence's own words and five built from an
/// unrelated lexicon, and the abstraction prompt with a shortened description.
class SyntheticLlmClient final : public LlmClient {
public:
    explicit SyntheticLlmClient(std::uint64_t seed = 0) : seed_(seed) {}
    std::string complete(const std::string& prompt) override;

private:
    std::uint64_t seed_;
};

/// Wraps another client; fails the first `failures` calls with a transient
/// error and counts every call. Used to exercise retry paths.
class FlakyLlmClient final : public LlmClient {
public:
    FlakyLlmClient(LlmClient& inner, std::size_t failures) : inner_(inner), failures_(failures) {}
    std::string complete(const std::string& prompt) override;
    std::size_t calls() const noexcept { return calls_.load(); }

private:
    LlmClient& inner_;
    std::size_t failures_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace dsim
