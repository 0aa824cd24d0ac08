#include "dsim/llm_client.hpp"

#include <array>
#include <cstdlib>
#include <fstream>

#include "dsim/random.hpp"
#include "dsim/tokenizer.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dsim {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

void apply_setting(HttpClientConfig& c, const std::string& key, const std::string& value) {
    if (key == "url") {
        c.url = value;
    } else if (key == "token") {
        c.token = value;
    } else if (key == "model") {
        c.model = value;
    } else if (key == "temperature") {
        c.temperature = std::stod(value);
    } else if (key == "max_tokens") {
        c.max_tokens = std::stoi(value);
    } else if (key == "timeout_seconds") {
        c.timeout = std::chrono::seconds(std::stol(value));
    } else {
        throw Error("unknown LLM client setting '" + key + "'");
    }
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace

HttpClientConfig HttpClientConfig::from_file_and_env(
    const std::optional<std::filesystem::path>& file) {
    HttpClientConfig config;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw Error("cannot open LLM config " + file->string());
        std::string line;
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty() || line[0] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw Error("malformed LLM config line: " + line);
            apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    const std::array<std::pair<const char*, const char*>, 5> env{{{"DSIM_LLM_URL", "url"},
                                                                   {"DSIM_LLM_TOKEN", "token"},
                                                                   {"DSIM_LLM_MODEL", "model"},
                                                                   {"DSIM_LLM_TEMPERATURE", "temperature"},
                                                                   {"DSIM_LLM_MAX_TOKENS", "max_tokens"}}};
    for (const auto& [var, key] : env) {
        if (const char* v = std::getenv(var)) apply_setting(config, key, v);
    }
    return config;
}

HttpLlmClient::HttpLlmClient(HttpClientConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error("LLM endpoint URL needs a scheme: '" + config_.url + "'");
    }
    const auto path_start = config_.url.find('/', scheme_end + 3);
    origin_ = config_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (config_.url.rfind("https://", 0) == 0) {
        throw Error("https endpoints need a build with OpenSSL support");
    }
#endif
}

std::string HttpLlmClient::complete(const std::string& prompt) {
    httplib::Client client(origin_);
    const auto timeout = static_cast<time_t>(config_.timeout.count());
    client.set_connection_timeout(timeout, 0);
    client.set_read_timeout(timeout, 0);
    client.set_write_timeout(timeout, 0);

    httplib::Headers headers;
    if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);
    const nlohmann::json body = {{"model", config_.model},
                                 {"prompt", prompt},
                                 {"temperature", config_.temperature},
                                 {"max_tokens", config_.max_tokens}};
    const auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        throw LlmError("completion request failed: " + httplib::to_string(res.error()), true);
    }
    if (res->status == 429 || res->status >= 500) {
        throw LlmError("completion endpoint returned HTTP " + std::to_string(res->status), true);
    }
    if (res->status != 200) {
        throw LlmError("completion endpoint returned HTTP " + std::to_string(res->status), false);
    }
    const auto json = nlohmann::json::parse(res->body, nullptr, false);
    if (json.is_discarded()) throw LlmError("completion endpoint returned invalid JSON", false);
    const auto choices = json.find("choices");
    if (choices == json.end() || !choices->is_array() || choices->empty()) {
        throw LlmError("completion response has no choices", false);
    }
    const auto& first = (*choices)[0];
    if (first.contains("text") && first["text"].is_string()) return first["text"].get<std::string>();
    if (first.contains("message") && first["message"].contains("content") &&
        first["message"]["content"].is_string()) {
        return first["message"]["content"].get<std::string>();
    }
    throw LlmError("completion response has no text", false);
}

FixtureLlmClient::FixtureLlmClient(std::map<std::string, std::string> completions)
    : completions_(std::move(completions)) {}

FixtureLlmClient FixtureLlmClient::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open fixture " + path.string());
    std::map<std::string, std::string> completions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto row = nlohmann::json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.contains("prompt") || !row.contains("completion") ||
            !row["prompt"].is_string() || !row["completion"].is_string()) {
            throw Error("malformed fixture line " + std::to_string(line_no) + " in " + path.string());
        }
        completions[row["prompt"].get<std::string>()] = row["completion"].get<std::string>();
    }
    return FixtureLlmClient(std::move(completions));
}

std::string FixtureLlmClient::complete(const std::string& prompt) {
    const auto it = completions_.find(prompt);
    if (it == completions_.end()) throw LlmError("no recorded completion for prompt", false);
    return it->second;
}

std::string SyntheticLlmClient::complete(const std::string& prompt) {
    static constexpr std::array<const char*, 24> kLexicon{
        "volcano", "orchestra", "glacier",  "merchant", "satellite", "harvest",
        "lighthouse", "parliament", "bacteria", "cathedral", "tournament", "recipe",
        "submarine", "vineyard", "telescope", "monastery", "locomotive", "carnival",
        "asteroid", "pharmacy", "quarry", "ballet", "caravan", "observatory"};
    static const std::string kAbstractCue = "A very abstract description:";
    const Tokenizer tokenizer(2, true);

    if (prompt.size() >= kAbstractCue.size() &&
        prompt.compare(prompt.size() - kAbstractCue.size(), kAbstractCue.size(), kAbstractCue) == 0) {
        const auto marker = prompt.rfind("Description:  ");
        const auto stop = prompt.rfind(" \n\nA very abstract description:");
        if (marker == std::string::npos || stop == std::string::npos || stop < marker) {
            throw LlmError("synthetic client: unrecognized abstraction prompt", false);
        }
        const std::string description = prompt.substr(marker + 14, stop - marker - 14);
        const auto words = tokenizer.split(description);
        std::string out = " In general terms:";
        for (std::size_t i = 0; i < (words.size() + 1) / 2; ++i) out += " " + words[i];
        return out + ".\n";
    }

    const auto marker = prompt.rfind("Sentence: ");
    const auto stop = prompt.rfind("\n\nStart your answer");
    if (marker == std::string::npos || stop == std::string::npos || stop < marker) {
        throw LlmError("synthetic client: unrecognized prompt", false);
    }
    const std::string sentence = prompt.substr(marker + 10, stop - marker - 10);
    auto words = tokenizer.split(sentence);
    if (words.empty()) words.push_back("something");

    Rng rng(mix_seed(seed_, fnv1a(sentence)));
    nlohmann::ordered_json out;
    out["good"] = nlohmann::json::array();
    out["bad"] = nlohmann::json::array();
    for (int i = 0; i < 5; ++i) {
        out["good"].push_back("Something about " + words[rng.below(words.size())] + " and " +
                              words[rng.below(words.size())] + ".");
    }
    for (int i = 0; i < 5; ++i) {
        out["bad"].push_back(std::string("A story about ") + kLexicon[rng.below(kLexicon.size())] +
                             " and " + kLexicon[rng.below(kLexicon.size())] + ".");
    }
    return out.dump();
}

std::string FlakyLlmClient::complete(const std::string& prompt) {
    const std::size_t call = ++calls_;
    if (call <= failures_) {
        throw LlmError("injected transient failure " + std::to_string(call), true);
    }
    return inner_.complete(prompt);
}

}  // namespace dsim
