#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsim/dataset.hpp"
#include "dsim/error.hpp"
#include "dsim/llm_client.hpp"

namespace dsim {

class MissingBinding : public Error {
public:
    explicit MissingBinding(std::string placeholder)
        : Error("missing binding for placeholder {" + placeholder + "}"),
          placeholder_(std::move(placeholder)) {}

    const std::string& placeholder() const noexcept { return placeholder_; }

private:
    std::string placeholder_;
};

struct PromptTemplate {
    std::string name;
    std::string text;  // placeholders are {identifier}

    /// Placeholder names in order of first appearance.
    std::vector<std::string> placeholders() const;
};

/// Asks for five good and five bad descriptions of {sentence} as JSON.
const PromptTemplate& main_prompt();
/// In-context prompt asking for a more abstract rewrite of {description}.
const PromptTemplate& more_abstract_prompt();

/// Substitutes every placeholder in one pass (bound values are not rescanned).
std::string render_prompt(const PromptTemplate& prompt,
                          const std::map<std::string, std::string>& bindings);

struct ParsedCompletion {
    std::vector<std::string> good;
    std::vector<std::string> bad;
};

/// Extracts the first balanced JSON object from a completion and reads its
/// "good"/"bad" string arrays. Never throws; returns nullopt and fills
/// `error` (when given) on failure.
std::optional<ParsedCompletion> parse_completion(std::string_view raw,
                                                 std::string* error = nullptr);

enum class GenerationStatus { Ok, ParseFailed, ApiFailed };

std::string_view to_string(GenerationStatus status);

struct GenerationRecord {
    std::string sentence;
    std::string raw_completion;
    /// Validated main-prompt output; present iff status == Ok.
    std::optional<TrainingInstance> parsed;
    /// Abstract rewrites from the second pass.
    std::vector<std::string> abstract_extras;
    GenerationStatus status = GenerationStatus::ApiFailed;
    std::string error;
    std::size_t attempts = 0;
    /// (description, error) for abstraction calls that failed.
    std::vector<std::pair<std::string, std::string>> abstraction_failures;

    /// The instance written to the dataset: parsed plus abstract extras,
    /// keeping the valid list within 8 entries.
    std::optional<TrainingInstance> instance() const;
};

struct GenerationOptions {
    /// Retries after the first attempt on transient API failures.
    std::size_t retries = 3;
    std::chrono::milliseconds base_backoff{500};
    /// Fraction of sentences that get the abstraction pass.
    double abstract_fraction = 0.143;
    std::size_t abstract_descriptions = 3;
    std::uint64_t seed = 0;
    /// Maximum in-flight requests for batch runs.
    std::size_t concurrency = 1;
    /// Sleep hook; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;
};

/// Calls client.complete with exponential backoff on transient failures.
/// Throws the last LlmError when retries are exhausted.
std::string complete_with_retries(LlmClient& client, const std::string& prompt,
                                  const GenerationOptions& options, std::size_t* attempts = nullptr);

/// Main prompt, call, parse. Failures are recorded on the record, not thrown.
GenerationRecord generate_instance(const std::string& sentence, LlmClient& client,
                                   const GenerationOptions& options);

/// More-abstract prompt for one valid description; returns the trimmed completion.
/// Throws LlmError on API failure.
std::string abstractify(const std::string& sentence, const std::string& description,
                        LlmClient& client, const GenerationOptions& options = {});

/// Seeded hash of the sentence decides membership in the abstraction subset.
bool selected_for_abstraction(std::string_view sentence, std::uint64_t seed, double fraction);

/// Runs generate_instance over every sentence, then the abstraction pass on
/// the selected successful ones. Emits exactly one record per sentence, in
/// input order.
std::vector<GenerationRecord> generate_batch(std::span<const std::string> sentences,
                                             LlmClient& client, const GenerationOptions& options);

/// Writes successful instances as dataset JSONL and failures as failures.jsonl.
/// Returns the number of instances written.
std::size_t write_generation_outputs(std::span<const GenerationRecord> records,
                                     const std::filesystem::path& dataset_path,
                                     const std::filesystem::path& failures_path);

}  // namespace dsim
