#include "dsim/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "dsim/parallel.hpp"
#include "dsim/random.hpp"
#include "json.hpp"

namespace dsim {

namespace {

constexpr const char* kMainPromptText = R"PROMPT(Let's write abstract descriptions of sentences. Example:

Sentence: Pilate 's role in the events leading to the crucifixion lent themselves to melodrama , 
even tragedy , and Pilate often has a role in medieval mystery plays .

Description: A description of a historical religious figure's involvement in a significant
event and its later portrayal in art.

Note: Descriptions can differ in the level of abstraction, granularity and the part 
of the sentence they focus on. Some descriptions neeed to be abstract, while others should
be concrete and detailed.

For the following sentence, write up 5 good and stand-alone, independent descriptions and 5
bad descriptions (which may be related, but are clearly wrong). Output a json file with keys
'good', 'bad'.

Sentence: {sentence}

Start your answer with a curly bracket.    )PROMPT";

constexpr const char* kMoreAbstractPromptText = R"PROMPT(Sentence: in spite of excellent pediatric health care , several educational problems could be
noted in this tertiary pediatric center .

Description: Despite having advanced healthcare resources, certain deficiencies in education
were identified at a medical center that serves children.

A very abstract description: The provision of care at a specialized medical center was not
optimal in one particular area, despite the presence of advanced resources.

Sentence: {sentence}

Description:  {description} 

A very abstract description:)PROMPT";

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Length of the placeholder starting at text[i] ('{' ident '}'), or 0.
std::size_t placeholder_at(std::string_view text, std::size_t i) {
    if (text[i] != '{' || i + 2 >= text.size() || !is_ident_start(text[i + 1])) return 0;
    std::size_t j = i + 2;
    while (j < text.size() && is_ident(text[j])) ++j;
    if (j >= text.size() || text[j] != '}') return 0;
    return j - i + 1;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// End (exclusive) of the balanced object starting at text[start] == '{', or npos.
std::size_t balanced_end(std::string_view text, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

void set_error(std::string* error, std::string message) {
    if (error) *error = std::move(message);
}

}  // namespace

std::vector<std::string> PromptTemplate::placeholders() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (const std::size_t len = placeholder_at(text, i)) {
            std::string name = text.substr(i + 1, len - 2);
            if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
            i += len - 1;
        }
    }
    return names;
}

const PromptTemplate& main_prompt() {
    static const PromptTemplate prompt{"main", kMainPromptText};
    return prompt;
}

const PromptTemplate& more_abstract_prompt() {
    static const PromptTemplate prompt{"more_abstract", kMoreAbstractPromptText};
    return prompt;
}

std::string render_prompt(const PromptTemplate& prompt,
                          const std::map<std::string, std::string>& bindings) {
    const std::string_view text = prompt.text;
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (const std::size_t len = placeholder_at(text, i)) {
            const std::string name(text.substr(i + 1, len - 2));
            const auto it = bindings.find(name);
            if (it == bindings.end()) throw MissingBinding(name);
            out += it->second;
            i += len - 1;
        } else {
            out += text[i];
        }
    }
    return out;
}

std::optional<ParsedCompletion> parse_completion(std::string_view raw, std::string* error) {
    std::size_t from = 0;
    while (true) {
        const std::size_t start = raw.find('{', from);
        if (start == std::string_view::npos) {
            set_error(error, "no balanced JSON object in completion");
            return std::nullopt;
        }
        const std::size_t end = balanced_end(raw, start);
        if (end == std::string_view::npos) {
            set_error(error, "no balanced JSON object in completion");
            return std::nullopt;
        }
        const auto parsed = nlohmann::json::parse(raw.substr(start, end - start), nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) {
            from = start + 1;
            continue;
        }

        ParsedCompletion out;
        for (const auto& [key, target] : {std::pair{"good", &out.good}, std::pair{"bad", &out.bad}}) {
            const auto it = parsed.find(key);
            if (it == parsed.end()) {
                set_error(error, std::string("completion JSON lacks key '") + key + "'");
                return std::nullopt;
            }
            if (!it->is_array()) {
                set_error(error, std::string("completion key '") + key + "' is not an array");
                return std::nullopt;
            }
            for (const auto& v : *it) {
                if (!v.is_string()) {
                    set_error(error, std::string("non-string entry in '") + key + "'");
                    return std::nullopt;
                }
                target->push_back(trim(v.get<std::string>()));
            }
        }
        return out;
    }
}

std::string_view to_string(GenerationStatus status) {
    switch (status) {
        case GenerationStatus::Ok: return "ok";
        case GenerationStatus::ParseFailed: return "parse_failed";
        case GenerationStatus::ApiFailed: return "api_failed";
    }
    return "?";
}

std::optional<TrainingInstance> GenerationRecord::instance() const {
    if (status != GenerationStatus::Ok || !parsed) return std::nullopt;
    TrainingInstance inst = *parsed;
    const std::size_t extras = std::min(abstract_extras.size(), kMaxValidDescriptions);
    const std::size_t keep = std::min(inst.valid_descriptions.size(), kMaxValidDescriptions - extras);
    inst.valid_descriptions.resize(keep);
    for (std::size_t i = 0; i < extras; ++i) inst.valid_descriptions.push_back(abstract_extras[i]);
    return inst;
}

std::string complete_with_retries(LlmClient& client, const std::string& prompt,
                                  const GenerationOptions& options, std::size_t* attempts) {
    std::size_t tries = 0;
    auto delay = options.base_backoff;
    while (true) {
        ++tries;
        if (attempts) *attempts = tries;
        try {
            return client.complete(prompt);
        } catch (const LlmError& e) {
            if (!e.transient() || tries > options.retries) throw;
        }
        if (options.sleep) {
            options.sleep(delay);
        } else {
            std::this_thread::sleep_for(delay);
        }
        delay *= 2;
    }
}

GenerationRecord generate_instance(const std::string& sentence, LlmClient& client,
                                   const GenerationOptions& options) {
    GenerationRecord record;
    record.sentence = sentence;
    const std::string prompt = render_prompt(main_prompt(), {{"sentence", sentence}});
    try {
        record.raw_completion = complete_with_retries(client, prompt, options, &record.attempts);
    } catch (const LlmError& e) {
        record.status = GenerationStatus::ApiFailed;
        record.error = e.what();
        return record;
    }

    std::string error;
    auto parsed = parse_completion(record.raw_completion, &error);
    if (!parsed) {
        record.status = GenerationStatus::ParseFailed;
        record.error = error;
        return record;
    }
    TrainingInstance inst;
    inst.sentence = sentence;
    inst.valid_descriptions = std::move(parsed->good);
    inst.invalid_descriptions = std::move(parsed->bad);
    if (inst.valid_descriptions.size() > kMaxValidDescriptions)
        inst.valid_descriptions.resize(kMaxValidDescriptions);
    if (inst.invalid_descriptions.size() > kInvalidDescriptions)
        inst.invalid_descriptions.resize(kInvalidDescriptions);
    try {
        validate_instance(inst);
    } catch (const DatasetError& e) {
        record.status = GenerationStatus::ParseFailed;
        record.error = e.what();
        return record;
    }
    record.parsed = std::move(inst);
    record.status = GenerationStatus::Ok;
    return record;
}

std::string abstractify(const std::string& sentence, const std::string& description,
                        LlmClient& client, const GenerationOptions& options) {
    const std::string prompt =
        render_prompt(more_abstract_prompt(), {{"sentence", sentence}, {"description", description}});
    return trim(complete_with_retries(client, prompt, options));
}

bool selected_for_abstraction(std::string_view sentence, std::uint64_t seed, double fraction) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const char c : sentence) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    const double u = static_cast<double>(mix_seed(seed, h) >> 11) * 0x1.0p-53;
    return u < fraction;
}

std::vector<GenerationRecord> generate_batch(std::span<const std::string> sentences,
                                             LlmClient& client, const GenerationOptions& options) {
    std::vector<GenerationRecord> records(sentences.size());
    parallel_chunks(sentences.size(), options.concurrency, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            GenerationRecord rec = generate_instance(sentences[i], client, options);
            if (rec.status == GenerationStatus::Ok &&
                selected_for_abstraction(rec.sentence, options.seed, options.abstract_fraction)) {
                const auto& valid = rec.parsed->valid_descriptions;
                const std::size_t n = std::min(options.abstract_descriptions, valid.size());
                for (std::size_t d = 0; d < n; ++d) {
                    try {
                        std::string extra = abstractify(rec.sentence, valid[d], client, options);
                        if (extra.empty() || extra == rec.sentence) {
                            rec.abstraction_failures.emplace_back(valid[d], "unusable completion");
                        } else {
                            rec.abstract_extras.push_back(std::move(extra));
                        }
                    } catch (const LlmError& e) {
                        rec.abstraction_failures.emplace_back(valid[d], e.what());
                    }
                }
            }
            records[i] = std::move(rec);
        }
    });
    return records;
}

std::size_t write_generation_outputs(std::span<const GenerationRecord> records,
                                     const std::filesystem::path& dataset_path,
                                     const std::filesystem::path& failures_path) {
    std::ofstream data(dataset_path, std::ios::binary | std::ios::trunc);
    std::ofstream failures(failures_path, std::ios::binary | std::ios::trunc);
    if (!data || !failures) throw Error("cannot open generation outputs for writing");

    std::size_t written = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (auto inst = rec.instance()) {
            data << to_jsonl(*inst) << '\n';
            ++written;
        } else {
            nlohmann::ordered_json row;
            row["index"] = i;
            row["sentence"] = rec.sentence;
            row["status"] = std::string(to_string(rec.status));
            row["error"] = rec.error;
            row["raw_completion"] = rec.raw_completion;
            failures << row.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        }
        for (const auto& [description, error] : rec.abstraction_failures) {
            nlohmann::ordered_json row;
            row["index"] = i;
            row["sentence"] = rec.sentence;
            row["status"] = "abstract_failed";
            row["description"] = description;
            row["error"] = error;
            failures << row.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        }
    }
    if (!data || !failures) throw Error("failed writing generation outputs");
    return written;
}

}  // namespace dsim
