#include "dsim/dataset.hpp"

#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "dsim/error.hpp"
#include "dsim/random.hpp"
#include "json.hpp"

namespace dsim {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(SplitName name) {
    switch (name) {
        case SplitName::Train: return "train";
        case SplitName::Dev: return "dev";
        case SplitName::Test: return "test";
    }
    return "?";
}

SplitName parse_split_name(std::string_view name) {
    if (name == "train") return SplitName::Train;
    if (name == "dev") return SplitName::Dev;
    if (name == "test") return SplitName::Test;
    throw DatasetError("unknown split name '" + std::string(name) + "'", 0);
}

namespace {

void validate_at(const TrainingInstance& inst, std::size_t line) {
    const std::string where = "instance " + std::to_string(inst.id) +
                              (line ? " (line " + std::to_string(line) + ")" : std::string());
    if (inst.sentence.empty()) {
        throw DatasetError(where + ": empty sentence", line);
    }
    const std::size_t good = inst.valid_descriptions.size();
    const std::size_t bad = inst.invalid_descriptions.size();
    if (good < kMinValidDescriptions || good > kMaxValidDescriptions ||
        bad != kInvalidDescriptions) {
        throw DatasetError(where + ": cardinality violation: " + std::to_string(good) +
                               " valid (expected 5-8), " + std::to_string(bad) +
                               " invalid (expected 5)",
                           line);
    }
    for (const auto* list : {&inst.valid_descriptions, &inst.invalid_descriptions}) {
        for (const auto& d : *list) {
            if (d.empty()) {
                throw DatasetError(where + ": empty description", line);
            }
            if (d == inst.sentence) {
                throw DatasetError(where + ": description identical to sentence", line);
            }
        }
    }
}

std::vector<std::string> string_array(const ordered_json& obj, const char* key,
                                      std::size_t line) {
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_array()) {
        throw DatasetError("malformed record at line " + std::to_string(line) + ": key '" + key +
                               "' missing or not an array",
                           line);
    }
    std::vector<std::string> out;
    out.reserve(it->size());
    for (const auto& v : *it) {
        if (!v.is_string()) {
            throw DatasetError("malformed record at line " + std::to_string(line) +
                                   ": non-string entry in '" + key + "'",
                               line);
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

void validate_instance(const TrainingInstance& instance) { validate_at(instance, 0); }

DatasetSplit parse_split(std::string_view jsonl, SplitName name, LoadOptions options) {
    DatasetSplit split{name, {}};
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= jsonl.size()) {
        std::size_t end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        std::string_view line = jsonl.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        ordered_json obj;
        try {
            obj = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DatasetError("malformed JSON at line " + std::to_string(line_no) + ": " +
                                   e.what(),
                               line_no);
        }
        if (!obj.is_object() || !obj.contains("sentence") || !obj["sentence"].is_string()) {
            throw DatasetError("malformed record at line " + std::to_string(line_no) +
                                   ": expected object with string 'sentence'",
                               line_no);
        }
        TrainingInstance inst;
        inst.id = split.instances.size();
        inst.sentence = obj["sentence"].get<std::string>();
        inst.valid_descriptions = string_array(obj, "good", line_no);
        inst.invalid_descriptions = string_array(obj, "bad", line_no);
        if (options.lenient) {
            if (inst.valid_descriptions.size() > kMaxValidDescriptions)
                inst.valid_descriptions.resize(kMaxValidDescriptions);
            if (inst.invalid_descriptions.size() > kInvalidDescriptions)
                inst.invalid_descriptions.resize(kInvalidDescriptions);
        }
        validate_at(inst, line_no);
        split.instances.push_back(std::move(inst));
    }
    if (split.instances.empty()) {
        throw DatasetError("empty file: no records", 0);
    }
    return split;
}

DatasetSplit load_split(const std::filesystem::path& path, SplitName name,
                        LoadOptions options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DatasetError("cannot open " + path.string(), 0);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_split(buf.str(), name, options);
    } catch (const DatasetError& e) {
        throw DatasetError(path.string() + ": " + e.what(), e.line());
    }
}

std::string to_jsonl(const TrainingInstance& instance) {
    ordered_json obj;
    obj["sentence"] = instance.sentence;
    obj["good"] = instance.valid_descriptions;
    obj["bad"] = instance.invalid_descriptions;
    return obj.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
}

std::string to_jsonl(const DatasetSplit& split) {
    std::string out;
    for (const auto& inst : split.instances) {
        out += to_jsonl(inst);
        out += '\n';
    }
    return out;
}

void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DatasetError("cannot open " + path.string() + " for writing", 0);
    }
    out << to_jsonl(split);
}

std::map<SplitName, DatasetSplit> load_splits(const std::filesystem::path& sidecar,
                                              LoadOptions options) {
    std::ifstream in(sidecar);
    if (!in) {
        throw DatasetError("cannot open " + sidecar.string(), 0);
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DatasetError(sidecar.string() + ": malformed JSON: " + e.what(), 0);
    }
    if (!manifest.is_object()) {
        throw DatasetError(sidecar.string() + ": expected an object of split paths", 0);
    }

    std::map<SplitName, DatasetSplit> splits;
    std::unordered_map<std::string, SplitName> owner;
    for (const auto& [key, value] : manifest.items()) {
        const SplitName name = parse_split_name(key);
        if (!value.is_string()) {
            throw DatasetError(sidecar.string() + ": path for '" + key + "' is not a string", 0);
        }
        std::filesystem::path p = value.get<std::string>();
        if (p.is_relative()) p = sidecar.parent_path() / p;
        DatasetSplit split = load_split(p, name, options);
        for (const auto& inst : split.instances) {
            const auto [it, inserted] = owner.emplace(inst.sentence, name);
            if (!inserted && it->second != name) {
                throw DatasetError("sentence appears in both '" +
                                       std::string(to_string(it->second)) + "' and '" + key +
                                       "' splits",
                                   0);
            }
        }
        splits.emplace(name, std::move(split));
    }
    return splits;
}

std::vector<std::uint64_t> shuffle_epoch(const DatasetSplit& split, std::uint64_t seed,
                                         std::uint64_t epoch) {
    std::vector<std::uint64_t> order(split.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = split.instances[i].id;
    Rng rng(mix_seed(seed, epoch));
    rng.shuffle(std::span<std::uint64_t>(order));
    return order;
}

}  // namespace dsim
