#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dsim {

inline constexpr std::size_t kMinValidDescriptions = 5;
inline constexpr std::size_t kMaxValidDescriptions = 8;
inline constexpr std::size_t kInvalidDescriptions = 5;

/// One sentence with its valid (positive) and invalid (misleading) descriptions.
struct TrainingInstance {
    std::uint64_t id = 0;
    std::string sentence;
    std::vector<std::string> valid_descriptions;
    std::vector<std::string> invalid_descriptions;

    friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

enum class SplitName { Train, Dev, Test };

std::string_view to_string(SplitName name);
SplitName parse_split_name(std::string_view name);

struct DatasetSplit {
    SplitName name = SplitName::Train;
    std::vector<TrainingInstance> instances;

    std::size_t size() const noexcept { return instances.size(); }
    bool empty() const noexcept { return instances.empty(); }

    friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct LoadOptions {
    /// Clip descriptions beyond the upper bounds instead of rejecting the record.
    bool lenient = false;
};

/// Throws DatasetError describing the first violated invariant. The id is not checked.
void validate_instance(const TrainingInstance& instance);

/// Parses JSONL records {"sentence", "good", "bad"}; ids are assigned 0..n-1 in file order.
DatasetSplit load_split(const std::filesystem::path& path, SplitName name,
                        LoadOptions options = {});
DatasetSplit parse_split(std::string_view jsonl, SplitName name, LoadOptions options = {});

std::string to_jsonl(const TrainingInstance& instance);
std::string to_jsonl(const DatasetSplit& split);
void save_split(const DatasetSplit& split, const std::filesystem::path& path);

/// Reads a splits.json sidecar ({"train": "train.jsonl", ...}). Relative paths
/// resolve against the sidecar's directory. Checks that no sentence appears in
/// two splits.
std::map<SplitName, DatasetSplit> load_splits(const std::filesystem::path& sidecar,
                                              LoadOptions options = {});

/// Deterministic permutation of the split's ids for one epoch.
std::vector<std::uint64_t> shuffle_epoch(const DatasetSplit& split, std::uint64_t seed,
                                         std::uint64_t epoch);

}  // namespace dsim
