#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "dsim/dataset.hpp"
#include "dsim/error.hpp"
#include "support.hpp"

namespace dsim {
namespace {

using testing::simple_instance;
using testing::TempDir;
using testing::write_text;

const std::string kMinimal =
    R"({"sentence":"S","good":["a","b","c","d","e"],"bad":["f","g","h","i","j"]})";

std::string error_of(const std::string& jsonl, LoadOptions options = {}) {
    try {
        parse_split(jsonl, SplitName::Train, options);
    } catch (const DatasetError& e) {
        return e.what();
    }
    return "";
}

TEST(Dataset, MinimalRecord) {
    const auto split = parse_split(kMinimal, SplitName::Train);
    ASSERT_EQ(split.size(), 1u);
    EXPECT_EQ(split.instances[0].sentence, "S");
    EXPECT_EQ(split.instances[0].valid_descriptions.size(), 5u);
    EXPECT_EQ(split.instances[0].invalid_descriptions.size(), 5u);
    EXPECT_EQ(split.instances[0].id, 0u);
}

TEST(Dataset, FourGoodIsCardinalityViolation) {
    const std::string line = R"({"sentence":"S","good":["a","b","c","d"],"bad":["f","g","h","i","j"]})";
    EXPECT_NE(error_of(line).find("cardinality violation"), std::string::npos);
}

TEST(Dataset, CardinalityBounds) {
    auto rec = [](std::size_t good, std::size_t bad) {
        TrainingInstance inst = simple_instance("x", good);
        inst.invalid_descriptions.resize(bad, "extra bad");
        return to_jsonl(inst);
    };
    EXPECT_NO_THROW(parse_split(rec(8, 5), SplitName::Train));
    EXPECT_NE(error_of(rec(9, 5)).find("cardinality violation"), std::string::npos);
    EXPECT_NE(error_of(rec(5, 4)).find("cardinality violation"), std::string::npos);
    EXPECT_NE(error_of(rec(5, 6)).find("cardinality violation"), std::string::npos);
    const auto clipped = parse_split(rec(9, 6), SplitName::Train, LoadOptions{true});
    EXPECT_EQ(clipped.instances[0].valid_descriptions.size(), 8u);
    EXPECT_EQ(clipped.instances[0].invalid_descriptions.size(), 5u);
    EXPECT_NE(error_of(rec(4, 5), LoadOptions{true}).find("cardinality violation"), std::string::npos);
}

TEST(Dataset, CardinalityErrorReportsCounts) {
    const auto msg = error_of(kMinimal + "\n" + to_jsonl(simple_instance("y", 4)));
    EXPECT_NE(msg.find("instance 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4 valid"), std::string::npos) << msg;
}

TEST(Dataset, ThreeLinesGetDenseIds) {
    TempDir dir;
    DatasetSplit split;
    for (const char* tag : {"one", "two", "three"}) split.instances.push_back(simple_instance(tag));
    write_text(dir / "d.jsonl", to_jsonl(split));
    const auto loaded = load_split(dir / "d.jsonl", SplitName::Dev);
    ASSERT_EQ(loaded.size(), 3u);
    EXPECT_EQ(loaded.name, SplitName::Dev);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(loaded.instances[i].id, i);
    EXPECT_EQ(loaded.instances[1].sentence, "two sentence");
}

TEST(Dataset, MalformedJsonReportsLine) {
    try {
        parse_split(kMinimal + "\n\n{not json", SplitName::Train);
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(Dataset, StructuralErrors) {
    EXPECT_NE(error_of(R"({"sentence":"S","good":"a","bad":[]})").find("malformed"), std::string::npos);
    EXPECT_NE(error_of(R"({"good":[],"bad":[]})").find("malformed"), std::string::npos);
    EXPECT_NE(error_of(R"({"sentence":"S","good":["a","b","c","d",5],"bad":["f","g","h","i","j"]})")
                  .find("non-string"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"sentence":"S","good":["a","b","c","d",""],"bad":["f","g","h","i","j"]})")
                  .find("empty description"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"sentence":"S","good":["a","b","c","d","S"],"bad":["f","g","h","i","j"]})")
                  .find("identical"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"sentence":"","good":["a","b","c","d","e"],"bad":["f","g","h","i","j"]})")
                  .find("empty sentence"),
              std::string::npos);
}

TEST(Dataset, EmptyFile) {
    TempDir dir;
    write_text(dir / "empty.jsonl", "");
    EXPECT_THROW(load_split(dir / "empty.jsonl", SplitName::Train), DatasetError);
    EXPECT_NE(error_of("\n  \n").find("empty file"), std::string::npos);
    EXPECT_THROW(load_split(dir / "missing.jsonl", SplitName::Train), DatasetError);
}

TEST(Dataset, ToleratesCrlfAndBlankLines) {
    const auto split = parse_split(kMinimal + "\r\n\r\n" + kMinimal + "\r\n", SplitName::Train);
    EXPECT_EQ(split.size(), 2u);
}

TEST(Dataset, JsonlRoundTripIsFieldForField) {
    DatasetSplit split;
    split.name = SplitName::Test;
    auto a = simple_instance("caf\xc3\xa9 \"quoted\"\\", 8);
    auto b = simple_instance("\xe4\xb8\xad\xe6\x96\x87\ttab", 6);
    b.id = 1;
    split.instances = {a, b};
    EXPECT_EQ(to_jsonl(split.instances[0]).substr(0, 12), R"({"sentence":)");
    TempDir dir;
    save_split(split, dir / "rt.jsonl");
    EXPECT_EQ(load_split(dir / "rt.jsonl", SplitName::Test), split);
    EXPECT_EQ(to_jsonl(parse_split(to_jsonl(split), SplitName::Test)), to_jsonl(split));
}

TEST(Dataset, SplitNames) {
    EXPECT_EQ(parse_split_name("train"), SplitName::Train);
    EXPECT_EQ(parse_split_name("dev"), SplitName::Dev);
    EXPECT_EQ(parse_split_name("test"), SplitName::Test);
    EXPECT_EQ(to_string(SplitName::Dev), "dev");
    EXPECT_THROW(parse_split_name("validation"), DatasetError);
}

TEST(Dataset, SidecarLoadsSplits) {
    TempDir dir;
    DatasetSplit train, test;
    train.instances = {simple_instance("a"), simple_instance("b")};
    test.instances = {simple_instance("c")};
    write_text(dir / "train.jsonl", to_jsonl(train));
    write_text(dir / "test.jsonl", to_jsonl(test));
    write_text(dir / "splits.json", R"({"train":"train.jsonl","test":"test.jsonl"})");
    const auto splits = load_splits(dir / "splits.json");
    ASSERT_EQ(splits.size(), 2u);
    EXPECT_EQ(splits.at(SplitName::Train).size(), 2u);
    EXPECT_EQ(splits.at(SplitName::Test).instances[0].sentence, "c sentence");
}

TEST(Dataset, SidecarRejectsSharedSentences) {
    TempDir dir;
    DatasetSplit train, dev;
    train.instances = {simple_instance("a"), simple_instance("b")};
    dev.instances = {simple_instance("b")};
    write_text(dir / "train.jsonl", to_jsonl(train));
    write_text(dir / "dev.jsonl", to_jsonl(dev));
    write_text(dir / "splits.json", R"({"train":"train.jsonl","dev":"dev.jsonl"})");
    EXPECT_THROW(load_splits(dir / "splits.json"), DatasetError);
}

DatasetSplit numbered(std::size_t n) {
    DatasetSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        auto inst = simple_instance("s" + std::to_string(i));
        inst.id = i;
        split.instances.push_back(inst);
    }
    return split;
}

TEST(Dataset, ShuffleSingleton) {
    const auto split = numbered(1);
    for (std::uint64_t seed : {0ull, 5ull, 99ull}) {
        EXPECT_EQ(shuffle_epoch(split, seed, seed * 3), std::vector<std::uint64_t>{0});
    }
}

TEST(Dataset, ShuffleDeterministicAndEpochDependent) {
    const auto split = numbered(1000);
    const auto a = shuffle_epoch(split, 1, 0);
    EXPECT_EQ(a, shuffle_epoch(split, 1, 0));
    const auto b = shuffle_epoch(split, 1, 1);
    EXPECT_NE(a, b);
    EXPECT_NE(a, shuffle_epoch(split, 2, 0));
}

TEST(Dataset, ShuffleIsPermutationOfIds) {
    for (std::size_t n : {2u, 3u, 17u, 256u}) {
        const auto split = numbered(n);
        for (std::uint64_t epoch = 0; epoch < 5; ++epoch) {
            auto order = shuffle_epoch(split, 11, epoch);
            std::sort(order.begin(), order.end());
            std::vector<std::uint64_t> ids(n);
            for (std::size_t i = 0; i < n; ++i) ids[i] = i;
            EXPECT_EQ(order, ids);
        }
    }
}

}  // namespace
}  // namespace dsim
