#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "dsim/random.hpp"

namespace dsim {
namespace {

TEST(Random, SplitmixReferenceValues) {
    // First outputs of the reference splitmix64 generator seeded with 0.
    std::uint64_t state = 0;
    auto next = [&] {
        const auto out = splitmix64(state);
        state += 0x9E3779B97F4A7C15ull;
        return out;
    };
    EXPECT_EQ(next(), 0xE220A8397B1DCDAFull);
    EXPECT_EQ(next(), 0x6E789E6AA1B965F4ull);
    EXPECT_EQ(next(), 0x06C45D188009454Full);
}

TEST(Random, MixSeedSeparatesStreams) {
    EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
    EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
    EXPECT_EQ(mix_seed(5, 9), mix_seed(5, 9));
}

TEST(Random, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Random, UniformAndBelowRanges) {
    Rng rng(1);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        const double x = rng.uniform(-2.0, 3.0);
        ASSERT_GE(x, -2.0);
        ASSERT_LT(x, 3.0);
        ++counts[rng.below(7)];
    }
    for (const int c : counts) EXPECT_NEAR(c, 1000, 150);
}

TEST(Random, NormalMoments) {
    Rng rng(3);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.05);
    EXPECT_NEAR(sq / n, 1.0, 0.05);
}

TEST(Random, ShuffleIsPermutation) {
    Rng rng(9);
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    rng.shuffle(std::span<int>(w));
    EXPECT_NE(v, w);
    std::sort(w.begin(), w.end());
    EXPECT_EQ(v, w);
}

}  // namespace
}  // namespace dsim
