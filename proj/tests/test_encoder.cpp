#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "dsim/encoder.hpp"
#include "dsim/error.hpp"
#include "support.hpp"

namespace dsim {
namespace {

using testing::central_difference;
using testing::relative_error;

EncoderConfig micro_config() { return EncoderConfig{97, 16, 8, true}; }

void set_row(EncoderModel& model, TokenId token, std::initializer_list<float> values) {
    std::size_t i = 0;
    for (const float v : values) model.embedding()[token * model.hidden() + i++] = v;
}

EncoderModel identity_model() {
    EncoderModel model(EncoderConfig{97, 2, 2, true});
    model.projection()[0] = 1.0f;
    model.projection()[3] = 1.0f;
    return model;
}

TEST(Encoder, MeanOfTwoTokenVectors) {
    auto model = identity_model();
    const auto& tok = model.tokenizer();
    ASSERT_NE(tok.token_id("p"), tok.token_id("q"));
    set_row(model, tok.token_id("p"), {1.0f, 3.0f});
    set_row(model, tok.token_id("q"), {3.0f, 1.0f});
    const auto out = model.encode("p q");
    EXPECT_EQ(out.vector, (std::vector<double>{2.0, 2.0}));
    EXPECT_EQ(out.token_count, 2u);
}

TEST(Encoder, SingleTokenIsProjectedEmbedding) {
    EncoderModel model(micro_config(), 3);
    const auto token = model.tokenizer().token_id("solo");
    const auto out = model.encode("solo");
    for (std::size_t j = 0; j < model.dim(); ++j) {
        double expected = model.bias()[j];
        for (std::size_t i = 0; i < model.hidden(); ++i) {
            expected += static_cast<double>(model.embedding()[token * model.hidden() + i]) *
                        model.projection()[i * model.dim() + j];
        }
        EXPECT_NEAR(out.vector[j], expected, 1e-12);
    }
}

TEST(Encoder, OrderInvariant) {
    EncoderModel model(micro_config(), 5);
    const auto a = model.encode("one two three four").vector;
    const auto b = model.encode("four three one two").vector;
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
}

TEST(Encoder, EmptyTextUsesUnkAndIsPure) {
    EncoderModel model(micro_config(), 5);
    const auto e = model.encode("");
    EXPECT_EQ(e.token_count, 1u);
    EXPECT_EQ(e.vector.size(), 8u);
    EXPECT_EQ(model.encode("same text").vector, model.encode("same text").vector);
}

TEST(Encoder, SeededInitInRange) {
    const EncoderModel a(micro_config(), 11), b(micro_config(), 11), c(micro_config(), 12);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    for (const float x : a.embedding()) {
        EXPECT_GE(x, -0.05f);
        EXPECT_LE(x, 0.05f);
    }
    EXPECT_TRUE(a.all_finite());
    EXPECT_THROW(EncoderModel(EncoderConfig{97, 0, 8, true}), std::invalid_argument);
}

TEST(Encoder, IndependentInstances) {
    EncoderModel a(micro_config(), 1);
    const EncoderModel b = a;
    a.projection()[0] += 1.0f;
    EXPECT_NE(a.projection()[0], b.projection()[0]);
    EXPECT_NE(a.embedding().data(), b.embedding().data());
}

TEST(Encoder, ZeroUpstreamGivesZeroGradients) {
    EncoderModel model(micro_config(), 2);
    const auto g = model.encode_backward("a b c", std::vector<double>(8, 0.0));
    for (const double x : g.projection) EXPECT_EQ(x, 0.0);
    for (const double x : g.bias) EXPECT_EQ(x, 0.0);
    for (const auto& [row, values] : g.embedding_rows)
        for (const double x : values) EXPECT_EQ(x, 0.0);
}

TEST(Encoder, GradientIsLinearInUpstream) {
    EncoderModel model(micro_config(), 2);
    Rng rng(8);
    const auto up = testing::random_vector(rng, 8);
    std::vector<double> twice(up);
    for (auto& x : twice) x *= 2.0;
    const auto g1 = model.encode_backward("the cat sat on the mat", up);
    const auto g2 = model.encode_backward("the cat sat on the mat", twice);
    for (std::size_t i = 0; i < g1.projection.size(); ++i) EXPECT_DOUBLE_EQ(g2.projection[i], 2 * g1.projection[i]);
    for (std::size_t i = 0; i < g1.bias.size(); ++i) EXPECT_DOUBLE_EQ(g2.bias[i], 2 * g1.bias[i]);
    ASSERT_EQ(g1.embedding_rows.size(), g2.embedding_rows.size());
    for (const auto& [row, values] : g1.embedding_rows)
        for (std::size_t i = 0; i < values.size(); ++i)
            EXPECT_DOUBLE_EQ(g2.embedding_rows.at(row)[i], 2 * values[i]);
}

TEST(Encoder, GradientTouchesExactlyTheTextsRows) {
    EncoderModel model(micro_config(), 2);
    const auto tokens = model.tokenizer().tokenize("alpha beta alpha");
    const auto g = model.encode_backward("alpha beta alpha", std::vector<double>(8, 1.0));
    std::set<TokenId> expected(tokens.begin(), tokens.end());
    std::set<TokenId> got;
    for (const auto& [row, values] : g.embedding_rows) got.insert(row);
    EXPECT_EQ(got, expected);
}

// Scalar test loss: <c, v> + 0.5 |v|^2, so upstream = c + v.
double probe_loss(const EncoderModel& model, const std::string& text, const std::vector<double>& c) {
    const auto v = model.encode(text).vector;
    double loss = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) loss += c[j] * v[j] + 0.5 * v[j] * v[j];
    return loss;
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
    Rng rng(21);
    const std::vector<std::string> texts{"a b c", "repeated repeated word", "x", "", "The quick brown fox jumps"};
    for (std::size_t trial = 0; trial < 10; ++trial) {
        EncoderModel model(micro_config(), 100 + trial, 0.5);
        const std::string& text = texts[trial % texts.size()];
        const auto c = testing::random_vector(rng, 8);
        auto upstream = model.encode(text).vector;
        for (std::size_t j = 0; j < upstream.size(); ++j) upstream[j] += c[j];
        const auto grad = model.encode_backward(text, upstream);
        auto loss = [&] { return probe_loss(model, text, c); };

        double worst = 0.0;
        for (std::size_t i = 0; i < model.projection().size(); ++i)
            worst = std::max(worst, relative_error(grad.projection[i], central_difference(model.projection()[i], loss)));
        for (std::size_t i = 0; i < model.bias().size(); ++i)
            worst = std::max(worst, relative_error(grad.bias[i], central_difference(model.bias()[i], loss)));
        const std::size_t h = model.hidden();
        for (std::size_t row = 0; row < 97; ++row) {
            const auto it = grad.embedding_rows.find(static_cast<TokenId>(row));
            for (std::size_t i = 0; i < h; ++i) {
                const double numeric = central_difference(model.embedding()[row * h + i], loss);
                const double analytic = it == grad.embedding_rows.end() ? 0.0 : it->second[i];
                worst = std::max(worst, relative_error(analytic, numeric));
            }
        }
        EXPECT_LE(worst, 1e-4) << "trial " << trial << " text '" << text << "'";
    }
}

TEST(Encoder, CheckpointRoundTripIsByteExact) {
    const EncoderModel model(EncoderConfig{211, 6, 5, false}, 17);
    const auto bytes = model.serialize();
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DSEC");
    const auto back = EncoderModel::deserialize(bytes);
    EXPECT_EQ(back, model);
    EXPECT_EQ(back.serialize(), bytes);
    EXPECT_FALSE(back.config().lowercase);

    testing::TempDir dir;
    model.save(dir / "m.ckpt");
    EXPECT_EQ(EncoderModel::load(dir / "m.ckpt"), model);
}

FormatError::Kind load_kind(std::vector<std::uint8_t> bytes) {
    try {
        EncoderModel::deserialize(std::move(bytes));
    } catch (const FormatError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error";
    return FormatError::Kind::Io;
}

TEST(Encoder, CheckpointCorruptionKinds) {
    const auto bytes = EncoderModel(EncoderConfig{50, 4, 3, true}, 1).serialize();
    auto magic = bytes;
    magic[1] = 'X';
    EXPECT_EQ(load_kind(magic), FormatError::Kind::BadMagic);
    auto version = bytes;
    version[4] = 9;
    EXPECT_EQ(load_kind(version), FormatError::Kind::VersionMismatch);
    EXPECT_EQ(load_kind({bytes.begin(), bytes.end() - 30}), FormatError::Kind::Truncated);
    EXPECT_EQ(load_kind({bytes.begin(), bytes.begin() + 10}), FormatError::Kind::Truncated);
    auto flipped = bytes;
    flipped[40] ^= 1;
    EXPECT_EQ(load_kind(flipped), FormatError::Kind::ChecksumMismatch);
}

}  // namespace
}  // namespace dsim
