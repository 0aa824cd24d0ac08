#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "dsim/tokenizer.hpp"

namespace dsim {

struct EncoderConfig {
    std::uint32_t vocab_size = 65536;
    std::uint32_t hidden = 128;
    std::uint32_t dim = 256;
    bool lowercase = true;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncodedText {
    std::vector<double> vector;
    std::size_t token_count = 0;
};

/// Parameter gradients of one encoder. Embedding gradients are row-sparse:
/// only rows touched by the encoded texts are present.
struct EncoderGradient {
    std::vector<double> projection;                       // hidden x dim, row-major
    std::vector<double> bias;                             // dim
    std::map<TokenId, std::vector<double>> embedding_rows;  // token -> hidden

    EncoderGradient() = default;
    EncoderGradient(std::uint32_t hidden, std::uint32_t dim)
        : projection(std::size_t{hidden} * dim, 0.0), bias(dim, 0.0) {}
};

/// Mean-pooling text encoder: v = W^T mean_t(E[token_t]) + b.
///
/// E is vocab_size x hidden, W is hidden x dim. Parameters are stored as
/// 32-bit floats and all arithmetic runs in double. The sentence and the
/// description encoders are two independent instances of this class.
class EncoderModel {
public:
    /// All parameters zero.
    explicit EncoderModel(const EncoderConfig& config);

    /// Parameters uniform in [-init_scale, init_scale] from a seeded generator.
    EncoderModel(const EncoderConfig& config, std::uint64_t seed, double init_scale = 0.05);

    const EncoderConfig& config() const noexcept { return config_; }
    const Tokenizer& tokenizer() const noexcept { return tokenizer_; }
    std::uint32_t dim() const noexcept { return config_.dim; }
    std::uint32_t hidden() const noexcept { return config_.hidden; }

    std::span<float> embedding() noexcept { return embedding_; }
    std::span<const float> embedding() const noexcept { return embedding_; }
    std::span<float> projection() noexcept { return projection_; }
    std::span<const float> projection() const noexcept { return projection_; }
    std::span<float> bias() noexcept { return bias_; }
    std::span<const float> bias() const noexcept { return bias_; }

    EncodedText encode(std::string_view text) const;
    EncodedText encode_tokens(std::span<const TokenId> tokens) const;

    /// Gradients of <upstream, encode(text)> with respect to every parameter.
    EncoderGradient encode_backward(std::string_view text,
                                    std::span<const double> upstream) const;

    /// Adds the gradient of <upstream, encode_tokens(tokens)> into grad.
    void accumulate_backward(std::span<const TokenId> tokens, std::span<const double> upstream,
                             EncoderGradient& grad) const;

    bool all_finite() const noexcept;

    std::vector<std::uint8_t> serialize() const;
    static EncoderModel deserialize(std::vector<std::uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static EncoderModel load(const std::filesystem::path& path);

    friend bool operator==(const EncoderModel&, const EncoderModel&) = default;

private:
    void pooled(std::span<const TokenId> tokens, std::span<double> out) const;

    EncoderConfig config_;
    Tokenizer tokenizer_;
    std::vector<float> embedding_;
    std::vector<float> projection_;
    std::vector<float> bias_;
};

}  // namespace dsim
