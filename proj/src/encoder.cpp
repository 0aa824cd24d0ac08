#include "dsim/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsim/binary_io.hpp"
#include "dsim/random.hpp"

namespace dsim {

namespace {

constexpr io::Magic kCheckpointMagic{'D', 'S', 'E', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

const EncoderConfig& checked(const EncoderConfig& c) {
    if (c.vocab_size < 2 || c.hidden == 0 || c.dim == 0) {
        throw std::invalid_argument("encoder config needs vocab_size >= 2, hidden > 0, dim > 0");
    }
    return c;
}

}  // namespace

EncoderModel::EncoderModel(const EncoderConfig& config)
    : config_(checked(config)),
      tokenizer_(config.vocab_size, config.lowercase),
      embedding_(std::size_t{config.vocab_size} * config.hidden, 0.0f),
      projection_(std::size_t{config.hidden} * config.dim, 0.0f),
      bias_(config.dim, 0.0f) {}

EncoderModel::EncoderModel(const EncoderConfig& config, std::uint64_t seed, double init_scale)
    : EncoderModel(config) {
    Rng rng(seed);
    for (auto* tensor : {&embedding_, &projection_, &bias_}) {
        for (float& p : *tensor) p = static_cast<float>(rng.uniform(-init_scale, init_scale));
    }
}

void EncoderModel::pooled(std::span<const TokenId> tokens, std::span<double> out) const {
    const std::size_t h = config_.hidden;
    std::fill(out.begin(), out.end(), 0.0);
    for (const TokenId t : tokens) {
        const float* row = embedding_.data() + std::size_t{t} * h;
        for (std::size_t i = 0; i < h; ++i) out[i] += row[i];
    }
    const double inv = 1.0 / static_cast<double>(tokens.size());
    for (double& x : out) x *= inv;
}

EncodedText EncoderModel::encode_tokens(std::span<const TokenId> tokens) const {
    if (tokens.empty()) {
        throw std::invalid_argument("encode_tokens: empty token sequence");
    }
    const std::size_t h = config_.hidden;
    const std::size_t d = config_.dim;
    std::vector<double> mean(h);
    pooled(tokens, mean);

    EncodedText out;
    out.token_count = tokens.size();
    out.vector.assign(bias_.begin(), bias_.end());
    for (std::size_t i = 0; i < h; ++i) {
        const double m = mean[i];
        const float* w = projection_.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) out.vector[j] += m * w[j];
    }
    return out;
}

EncodedText EncoderModel::encode(std::string_view text) const {
    const auto tokens = tokenizer_.tokenize(text);
    return encode_tokens(tokens);
}

void EncoderModel::accumulate_backward(std::span<const TokenId> tokens,
                                       std::span<const double> upstream,
                                       EncoderGradient& grad) const {
    const std::size_t h = config_.hidden;
    const std::size_t d = config_.dim;
    if (upstream.size() != d) {
        throw std::invalid_argument("accumulate_backward: upstream gradient has wrong dimension");
    }
    if (tokens.empty()) {
        throw std::invalid_argument("accumulate_backward: empty token sequence");
    }
    if (grad.projection.size() != h * d || grad.bias.size() != d) {
        throw std::invalid_argument("accumulate_backward: gradient buffer shape mismatch");
    }

    std::vector<double> mean(h);
    pooled(tokens, mean);

    // dL/dW[i][j] = mean_i * g_j ; dL/db = g
    for (std::size_t i = 0; i < h; ++i) {
        double* row = grad.projection.data() + i * d;
        const double m = mean[i];
        for (std::size_t j = 0; j < d; ++j) row[j] += m * upstream[j];
    }
    for (std::size_t j = 0; j < d; ++j) grad.bias[j] += upstream[j];

    // dL/dmean = W g, shared by every token occurrence with weight 1/T
    std::vector<double> wg(h, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
        const float* w = projection_.data() + i * d;
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += w[j] * upstream[j];
        wg[i] = acc / static_cast<double>(tokens.size());
    }
    for (const TokenId t : tokens) {
        auto [it, inserted] = grad.embedding_rows.try_emplace(t);
        if (inserted) it->second.assign(h, 0.0);
        for (std::size_t i = 0; i < h; ++i) it->second[i] += wg[i];
    }
}

EncoderGradient EncoderModel::encode_backward(std::string_view text,
                                              std::span<const double> upstream) const {
    EncoderGradient grad(config_.hidden, config_.dim);
    const auto tokens = tokenizer_.tokenize(text);
    accumulate_backward(tokens, upstream, grad);
    return grad;
}

bool EncoderModel::all_finite() const noexcept {
    for (const auto* tensor : {&embedding_, &projection_, &bias_}) {
        for (const float p : *tensor) {
            if (!std::isfinite(p)) return false;
        }
    }
    return true;
}

std::vector<std::uint8_t> EncoderModel::serialize() const {
    io::ByteWriter w;
    w.put_magic(kCheckpointMagic);
    w.put_u32(kCheckpointVersion);
    w.put_u32(config_.vocab_size);
    w.put_u32(config_.hidden);
    w.put_u32(config_.dim);
    w.put_u32(config_.lowercase ? 1u : 0u);
    w.put_f32s(embedding_);
    w.put_f32s(projection_);
    w.put_f32s(bias_);
    return std::move(w).finish();
}

EncoderModel EncoderModel::deserialize(std::vector<std::uint8_t> bytes) {
    io::ByteReader r(std::move(bytes), kCheckpointMagic, kCheckpointVersion, "checkpoint");
    EncoderConfig config;
    config.vocab_size = r.get_u32();
    config.hidden = r.get_u32();
    config.dim = r.get_u32();
    const std::uint32_t flags = r.get_u32();
    if (flags > 1) {
        throw FormatError(FormatError::Kind::Corrupt, "checkpoint: unknown flag bits");
    }
    config.lowercase = flags == 1;
    if (config.vocab_size < 2 || config.hidden == 0 || config.dim == 0) {
        throw FormatError(FormatError::Kind::Corrupt, "checkpoint: invalid hyperparameters");
    }
    const std::uint64_t params =
        std::uint64_t{config.vocab_size} * config.hidden +
        std::uint64_t{config.hidden} * config.dim + config.dim;
    r.need(params * sizeof(float));

    EncoderModel model(config);
    r.get_f32s(model.embedding_);
    r.get_f32s(model.projection_);
    r.get_f32s(model.bias_);
    r.finish();
    return model;
}

void EncoderModel::save(const std::filesystem::path& path) const {
    io::write_file(path, serialize());
}

EncoderModel EncoderModel::load(const std::filesystem::path& path) {
    return deserialize(io::read_file(path));
}

}  // namespace dsim
