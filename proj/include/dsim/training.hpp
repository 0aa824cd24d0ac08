#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsim/adam.hpp"
#include "dsim/dataset.hpp"
#include "dsim/encoder.hpp"

namespace dsim {

struct TrainingConfig {
    double margin = 1.0;
    double temperature = 0.1;
    double alpha = 0.1;
    std::size_t batch_size = 128;
    std::size_t epochs = 30;
    double learning_rate = 2e-4;
    /// Linear warmup over this fraction of all steps.
    double warmup_fraction = 0.05;
    std::uint64_t seed = 0;
    /// L2-normalize vectors before the triplet term (off: squared distances on raw vectors).
    bool normalize_before_triplet = false;
    /// Per-sentence cap on the in-batch negative pool; 0 keeps every description.
    std::size_t pool_cap = 0;
    /// Threads used to encode a batch. Results do not depend on this.
    std::size_t threads = 1;
    EncoderConfig encoder;
    double init_scale = 0.05;
    AdamConfig adam;

    /// Throws std::invalid_argument on tau <= 0, m < 0, alpha < 0 or batch_size < 2.
    void validate() const;
};

/// Reference to one description vector of a batch item.
struct DescriptionRef {
    std::size_t item = 0;
    bool valid = true;
    std::size_t index = 0;

    friend bool operator==(const DescriptionRef&, const DescriptionRef&) = default;
};

struct BatchItem {
    std::vector<double> sentence;
    std::vector<std::vector<double>> positives;
    std::vector<std::vector<double>> negatives;
    /// Positive used by the InfoNCE term.
    std::size_t positive_index = 0;
    /// In-batch negatives: descriptions of the other items only.
    std::vector<DescriptionRef> pool;
};

struct TrainingBatch {
    std::vector<BatchItem> items;

    std::span<const double> description(const DescriptionRef& ref) const;
};

/// Sets every item's pool to all valid and invalid descriptions of the other
/// items, in item order. With cap > 0, a seeded sample of at most cap of them.
void assign_in_batch_pools(TrainingBatch& batch, std::size_t cap = 0, std::uint64_t seed = 0);

struct ItemGradient {
    std::vector<double> sentence;
    std::vector<std::vector<double>> positives;
    std::vector<std::vector<double>> negatives;
};

struct BatchLoss {
    double combined = 0.0;  // mean over items of triplet + alpha * infonce
    double triplet = 0.0;   // mean triplet term
    double infonce = 0.0;   // mean InfoNCE term (unweighted)
    std::vector<ItemGradient> gradients;
};

/// Loss(s) = sum_{P_s x N_s} triplet + alpha * InfoNCE(s, p, N'_s), averaged
/// over the batch, with gradients for every vector in the batch.
BatchLoss combined_loss(const TrainingBatch& batch, const TrainingConfig& config);

struct TokenizedInstance {
    std::uint64_t id = 0;
    std::vector<TokenId> sentence;
    std::vector<std::vector<TokenId>> valid;
    std::vector<std::vector<TokenId>> invalid;
};

TokenizedInstance tokenize_instance(const TrainingInstance& instance,
                                    const Tokenizer& sentence_tokenizer,
                                    const Tokenizer& description_tokenizer);

/// Index into P_s of the InfoNCE positive for one instance at one step.
std::size_t sample_positive(std::uint64_t seed, std::size_t step, std::uint64_t instance_id,
                            std::size_t valid_count);

struct StepResult {
    double combined = 0.0;
    double triplet = 0.0;
    double infonce = 0.0;
    EncoderGradient sentence_grad;
    EncoderGradient description_grad;
};

/// Encodes a batch with both encoders, evaluates combined_loss and
/// backpropagates into each encoder's parameters.
StepResult batch_step(const EncoderModel& sentence_encoder,
                      const EncoderModel& description_encoder,
                      std::span<const TokenizedInstance* const> batch,
                      const TrainingConfig& config, std::size_t step);

/// Adam over one encoder's tensors. Embedding rows absent from a sparse
/// gradient are updated with a zero gradient, so this is exactly dense Adam.
class EncoderOptimizer {
public:
    EncoderOptimizer(const EncoderModel& model, AdamConfig config);

    void step(EncoderModel& model, const EncoderGradient& grad, double lr);
    std::int64_t steps() const noexcept { return step_; }

private:
    AdamConfig config_;
    std::int64_t step_ = 0;
    std::vector<float> m_embedding_, v_embedding_;
    std::vector<float> m_projection_, v_projection_;
    std::vector<float> m_bias_, v_bias_;
};

struct LossLogRow {
    std::size_t epoch = 0;
    std::size_t step = 0;  // global step, 0-based
    double triplet = 0.0;
    double infonce = 0.0;
    double combined = 0.0;

    friend bool operator==(const LossLogRow&, const LossLogRow&) = default;
};

struct TrainResult {
    EncoderModel sentence_encoder;
    EncoderModel description_encoder;
    std::vector<LossLogRow> log;
    std::vector<double> epoch_loss;  // mean combined loss per epoch
};

struct TrainCallbacks {
    std::function<void(const LossLogRow&)> on_step;
    std::function<void(std::size_t epoch, const EncoderModel& sentence,
                       const EncoderModel& description)>
        on_epoch;
};

/// Number of optimizer steps in one epoch: full batches plus a trailing
/// partial batch when it holds at least two sentences.
std::size_t steps_per_epoch(std::size_t instances, std::size_t batch_size);

double learning_rate_at(const TrainingConfig& config, std::size_t step, std::size_t total_steps);

TrainResult train(const DatasetSplit& dataset, const TrainingConfig& config,
                  const TrainCallbacks& callbacks = {});

/// CSV with header epoch,step,triplet_term,infonce_term,combined.
std::string loss_log_csv(std::span<const LossLogRow> log);

}  // namespace dsim
