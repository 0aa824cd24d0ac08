#include "dsim/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "dsim/error.hpp"
#include "dsim/losses.hpp"
#include "dsim/parallel.hpp"
#include "dsim/random.hpp"

namespace dsim {

void TrainingConfig::validate() const {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    if (!(margin >= 0.0)) throw std::invalid_argument("margin must be >= 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
    if (batch_size < 2) {
        throw std::invalid_argument("batch_size must be >= 2 (in-batch negatives need two sentences)");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
        throw std::invalid_argument("warmup_fraction must lie in [0, 1]");
    }
}

std::span<const double> TrainingBatch::description(const DescriptionRef& ref) const {
    const auto& item = items.at(ref.item);
    return ref.valid ? item.positives.at(ref.index) : item.negatives.at(ref.index);
}

void assign_in_batch_pools(TrainingBatch& batch, std::size_t cap, std::uint64_t seed) {
    for (std::size_t b = 0; b < batch.items.size(); ++b) {
        std::vector<DescriptionRef> pool;
        for (std::size_t o = 0; o < batch.items.size(); ++o) {
            if (o == b) continue;
            for (std::size_t i = 0; i < batch.items[o].positives.size(); ++i)
                pool.push_back({o, true, i});
            for (std::size_t i = 0; i < batch.items[o].negatives.size(); ++i)
                pool.push_back({o, false, i});
        }
        if (cap > 0 && pool.size() > cap) {
            Rng rng(mix_seed(seed, b));
            rng.shuffle(std::span<DescriptionRef>(pool));
            pool.resize(cap);
            std::sort(pool.begin(), pool.end(), [](const DescriptionRef& x, const DescriptionRef& y) {
                return std::tuple(x.item, !x.valid, x.index) < std::tuple(y.item, !y.valid, y.index);
            });
        }
        batch.items[b].pool = std::move(pool);
    }
}

namespace {

struct Normalized {
    std::vector<double> unit;
    double norm;
};

Normalized normalize(ConstVec v) {
    double sq = 0.0;
    for (const double x : v) sq += x * x;
    const double n = std::sqrt(sq);
    if (n == 0.0) throw DegenerateVector("degenerate vector: cannot normalize zero norm");
    Normalized out{std::vector<double>(v.begin(), v.end()), n};
    for (double& x : out.unit) x /= n;
    return out;
}

// g_raw += (g_unit - u (u . g_unit)) / |v|
void chain_normalize(const Normalized& nv, ConstVec g_unit, MutVec g_raw) {
    double proj = 0.0;
    for (std::size_t i = 0; i < g_unit.size(); ++i) proj += nv.unit[i] * g_unit[i];
    for (std::size_t i = 0; i < g_unit.size(); ++i) {
        g_raw[i] += (g_unit[i] - nv.unit[i] * proj) / nv.norm;
    }
}

double triplet_term(const BatchItem& item, ItemGradient& grad, double margin, double scale,
                    bool normalized) {
    double total = 0.0;
    if (!normalized) {
        for (std::size_t p = 0; p < item.positives.size(); ++p) {
            for (std::size_t n = 0; n < item.negatives.size(); ++n) {
                total += triplet_loss_backward(item.sentence, item.positives[p], item.negatives[n],
                                               margin, scale, grad.sentence, grad.positives[p],
                                               grad.negatives[n]);
            }
        }
        return total;
    }

    const std::size_t d = item.sentence.size();
    const Normalized s = normalize(item.sentence);
    std::vector<Normalized> ps, ns;
    for (const auto& v : item.positives) ps.push_back(normalize(v));
    for (const auto& v : item.negatives) ns.push_back(normalize(v));
    std::vector<double> gs(d, 0.0);
    std::vector<std::vector<double>> gp(ps.size(), std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> gn(ns.size(), std::vector<double>(d, 0.0));
    for (std::size_t p = 0; p < ps.size(); ++p) {
        for (std::size_t n = 0; n < ns.size(); ++n) {
            total += triplet_loss_backward(s.unit, ps[p].unit, ns[n].unit, margin, scale, gs,
                                           gp[p], gn[n]);
        }
    }
    chain_normalize(s, gs, grad.sentence);
    for (std::size_t p = 0; p < ps.size(); ++p) chain_normalize(ps[p], gp[p], grad.positives[p]);
    for (std::size_t n = 0; n < ns.size(); ++n) chain_normalize(ns[n], gn[n], grad.negatives[n]);
    return total;
}

}  // namespace

BatchLoss combined_loss(const TrainingBatch& batch, const TrainingConfig& config) {
    if (!(config.temperature > 0.0)) throw std::invalid_argument("temperature must be > 0");
    if (batch.items.empty()) throw std::invalid_argument("combined_loss: empty batch");
    const std::size_t d = batch.items.front().sentence.size();

    BatchLoss out;
    out.gradients.resize(batch.items.size());
    for (std::size_t b = 0; b < batch.items.size(); ++b) {
        const auto& item = batch.items[b];
        auto check = [d](const std::vector<double>& v) {
            if (v.size() != d) throw DimensionMismatch("combined_loss: vectors differ in dimension");
        };
        check(item.sentence);
        auto& g = out.gradients[b];
        g.sentence.assign(d, 0.0);
        for (const auto& v : item.positives) {
            check(v);
            g.positives.emplace_back(d, 0.0);
        }
        for (const auto& v : item.negatives) {
            check(v);
            g.negatives.emplace_back(d, 0.0);
        }
    }

    const double scale = 1.0 / static_cast<double>(batch.items.size());
    double triplet_sum = 0.0;
    double infonce_sum = 0.0;
    for (std::size_t b = 0; b < batch.items.size(); ++b) {
        const auto& item = batch.items[b];
        auto& g = out.gradients[b];
        triplet_sum += triplet_term(item, g, config.margin, scale, config.normalize_before_triplet);

        if (item.positive_index >= item.positives.size()) {
            throw std::invalid_argument("combined_loss: positive_index out of range");
        }
        std::vector<ConstVec> pool;
        std::vector<MutVec> grad_pool;
        pool.reserve(item.pool.size());
        grad_pool.reserve(item.pool.size());
        for (const auto& ref : item.pool) {
            if (ref.item == b) {
                throw std::invalid_argument("combined_loss: pool holds a description of its own sentence");
            }
            pool.push_back(batch.description(ref));
            auto& owner = out.gradients.at(ref.item);
            grad_pool.push_back(ref.valid ? MutVec(owner.positives.at(ref.index))
                                          : MutVec(owner.negatives.at(ref.index)));
        }
        infonce_sum += info_nce_loss_backward(item.sentence, item.positives[item.positive_index],
                                              pool, config.temperature, scale * config.alpha,
                                              g.sentence, g.positives[item.positive_index],
                                              grad_pool);
    }
    out.triplet = triplet_sum * scale;
    out.infonce = infonce_sum * scale;
    out.combined = (triplet_sum + config.alpha * infonce_sum) * scale;
    return out;
}

TokenizedInstance tokenize_instance(const TrainingInstance& instance,
                                    const Tokenizer& sentence_tokenizer,
                                    const Tokenizer& description_tokenizer) {
    TokenizedInstance t;
    t.id = instance.id;
    t.sentence = sentence_tokenizer.tokenize(instance.sentence);
    for (const auto& d : instance.valid_descriptions)
        t.valid.push_back(description_tokenizer.tokenize(d));
    for (const auto& d : instance.invalid_descriptions)
        t.invalid.push_back(description_tokenizer.tokenize(d));
    return t;
}

std::size_t sample_positive(std::uint64_t seed, std::size_t step, std::uint64_t instance_id,
                            std::size_t valid_count) {
    if (valid_count == 0) throw std::invalid_argument("instance has no valid descriptions");
    Rng rng(mix_seed(mix_seed(seed, step), instance_id));
    return static_cast<std::size_t>(rng.below(valid_count));
}

StepResult batch_step(const EncoderModel& sentence_encoder,
                      const EncoderModel& description_encoder,
                      std::span<const TokenizedInstance* const> batch,
                      const TrainingConfig& config, std::size_t step) {
    if (sentence_encoder.dim() != description_encoder.dim()) {
        throw DimensionMismatch("sentence and description encoders differ in output dimension");
    }
    TrainingBatch tb;
    tb.items.resize(batch.size());
    parallel_chunks(batch.size(), config.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; ++b) {
            const auto& inst = *batch[b];
            auto& item = tb.items[b];
            item.sentence = sentence_encoder.encode_tokens(inst.sentence).vector;
            for (const auto& t : inst.valid)
                item.positives.push_back(description_encoder.encode_tokens(t).vector);
            for (const auto& t : inst.invalid)
                item.negatives.push_back(description_encoder.encode_tokens(t).vector);
            item.positive_index = sample_positive(config.seed, step, inst.id, inst.valid.size());
        }
    });
    assign_in_batch_pools(tb, config.pool_cap, mix_seed(config.seed ^ 0x5EEDull, step));

    const BatchLoss loss = combined_loss(tb, config);

    StepResult out;
    out.combined = loss.combined;
    out.triplet = loss.triplet;
    out.infonce = loss.infonce;
    out.sentence_grad = EncoderGradient(sentence_encoder.hidden(), sentence_encoder.dim());
    out.description_grad = EncoderGradient(description_encoder.hidden(), description_encoder.dim());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& inst = *batch[b];
        const auto& g = loss.gradients[b];
        sentence_encoder.accumulate_backward(inst.sentence, g.sentence, out.sentence_grad);
        for (std::size_t i = 0; i < inst.valid.size(); ++i)
            description_encoder.accumulate_backward(inst.valid[i], g.positives[i],
                                                    out.description_grad);
        for (std::size_t i = 0; i < inst.invalid.size(); ++i)
            description_encoder.accumulate_backward(inst.invalid[i], g.negatives[i],
                                                    out.description_grad);
    }
    return out;
}

EncoderOptimizer::EncoderOptimizer(const EncoderModel& model, AdamConfig config)
    : config_(config),
      m_embedding_(model.embedding().size(), 0.0f),
      v_embedding_(model.embedding().size(), 0.0f),
      m_projection_(model.projection().size(), 0.0f),
      v_projection_(model.projection().size(), 0.0f),
      m_bias_(model.bias().size(), 0.0f),
      v_bias_(model.bias().size(), 0.0f) {}

void EncoderOptimizer::step(EncoderModel& model, const EncoderGradient& grad, double lr) {
    if (model.embedding().size() != m_embedding_.size() ||
        model.projection().size() != m_projection_.size() ||
        model.bias().size() != m_bias_.size() || grad.projection.size() != m_projection_.size() ||
        grad.bias.size() != m_bias_.size()) {
        throw DimensionMismatch("optimizer: parameter shape mismatch");
    }
    ++step_;
    const auto c = AdamStepCoefficients::at(config_, step_, lr);

    auto proj = model.projection();
    for (std::size_t i = 0; i < proj.size(); ++i)
        adam_update(proj[i], m_projection_[i], v_projection_[i], grad.projection[i], c);
    auto bias = model.bias();
    for (std::size_t i = 0; i < bias.size(); ++i)
        adam_update(bias[i], m_bias_[i], v_bias_[i], grad.bias[i], c);

    const std::size_t h = model.hidden();
    const std::size_t rows = model.embedding().size() / h;
    auto emb = model.embedding();
    auto it = grad.embedding_rows.begin();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * h;
        if (it != grad.embedding_rows.end() && it->first == r) {
            const auto& g = it->second;
            for (std::size_t i = 0; i < h; ++i)
                adam_update(emb[base + i], m_embedding_[base + i], v_embedding_[base + i], g[i], c);
            ++it;
        } else {
            for (std::size_t i = 0; i < h; ++i)
                adam_update(emb[base + i], m_embedding_[base + i], v_embedding_[base + i], 0.0, c);
        }
    }
}

std::size_t steps_per_epoch(std::size_t instances, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    const std::size_t full = instances / batch_size;
    const std::size_t rest = instances % batch_size;
    return full + (rest >= 2 ? 1 : 0);
}

double learning_rate_at(const TrainingConfig& config, std::size_t step, std::size_t total_steps) {
    const auto warmup = static_cast<std::size_t>(
        std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
    if (warmup == 0 || step >= warmup) return config.learning_rate;
    return config.learning_rate * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

TrainResult train(const DatasetSplit& dataset, const TrainingConfig& config,
                  const TrainCallbacks& callbacks) {
    config.validate();
    if (dataset.size() < 2) {
        throw std::invalid_argument("train: dataset needs at least two instances");
    }

    TrainResult result{
        EncoderModel(config.encoder, mix_seed(config.seed, 1), config.init_scale),
        EncoderModel(config.encoder, mix_seed(config.seed, 2), config.init_scale),
        {},
        {}};
    auto& sentence = result.sentence_encoder;
    auto& description = result.description_encoder;

    std::vector<TokenizedInstance> tokenized;
    tokenized.reserve(dataset.size());
    std::unordered_map<std::uint64_t, std::size_t> position;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        tokenized.push_back(tokenize_instance(dataset.instances[i], sentence.tokenizer(),
                                              description.tokenizer()));
        position.emplace(dataset.instances[i].id, i);
    }

    const std::size_t per_epoch = steps_per_epoch(dataset.size(), config.batch_size);
    const std::size_t total = per_epoch * config.epochs;
    EncoderOptimizer sentence_opt(sentence, config.adam);
    EncoderOptimizer description_opt(description, config.adam);

    std::size_t step = 0;
    std::vector<const TokenizedInstance*> batch;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = shuffle_epoch(dataset, config.seed, epoch);
        double epoch_sum = 0.0;
        for (std::size_t s = 0; s < per_epoch; ++s, ++step) {
            const std::size_t begin = s * config.batch_size;
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            batch.clear();
            for (std::size_t i = begin; i < end; ++i)
                batch.push_back(&tokenized[position.at(order[i])]);

            StepResult r = batch_step(sentence, description, batch, config, step);
            if (!std::isfinite(r.combined)) {
                throw TrainingDiverged("non-finite loss at step " + std::to_string(step) +
                                           " (epoch " + std::to_string(epoch) + ")",
                                       step);
            }
            const double lr = learning_rate_at(config, step, total);
            sentence_opt.step(sentence, r.sentence_grad, lr);
            description_opt.step(description, r.description_grad, lr);

            LossLogRow row{epoch, step, r.triplet, r.infonce, r.combined};
            result.log.push_back(row);
            epoch_sum += r.combined;
            if (callbacks.on_step) callbacks.on_step(row);
        }
        result.epoch_loss.push_back(per_epoch ? epoch_sum / static_cast<double>(per_epoch) : 0.0);
        if (callbacks.on_epoch) callbacks.on_epoch(epoch, sentence, description);
    }
    return result;
}

std::string loss_log_csv(std::span<const LossLogRow> log) {
    std::string out = "epoch,step,triplet_term,infonce_term,combined\n";
    char buf[160];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g\n", row.epoch, row.step,
                      row.triplet, row.infonce, row.combined);
        out += buf;
    }
    return out;
}

}  // namespace dsim
