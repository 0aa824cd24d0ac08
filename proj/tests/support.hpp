#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsim/dataset.hpp"
#include "dsim/encoder.hpp"
#include "dsim/training.hpp"
#include "dsim/random.hpp"

namespace dsim::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::vector<double> random_vector(Rng& rng, std::size_t dim, double scale = 1.0);

/// |a - b| relative to the larger magnitude, with magnitudes below `floor`
/// treated as `floor` so that two vanishing gradients compare as equal.
inline double relative_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of loss() with respect to a float parameter. The step
/// actually taken is measured after rounding to float.
template <typename Loss>
double central_difference(float& param, Loss&& loss, double h = 1e-4) {
    const float original = param;
    const float plus = static_cast<float>(original + h);
    const float minus = static_cast<float>(original - h);
    param = plus;
    const double up = loss();
    param = minus;
    const double down = loss();
    param = original;
    return (up - down) / (static_cast<double>(plus) - static_cast<double>(minus));
}

/// A minimal valid record whose strings all start with `tag`.
TrainingInstance simple_instance(const std::string& tag, std::size_t good = 5);

/// Two encoders and a tiny batch for end-to-end gradient checks.
struct MicroProblem {
    EncoderModel sentence;
    EncoderModel description;
    std::vector<TokenizedInstance> instances;
    TrainingConfig config;
    std::size_t step = 0;

    double loss() const;
    StepResult evaluate() const;
};

struct MicroOptions {
    EncoderConfig encoder{97, 16, 8, true};
    std::size_t sentences = 2;
    std::size_t positives = 2;
    std::size_t negatives = 2;
    /// Hyperparameters are drawn at random when false; otherwise m=1, tau=0.1, alpha=0.1.
    bool reference_hyperparameters = true;
    bool normalize_before_triplet = false;
};

MicroProblem make_micro_problem(Rng& rng, const MicroOptions& options = {});

/// Smallest |m + d(s,p) - d(s,n)| over every triplet of the batch, i.e. how far
/// the current parameters sit from a hinge kink.
double hinge_clearance(const MicroProblem& problem);

struct GradientCheck {
    double worst_relative_error = 0.0;
    std::size_t parameters = 0;
};

/// Compares batch_step gradients with central differences on every parameter
/// of both encoders.
GradientCheck check_gradients(MicroProblem& problem, double h = 1e-4);

struct TopicCorpusOptions {
    std::size_t topics = 10;
    std::size_t concepts_per_topic = 60;
    std::size_t concepts_per_sentence = 8;
    std::size_t concepts_per_description = 4;
    /// Abstract words of the sentence's own concepts kept in each invalid
    /// description; the rest come from other topics.
    std::size_t invalid_own_concepts = 0;
    std::size_t train = 500;
    std::size_t test = 100;
    std::size_t distractors = 900;
    std::uint64_t seed = 7;
};

/// Latent-topic data. Every topic owns a pool of concepts; each concept has
/// a surface word used in sentences and a different abstract word used in
/// descriptions. Sentences draw concepts from one topic. Valid descriptions
/// name abstract words of the sentence's own concepts, invalid ones name
/// abstract words from other topics. Apart from one topic word shared by a
/// topic's sentences and descriptions, there is no lexical overlap between a
/// sentence and its descriptions.
struct TopicCorpus {
    DatasetSplit train;
    DatasetSplit test;
    std::vector<std::string> distractors;
};

TopicCorpus make_topic_corpus(const TopicCorpusOptions& options = {});

}  // namespace dsim::testing
