#include "support.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

namespace dsim::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
    static std::uint64_t counter = 0;
    const auto base = fs::temp_directory_path();
    for (;;) {
        path_ = base / ("dsim-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        if (fs::create_directory(path_)) break;
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> random_vector(Rng& rng, std::size_t dim, double scale) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.uniform(-scale, scale);
    return v;
}

TrainingInstance simple_instance(const std::string& tag, std::size_t good) {
    TrainingInstance inst;
    inst.sentence = tag + " sentence";
    for (std::size_t i = 0; i < good; ++i) inst.valid_descriptions.push_back(tag + " good " + std::to_string(i));
    for (std::size_t i = 0; i < 5; ++i) inst.invalid_descriptions.push_back(tag + " bad " + std::to_string(i));
    return inst;
}

double MicroProblem::loss() const { return evaluate().combined; }

StepResult MicroProblem::evaluate() const {
    std::vector<const TokenizedInstance*> batch;
    for (const auto& inst : instances) batch.push_back(&inst);
    return batch_step(sentence, description, batch, config, step);
}

MicroProblem make_micro_problem(Rng& rng, const MicroOptions& o) {
    static const char* const kWords[] = {"alpha", "beta", "gamma", "delta", "echo", "fox", "golf", "hotel",
                                         "india", "juliet", "kilo", "lima", "mike", "nova", "oscar", "papa",
                                         "quartz", "romeo", "sierra", "tango", "umbra", "vivid", "whisky", "xray"};
    auto text = [&] {
        std::string t;
        const std::size_t n = 1 + rng.below(5);
        for (std::size_t i = 0; i < n; ++i) t += std::string(i ? " " : "") + kWords[rng.below(std::size(kWords))];
        return t;
    };
    const double scale = rng.uniform(0.05, 1.5);
    MicroProblem p{EncoderModel(o.encoder, rng.next(), scale), EncoderModel(o.encoder, rng.next(), scale), {}, {}, 0};
    p.config.encoder = o.encoder;
    p.config.seed = rng.next();
    p.config.normalize_before_triplet = o.normalize_before_triplet;
    p.step = rng.below(1000);
    if (!o.reference_hyperparameters) {
        p.config.margin = rng.uniform(0.0, 2.0);
        p.config.temperature = rng.uniform(0.05, 1.0);
        p.config.alpha = rng.uniform(0.0, 1.0);
    }
    for (std::size_t i = 0; i < o.sentences; ++i) {
        TokenizedInstance inst;
        inst.id = i;
        inst.sentence = p.sentence.tokenizer().tokenize(text());
        for (std::size_t k = 0; k < o.positives; ++k) inst.valid.push_back(p.description.tokenizer().tokenize(text()));
        for (std::size_t k = 0; k < o.negatives; ++k) inst.invalid.push_back(p.description.tokenizer().tokenize(text()));
        p.instances.push_back(std::move(inst));
    }
    return p;
}

double hinge_clearance(const MicroProblem& p) {
    auto unit = [&](std::vector<double> v) {
        if (!p.config.normalize_before_triplet) return v;
        double n = 0.0;
        for (const double x : v) n += x * x;
        n = std::sqrt(n);
        for (double& x : v) x /= n;
        return v;
    };
    auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
        double d = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
        return d;
    };
    double clearance = std::numeric_limits<double>::infinity();
    for (const auto& inst : p.instances) {
        const auto s = unit(p.sentence.encode_tokens(inst.sentence).vector);
        for (const auto& pos : inst.valid) {
            const auto vp = unit(p.description.encode_tokens(pos).vector);
            for (const auto& neg : inst.invalid) {
                const auto vn = unit(p.description.encode_tokens(neg).vector);
                clearance = std::min(clearance, std::abs(p.config.margin + dist(s, vp) - dist(s, vn)));
            }
        }
    }
    return clearance;
}

GradientCheck check_gradients(MicroProblem& p, double h) {
    const StepResult analytic = p.evaluate();
    GradientCheck out;
    auto loss = [&] { return p.loss(); };
    auto check_model = [&](EncoderModel& model, const EncoderGradient& grad) {
        for (std::size_t i = 0; i < model.projection().size(); ++i) {
            out.worst_relative_error = std::max(
                out.worst_relative_error, relative_error(grad.projection[i], central_difference(model.projection()[i], loss, h)));
            ++out.parameters;
        }
        for (std::size_t i = 0; i < model.bias().size(); ++i) {
            out.worst_relative_error =
                std::max(out.worst_relative_error, relative_error(grad.bias[i], central_difference(model.bias()[i], loss, h)));
            ++out.parameters;
        }
        const std::size_t hidden = model.hidden();
        const std::size_t rows = model.embedding().size() / hidden;
        for (std::size_t r = 0; r < rows; ++r) {
            const auto it = grad.embedding_rows.find(static_cast<TokenId>(r));
            for (std::size_t i = 0; i < hidden; ++i) {
                const double a = it == grad.embedding_rows.end() ? 0.0 : it->second[i];
                out.worst_relative_error =
                    std::max(out.worst_relative_error, relative_error(a, central_difference(model.embedding()[r * hidden + i], loss, h)));
                ++out.parameters;
            }
        }
    };
    check_model(p.sentence, analytic.sentence_grad);
    check_model(p.description, analytic.description_grad);
    return out;
}

namespace {

const char* const kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
const char* const kVowels[] = {"a", "e", "i", "o", "u"};

class WordMaker {
public:
    explicit WordMaker(Rng& rng) : rng_(rng) {}

    std::string fresh(std::size_t syllables) {
        for (;;) {
            std::string w;
            for (std::size_t i = 0; i < syllables; ++i) {
                w += kOnsets[rng_.below(std::size(kOnsets))];
                w += kVowels[rng_.below(std::size(kVowels))];
            }
            if (used_.insert(w).second) return w;
        }
    }

private:
    Rng& rng_;
    std::set<std::string> used_;
};

std::vector<std::size_t> pick(Rng& rng, std::size_t n, std::size_t count) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
    all.resize(count);
    return all;
}

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

}  // namespace

TopicCorpus make_topic_corpus(const TopicCorpusOptions& o) {
    Rng rng(o.seed);
    WordMaker words(rng);
    struct Topic {
        std::string word;
        std::vector<std::string> surface;
        std::vector<std::string> abstract;
    };
    std::vector<Topic> topics(o.topics);
    for (auto& t : topics) {
        t.word = words.fresh(4);
        for (std::size_t c = 0; c < o.concepts_per_topic; ++c) {
            t.surface.push_back(words.fresh(3));
            t.abstract.push_back(words.fresh(3));
        }
    }

    std::set<std::string> seen;
    auto make_instance = [&](std::size_t topic) {
        const Topic& t = topics[topic];
        for (;;) {
            const auto concepts = pick(rng, o.concepts_per_topic, o.concepts_per_sentence);
            std::string sentence = capitalize(t.surface[concepts[0]]);
            for (std::size_t i = 1; i < concepts.size(); ++i) {
                sentence += (i == concepts.size() / 2 ? " " + t.word + " " : " ") + t.surface[concepts[i]];
            }
            sentence += ".";
            if (!seen.insert(sentence).second) continue;

            TrainingInstance inst;
            inst.sentence = sentence;
            const std::size_t good = 5 + rng.below(4);
            for (std::size_t g = 0; g < good; ++g) {
                const auto sub = pick(rng, concepts.size(), o.concepts_per_description);
                std::string d = t.word;
                for (const auto i : sub) d += " " + t.abstract[concepts[i]];
                inst.valid_descriptions.push_back(d);
            }
            for (std::size_t b = 0; b < 5; ++b) {
                const std::size_t other = (topic + 1 + rng.below(o.topics - 1)) % o.topics;
                const auto own = pick(rng, concepts.size(), o.invalid_own_concepts);
                const auto sub = pick(rng, o.concepts_per_topic, o.concepts_per_description - own.size());
                std::string d = t.word;
                for (const auto i : own) d += " " + t.abstract[concepts[i]];
                for (const auto i : sub) d += " " + topics[other].abstract[i];
                inst.invalid_descriptions.push_back(d);
            }
            return inst;
        }
    };

    TopicCorpus out;
    out.train.name = SplitName::Train;
    out.test.name = SplitName::Test;
    for (std::size_t i = 0; i < o.train; ++i) {
        auto inst = make_instance(i % o.topics);
        inst.id = i;
        out.train.instances.push_back(std::move(inst));
    }
    for (std::size_t i = 0; i < o.test; ++i) {
        auto inst = make_instance(i % o.topics);
        inst.id = i;
        out.test.instances.push_back(std::move(inst));
    }
    for (std::size_t i = 0; i < o.distractors; ++i) {
        out.distractors.push_back(make_instance(i % o.topics).sentence);
    }
    return out;
}

}  // namespace dsim::testing
