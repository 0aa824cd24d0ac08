#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "CLI11.hpp"
#include "dsim/bm25.hpp"
#include "dsim/corpus.hpp"
#include "dsim/datagen.hpp"
#include "dsim/dataset.hpp"
#include "dsim/eval.hpp"
#include "dsim/service.hpp"
#include "dsim/training.hpp"
#include "dsim/vector_index.hpp"
#include "json.hpp"

namespace dsim {

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error("write failed: " + path.string());
}

std::string env_name(const std::string& long_name) {
    std::string out = "DSIM_";
    for (const char c : long_name) {
        out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return out;
}

// Environment variables DSIM_<FLAG> override flags, which override the
// config file: append them after the subcommand's own arguments and let the
// last occurrence win.
std::vector<std::string> with_env_overrides(const CLI::App& app, std::vector<std::string> args) {
    const CLI::App* sub = nullptr;
    for (const auto& a : args) {
        for (const auto* candidate : app.get_subcommands([](const CLI::App*) { return true; })) {
            if (candidate->get_name() == a) {
                sub = candidate;
                break;
            }
        }
        if (sub) break;
    }
    if (!sub) return args;
    for (const auto* opt : sub->get_options()) {
        const auto& names = opt->get_lnames();
        if (names.empty() || names.front() == "help") continue;
        const char* value = std::getenv(env_name(names.front()).c_str());
        if (!value) continue;
        if (opt->get_expected_min() == 0) {
            const std::string v = value;
            if (v == "1" || v == "true" || v == "yes" || v == "on") args.push_back("--" + names.front());
        } else {
            args.push_back("--" + names.front() + "=" + value);
        }
    }
    return args;
}

struct GenerateArgs {
    fs::path input, output, failures, fixture, llm_config;
    std::string client = "http";
    std::size_t retries = 3;
    std::size_t backoff_ms = 500;
    std::size_t concurrency = 4;
    double abstract_fraction = 0.143;
    std::uint64_t seed = 0;
};

int cmd_generate(const GenerateArgs& a) {
    std::unique_ptr<LlmClient> client;
    if (a.client == "stub") {
        client = std::make_unique<SyntheticLlmClient>(a.seed);
    } else if (a.client == "fixture") {
        if (a.fixture.empty()) throw Error("--fixture is required with --client fixture");
        client = std::make_unique<FixtureLlmClient>(FixtureLlmClient::load(a.fixture));
    } else {
        auto config = HttpClientConfig::from_file_and_env(
            a.llm_config.empty() ? std::nullopt : std::optional<fs::path>(a.llm_config));
        if (config.url.empty()) throw Error("no LLM endpoint: set url in --llm-config or DSIM_LLM_URL");
        client = std::make_unique<HttpLlmClient>(std::move(config));
    }
    const auto sentences = read_corpus(a.input);
    GenerationOptions options;
    options.retries = a.retries;
    options.base_backoff = std::chrono::milliseconds(a.backoff_ms);
    options.concurrency = a.concurrency;
    options.abstract_fraction = a.abstract_fraction;
    options.seed = a.seed;
    const auto records = generate_batch(sentences, *client, options);
    const fs::path failures = a.failures.empty() ? a.output.parent_path() / "failures.jsonl" : a.failures;
    const std::size_t written = write_generation_outputs(records, a.output, failures);
    std::cout << "generated " << written << " instances from " << records.size() << " sentences ("
              << records.size() - written << " failed)\n";
    return 0;
}

struct TrainArgs {
    fs::path data, out_dir;
    TrainingConfig config;
    std::size_t checkpoint_every = 0;
    bool lenient = false;
    bool no_lowercase = false;
};

int cmd_train(TrainArgs a) {
    a.config.encoder.lowercase = !a.no_lowercase;
    const auto split = load_split(a.data, SplitName::Train, LoadOptions{a.lenient});
    fs::create_directories(a.out_dir);
    TrainCallbacks callbacks;
    callbacks.on_epoch = [&](std::size_t epoch, const EncoderModel& s, const EncoderModel& d) {
        if (a.checkpoint_every && (epoch + 1) % a.checkpoint_every == 0 && epoch + 1 < a.config.epochs) {
            const std::string tag = "epoch-" + std::to_string(epoch + 1) + "-";
            s.save(a.out_dir / (tag + "sentence.ckpt"));
            d.save(a.out_dir / (tag + "description.ckpt"));
        }
    };
    const auto result = train(split, a.config, callbacks);
    result.sentence_encoder.save(a.out_dir / "sentence.ckpt");
    result.description_encoder.save(a.out_dir / "description.ckpt");
    write_text(a.out_dir / "loss.csv", loss_log_csv(result.log));
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        std::cout << "epoch " << e + 1 << " mean loss " << result.epoch_loss[e] << '\n';
    }
    return 0;
}

struct EncodeArgs {
    fs::path model, input, output;
    std::size_t block_size = 1024;
    std::size_t threads = 1;
};

int cmd_encode(const EncodeArgs& a) {
    const auto model = EncoderModel::load(a.model);
    std::ifstream in(a.input);
    if (!in) throw Error("cannot open corpus " + a.input.string());
    CorpusVectorWriter writer(a.output, model.dim());
    const std::size_t n = encode_corpus(
        model, in, [&](std::span<const IndexItem> block) { writer.write(block); }, a.block_size,
        a.threads);
    writer.close();
    std::cout << "encoded " << n << " texts\n";
    return 0;
}

int cmd_build_index(const fs::path& vectors, const fs::path& output) {
    const auto index = build_index_from_vectors(vectors);
    index.save(output);
    std::cout << "indexed " << index.size() << " vectors (dim " << index.dim() << ")\n";
    return 0;
}

int cmd_build_bm25(const fs::path& input, const fs::path& output, Bm25Params params, bool no_lowercase) {
    const auto texts = read_corpus(input);
    const auto index = Bm25Index::build(texts, params, !no_lowercase);
    index.save(output);
    std::cout << "indexed " << index.doc_count() << " documents, " << index.postings().size()
              << " terms\n";
    return 0;
}

struct SearchArgs {
    fs::path index, bm25, model;
    std::string query;
    std::size_t k = 10;
};

void print_hits(std::ostream& out, const std::string& system, const RetrievalResult& r) {
    out << "[" << system << "]\n";
    char score[32];
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        std::snprintf(score, sizeof score, "%.4f", r.entries[i].score);
        out << i + 1 << "\t" << score << "\t" << r.entries[i].id << "\t" << r.entries[i].text << '\n';
    }
}

int cmd_search(const SearchArgs& a) {
    if (a.k == 0) throw Error("--k must be >= 1");
    const auto index = VectorIndex::load(a.index);
    const auto bm25 = Bm25Index::load(a.bm25);
    const auto model = EncoderModel::load(a.model);
    const auto dense = dense_retriever(model, index);
    print_hits(std::cout, "dense", dense.search(a.query, a.k));
    print_hits(std::cout, "bm25", bm25.search(a.query, a.k));
    return 0;
}

struct EvalArgs {
    fs::path index, bm25, model, split, pairs, out_csv, out_jsonl, out_table, out_comparison;
    std::size_t k_max = 100;
    std::size_t descriptions = 1;
    std::size_t threads = 1;
};

std::vector<EvalPair> pairs_from_split(const fs::path& path, const VectorIndex& index,
                                       std::size_t per_instance) {
    const auto split = load_split(path, SplitName::Test, LoadOptions{true});
    std::unordered_map<std::string_view, std::uint64_t> by_text;
    for (std::size_t row = 0; row < index.size(); ++row) by_text.emplace(index.text(row), index.id(row));
    std::vector<EvalPair> pairs;
    for (const auto& inst : split.instances) {
        const auto it = by_text.find(inst.sentence);
        if (it == by_text.end()) {
            throw Error("unknown gold id: sentence of instance " + std::to_string(inst.id) +
                        " is not in the index");
        }
        const std::size_t n = std::min(per_instance, inst.valid_descriptions.size());
        for (std::size_t d = 0; d < n; ++d) pairs.push_back({inst.valid_descriptions[d], it->second});
    }
    return pairs;
}

std::vector<EvalPair> pairs_from_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open pairs file " + path.string());
    std::vector<EvalPair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto row = nlohmann::json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.contains("description") || !row["description"].is_string() ||
            !row.contains("gold_id") || !row["gold_id"].is_number_unsigned()) {
            throw Error("malformed pair at line " + std::to_string(line_no) + " of " + path.string());
        }
        pairs.push_back({row["description"].get<std::string>(), row["gold_id"].get<std::uint64_t>()});
    }
    return pairs;
}

int cmd_eval(const EvalArgs& a) {
    if (a.split.empty() == a.pairs.empty()) throw Error("give exactly one of --split or --pairs");
    const auto index = VectorIndex::load(a.index);
    const auto bm25 = Bm25Index::load(a.bm25);
    const auto model = EncoderModel::load(a.model);
    const auto pairs = a.split.empty() ? pairs_from_jsonl(a.pairs)
                                       : pairs_from_split(a.split, index, a.descriptions);
    for (const auto& p : pairs) {
        const auto row = index.find(p.gold_id);
        if (row && p.gold_id < bm25.doc_count() && bm25.text(p.gold_id) != index.text(*row)) {
            throw Error("dense and bm25 corpora disagree on id " + std::to_string(p.gold_id));
        }
    }
    const std::vector<EvalReport> reports{
        evaluate(dense_retriever(model, index), pairs, a.k_max, a.threads),
        evaluate(bm25_retriever(bm25), pairs, a.k_max, a.threads)};
    const auto comparison = compare(reports[0], reports[1]);

    const std::string csv = report_csv(reports);
    if (a.out_csv.empty()) {
        std::cout << csv;
    } else {
        write_text(a.out_csv, csv);
    }
    if (!a.out_jsonl.empty()) write_text(a.out_jsonl, report_jsonl(reports));
    if (!a.out_table.empty()) write_text(a.out_table, report_table(reports) + comparison_table(comparison));
    if (!a.out_comparison.empty()) write_text(a.out_comparison, comparison_csv(comparison));
    std::cerr << report_table(reports) << comparison_table(comparison);
    return 0;
}

struct ServeArgs {
    ServiceConfig config;
    fs::path port_file;
};

int cmd_serve(const ServeArgs& a) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    const auto service = SearchService::from_config(a.config);
    HttpService http(service, a.config.cors_allow, a.config.threads);
    const int port = http.bind(a.config.host, a.config.port);
    if (!a.port_file.empty()) write_text(a.port_file, std::to_string(port) + "\n");
    std::cerr << "serving " << service.dense().size() << " sentences on " << a.config.host << ":"
              << port << '\n';

    std::thread watcher([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        http.stop();
    });
    http.listen();
    // listen() can also return on its own; wake the watcher so it can exit
    pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    std::cerr << "shut down\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Description-based sentence retrieval: data generation, dual-encoder training, "
                 "exact cosine search and a BM25 baseline.",
                 "dsim"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_config("--config", "", "key=value configuration file ([subcommand] sections)");
    app.require_subcommand(1);
    app.fallthrough();

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate-data", "Generate training data with an LLM");
    generate->add_option("--input", gen.input, "Sentences, one per line")->required()->check(CLI::ExistingFile);
    generate->add_option("--output", gen.output, "Dataset JSONL to write")->required();
    generate->add_option("--failures", gen.failures, "Failure log (default: failures.jsonl next to --output)");
    generate->add_option("--client", gen.client, "http, fixture or stub")
        ->check(CLI::IsMember({"http", "fixture", "stub"}));
    generate->add_option("--fixture", gen.fixture, "Recorded completions JSONL for --client fixture");
    generate->add_option("--llm-config", gen.llm_config, "Endpoint settings file (url, token, model, ...)");
    generate->add_option("--retries", gen.retries, "Retries on transient API failures");
    generate->add_option("--backoff-ms", gen.backoff_ms, "Initial retry backoff in milliseconds");
    generate->add_option("--concurrency", gen.concurrency, "Maximum in-flight requests")->check(CLI::PositiveNumber);
    generate->add_option("--abstract-fraction", gen.abstract_fraction, "Fraction re-prompted for abstract descriptions")
        ->check(CLI::Range(0.0, 1.0));
    generate->add_option("--seed", gen.seed, "Seed");

    TrainArgs tr;
    auto* training = app.add_subcommand("train", "Train the sentence and description encoders");
    training->add_option("--data", tr.data, "Training split JSONL")->required()->check(CLI::ExistingFile);
    training->add_option("--out-dir", tr.out_dir, "Directory for checkpoints and loss.csv")->required();
    training->add_option("--epochs", tr.config.epochs);
    training->add_option("--batch-size", tr.config.batch_size);
    training->add_option("--lr", tr.config.learning_rate);
    training->add_option("--warmup", tr.config.warmup_fraction, "Warmup fraction of all steps");
    training->add_option("--margin", tr.config.margin);
    training->add_option("--temperature", tr.config.temperature);
    training->add_option("--alpha", tr.config.alpha);
    training->add_option("--seed", tr.config.seed);
    training->add_option("--vocab-size", tr.config.encoder.vocab_size);
    training->add_option("--hidden", tr.config.encoder.hidden);
    training->add_option("--dim", tr.config.encoder.dim);
    training->add_option("--pool-cap", tr.config.pool_cap, "Cap on in-batch negatives per sentence (0 = none)");
    training->add_option("--threads", tr.config.threads);
    training->add_option("--checkpoint-every", tr.checkpoint_every, "Also save checkpoints every N epochs");
    training->add_flag("--normalize-triplet", tr.config.normalize_before_triplet,
                       "L2-normalize vectors before the triplet term");
    training->add_flag("--no-lowercase", tr.no_lowercase);
    training->add_flag("--lenient", tr.lenient, "Clip over-long description lists instead of rejecting");

    EncodeArgs enc;
    auto* encode = app.add_subcommand("encode-corpus", "Encode a corpus with the sentence encoder");
    encode->add_option("--model", enc.model, "Sentence encoder checkpoint")->required()->check(CLI::ExistingFile);
    encode->add_option("--input", enc.input, "Corpus, one sentence per line")->required()->check(CLI::ExistingFile);
    encode->add_option("--output", enc.output, "Encoded corpus file")->required();
    encode->add_option("--block-size", enc.block_size)->check(CLI::PositiveNumber);
    encode->add_option("--threads", enc.threads);

    fs::path vectors_in, index_out;
    auto* build_index = app.add_subcommand("build-index", "Build the exact cosine index");
    build_index->add_option("--vectors", vectors_in, "Output of encode-corpus")->required()->check(CLI::ExistingFile);
    build_index->add_option("--output", index_out, "Index file")->required();

    fs::path bm25_in, bm25_out;
    Bm25Params bm25_params;
    bool bm25_no_lowercase = false;
    auto* build_bm25 = app.add_subcommand("build-bm25", "Build the BM25 baseline index");
    build_bm25->add_option("--input", bm25_in, "Corpus, one sentence per line")->required()->check(CLI::ExistingFile);
    build_bm25->add_option("--output", bm25_out, "BM25 index file")->required();
    build_bm25->add_option("--k1", bm25_params.k1);
    build_bm25->add_option("--b", bm25_params.b);
    build_bm25->add_flag("--no-lowercase", bm25_no_lowercase);

    SearchArgs se;
    auto* search = app.add_subcommand("search", "Query both systems");
    search->add_option("--index", se.index)->required()->check(CLI::ExistingFile);
    search->add_option("--bm25", se.bm25)->required()->check(CLI::ExistingFile);
    search->add_option("--model", se.model, "Description encoder checkpoint")->required()->check(CLI::ExistingFile);
    search->add_option("--query", se.query)->required();
    search->add_option("--k", se.k);

    EvalArgs ev;
    auto* evaluation = app.add_subcommand("eval", "Recall@k / MRR of dense vs BM25 retrieval");
    evaluation->add_option("--index", ev.index)->required()->check(CLI::ExistingFile);
    evaluation->add_option("--bm25", ev.bm25)->required()->check(CLI::ExistingFile);
    evaluation->add_option("--model", ev.model, "Description encoder checkpoint")->required()->check(CLI::ExistingFile);
    evaluation->add_option("--split", ev.split, "Held-out split JSONL; gold ids found by sentence text");
    evaluation->add_option("--pairs", ev.pairs, "JSONL of {\"description\", \"gold_id\"}");
    evaluation->add_option("--descriptions", ev.descriptions, "Valid descriptions used per instance with --split");
    evaluation->add_option("--k-max", ev.k_max)->check(CLI::PositiveNumber);
    evaluation->add_option("--threads", ev.threads);
    evaluation->add_option("--out", ev.out_csv, "Report CSV (default: stdout)");
    evaluation->add_option("--out-jsonl", ev.out_jsonl, "Per-query JSONL");
    evaluation->add_option("--out-table", ev.out_table, "Human-readable report");
    evaluation->add_option("--out-comparison", ev.out_comparison, "Paired comparison CSV");

    ServeArgs sv;
    auto* serve = app.add_subcommand("serve", "HTTP search service");
    serve->add_option("--index", sv.config.dense_index)->required()->check(CLI::ExistingFile);
    serve->add_option("--bm25", sv.config.bm25_index)->required()->check(CLI::ExistingFile);
    serve->add_option("--model", sv.config.description_encoder, "Description encoder checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    serve->add_option("--host", sv.config.host);
    serve->add_option("--port", sv.config.port, "0 picks a free port");
    serve->add_option("--default-k", sv.config.default_k);
    serve->add_option("--cors", sv.config.cors_allow, "Allowed origins (repeatable, * for any)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    serve->add_option("--threads", sv.config.threads);
    serve->add_option("--port-file", sv.port_file, "Write the bound port here");

    std::vector<std::string> args(argv + 1, argv + argc);
    args = with_env_overrides(app, std::move(args));
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const CLI::App* context = &app;
        for (const auto* sub : app.get_subcommands()) context = sub;
        std::cerr << context->help();
        return 2;
    }

    try {
        if (*generate) return cmd_generate(gen);
        if (*training) return cmd_train(tr);
        if (*encode) return cmd_encode(enc);
        if (*build_index) return cmd_build_index(vectors_in, index_out);
        if (*build_bm25) return cmd_build_bm25(bm25_in, bm25_out, bm25_params, bm25_no_lowercase);
        if (*search) return cmd_search(se);
        if (*evaluation) return cmd_eval(ev);
        if (*serve) return cmd_serve(sv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace dsim
