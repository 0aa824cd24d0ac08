#include "dsim/service.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>

#include "dsim/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dsim {

namespace {

SearchService::Response error_response(int status, std::string message) {
    nlohmann::json body = {{"error", std::move(message)}};
    return {status, body.dump(), "application/json"};
}

void append_results(nlohmann::json& results, std::string_view system, const RetrievalResult& r) {
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
        const auto& hit = r.entries[i];
        results.push_back({{"system", system},
                           {"rank", i + 1},
                           {"id", hit.id},
                           {"text", hit.text},
                           {"score", hit.score}});
    }
}

}  // namespace

SearchService::SearchService(VectorIndex dense, Bm25Index bm25, EncoderModel description_encoder,
                             std::size_t default_k)
    : dense_(std::move(dense)),
      bm25_(std::move(bm25)),
      encoder_(std::move(description_encoder)),
      default_k_(std::clamp<std::size_t>(default_k, 1, kMaxServiceK)) {
    if (encoder_.dim() != dense_.dim()) {
        throw DimensionMismatch("description encoder dim " + std::to_string(encoder_.dim()) +
                                " does not match dense index dim " + std::to_string(dense_.dim()));
    }
}

SearchService SearchService::from_config(const ServiceConfig& config) {
    return SearchService(VectorIndex::load(config.dense_index), Bm25Index::load(config.bm25_index),
                         EncoderModel::load(config.description_encoder), config.default_k);
}

SearchService::Response SearchService::handle_health() const { return {200, "ok", "text/plain"}; }

SearchService::Response SearchService::handle_search(std::string_view body) const {
    const auto start = std::chrono::steady_clock::now();
    const auto request = nlohmann::json::parse(body, nullptr, false);
    if (request.is_discarded() || !request.is_object()) {
        return error_response(400, "malformed JSON body");
    }
    const auto query_it = request.find("query");
    if (query_it == request.end() || !query_it->is_string()) {
        return error_response(400, "'query' must be a string");
    }
    const std::string query = query_it->get<std::string>();
    if (query.find_first_not_of(" \t\r\n") == std::string::npos) {
        return error_response(400, "empty query");
    }

    std::size_t k = default_k_;
    if (const auto it = request.find("k"); it != request.end()) {
        if (!it->is_number_integer()) return error_response(400, "'k' must be an integer");
        const auto requested = it->get<std::int64_t>();
        if (requested < 1) return error_response(400, "'k' must be >= 1");
        k = static_cast<std::size_t>(std::min<std::int64_t>(requested, kMaxServiceK));
    }

    std::string system = "both";
    if (const auto it = request.find("system"); it != request.end()) {
        if (!it->is_string()) return error_response(400, "'system' must be a string");
        system = it->get<std::string>();
    }
    if (system != "dense" && system != "bm25" && system != "both") {
        return error_response(400, "'system' must be one of dense, bm25, both");
    }

    try {
        nlohmann::json results = nlohmann::json::array();
        if (system == "dense" || system == "both") {
            append_results(results, "dense", dense_.search(encoder_.encode(query).vector, k));
        }
        if (system == "bm25" || system == "both") {
            append_results(results, "bm25", bm25_.search(query, k));
        }
        const auto elapsed = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        nlohmann::json response = {{"results", std::move(results)}, {"latency_ms", elapsed}};
        return {200, response.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                "application/json"};
    } catch (const std::exception& e) {
        std::cerr << "search failed: " << e.what() << '\n';
        return error_response(500, "internal error");
    }
}

HttpService::HttpService(const SearchService& service, std::vector<std::string> cors_allow,
                         std::size_t threads)
    : service_(service), cors_allow_(std::move(cors_allow)), server_(std::make_unique<httplib::Server>()) {
    const std::size_t pool = std::max<std::size_t>(1, threads);
    server_->new_task_queue = [pool] { return new httplib::ThreadPool(pool); };

    auto add_cors = [this](const httplib::Request& req, httplib::Response& res) {
        const auto origin = req.get_header_value("Origin");
        if (origin.empty()) return;
        const bool allowed = std::find(cors_allow_.begin(), cors_allow_.end(), origin) != cors_allow_.end() ||
                             std::find(cors_allow_.begin(), cors_allow_.end(), "*") != cors_allow_.end();
        if (!allowed) return;
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
    };

    server_->Post("/search", [this, add_cors](const httplib::Request& req, httplib::Response& res) {
        const auto out = service_.handle_search(req.body);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
        add_cors(req, res);
    });
    server_->Options("/search", [add_cors](const httplib::Request& req, httplib::Response& res) {
        res.status = 204;
        add_cors(req, res);
    });
    server_->Get("/healthz", [this, add_cors](const httplib::Request& req, httplib::Response& res) {
        const auto out = service_.handle_health();
        res.status = out.status;
        res.set_content(out.body, out.content_type);
        add_cors(req, res);
    });
    server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            if (ep) std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            std::cerr << "request failed: " << e.what() << '\n';
        } catch (...) {
            std::cerr << "request failed\n";
        }
        res.status = 500;
        res.set_content(R"({"error":"internal error"})", "application/json");
    });
}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!server_->bind_to_port(host, port)) {
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpService::listen() { server_->listen_after_bind(); }

void HttpService::stop() { server_->stop(); }

}  // namespace dsim
