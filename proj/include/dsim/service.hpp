#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dsim/bm25.hpp"
#include "dsim/encoder.hpp"
#include "dsim/vector_index.hpp"

namespace httplib {
class Server;
}

namespace dsim {

struct ServiceConfig {
    std::filesystem::path dense_index;
    std::filesystem::path bm25_index;
    std::filesystem::path description_encoder;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t default_k = 10;
    std::vector<std::string> cors_allow;
    std::size_t threads = 8;
};

inline constexpr std::size_t kMaxServiceK = 100;

/// Read-only search over a dense index and a BM25 index.
class SearchService {
public:
    struct Response {
        int status = 200;
        std::string body;
        std::string content_type = "application/json";
    };

    /// Throws DimensionMismatch when the encoder and index dimensions differ.
    SearchService(VectorIndex dense, Bm25Index bm25, EncoderModel description_encoder,
                  std::size_t default_k = 10);

    static SearchService from_config(const ServiceConfig& config);

    /// POST /search body: {"query": text, "k": n, "system": "dense"|"bm25"|"both"}.
    /// Response: {"results": [{system, rank, id, text, score}], "latency_ms": x}.
    Response handle_search(std::string_view body) const;
    Response handle_health() const;

    const VectorIndex& dense() const noexcept { return dense_; }
    const Bm25Index& bm25() const noexcept { return bm25_; }
    const EncoderModel& encoder() const noexcept { return encoder_; }

private:
    VectorIndex dense_;
    Bm25Index bm25_;
    EncoderModel encoder_;
    std::size_t default_k_;
};

/// HTTP front end: POST /search, GET /healthz, CORS for allow-listed origins.
class HttpService {
public:
    HttpService(const SearchService& service, std::vector<std::string> cors_allow,
                std::size_t threads = 8);
    ~HttpService();
    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); in-flight requests are drained before returning.
    void listen();
    void stop();

private:
    const SearchService& service_;
    std::vector<std::string> cors_allow_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace dsim
