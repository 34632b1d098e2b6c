#pragma once

// Client for the completion and embedding services: timeouts, retries with
// full-jitter backoff, and record/replay cassettes for offline runs.

#include <tracesmith/consistency.hpp>
#include <tracesmith/error.hpp>
#include <tracesmith/hash.hpp>
#include <tracesmith/io.hpp>

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace tracesmith {

enum class RequestKind { Completion, Embedding };

inline std::string_view to_string(RequestKind k) { return k == RequestKind::Completion ? "completion" : "embedding"; }

struct ProviderRequest {
    RequestKind kind = RequestKind::Completion;
    std::string model;
    std::string text;                // completion input
    std::vector<std::string> texts;  // embedding input
    int timeoutMs = 30000;
    int maxRetries = 2;

    static ProviderRequest completion(std::string prompt, std::string model = {}) {
        ProviderRequest r;
        r.kind = RequestKind::Completion;
        r.text = std::move(prompt);
        r.model = std::move(model);
        return r;
    }
    static ProviderRequest embedding(std::vector<std::string> texts, std::string model = {}) {
        ProviderRequest r;
        r.kind = RequestKind::Embedding;
        r.texts = std::move(texts);
        r.model = std::move(model);
        return r;
    }
};

struct ProviderResponse {
    RequestKind kind = RequestKind::Completion;
    std::string text;
    std::vector<std::vector<double>> vectors;
    std::uint64_t latencyMs = 0;
    std::size_t attempts = 0;
};

/// Only the content fields take part in the hash; timeouts and retry
/// budgets do not change what the service answers.
inline nlohmann::json canonical_request(const ProviderRequest& req) {
    nlohmann::json j;  // std::map-backed, so keys serialize sorted
    j["kind"] = std::string(to_string(req.kind));
    j["model"] = req.model;
    if (req.kind == RequestKind::Completion) j["input"] = req.text;
    else j["input"] = req.texts;
    return j;
}

inline std::string request_hash(const ProviderRequest& req) { return hex64(fnv1a64(canonical_request(req).dump())); }

inline nlohmann::json response_to_json(const ProviderResponse& r) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(r.kind));
    if (r.kind == RequestKind::Completion) j["text"] = r.text;
    else j["vectors"] = r.vectors;
    j["latencyMs"] = r.latencyMs;
    return j;
}

inline ProviderResponse response_from_json(const nlohmann::json& j) {
    ProviderResponse r;
    r.kind = j.at("kind").get<std::string>() == "completion" ? RequestKind::Completion : RequestKind::Embedding;
    if (r.kind == RequestKind::Completion) r.text = j.at("text").get<std::string>();
    else r.vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
    r.latencyMs = j.value("latencyMs", std::uint64_t{0});
    return r;
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

struct HttpReply {
    int status = 0;
    std::string body;
};

class Transport {
public:
    virtual ~Transport() = default;
    /// Throws Error(Timeout) when the deadline passes and Error(ProviderError)
    /// when no connection could be made.
    virtual HttpReply post(const std::string& url, const std::string& body, std::chrono::milliseconds timeout) = 0;
};

class HttpTransport : public Transport {
public:
    HttpReply post(const std::string& url, const std::string& body, std::chrono::milliseconds timeout) override {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw Error(ErrorKind::ProviderError, "endpoint is not a URL: " + url);
        const auto path_start = url.find('/', scheme_end + 3);
        const std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
        const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(base);
        if (!client.is_valid()) throw Error(ErrorKind::ProviderError, "unsupported endpoint: " + url);
        const auto secs = timeout.count() / 1000;
        const auto usecs = (timeout.count() % 1000) * 1000;
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
                throw Error(ErrorKind::Timeout, url + ": " + httplib::to_string(err));
            }
            throw Error(ErrorKind::ProviderError, url + ": " + httplib::to_string(err));
        }
        return {res->status, res->body};
    }
};

// ---------------------------------------------------------------------------
// Cassettes
// ---------------------------------------------------------------------------

/// Request hash to recorded response, persisted as one JSON file that is
/// rewritten atomically on every insert.
class CassetteStore {
public:
    explicit CassetteStore(std::filesystem::path path) : path_(std::move(path)) {
        std::error_code ec;
        if (!std::filesystem::exists(path_, ec)) return;
        auto j = nlohmann::json::parse(io::read_file(path_), nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("entries") || !j["entries"].is_object()) {
            throw Error(ErrorKind::MissingCassette, path_.string() + ": unreadable cassette");
        }
        for (auto it = j["entries"].begin(); it != j["entries"].end(); ++it) entries_[it.key()] = it.value();
    }

    std::optional<ProviderResponse> get(const std::string& hash) const {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(hash);
        if (it == entries_.end()) return std::nullopt;
        return response_from_json(it->second.at("response"));
    }

    void put(const ProviderRequest& req, const ProviderResponse& resp) {
        std::lock_guard lock(mutex_);
        entries_[request_hash(req)] = nlohmann::json{{"request", canonical_request(req)}, {"response", response_to_json(resp)}};
        nlohmann::json out;
        out["entries"] = nlohmann::json::object();
        for (const auto& [k, v] : entries_) out["entries"][k] = v;
        io::write_file_atomic(path_, out.dump(2) + "\n", ErrorKind::CassetteWriteFailed);
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::map<std::string, nlohmann::json> entries_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

enum class GatewayMode { Live, Record, Replay };

struct GatewayConfig {
    std::string completeUrl;
    std::string embedUrl;
    GatewayMode mode = GatewayMode::Live;
    std::optional<std::filesystem::path> cassette;
    std::chrono::milliseconds backoffBase{500};
    double backoffFactor = 2.0;
    std::uint64_t jitterSeed = std::random_device{}();
};

/// Reads `key = value` lines; `#` starts a comment and values may be quoted.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string{};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string line(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++lineno;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out[key] = value;
    }
    return out;
}

/// Config file values first, then environment variables on top.
inline GatewayConfig gateway_config_from(const std::map<std::string, std::string>& file_values) {
    GatewayConfig cfg;
    auto pick = [&](const char* key, const char* env) -> std::string {
        if (const char* v = std::getenv(env); v && *v) return v;
        if (auto it = file_values.find(key); it != file_values.end()) return it->second;
        return {};
    };
    cfg.completeUrl = pick("complete_url", "TRACESMITH_COMPLETE_URL");
    cfg.embedUrl = pick("embed_url", "TRACESMITH_EMBED_URL");
    const std::string mode = pick("provider_mode", "TRACESMITH_PROVIDER_MODE");
    if (mode == "record") cfg.mode = GatewayMode::Record;
    else if (mode == "replay") cfg.mode = GatewayMode::Replay;
    else if (!mode.empty() && mode != "live") throw Error(ErrorKind::InvalidConfig, "provider_mode must be live, record or replay");
    if (auto c = pick("cassette", "TRACESMITH_CASSETTE"); !c.empty()) cfg.cassette = c;
    return cfg;
}

class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit Gateway(GatewayConfig cfg, std::shared_ptr<Transport> transport = std::make_shared<HttpTransport>(),
                     Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : cfg_(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleeper)), rng_(cfg_.jitterSeed) {
        if (cfg_.mode != GatewayMode::Live) {
            if (!cfg_.cassette) throw Error(ErrorKind::InvalidConfig, "record and replay modes need a cassette path");
            cassette_ = std::make_unique<CassetteStore>(*cfg_.cassette);
        }
    }

    const GatewayConfig& config() const { return cfg_; }

    ProviderResponse call(const ProviderRequest& req) {
        validate(req);
        if (cfg_.mode == GatewayMode::Replay) {
            auto hit = cassette_->get(request_hash(req));
            if (!hit) throw Error(ErrorKind::MissingCassette, "no recorded response for request " + request_hash(req));
            return *hit;
        }
        const std::string url = req.kind == RequestKind::Completion ? cfg_.completeUrl : cfg_.embedUrl;
        if (url.empty()) {
            throw Error(ErrorKind::ProviderError, std::string("no endpoint configured for ") + std::string(to_string(req.kind)) +
                                                      " (set " + (req.kind == RequestKind::Completion ? "TRACESMITH_COMPLETE_URL" : "TRACESMITH_EMBED_URL") + ")");
        }
        nlohmann::json body;
        if (req.kind == RequestKind::Completion) body["prompt"] = req.text;
        else body["texts"] = req.texts;
        const std::string payload = body.dump();

        const auto started = std::chrono::steady_clock::now();
        for (std::size_t attempt = 0;; ++attempt) {
            try {
                const HttpReply reply = transport_->post(url, payload, std::chrono::milliseconds(req.timeoutMs));
                if (reply.status != 200) {
                    throw Error(ErrorKind::RemoteError, "status " + std::to_string(reply.status) + ": " + reply.body.substr(0, 200));
                }
                ProviderResponse resp = decode(req, reply.body);
                resp.attempts = attempt + 1;
                resp.latencyMs = static_cast<std::uint64_t>(
                    std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count());
                if (cfg_.mode == GatewayMode::Record) cassette_->put(req, resp);
                return resp;
            } catch (const Error& e) {
                const bool retryable = e.kind() == ErrorKind::Timeout || e.kind() == ErrorKind::RemoteError ||
                                       e.kind() == ErrorKind::ProviderError;
                if (!retryable || attempt >= static_cast<std::size_t>(std::max(0, req.maxRetries))) throw;
                sleep_(backoff(attempt));
            }
        }
    }

    /// Stores a response under the request's hash without calling out.
    void record_fixture(const ProviderRequest& req, const ProviderResponse& resp) {
        if (cfg_.mode != GatewayMode::Record) throw Error(ErrorKind::PreconditionViolated, "record_fixture needs record mode");
        cassette_->put(req, resp);
    }

    /// Full jitter: uniform in [0, base * factor^attempt].
    std::chrono::milliseconds backoff(std::size_t attempt) {
        double cap = static_cast<double>(cfg_.backoffBase.count());
        for (std::size_t i = 0; i < attempt; ++i) cap *= cfg_.backoffFactor;
        std::lock_guard lock(rng_mutex_);
        const double u = static_cast<double>(rng_() >> 11) / static_cast<double>(1ull << 53);
        return std::chrono::milliseconds(static_cast<long long>(u * cap));
    }

    std::string complete(const std::string& prompt, const std::string& model = {}) {
        return call(ProviderRequest::completion(prompt, model)).text;
    }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, const std::string& model = {}) {
        return call(ProviderRequest::embedding(texts, model)).vectors;
    }

private:
    static void validate(const ProviderRequest& req) {
        if (req.kind == RequestKind::Embedding && req.texts.empty()) {
            throw Error(ErrorKind::PreconditionViolated, "embedding request needs at least one text");
        }
        if (req.timeoutMs <= 0) throw Error(ErrorKind::PreconditionViolated, "timeoutMs must be positive");
    }

    static ProviderResponse decode(const ProviderRequest& req, const std::string& body) {
        auto j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::RemoteError, "response is not a JSON object: " + body.substr(0, 200));
        ProviderResponse resp;
        resp.kind = req.kind;
        if (req.kind == RequestKind::Completion) {
            if (!j.contains("text") || !j["text"].is_string()) throw Error(ErrorKind::RemoteError, "response lacks a text field");
            resp.text = j["text"].get<std::string>();
            return resp;
        }
        if (!j.contains("vectors") || !j["vectors"].is_array()) throw Error(ErrorKind::RemoteError, "response lacks a vectors field");
        if (j["vectors"].size() != req.texts.size()) {
            throw Error(ErrorKind::RemoteError, "expected " + std::to_string(req.texts.size()) + " vectors, got " +
                                                    std::to_string(j["vectors"].size()));
        }
        for (const auto& v : j["vectors"]) {
            if (!v.is_array()) throw Error(ErrorKind::RemoteError, "vector is not an array");
            if (v.size() != kEmbeddingDim) {
                throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(kEmbeddingDim) + " dimensions, got " + std::to_string(v.size()));
            }
            std::vector<double> vec;
            vec.reserve(kEmbeddingDim);
            for (const auto& x : v) {
                if (!x.is_number()) throw Error(ErrorKind::RemoteError, "vector component is not a number");
                vec.push_back(x.get<double>());
            }
            resp.vectors.push_back(std::move(vec));
        }
        return resp;
    }

    GatewayConfig cfg_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleep_;
    std::mt19937_64 rng_;
    std::mutex rng_mutex_;
    std::unique_ptr<CassetteStore> cassette_;
};

/// Trace embedder backed by the `/embed` service: one text per trace.
inline TraceEmbedder service_embedder(Gateway& gw, std::string model = {}) {
    return [&gw, model](const FeatureSequence& fs) {
        auto vectors = gw.embed({trace_text(fs)}, model);
        TraceEmbedding e;
        e.vector = std::move(vectors.at(0));
        e.degenerate = !detail::normalize(e.vector);
        return e;
    };
}

inline std::function<std::string(const std::string&)> completion_fn(Gateway& gw, std::string model = {}) {
    return [&gw, model](const std::string& prompt) { return gw.complete(prompt, model); };
}

}  // namespace tracesmith
