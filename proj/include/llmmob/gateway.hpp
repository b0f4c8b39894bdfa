#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <semaphore>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "llmmob/backend_types.hpp"
#include "llmmob/hash.hpp"
#include "llmmob/prompt.hpp"

namespace llmmob {

enum class GatewayErrorKind { auth, rate_limited, transport, content_refusal };

struct GatewayError : std::runtime_error {
    GatewayErrorKind kind;
    GatewayError(GatewayErrorKind k, const std::string& what) : std::runtime_error(what), kind(k) {}
};

inline std::string cache_key(const std::string& model_id, double temperature,
                             const std::string& prompt_hash) {
    char temp[32];
    std::snprintf(temp, sizeof(temp), "%.6g", temperature);
    return hex_digest({model_id, temp, prompt_hash});
}

// Content-addressed response store: one file per key, atomic write-rename so
// concurrent writers never expose partial files.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::optional<std::string> get(const std::string& key) const {
        std::ifstream in(dir_ / key, std::ios::binary);
        if (!in) return std::nullopt;
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void put(const std::string& key, const std::string& text) const {
        const auto tmp = dir_ / (key + ".tmp." + std::to_string(::getpid()));
        {
            std::ofstream out(tmp, std::ios::binary);
            out << text;
        }
        std::filesystem::rename(tmp, dir_ / key);
    }

private:
    std::filesystem::path dir_;
};

// min(initial * 2^(attempt-1), cap); monotone non-decreasing by construction.
inline std::chrono::milliseconds backoff_delay(int attempt, int initial_ms, int cap_ms = 8000) {
    long long ms = initial_ms;
    for (int i = 1; i < attempt && ms < cap_ms; ++i) ms *= 2;
    return std::chrono::milliseconds(std::min<long long>(ms, cap_ms));
}

// Chat-completions client: one user message per request, bearer auth from the
// configured env var, bounded in-flight requests, optional file cache keyed on
// (model, temperature, prompt). 429/5xx/transport failures retry with
// exponential backoff; auth failures and refusals do not.
class HttpGateway {
public:
    explicit HttpGateway(BackendConfig cfg);

    RawResponse complete(const PromptText& prompt);

    const BackendConfig& config() const { return cfg_; }

private:
    BackendConfig cfg_;
    std::optional<ResponseCache> cache_;
    std::counting_semaphore<> in_flight_;
    std::string scheme_host_;   // e.g. "http://127.0.0.1:8080"
    std::string path_prefix_;   // e.g. "/v1"
    std::string api_key_;
};

inline RawResponse complete(const PromptText& prompt, const BackendConfig& cfg) {
    HttpGateway gw(cfg);
    return gw.complete(prompt);
}

}  // namespace llmmob

// Implementation pulled out so the class reads as its contract above.
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

namespace llmmob {

inline HttpGateway::HttpGateway(BackendConfig cfg)
    : cfg_(std::move(cfg)), in_flight_(cfg_.max_in_flight > 0 ? cfg_.max_in_flight : 1) {
    validate(cfg_);
    if (!cfg_.cache_dir.empty()) cache_.emplace(cfg_.cache_dir);
    const auto scheme_end = cfg_.endpoint_url.find("://");
    if (scheme_end == std::string::npos)
        throw GatewayError(GatewayErrorKind::transport, "endpoint_url needs a scheme: " + cfg_.endpoint_url);
    const auto path_start = cfg_.endpoint_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_ = cfg_.endpoint_url;
    } else {
        scheme_host_ = cfg_.endpoint_url.substr(0, path_start);
        path_prefix_ = cfg_.endpoint_url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
    if (!cfg_.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
    }
}

inline RawResponse HttpGateway::complete(const PromptText& prompt) {
    const std::string key = cache_key(cfg_.model_id, cfg_.temperature, prompt.prompt_hash);
    if (cache_) {
        if (auto hit = cache_->get(key)) {
            RawResponse r;
            r.text = std::move(*hit);
            r.model_id = cfg_.model_id;
            r.from_cache = true;
            r.attempt_count = 0;
            return r;
        }
    }

    nlohmann::json body{{"model", cfg_.model_id},
                        {"temperature", cfg_.temperature},
                        {"messages", {{{"role", "user"}, {"content", prompt.text}}}}};
    const std::string body_str = body.dump();

    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<>& sem;
        ~Release() { sem.release(); }
    } release{in_flight_};

    const auto started = std::chrono::steady_clock::now();
    std::string last_error = "no attempt made";
    bool rate_limited_last = false;
    int attempt = 0;
    while (attempt <= cfg_.max_retries) {
        ++attempt;
        httplib::Client client(scheme_host_);
        client.set_connection_timeout(static_cast<time_t>(cfg_.timeout_s),
                                      static_cast<time_t>((cfg_.timeout_s - int(cfg_.timeout_s)) * 1e6));
        client.set_read_timeout(static_cast<time_t>(cfg_.timeout_s), 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto res = client.Post(path_prefix_ + "/chat/completions", headers, body_str, "application/json");
        if (!res) {
            last_error = "transport: " + httplib::to_string(res.error());
            rate_limited_last = false;
        } else if (res->status == 401 || res->status == 403) {
            throw GatewayError(GatewayErrorKind::auth,
                               "authentication rejected (HTTP " + std::to_string(res->status) + ")");
        } else if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            rate_limited_last = res->status == 429;
        } else if (res->status >= 400) {
            throw GatewayError(GatewayErrorKind::transport,
                               "HTTP " + std::to_string(res->status) + ": " + res->body);
        } else {
            nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
            std::string content;
            if (!j.is_discarded() && j.contains("choices") && j["choices"].is_array() &&
                !j["choices"].empty()) {
                const auto& msg = j["choices"][0];
                if (msg.contains("message") && msg["message"].contains("content") &&
                    msg["message"]["content"].is_string())
                    content = msg["message"]["content"].get<std::string>();
            }
            if (content.empty())
                throw GatewayError(GatewayErrorKind::content_refusal,
                                   "response carried no assistant text");
            RawResponse r;
            r.text = std::move(content);
            r.model_id = cfg_.model_id;
            r.attempt_count = attempt;
            r.latency_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - started)
                               .count();
            if (cache_) cache_->put(key, r.text);
            return r;
        }
        if (attempt <= cfg_.max_retries)
            std::this_thread::sleep_for(backoff_delay(attempt, cfg_.retry_initial_delay_ms));
    }
    throw GatewayError(rate_limited_last ? GatewayErrorKind::rate_limited : GatewayErrorKind::transport,
                       "gave up after " + std::to_string(attempt) + " attempts; last: " + last_error);
}

}  // namespace llmmob
