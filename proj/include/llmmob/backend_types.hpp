#pragma once

#include <stdexcept>
#include <string>

namespace llmmob {

struct BackendConfig {
    std::string endpoint_url = "https://api.openai.com/v1";
    std::string model_id = "gpt-3.5-turbo-0613";
    double temperature = 0.0;
    int max_retries = 5;
    double timeout_s = 60.0;
    int max_in_flight = 4;
    std::string cache_dir;  // empty disables the response cache
    std::string api_key_env = "OPENAI_API_KEY";
    int retry_initial_delay_ms = 500;  // doubles per attempt, capped
};

inline void validate(const BackendConfig& cfg) {
    if (cfg.temperature < 0) throw std::invalid_argument("BackendConfig.temperature must be >= 0");
    if (cfg.max_in_flight < 1) throw std::invalid_argument("BackendConfig.max_in_flight must be >= 1");
    if (cfg.max_retries < 0) throw std::invalid_argument("BackendConfig.max_retries must be >= 0");
}

struct RawResponse {
    std::string text;
    std::string model_id;
    double latency_ms = 0.0;
    bool from_cache = false;
    int attempt_count = 1;  // >= 1 unless served from cache
};

}  // namespace llmmob
