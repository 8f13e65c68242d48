#include <chrono>
#include <functional>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cnorm/backend.hpp"

namespace cnorm {

using nlohmann::json;

struct RemoteBackend::Impl {
    httplib::Client client;
    std::optional<RemoteCapabilities> caps;
    std::mutex caps_mutex;

    explicit Impl(const RemoteConfig& cfg) : client(cfg.base_url) {
        client.set_connection_timeout(cfg.timeout_seconds);
        client.set_read_timeout(cfg.timeout_seconds);
        if (!cfg.auth_header.empty())
            client.set_default_headers({{"Authorization", cfg.auth_header}});
    }
};

RemoteBackend::RemoteBackend(RemoteConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {
    if (config_.base_url.empty())
        throw std::invalid_argument("RemoteBackend: base_url is empty");
}

RemoteBackend::~RemoteBackend() = default;

namespace {

// Transport errors are retried with bounded exponential backoff; HTTP-level
// generation errors are not (temperature 0, a retry cannot change anything).
httplib::Result with_retries(const RemoteConfig& cfg,
                             const std::function<httplib::Result()>& call) {
    int backoff = cfg.initial_backoff_ms;
    httplib::Result res = call();
    for (int attempt = 0; !res && attempt < cfg.max_retries; ++attempt) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff *= 2;
        res = call();
    }
    return res;
}

[[noreturn]] void throw_http_error(const std::string& what, const httplib::Result& res) {
    if (!res)
        throw std::runtime_error(what + ": transport error: " +
                                 httplib::to_string(res.error()));
    throw std::runtime_error(what + ": HTTP " + std::to_string(res->status) + ": " +
                             res->body);
}

}  // namespace

RemoteCapabilities RemoteBackend::capabilities() const {
    {
        std::lock_guard<std::mutex> lock(impl_->caps_mutex);
        if (impl_->caps) return *impl_->caps;
    }
    auto res = with_retries(config_, [&] { return impl_->client.Get("/v1/capabilities"); });
    if (!res || res->status != 200) throw_http_error("capabilities", res);
    json j = json::parse(res->body);
    RemoteCapabilities caps;
    caps.attention_supported = j.value("attention_supported", false);
    caps.attention_convention = j.value("attention_convention", "");
    caps.max_prompt_tokens = j.value("max_prompt_tokens", 0);
    std::lock_guard<std::mutex> lock(impl_->caps_mutex);
    impl_->caps = caps;
    return caps;
}

bool RemoteBackend::supports_attention() const {
    return capabilities().attention_supported;
}

GenerationRecord RemoteBackend::generate(const std::string& prompt,
                                         const GenerateOptions& options) {
    if (prompt.empty()) throw std::invalid_argument("RemoteBackend: empty prompt");
    json body = {{"prompt", prompt},
                 {"max_tokens", options.max_tokens},
                 {"temperature", 0.0},
                 {"return_attention", options.return_attention}};
    std::string payload = body.dump();
    auto res = with_retries(config_, [&] {
        return impl_->client.Post("/v1/generate", payload, "application/json");
    });
    if (!res || res->status != 200) throw_http_error("generate", res);

    json j = json::parse(res->body);
    GenerationRecord rec;
    rec.text = j.at("text").get<std::string>();
    rec.token_count = j.at("token_count").get<int>();
    if (j.contains("attention") && !j.at("attention").is_null()) {
        AttentionVector a;
        a.prompt_id = prompt_id_for(prompt);
        a.format_tag = options.format_tag;
        a.weights = j.at("attention").at("weights").get<std::vector<double>>();
        rec.attention = std::move(a);
    }
    if (options.return_attention && !rec.attention)
        throw std::runtime_error(
            "RemoteBackend: attention requested but the server response omitted it");
    return rec;
}

int RemoteBackend::tokenize_count(const std::string& text) const {
    json body = {{"text", text}};
    std::string payload = body.dump();
    auto res = with_retries(config_, [&] {
        return impl_->client.Post("/v1/tokenize", payload, "application/json");
    });
    if (!res || res->status != 200) throw_http_error("tokenize", res);
    return json::parse(res->body).at("count").get<int>();
}

}  // namespace cnorm
