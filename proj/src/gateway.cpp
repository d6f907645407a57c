#include "confcal/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "confcal/digest.hpp"
#include "confcal/errors.hpp"
#include "confcal/rng.hpp"

namespace confcal {

namespace {

using json = nlohmann::json;
using clock_type = std::chrono::steady_clock;

// Counting gate with a runtime capacity; tracks the peak occupancy.
class AdmissionGate {
public:
    explicit AdmissionGate(int capacity) : capacity_(std::max(1, capacity)) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return in_flight_ < capacity_; });
        ++in_flight_;
        peak_ = std::max(peak_, in_flight_);
    }

    void release() {
        {
            std::lock_guard lock(mutex_);
            --in_flight_;
        }
        cv_.notify_one();
    }

    int peak() const {
        std::lock_guard lock(mutex_);
        return peak_;
    }

private:
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    int capacity_;
    int in_flight_ = 0;
    int peak_ = 0;
};

class GateGuard {
public:
    explicit GateGuard(AdmissionGate& gate) : gate_(gate) { gate_.acquire(); }
    ~GateGuard() { gate_.release(); }
    GateGuard(const GateGuard&) = delete;
    GateGuard& operator=(const GateGuard&) = delete;

private:
    AdmissionGate& gate_;
};

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

const char* kFallbackWords[] = {
    "amber",  "basalt", "cedar",  "delta",  "ember",  "fjord",
    "garnet", "harbor", "indigo", "juniper", "krill",  "lumen",
    "maple",  "nectar", "onyx",   "prism",
};

std::string fallback_reply(const std::string& fp, std::uint64_t seed) {
    std::mt19937_64 rng(mix_seed(digest_seed(fp), seed));
    std::string out = "unscripted reply";
    for (int i = 0; i < 4; ++i) {
        out += ' ';
        out += kFallbackWords[uniform_index(rng, 16)];
    }
    out += '.';
    return out;
}

void validate_request(const ChatRequest& req) {
    if (req.user_prompt.empty()) {
        throw DomainError("chat: user_prompt must be non-empty");
    }
    if (!std::isfinite(req.temperature) || req.temperature < 0.0) {
        throw DomainError("chat: temperature must be finite and >= 0");
    }
    if (req.max_tokens <= 0) {
        throw DomainError("chat: max_tokens must be positive");
    }
}

std::string resolve_api_key(const ProviderConfig& cfg) {
    if (cfg.api_key_env.empty()) {
        return {};
    }
    const char* value = std::getenv(cfg.api_key_env.c_str());
    if (value == nullptr || *value == '\0') {
        throw AuthError("api key env var '" + cfg.api_key_env + "' is unset");
    }
    return value;
}

} // namespace

std::string fingerprint(const ChatRequest& req) {
    validate_request(req);
    char header[128];
    std::snprintf(header, sizeof(header), "chat\x1f%.17g\x1f%d\x1f%d\x1f", req.temperature,
                  req.max_tokens, req.sample_index);
    std::string payload = header;
    payload += req.model_id;
    payload += '\x1f';
    payload += req.system_prompt;
    payload += '\x1f';
    payload += req.user_prompt;
    return sha256_hex(payload);
}

MockScript load_mock_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read mock script: " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("mock script parse error: " + std::string(e.what()));
    }
    if (!doc.is_object()) {
        throw ConfigError("mock script must be a JSON object");
    }
    MockScript script;
    if (doc.contains("entries")) {
        for (const auto& [fp, text] : doc.at("entries").items()) {
            script.entries[fp] = text.get<std::string>();
        }
        script.default_embedding_seed = doc.value("default_embedding_seed", std::uint64_t{0});
        script.embedding_dim = doc.value("embedding_dim", std::size_t{32});
        script.latency_ms = doc.value("latency_ms", 0);
    } else {
        // Bare form: the whole object is the fingerprint -> reply map.
        for (const auto& [fp, text] : doc.items()) {
            script.entries[fp] = text.get<std::string>();
        }
    }
    return script;
}

struct Gateway::Impl {
    std::optional<MockScript> script;

    mutable std::mutex gates_mutex;
    std::unordered_map<std::string, std::unique_ptr<AdmissionGate>> gates;

    mutable std::mutex record_mutex;
    bool recording = false;
    std::vector<ChatRequest> recorded;

    AdmissionGate& gate_for(const ProviderConfig& cfg) {
        std::lock_guard lock(gates_mutex);
        auto it = gates.find(cfg.base_url);
        if (it == gates.end()) {
            it = gates.emplace(cfg.base_url,
                               std::make_unique<AdmissionGate>(cfg.max_in_flight)).first;
        }
        return *it->second;
    }

    void record(const ChatRequest& req) {
        std::lock_guard lock(record_mutex);
        if (recording) {
            recorded.push_back(req);
        }
    }

    ChatResponse mock_chat(const ChatRequest& req) {
        const std::string fp = fingerprint(req);
        if (script->latency_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(script->latency_ms));
        }
        auto it = script->entries.find(fp);
        if (it != script->entries.end()) {
            return ChatResponse{it->second, FinishReason::stop};
        }
        return ChatResponse{fallback_reply(fp, script->default_embedding_seed),
                            FinishReason::stop};
    }

    std::vector<EmbeddingVector> mock_embed(const std::vector<std::string>& texts) {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& text : texts) {
            std::mt19937_64 rng(mix_seed(digest_seed(text), script->default_embedding_seed));
            out.push_back(EmbeddingVector{unit_sphere_draw(rng, script->embedding_dim)});
        }
        return out;
    }

    // Runs one HTTP POST with the retry/backoff policy. `parse` extracts the
    // result from a 2xx body and throws MalformedResponse on schema problems.
    // Total blocking time is bounded by timeout * (max_retries + 1): each
    // attempt runs under the per-attempt timeout and only starts while a full
    // attempt still fits the budget; backoff sleeps are clamped to it too.
    template <typename T>
    T http_post_with_retries(const ProviderConfig& cfg, const std::string& path,
                             const std::string& body, const std::string& api_key,
                             T (*parse)(const std::string&)) {
        const auto start = clock_type::now();
        const auto budget = std::chrono::milliseconds(
            static_cast<long long>(cfg.timeout_ms) * (cfg.max_retries + 1));
        std::mt19937_64 jitter_rng(std::random_device{}());
        std::string last_error = "no attempts made";

        for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
            if (attempt > 0) {
                auto backoff = std::chrono::milliseconds(static_cast<long long>(
                    static_cast<double>(cfg.backoff_base_ms) * std::pow(2.0, attempt - 1) *
                    (1.0 + 0.4 * (uniform_unit(jitter_rng) - 0.5))));
                const auto remaining =
                    budget - std::chrono::milliseconds(cfg.timeout_ms) -
                    std::chrono::duration_cast<std::chrono::milliseconds>(clock_type::now() -
                                                                          start);
                if (remaining <= std::chrono::milliseconds(0)) {
                    break;
                }
                std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(
                    backoff, remaining));
            }

            httplib::Client client(cfg.base_url);
            const double timeout_s = cfg.timeout_ms / 1000.0;
            client.set_connection_timeout(timeout_s);
            client.set_read_timeout(timeout_s);
            client.set_write_timeout(timeout_s);
            httplib::Headers headers;
            if (!api_key.empty()) {
                headers.emplace("Authorization", "Bearer " + api_key);
            }

            auto res = client.Post(path, headers, body, "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 401 || res->status == 403) {
                throw AuthError("provider rejected credentials (HTTP " +
                                std::to_string(res->status) + ")");
            }
            if (retryable_status(res->status)) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                throw TransportError("provider returned HTTP " + std::to_string(res->status));
            }
            return parse(res->body);
        }
        throw TransportError("retries exhausted: " + last_error);
    }

    static ChatResponse parse_chat_body(const std::string& body) {
        json doc;
        try {
            doc = json::parse(body);
        } catch (const json::exception&) {
            throw MalformedResponse("chat: response body is not valid JSON");
        }
        if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
            throw MalformedResponse("chat: response has no choices");
        }
        const auto& choice = doc["choices"][0];
        ChatResponse out;
        try {
            out.text = choice.at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw MalformedResponse("chat: choice has no message.content");
        }
        const std::string reason = choice.value("finish_reason", "stop");
        if (reason == "stop") {
            out.finish_reason = FinishReason::stop;
        } else if (reason == "length") {
            out.finish_reason = FinishReason::length;
        } else {
            out.finish_reason = FinishReason::error;
        }
        return out;
    }

    static std::vector<EmbeddingVector> parse_embed_body(const std::string& body) {
        json doc;
        try {
            doc = json::parse(body);
        } catch (const json::exception&) {
            throw MalformedResponse("embed: response body is not valid JSON");
        }
        if (!doc.contains("data") || !doc["data"].is_array()) {
            throw MalformedResponse("embed: response has no data array");
        }
        std::vector<EmbeddingVector> out(doc["data"].size());
        for (const auto& entry : doc["data"]) {
            try {
                const auto index = entry.at("index").get<std::size_t>();
                if (index >= out.size()) {
                    throw MalformedResponse("embed: index out of range");
                }
                out[index] = make_embedding(entry.at("embedding").get<std::vector<double>>());
            } catch (const json::exception&) {
                throw MalformedResponse("embed: bad data entry");
            }
        }
        return out;
    }

    ChatResponse live_chat(const ProviderConfig& cfg, const ChatRequest& req) {
        const std::string api_key = resolve_api_key(cfg);
        json payload = {
            {"model", req.model_id},
            {"messages", json::array()},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens},
        };
        if (!req.system_prompt.empty()) {
            payload["messages"].push_back({{"role", "system"}, {"content", req.system_prompt}});
        }
        payload["messages"].push_back({{"role", "user"}, {"content", req.user_prompt}});
        return http_post_with_retries<ChatResponse>(cfg, cfg.chat_path, payload.dump(), api_key,
                                                    &parse_chat_body);
    }

    std::vector<EmbeddingVector> live_embed(const ProviderConfig& cfg,
                                            const std::vector<std::string>& inputs) {
        const std::string api_key = resolve_api_key(cfg);
        json payload = {
            {"model", cfg.embed_model},
            {"input", inputs},
        };
        return http_post_with_retries<std::vector<EmbeddingVector>>(
            cfg, cfg.embeddings_path, payload.dump(), api_key, &parse_embed_body);
    }
};

Gateway::Gateway() : impl_(std::make_unique<Impl>()) {}

Gateway::Gateway(MockScript script) : impl_(std::make_unique<Impl>()) {
    impl_->script = std::move(script);
}

Gateway::~Gateway() = default;
Gateway::Gateway(Gateway&&) noexcept = default;
Gateway& Gateway::operator=(Gateway&&) noexcept = default;

bool Gateway::is_mock() const {
    return impl_->script.has_value();
}

ChatResponse Gateway::chat(const ProviderConfig& cfg, const ChatRequest& req) {
    validate_request(req);
    impl_->record(req);
    GateGuard guard(impl_->gate_for(cfg));
    if (impl_->script) {
        return impl_->mock_chat(req);
    }
    return impl_->live_chat(cfg, req);
}

std::vector<EmbeddingVector> Gateway::embed(const ProviderConfig& cfg,
                                            const std::vector<std::string>& texts) {
    if (texts.empty()) {
        throw EmptyInput("embed: no texts");
    }
    for (const auto& t : texts) {
        if (t.empty()) {
            throw DomainError("embed: empty text");
        }
    }
    GateGuard guard(impl_->gate_for(cfg));
    if (impl_->script) {
        return impl_->mock_embed(texts);
    }
    std::vector<std::string> inputs;
    inputs.reserve(texts.size());
    for (const auto& t : texts) {
        inputs.push_back(cfg.embed_instruction.empty() ? t
                                                       : cfg.embed_instruction + "\n" + t);
    }
    return impl_->live_embed(cfg, inputs);
}

int Gateway::peak_in_flight() const {
    std::lock_guard lock(impl_->gates_mutex);
    int peak = 0;
    for (const auto& [_, gate] : impl_->gates) {
        peak = std::max(peak, gate->peak());
    }
    return peak;
}

void Gateway::enable_recording(bool on) {
    std::lock_guard lock(impl_->record_mutex);
    impl_->recording = on;
}

std::vector<ChatRequest> Gateway::recorded_requests() const {
    std::lock_guard lock(impl_->record_mutex);
    return impl_->recorded;
}

} // namespace confcal
