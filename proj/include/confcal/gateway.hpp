#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "confcal/embedding.hpp"

namespace confcal {

enum class FinishReason {
    stop,
    length,
    error,
};

struct ChatRequest {
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 0.0;
    int max_tokens = 512;
    std::string model_id;
    // Distinguishes repeated draws of the same prompt. Folded into the
    // fingerprint but never sent on the wire; live providers resample
    // naturally, the mock provider scripts each draw separately.
    int sample_index = 0;
};

struct ChatResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
};

struct ProviderConfig {
    std::string base_url;
    std::string api_key_env;          // name of the env var holding the key; empty = no auth
    int timeout_ms = 30000;           // per-attempt budget
    int max_retries = 3;              // retries on 429/5xx/transport errors
    int max_in_flight = 4;
    std::string chat_path = "/v1/chat/completions";
    std::string embeddings_path = "/v1/embeddings";
    std::string model_id;             // default model for this provider role
    std::string embed_model;
    // Instruction handed to instruction-tuned embedders; prepended to each
    // input text when non-empty.
    std::string embed_instruction = "Represent the answer with its reasoning for semantic clustering:";
    int backoff_base_ms = 500;        // exponential backoff base, factor 2, jitter +-20%
};

/// Canned replies keyed by request fingerprint. Lookups are total: unmatched
/// fingerprints produce a seeded, reproducible fallback reply.
struct MockScript {
    std::map<std::string, std::string> entries;
    std::uint64_t default_embedding_seed = 0;
    std::size_t embedding_dim = 32;
    int latency_ms = 0; // artificial per-call delay, for concurrency tests
};

MockScript load_mock_script(const std::string& path);

/// Stable content digest over every request field; 64 hex chars.
std::string fingerprint(const ChatRequest& req);

/// Uniform access to chat-completion and embedding providers. A single
/// handle may be shared across threads; per-provider admission gates cap the
/// number of in-flight requests at ProviderConfig::max_in_flight.
class Gateway {
public:
    Gateway();                         // live HTTP gateway
    explicit Gateway(MockScript script); // deterministic offline gateway
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;
    Gateway(Gateway&&) noexcept;
    Gateway& operator=(Gateway&&) noexcept;

    ChatResponse chat(const ProviderConfig& cfg, const ChatRequest& req);
    std::vector<EmbeddingVector> embed(const ProviderConfig& cfg,
                                       const std::vector<std::string>& texts);

    bool is_mock() const;

    /// Highest number of simultaneously in-flight requests observed.
    int peak_in_flight() const;

    /// When enabled, every chat request is captured for later inspection
    /// (used to assemble fully scripted fixtures).
    void enable_recording(bool on = true);
    std::vector<ChatRequest> recorded_requests() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace confcal
