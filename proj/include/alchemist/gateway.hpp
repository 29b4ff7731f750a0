#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace alchemist {

struct ChatTurn {
    std::string role;  // "user" | "assistant"
    std::string content;
};

struct ChatRequest {
    std::optional<std::string> system;
    std::vector<ChatTurn> turns;  // last turn role must be "user"
    double temperature = 0.0;
    long max_output = 1024;
    std::string tag = "alchemist";  // alchemist | evolve | review | judge
};

/// Convenience: single user turn with the given tag.
ChatRequest simple_request(const std::string& user_content, const std::string& tag,
                           double temperature = 0.0);

struct TokenLogprobs {
    std::vector<std::string> tokens;
    std::vector<double> logprobs;  // natural logs, same length as tokens
    size_t boundary = 0;           // tokens[0..boundary) prefix, rest continuation
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string id() const = 0;
    virtual std::string complete(const ChatRequest& request) = 0;
    /// Scores prefix ⊕ continuation; boundary sits at the split. Throws
    /// NoLogprobSupport when the provider cannot produce logprobs.
    virtual TokenLogprobs score_logprobs(const std::string& prefix,
                                         const std::string& continuation) = 0;
};

/// Offline provider with deterministic per-tag behavior, so full pipeline runs
/// are byte-reproducible without network access. Responses derive from a hash
/// of the request content; scripted responses and injected failures take
/// precedence, in FIFO order.
class MockProvider : public Provider {
public:
    std::string id() const override { return "mock"; }
    std::string complete(const ChatRequest& request) override;
    TokenLogprobs score_logprobs(const std::string& prefix,
                                 const std::string& continuation) override;

    void script_response(const std::string& text);
    void fail_transient(int next_failures);
    /// Uniform-vocabulary mode (default): every token logprob is ln(1/vocab).
    void set_uniform_vocab(long vocab);
    /// Scripted scoring: tokens before the boundary get ln(p_prefix); tokens
    /// after it get ln(p_alone) when the prefix is empty, ln(p_conditioned)
    /// otherwise.
    void set_logprob_rule(double p_alone, double p_conditioned, double p_prefix = 0.5);
    void set_latency_ms(int ms) { latency_ms_ = ms; }

    long call_count() const { return calls_.load(); }
    long logprob_calls() const { return logprob_calls_.load(); }
    int max_in_flight() const { return max_in_flight_.load(); }
    /// Last-user-turn content of every complete() call, in order.
    std::vector<std::string> request_log() const;

private:
    std::string default_completion(const ChatRequest& request);

    mutable std::mutex mutex_;
    std::deque<std::string> scripted_;
    std::vector<std::string> request_log_;
    int pending_failures_ = 0;
    long vocab_ = 100;
    bool rule_mode_ = false;
    double p_alone_ = 0.5, p_conditioned_ = 0.5, p_prefix_ = 0.5;
    int latency_ms_ = 0;
    std::atomic<long> calls_{0};
    std::atomic<long> logprob_calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

struct HttpProviderConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8089/v1/chat/completions
    std::string model;
    std::string api_key_env = "ALCHEMIST_API_KEY";
    double timeout_seconds = 30.0;
};

/// Chat-completions-style HTTP provider. POST {model, messages, temperature,
/// max_tokens, logprobs?}; bearer token read from the configured environment
/// variable at call time.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config);
    std::string id() const override;
    std::string complete(const ChatRequest& request) override;
    TokenLogprobs score_logprobs(const std::string& prefix,
                                 const std::string& continuation) override;

private:
    std::string post(const std::string& body);
    HttpProviderConfig config_;
    std::string host_;
    int port_ = 80;
    std::string path_;
};

/// Request/response codecs, exposed for tests against a local server.
std::string build_chat_body(const ChatRequest& request, const std::string& model);
std::string build_logprob_body(const std::string& prefix, const std::string& continuation,
                               const std::string& model);
std::string parse_chat_response(const std::string& body);
TokenLogprobs parse_logprob_response(const std::string& body);

struct GatewayConfig {
    std::filesystem::path cache_dir;  // empty: in-memory cache only
    int max_retries = 3;              // retries after the first attempt
    double backoff_initial_seconds = 0.05;
    double backoff_max_seconds = 2.0;
    long request_budget = -1;  // provider calls allowed; -1 = unlimited; cache hits are free
    int max_in_flight = 4;
};

/// Thread-safe front door for providers: content-hash cache (memory plus
/// optional JSONL disk namespaces per tag), bounded exponential-backoff retry
/// on transient failures, a provider-call budget, and a concurrent in-flight
/// cap.
class Gateway {
public:
    explicit Gateway(std::shared_ptr<Provider> provider, GatewayConfig config = {});

    std::string complete(const ChatRequest& request);
    TokenLogprobs score_logprobs(const std::string& prefix, const std::string& continuation);

    long provider_calls() const { return provider_calls_.load(); }
    long cache_hits() const { return cache_hits_.load(); }

private:
    std::string cache_lookup(const std::string& ns, uint64_t key);
    void cache_store(const std::string& ns, uint64_t key, const std::string& value);
    void charge_budget();
    template <typename Fn>
    auto with_retries(Fn&& fn) -> decltype(fn());

    std::shared_ptr<Provider> provider_;
    GatewayConfig config_;
    std::mutex cache_mutex_;
    std::map<std::string, std::map<uint64_t, std::string>> cache_;
    std::mutex gate_mutex_;
    std::condition_variable gate_cv_;
    int active_ = 0;
    std::atomic<long> provider_calls_{0};
    std::atomic<long> cache_hits_{0};
};

}  // namespace alchemist
