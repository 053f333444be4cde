#pragma once
// Uniform completion interface over language-model backends: a deterministic
// scripted mock, a chat-completions HTTP adapter, retry/backoff and
// parallelism limiting, prompt rendering, and tolerant JSON extraction.

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "templar/core.hpp"
#include "templar/json_io.hpp"

namespace templar {

// The four model roles of the template lifecycle.
enum class Role { Constructor, Answerer, Feedback, Updater };

std::string role_name(Role role);

// Answering and editing run greedy; construction and feedback keep mild
// diversity. Overridable per request.
double default_temperature(Role role);

struct CompletionRequest {
    Role role = Role::Answerer;
    std::string prompt;
    int max_output_tokens = 4096;
    double temperature = 0.0;
    std::string backend_id;
};

struct BackendConfig {
    std::string backend_id;
    std::string endpoint;          // chat-completions URL, e.g. http://host:8080/v1/chat/completions
    std::string model;
    std::string auth_env;          // name of the env var holding the credential; empty = none
    double timeout_seconds = 60.0;
    int max_retries = 2;
    int parallelism = 4;           // in-flight request cap
    long context_limit_tokens = 128000;
};

// Transient transport failure; the gateway retries these.
class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

// Prompt estimated over the backend's context limit; rejected before sending.
class ContextLimitError : public std::runtime_error {
public:
    explicit ContextLimitError(const std::string& what) : std::runtime_error(what) {}
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete_raw(const CompletionRequest& request) = 0;
};

// Scripted backend: exact responses keyed by SHA-256 of the prompt, plus
// substring rules checked in order (a rule may require several substrings;
// an empty rule matches everything). Read-only after construction.
class MockBackend : public Backend {
public:
    MockBackend() = default;

    // Script file: {"responses": {digest: text}, "rules": [{"contains":
    // "needle" | [...], "response": text}]}. A bare top-level map is treated
    // as the digest map.
    static std::unique_ptr<MockBackend> from_script(const std::string& path);

    void add_exact(const std::string& prompt, std::string response);
    void add_digest(std::string digest, std::string response);
    void add_rule(std::vector<std::string> contains, std::string response);

    std::string complete_raw(const CompletionRequest& request) override;

private:
    struct Rule {
        std::vector<std::string> contains;
        std::string response;
    };
    std::map<std::string, std::string> by_digest_;
    std::vector<Rule> rules_;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

// Pluggable wire layer so tests can inject faults; throws TransportError on
// connection-level failure.
using TransportFn = std::function<HttpResponse(const BackendConfig&, const std::string& payload)>;

TransportFn default_http_transport();

// Chat-completions adapter: POST {model, messages, max_tokens, temperature},
// read choices[0].message.content.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config, TransportFn transport = default_http_transport());

    std::string complete_raw(const CompletionRequest& request) override;

private:
    BackendConfig config_;
    TransportFn transport_;
};

struct CompletionOutcome {
    std::string text;
    int attempts = 1;
    int retries = 0;
};

struct GatewayTelemetry {
    long completions = 0;
    long retries = 0;
    long rejections = 0;
};

// Owns the configured backends. complete() is safe from many threads; a
// per-backend semaphore caps in-flight requests at the configured limit.
class Gateway {
public:
    Gateway();
    ~Gateway();

    void register_backend(BackendConfig config, std::unique_ptr<Backend> backend);
    bool has_backend(const std::string& backend_id) const;
    const BackendConfig& config(const std::string& backend_id) const;

    std::string complete(const CompletionRequest& request);
    CompletionOutcome complete_detailed(const CompletionRequest& request);

    GatewayTelemetry telemetry() const;

    // Base delay of the exponential backoff (tests shrink it).
    void set_retry_base_delay(std::chrono::milliseconds delay) { retry_base_delay_ = delay; }

private:
    struct Entry;
    std::map<std::string, std::unique_ptr<Entry>> backends_;
    std::chrono::milliseconds retry_base_delay_{250};
    mutable std::mutex telemetry_mutex_;
    GatewayTelemetry telemetry_;
};

// ---- Prompt rendering -----------------------------------------------------

struct FailedCase {
    std::string query;
    std::string trace;
    std::string gold;
    std::string prediction;
    double metric = 0.0;
};

// The training example a template was distilled from; shown to the feedback
// and edit models as "Failed Case Source".
struct SourceCase {
    std::string problem;
    std::string solution_block;
    std::string answer;
};

// All three renderers are pure: same inputs, same bytes.
std::string render_construction_prompt(const std::string& problem,
                                       const std::optional<std::string>& solution,
                                       const std::string& answer);
std::string render_feedback_prompt(const ThoughtTemplate& t,
                                   const std::vector<FailedCase>& failed_cases,
                                   const SourceCase& source);
std::string render_edit_prompt(const ThoughtTemplate& t,
                               const std::vector<FailedCase>& failed_cases,
                               const SourceCase& source, const std::string& feedback_text);

// Metric rendering inside prompts: trimmed decimal, at least one fractional
// digit ("0.0", "0.5", "0.3333").
std::string format_metric(double value);

// Extracts the first balanced top-level JSON object from model output,
// ignoring code fences and surrounding prose. Throws ParseError if none.
Json parse_json_payload(const std::string& raw_text);

// Completion + JSON extraction with the re-prompt policy: on parse failure
// the prompt is re-sent (up to max_reprompts times) with a trailing notice
// that the previous output was not valid JSON. nullopt after exhaustion.
struct StructuredOutcome {
    std::optional<Json> value;
    int prompts_sent = 0;
    std::string last_error;
};

StructuredOutcome complete_structured(Gateway& gateway, CompletionRequest request,
                                      int max_reprompts = 2);

}  // namespace templar
