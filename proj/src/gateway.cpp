#include "templar/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <semaphore>
#include <thread>

#include "templar/corpus.hpp"
#include "templar/digest.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace templar {

std::string role_name(Role role) {
    switch (role) {
        case Role::Constructor: return "constructor";
        case Role::Answerer: return "answerer";
        case Role::Feedback: return "feedback";
        case Role::Updater: return "updater";
    }
    throw std::logic_error("unreachable role");
}

double default_temperature(Role role) {
    switch (role) {
        case Role::Answerer:
        case Role::Updater: return 0.0;
        case Role::Constructor:
        case Role::Feedback: return 0.3;
    }
    throw std::logic_error("unreachable role");
}

// ---- MockBackend ------------------------------------------------------------

std::unique_ptr<MockBackend> MockBackend::from_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("mock script: cannot read " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("mock script " + path + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw ParseError("mock script " + path + ": expected a JSON object");

    auto mock = std::make_unique<MockBackend>();
    const bool structured = j.contains("responses") || j.contains("rules");
    if (!structured || j.contains("responses")) {
        const Json& responses = structured ? j.at("responses") : j;
        if (!responses.is_object()) {
            throw ParseError("mock script " + path + ": \"responses\" must be an object");
        }
        for (const auto& [digest, text] : responses.items()) {
            if (!text.is_string()) {
                throw ParseError("mock script " + path + ": response for " + digest +
                                 " must be a string");
            }
            mock->add_digest(digest, text.get<std::string>());
        }
    }
    if (structured && j.contains("rules")) {
        if (!j.at("rules").is_array()) {
            throw ParseError("mock script " + path + ": \"rules\" must be an array");
        }
        size_t idx = 0;
        for (const auto& rule : j.at("rules")) {
            const std::string where = "mock script rules[" + std::to_string(idx) + "]";
            std::vector<std::string> contains;
            if (rule.contains("contains")) {
                if (rule.at("contains").is_string()) {
                    contains.push_back(rule.at("contains").get<std::string>());
                } else {
                    contains = require_string_array(rule, "contains", where);
                }
            }
            mock->add_rule(std::move(contains), require_string(rule, "response", where));
            ++idx;
        }
    }
    return mock;
}

void MockBackend::add_exact(const std::string& prompt, std::string response) {
    by_digest_[sha256_hex(prompt)] = std::move(response);
}

void MockBackend::add_digest(std::string digest, std::string response) {
    by_digest_[std::move(digest)] = std::move(response);
}

void MockBackend::add_rule(std::vector<std::string> contains, std::string response) {
    rules_.push_back({std::move(contains), std::move(response)});
}

std::string MockBackend::complete_raw(const CompletionRequest& request) {
    const auto it = by_digest_.find(sha256_hex(request.prompt));
    if (it != by_digest_.end()) return it->second;
    for (const auto& rule : rules_) {
        bool all = true;
        for (const auto& needle : rule.contains) {
            if (request.prompt.find(needle) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (all) return rule.response;
    }
    throw std::runtime_error("mock backend: no scripted response for this prompt (role " +
                             role_name(request.role) + ")");
}

// ---- HttpBackend ------------------------------------------------------------

namespace {

// Splits "scheme://host[:port]/path" into the client base and the path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos) {
        throw std::invalid_argument("endpoint must be an absolute URL: " + endpoint);
    }
    const size_t path_start = endpoint.find('/', scheme + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

TransportFn default_http_transport() {
    return [](const BackendConfig& config, const std::string& payload) -> HttpResponse {
        const auto [base, path] = split_endpoint(config.endpoint);
        httplib::Client client(base);
        client.set_connection_timeout(std::chrono::duration<double>(config.timeout_seconds));
        client.set_read_timeout(std::chrono::duration<double>(config.timeout_seconds));
        httplib::Headers headers;
        if (!config.auth_env.empty()) {
            const char* token = std::getenv(config.auth_env.c_str());
            headers.emplace("Authorization", std::string("Bearer ") + (token ? token : ""));
        }
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            throw TransportError("transport failure calling " + config.endpoint + ": " +
                                 httplib::to_string(res.error()));
        }
        return {res->status, res->body};
    };
}

HttpBackend::HttpBackend(BackendConfig config, TransportFn transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

std::string HttpBackend::complete_raw(const CompletionRequest& request) {
    if (!config_.auth_env.empty() && std::getenv(config_.auth_env.c_str()) == nullptr) {
        throw std::runtime_error("auth missing: environment variable " + config_.auth_env +
                                 " is not set for backend " + config_.backend_id);
    }
    Json payload;
    payload["model"] = config_.model;
    payload["messages"] = Json::array({Json{{"role", "user"}, {"content", request.prompt}}});
    payload["max_tokens"] = request.max_output_tokens;
    payload["temperature"] = request.temperature;

    const HttpResponse res = transport_(config_, payload.dump());
    if (res.status == 429 || res.status >= 500) {
        throw TransportError("backend " + config_.backend_id + " returned status " +
                             std::to_string(res.status));
    }
    if (res.status != 200) {
        throw std::runtime_error("backend " + config_.backend_id + " returned status " +
                                 std::to_string(res.status) + ": " + res.body);
    }
    Json body;
    try {
        body = Json::parse(res.body);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("backend " + config_.backend_id +
                                 " returned unparseable body: " + e.what());
    }
    if (!body.contains("choices") || !body.at("choices").is_array() || body.at("choices").empty()) {
        throw std::runtime_error("backend " + config_.backend_id + " response has no choices");
    }
    const Json& message = body.at("choices").at(0).at("message");
    return message.at("content").get<std::string>();
}

// ---- Gateway ----------------------------------------------------------------

struct Gateway::Entry {
    BackendConfig config;
    std::unique_ptr<Backend> backend;
    std::counting_semaphore<> slots;

    Entry(BackendConfig cfg, std::unique_ptr<Backend> b)
        : config(std::move(cfg)), backend(std::move(b)), slots(config.parallelism) {}
};

Gateway::Gateway() = default;
Gateway::~Gateway() = default;

void Gateway::register_backend(BackendConfig config, std::unique_ptr<Backend> backend) {
    if (config.backend_id.empty()) throw std::invalid_argument("backend_id must be non-empty");
    if (config.parallelism < 1) throw std::invalid_argument("parallelism limit must be >= 1");
    if (config.max_retries < 0) throw std::invalid_argument("max retries must be >= 0");
    const std::string id = config.backend_id;
    backends_[id] = std::make_unique<Entry>(std::move(config), std::move(backend));
}

bool Gateway::has_backend(const std::string& backend_id) const {
    return backends_.count(backend_id) > 0;
}

const BackendConfig& Gateway::config(const std::string& backend_id) const {
    const auto it = backends_.find(backend_id);
    if (it == backends_.end()) throw std::invalid_argument("unknown backend: " + backend_id);
    return it->second->config;
}

std::string Gateway::complete(const CompletionRequest& request) {
    return complete_detailed(request).text;
}

CompletionOutcome Gateway::complete_detailed(const CompletionRequest& request) {
    const auto it = backends_.find(request.backend_id);
    if (it == backends_.end()) {
        throw std::invalid_argument("unknown backend: " + request.backend_id);
    }
    Entry& entry = *it->second;

    const long estimated = estimate_tokens(request.prompt);
    if (estimated > entry.config.context_limit_tokens) {
        {
            std::lock_guard lock(telemetry_mutex_);
            ++telemetry_.rejections;
        }
        throw ContextLimitError("prompt estimate " + std::to_string(estimated) +
                                " tokens exceeds limit " +
                                std::to_string(entry.config.context_limit_tokens) +
                                " of backend " + request.backend_id);
    }

    entry.slots.acquire();
    struct Release {
        std::counting_semaphore<>& sem;
        ~Release() { sem.release(); }
    } release{entry.slots};

    CompletionOutcome outcome;
    for (int attempt = 0;; ++attempt) {
        outcome.attempts = attempt + 1;
        try {
            outcome.text = entry.backend->complete_raw(request);
            break;
        } catch (const TransportError&) {
            if (attempt >= entry.config.max_retries) throw;
            outcome.retries = attempt + 1;
            std::this_thread::sleep_for(retry_base_delay_ * (1L << attempt));
        }
    }
    {
        std::lock_guard lock(telemetry_mutex_);
        ++telemetry_.completions;
        telemetry_.retries += outcome.retries;
    }
    return outcome;
}

GatewayTelemetry Gateway::telemetry() const {
    std::lock_guard lock(telemetry_mutex_);
    return telemetry_;
}

// ---- Structured output -------------------------------------------------------

Json parse_json_payload(const std::string& raw_text) {
    for (size_t start = raw_text.find('{'); start != std::string::npos;
         start = raw_text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (size_t i = start; i < raw_text.size(); ++i) {
            const char c = raw_text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                --depth;
                if (depth == 0) {
                    try {
                        return Json::parse(raw_text.substr(start, i - start + 1));
                    } catch (const nlohmann::json::parse_error&) {
                        break;  // not valid JSON; try the next opening brace
                    }
                }
            }
        }
    }
    throw ParseError("no balanced JSON object found in model output");
}

StructuredOutcome complete_structured(Gateway& gateway, CompletionRequest request,
                                      int max_reprompts) {
    StructuredOutcome outcome;
    for (int round = 0; round <= max_reprompts; ++round) {
        ++outcome.prompts_sent;
        const std::string raw = gateway.complete(request);
        try {
            outcome.value = parse_json_payload(raw);
            return outcome;
        } catch (const ParseError& e) {
            outcome.last_error = e.what();
            request.prompt += "\n\nYour previous output was not valid JSON.";
        }
    }
    return outcome;
}

}  // namespace templar
