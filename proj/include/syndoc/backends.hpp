// Generative backends behind one interface: scripted mock, echo oracle,
// rule-based simulator, and an HTTP client. complete() adds bounded retries
// with exponential backoff, an in-flight cap, and a per-backend min interval.
#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "syndoc/hash.hpp"
#include "syndoc/prompts.hpp"
#include "syndoc/text.hpp"

namespace syndoc {

class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

struct BackendReply {
  std::string raw_text;
  double latency_s = 0.0;
  std::string backend_id;
  int attempts = 1;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  // One attempt; throws TransportError on failure.
  virtual std::string generate(const PromptState& state, const PromptPayload& payload) = 0;
};

struct RetryPolicy {
  int budget = 3;         // total attempts
  double backoff_base_s = 1.0;
};

struct GatewayLimits {
  int max_in_flight = 4;
  double min_interval_s = 0.0;
};

namespace detail {

class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

}  // namespace detail

// Serializes rate limiting and caps concurrent requests. Replies are
// returned by value and safe to share.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, RetryPolicy retry = {},
                   GatewayLimits limits = {})
      : backend_(std::move(backend)),
        retry_(retry),
        limits_(limits),
        slots_(limits.max_in_flight > 0 ? limits.max_in_flight : 1) {
    if (!backend_) throw std::invalid_argument("Gateway: null backend");
    if (retry_.budget < 1) throw std::invalid_argument("Gateway: retry budget < 1");
  }

  Backend& backend() { return *backend_; }

  BackendReply complete(const PromptState& state) {
    const PromptPayload payload = render_prompt(state);
    slots_.acquire();
    struct Release {
      detail::Semaphore* s;
      ~Release() { s->release(); }
    } release{&slots_};

    pace();
    const auto start = std::chrono::steady_clock::now();
    std::string last_error;
    for (int attempt = 1; attempt <= retry_.budget; ++attempt) {
      try {
        std::string text = backend_->generate(state, payload);
        BackendReply reply;
        reply.raw_text = std::move(text);
        reply.backend_id = backend_->id();
        reply.attempts = attempt;
        reply.latency_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return reply;
      } catch (const TransportError& e) {
        last_error = e.what();
        if (attempt < retry_.budget && retry_.backoff_base_s > 0.0) {
          const double delay = retry_.backoff_base_s * static_cast<double>(1 << (attempt - 1));
          std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
      }
    }
    throw TransportError("backend '" + backend_->id() + "' failed after " +
                         std::to_string(retry_.budget) + " attempts: " + last_error);
  }

 private:
  void pace() {
    if (limits_.min_interval_s <= 0.0) return;
    std::lock_guard<std::mutex> lock(pace_mu_);
    const auto now = std::chrono::steady_clock::now();
    if (last_request_) {
      const auto earliest =
          *last_request_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                               std::chrono::duration<double>(limits_.min_interval_s));
      if (now < earliest) std::this_thread::sleep_until(earliest);
    }
    last_request_ = std::chrono::steady_clock::now();
  }

  std::shared_ptr<Backend> backend_;
  RetryPolicy retry_;
  GatewayLimits limits_;
  detail::Semaphore slots_;
  std::mutex pace_mu_;
  std::optional<std::chrono::steady_clock::time_point> last_request_;
};

// Scripted mock: replies keyed by "template_id:payload_digest", with a
// "template_id:*" wildcard fallback. An entry may fail its first N calls to
// exercise the retry path. Identical payloads always get identical replies.
class ScriptBackend : public Backend {
 public:
  struct Entry {
    std::string reply;
    int fail_first_n = 0;
  };

  explicit ScriptBackend(std::map<std::string, Entry> script) : script_(std::move(script)) {}

  static std::shared_ptr<ScriptBackend> from_json(const nlohmann::json& j) {
    std::map<std::string, Entry> script;
    for (const auto& [key, value] : j.items()) {
      Entry e;
      if (value.is_string()) {
        e.reply = value.get<std::string>();
      } else {
        e.reply = value.at("reply").get<std::string>();
        e.fail_first_n = value.value("fail_first_n", 0);
      }
      script.emplace(key, std::move(e));
    }
    return std::make_shared<ScriptBackend>(std::move(script));
  }

  static std::shared_ptr<ScriptBackend> from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ScriptBackend: cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  std::string id() const override { return "script"; }

  std::string generate(const PromptState& state, const PromptPayload&) override {
    const std::string exact = state.template_id + ":" + payload_digest(state);
    const std::string wildcard = state.template_id + ":*";
    std::lock_guard<std::mutex> lock(mu_);
    auto it = script_.find(exact);
    if (it == script_.end()) it = script_.find(wildcard);
    if (it == script_.end()) {
      throw TransportError("ScriptBackend: no entry for " + exact);
    }
    const int count = ++calls_[it->first];
    if (count <= it->second.fail_first_n) {
      throw TransportError("ScriptBackend: scripted failure " + std::to_string(count) +
                           "/" + std::to_string(it->second.fail_first_n));
    }
    return it->second.reply;
  }

 private:
  std::map<std::string, Entry> script_;
  std::map<std::string, int> calls_;
  std::mutex mu_;
};

// Echo oracle: answers with the first tip verbatim; hint-free prompts get a
// fixed fallback. Drives the convergence fixed-point tests.
class EchoBackend : public Backend {
 public:
  explicit EchoBackend(std::string vanilla_reply = "unknown")
      : vanilla_reply_(std::move(vanilla_reply)) {}

  std::string id() const override { return "echo"; }

  std::string generate(const PromptState& state, const PromptPayload&) override {
    if (!state.tips.empty()) return "Answer: " + state.tips.front();
    return "Answer: " + vanilla_reply_;
  }

 private:
  std::string vanilla_reply_;
};

// Rule-based simulator: a deterministic stand-in realistic enough to run
// the full pipeline. Generation reads the context lines, verification gates
// by payload digest, QA prefers the first tip.
struct SimConfig {
  double meaningful_yes_rate = 1.0;
  double consistent_yes_rate = 1.0;
};

class SimBackend : public Backend {
 public:
  using Config = SimConfig;

  explicit SimBackend(Config config = {}) : config_(config) {}

  std::string id() const override { return "sim"; }

  std::string generate(const PromptState& state, const PromptPayload&) override {
    const std::string& tid = state.template_id;
    if (tid == "gen_semantic") return gen_semantic(state);
    if (tid == "gen_spatial") {
      return "Where is the answer of '" + slot(state, "question") + "' located?";
    }
    if (tid == "verify_user_input") {
      // Label text ("Invoice Number:") is form structure, not user input.
      const std::string target = std::string(trim(slot(state, "target")));
      if (!target.empty() && target.back() == ':') {
        return "{'Response': 'No', 'Explanation': 'label, not a filled value'}";
      }
      return verdict(state, config_.meaningful_yes_rate);
    }
    if (tid == "verify_answer") {
      // A question that quotes its own answer cannot be answered from it.
      const std::string answer = slot(state, "answer");
      if (!answer.empty() && slot(state, "question").find(answer) != std::string::npos) {
        return "{'Response': 'No', 'Explanation': 'question restates the answer'}";
      }
      return verdict(state, config_.consistent_yes_rate);
    }
    return answer_qa(state);
  }

 private:
  static std::string slot(const PromptState& state, const std::string& name) {
    const auto it = state.slots.find(name);
    return it == state.slots.end() ? std::string() : it->second;
  }

  static std::vector<std::string> context_lines(const PromptState& state) {
    std::vector<std::string> lines;
    const std::string ctx = slot(state, "context");
    std::size_t start = 0;
    while (start <= ctx.size()) {
      std::size_t end = ctx.find('\n', start);
      if (end == std::string::npos) end = ctx.size();
      std::string line = std::string(trim(std::string_view(ctx).substr(start, end - start)));
      if (!line.empty()) lines.push_back(std::move(line));
      start = end + 1;
      if (end == ctx.size()) break;
    }
    return lines;
  }

  // Question for a target value: name it by the preceding context line,
  // which in form-like documents is its label.
  std::string gen_semantic(const PromptState& state) const {
    const std::string target = slot(state, "target");
    const std::vector<std::string> lines = context_lines(state);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i] == target && i > 0) {
        std::string label = lines[i - 1];
        while (!label.empty() && (label.back() == ':' || label.back() == ' ')) {
          label.pop_back();
        }
        return "What is the " + label + "?";
      }
    }
    return "What is the value \"" + target + "\"?";
  }

  std::string verdict(const PromptState& state, double yes_rate) const {
    if (yes_rate >= 1.0) return "{'Response': 'Yes', 'Explanation': 'sim'}";
    if (yes_rate <= 0.0) return "{'Response': 'No', 'Explanation': 'sim'}";
    const std::uint64_t h = fnv1a64(payload_digest(state));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    const bool yes = u < yes_rate;
    return std::string("{'Response': '") + (yes ? "Yes" : "No") + "', 'Explanation': 'sim'}";
  }

  // QA: follow the first tip when hinted; otherwise read the form. A
  // question shaped "What is the X?" answers with the line after the label
  // "X:", which is where form values live; anything else degrades to a
  // deterministic pseudo-random context line.
  std::string answer_qa(const PromptState& state) const {
    if (!state.tips.empty()) return "Answer: " + state.tips.front();
    const std::vector<std::string> lines = context_lines(state);
    if (lines.empty()) return "Answer: unknown";
    const std::string question = slot(state, "question");
    static const std::string prefix = "What is the ";
    if (question.size() > prefix.size() + 1 && question.rfind(prefix, 0) == 0 &&
        question.back() == '?') {
      const std::string key = question.substr(prefix.size(), question.size() - prefix.size() - 1);
      for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
        std::string label = lines[i];
        while (!label.empty() && (label.back() == ':' || label.back() == ' ')) {
          label.pop_back();
        }
        if (label == key) return "Answer: " + lines[i + 1];
      }
    }
    const std::uint64_t h = fnv1a64(question);
    return "Answer: " + lines[h % lines.size()];
  }

  Config config_;
};

// HTTP client for a JSON completion endpoint. The credential is read from
// an environment variable at request time, never stored in config files.
class HttpBackend : public Backend {
 public:
  struct Config {
    std::string host;          // e.g. "api.example.com"
    int port = 443;
    std::string path = "/v1/complete";
    std::string model;
    std::string api_key_env = "SYNDOC_API_KEY";
    double timeout_s = 60.0;
  };

  explicit HttpBackend(Config config) : config_(std::move(config)) {
    if (config_.host.empty()) throw std::invalid_argument("HttpBackend: empty host");
  }

  std::string id() const override { return "http:" + config_.host; }

  std::string generate(const PromptState&, const PromptPayload& payload) override;

 private:
  Config config_;
};

inline std::shared_ptr<Backend> make_backend(const std::string& name,
                                             const nlohmann::json& options) {
  if (name == "echo") {
    return std::make_shared<EchoBackend>(options.value("vanilla_reply", std::string("unknown")));
  }
  if (name == "sim") {
    SimBackend::Config c;
    c.meaningful_yes_rate = options.value("meaningful_yes_rate", 1.0);
    c.consistent_yes_rate = options.value("consistent_yes_rate", 1.0);
    return std::make_shared<SimBackend>(c);
  }
  if (name == "script") {
    if (options.contains("script_file")) {
      return ScriptBackend::from_file(options.at("script_file").get<std::string>());
    }
    return ScriptBackend::from_json(options.value("script", nlohmann::json::object()));
  }
  if (name == "http") {
    HttpBackend::Config c;
    c.host = options.value("host", std::string());
    c.port = options.value("port", 443);
    c.path = options.value("path", std::string("/v1/complete"));
    c.model = options.value("model", std::string());
    c.api_key_env = options.value("api_key_env", std::string("SYNDOC_API_KEY"));
    c.timeout_s = options.value("timeout_s", 60.0);
    return std::make_shared<HttpBackend>(std::move(c));
  }
  throw std::invalid_argument("unknown backend '" + name + "'");
}

}  // namespace syndoc

// httplib pulls in heavy platform headers; keep it out of the common path.
#ifdef SYNDOC_ENABLE_HTTP
#include <httplib.h>

namespace syndoc {

inline std::string HttpBackend::generate(const PromptState&, const PromptPayload& payload) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw TransportError("HttpBackend: environment variable " + config_.api_key_env +
                         " is not set");
  }
  nlohmann::json body{{"model", config_.model},
                      {"prompt", payload.text},
                      {"temperature", 0.0}};
  if (payload.image_ref) body["image_path"] = *payload.image_ref;

  httplib::SSLClient client(config_.host, config_.port);
  client.set_read_timeout(std::chrono::duration<double>(config_.timeout_s));
  httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("HttpBackend: connection failed to " + config_.host);
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("HttpBackend: retryable status " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw TransportError("HttpBackend: status " + std::to_string(res->status) + ": " +
                         res->body);
  }
  try {
    const nlohmann::json j = nlohmann::json::parse(res->body);
    return j.at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("HttpBackend: malformed reply: ") + e.what());
  }
}

}  // namespace syndoc
#else
namespace syndoc {

inline std::string HttpBackend::generate(const PromptState&, const PromptPayload&) {
  throw TransportError("HttpBackend: built without SYNDOC_ENABLE_HTTP");
}

}  // namespace syndoc
#endif
