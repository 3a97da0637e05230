#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pentagent/common.hpp"

namespace pentagent::llm {

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.0;  // in [0, 1]
  int max_output_tokens = 1024;
  std::string role_hint;  // system-role preamble
};

struct Completion {
  std::string text;
  int input_tokens = 0;
  int output_tokens = 0;
  long long latency_ms = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Completion complete(const CompletionRequest& request) = 0;
  virtual int context_limit() const = 0;
  virtual std::string describe() const = 0;
};

/// One canned response. Rules are evaluated in declaration order and the
/// first rule whose match_substring occurs in the prompt (and still has
/// uses left) wins. max_uses < 0 means unlimited.
struct ScriptedRule {
  std::string match_substring;
  std::string response;
  int max_uses = -1;
};

/// Deterministic stand-in for the live model: same script plus the same
/// prompt sequence always yields the same completion sequence.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptedRule> rules, int context_limit = 128000);

  /// Loads a JSON array of {match, response, max_uses?} objects.
  static ScriptedBackend from_file(const std::filesystem::path& path);

  Completion complete(const CompletionRequest& request) override;
  int context_limit() const override { return context_limit_; }
  std::string describe() const override { return "mock"; }

 private:
  struct RuleState {
    ScriptedRule rule;
    int uses = 0;
  };
  std::vector<RuleState> rules_;
  int context_limit_;
};

struct RestConfig {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4-turbo-preview";
  std::string api_key_env = "PENTAGENT_API_KEY";
  int context_limit = 128000;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
};

/// Chat-completion client: POSTs {model, messages[system,user], temperature,
/// max_tokens} and reads the first choice's message content. The credential
/// is taken from the environment variable named in the config.
class RestBackend final : public Backend {
 public:
  explicit RestBackend(RestConfig config);

  Completion complete(const CompletionRequest& request) override;
  int context_limit() const override { return config_.context_limit; }
  std::string describe() const override { return "rest"; }

 private:
  RestConfig config_;
};

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_base_ms = 1000;  // 1s, then 2s, then 4s...
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
using CompletionObserver =
    std::function<void(const CompletionRequest&, const Completion&)>;

/// Single point of contact with the model. Refuses oversized requests before
/// any network activity and retries transient transport failures with
/// exponential backoff. At most one completion is in flight per engine run.
class Gateway {
 public:
  Gateway(Backend& backend, RetryPolicy retry = {},
          TokenCounter counter = default_token_counter());

  Completion complete(const CompletionRequest& request);

  void set_observer(CompletionObserver observer) { observer_ = std::move(observer); }
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }
  Backend& backend() { return backend_; }

 private:
  Backend& backend_;
  RetryPolicy retry_;
  TokenCounter counter_;
  Sleeper sleeper_;
  CompletionObserver observer_;
};

/// Result of stripping model chatter from a command reply. nullopt means
/// nothing command-like survived (the model answered in prose only).
std::optional<std::string> clean_command_output(const std::string& raw);

/// Extracts the first JSON array embedded in `raw`, tolerating fenced blocks
/// and prose around the brackets. Throws GatewayError when no array parses.
nlohmann::json extract_json_array(const std::string& raw);

/// As extract_json_array, but requires every element to be a string.
std::vector<std::string> parse_json_array(const std::string& raw);

std::string serialize_json_array(const std::vector<std::string>& items);

}  // namespace pentagent::llm
