#include "pentagent/llm_gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "httplib.h"

namespace pentagent::llm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules, int context_limit)
    : context_limit_(context_limit) {
  rules_.reserve(rules.size());
  for (auto& rule : rules) {
    rules_.push_back(RuleState{std::move(rule), 0});
  }
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw GatewayError("mock script not found: " + path.string());
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw GatewayError("mock script is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_array()) {
    throw GatewayError("mock script must be a JSON array of rules");
  }
  std::vector<ScriptedRule> rules;
  for (const auto& item : doc) {
    ScriptedRule rule;
    rule.match_substring = item.at("match").get<std::string>();
    rule.response = item.at("response").get<std::string>();
    rule.max_uses = item.value("max_uses", -1);
    rules.push_back(std::move(rule));
  }
  return ScriptedBackend(std::move(rules));
}

Completion ScriptedBackend::complete(const CompletionRequest& request) {
  for (auto& state : rules_) {
    if (state.rule.max_uses >= 0 && state.uses >= state.rule.max_uses) continue;
    if (request.prompt.find(state.rule.match_substring) == std::string::npos) continue;
    ++state.uses;
    Completion completion;
    completion.text = state.rule.response;
    completion.input_tokens = heuristic_token_count(request.prompt);
    completion.output_tokens = heuristic_token_count(completion.text);
    completion.latency_ms = 0;  // scripted replies are instantaneous and replay-stable
    return completion;
  }
  const std::string head = request.prompt.substr(0, 80);
  throw NoScriptRuleError("no scripted rule matches prompt starting with: " + head);
}

// ---------------------------------------------------------------------------
// RestBackend

RestBackend::RestBackend(RestConfig config) : config_(std::move(config)) {}

Completion RestBackend::complete(const CompletionRequest& request) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.connect_timeout_s, 0);
  client.set_read_timeout(config_.read_timeout_s, 0);

  json body;
  body["model"] = config_.model;
  body["messages"] = json::array();
  if (!request.role_hint.empty()) {
    body["messages"].push_back({{"role", "system"}, {"content", request.role_hint}});
  }
  body["messages"].push_back({{"role", "user"}, {"content", request.prompt}});
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto started = std::chrono::steady_clock::now();
  httplib::Result res = client.Post(config_.path, headers, body.dump(), "application/json");
  const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();

  if (!res) {
    throw TransportError("chat-completion request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("chat-completion backend returned HTTP " +
                         std::to_string(res->status));
  }

  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw GatewayError("chat-completion response is not JSON: " + std::string(e.what()));
  }
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw GatewayError("chat-completion response has no choices");
  }
  Completion completion;
  try {
    completion.text = doc["choices"][0].at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw GatewayError("chat-completion response choice has no message content");
  }
  const json usage = (doc.contains("usage") && doc["usage"].is_object()) ? doc["usage"]
                                                                         : json::object();
  completion.input_tokens = usage.value("prompt_tokens", heuristic_token_count(request.prompt));
  completion.output_tokens =
      usage.value("completion_tokens", heuristic_token_count(completion.text));
  completion.latency_ms = elapsed;
  return completion;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(Backend& backend, RetryPolicy retry, TokenCounter counter)
    : backend_(backend),
      retry_(retry),
      counter_(std::move(counter)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

Completion Gateway::complete(const CompletionRequest& request) {
  const int prompt_tokens = counter_(request.prompt) + counter_(request.role_hint);
  const int limit = backend_.context_limit();
  if (prompt_tokens + request.max_output_tokens > limit) {
    throw ContextOverflowError("request needs " + std::to_string(prompt_tokens) + " prompt + " +
                               std::to_string(request.max_output_tokens) +
                               " output tokens, over the " + std::to_string(limit) +
                               "-token context limit");
  }

  int backoff_ms = retry_.backoff_base_ms;
  for (int attempt = 1;; ++attempt) {
    try {
      Completion completion = backend_.complete(request);
      if (observer_) observer_(request, completion);
      return completion;
    } catch (const TransportError&) {
      if (attempt >= retry_.max_attempts) throw;
      sleeper_(std::chrono::milliseconds(backoff_ms));
      backoff_ms *= 2;
    }
  }
}

// ---------------------------------------------------------------------------
// Response post-processing

namespace {

// One pass of the stripping rules; clean_command_output iterates this to a
// fixed point so the result is idempotent by construction.
std::optional<std::string> clean_pass(const std::string& raw) {
  std::string s = raw;

  // Unwrap a single fenced code block, dropping the language label and any
  // prose outside the fence.
  const size_t open = s.find("```");
  if (open != std::string::npos) {
    const size_t label_end = s.find('\n', open);
    if (label_end == std::string::npos) {
      s.clear();  // opening fence with a label and no content
    } else {
      const size_t close = s.find("```", label_end);
      const size_t body_end = (close == std::string::npos) ? s.size() : close;
      s = s.substr(label_end + 1, body_end - label_end - 1);
    }
  }

  // Per line: trim, strip a leading prompt sigil plus space, and keep the
  // first line that still has content.
  for (const std::string& line : util::split_lines(s)) {
    std::string t = util::trim(line);
    while (!t.empty() && (t[0] == '$' || t[0] == '#') &&
           (t.size() == 1 || t[1] == ' ')) {
      t = util::trim(t.substr(1));
    }
    if (!t.empty()) return t;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> clean_command_output(const std::string& raw) {
  std::optional<std::string> current = clean_pass(raw);
  while (current) {
    std::optional<std::string> next = clean_pass(*current);
    if (!next || *next == *current) return next;
    current = std::move(next);
  }
  return std::nullopt;
}

nlohmann::json extract_json_array(const std::string& raw) {
  size_t pos = 0;
  while ((pos = raw.find('[', pos)) != std::string::npos) {
    // Find the matching close bracket, honoring strings and escapes.
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    size_t end = std::string::npos;
    for (size_t i = pos; i < raw.size(); ++i) {
      const char c = raw[i];
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
      } else if (c == '[') {
        ++depth;
      } else if (c == ']') {
        if (--depth == 0) {
          end = i;
          break;
        }
      }
    }
    if (end != std::string::npos) {
      const std::string candidate = raw.substr(pos, end - pos + 1);
      json parsed = json::parse(candidate, nullptr, false);
      if (!parsed.is_discarded() && parsed.is_array()) {
        return parsed;
      }
    }
    ++pos;
  }
  throw GatewayError("no JSON array found in model output");
}

std::vector<std::string> parse_json_array(const std::string& raw) {
  const json arr = extract_json_array(raw);
  std::vector<std::string> items;
  items.reserve(arr.size());
  for (const auto& element : arr) {
    if (!element.is_string()) {
      throw GatewayError("JSON array element is not a string: " + element.dump());
    }
    items.push_back(element.get<std::string>());
  }
  return items;
}

std::string serialize_json_array(const std::vector<std::string>& items) {
  return json(items).dump();
}

}  // namespace pentagent::llm
