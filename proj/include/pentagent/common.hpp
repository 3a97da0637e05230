#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pentagent {

using TimePoint = std::chrono::system_clock::time_point;
using Clock = std::function<TimePoint()>;

/// Base class for all engine-level failures.
class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TemplateError : public EngineError {
 public:
  using EngineError::EngineError;
};

class GatewayError : public EngineError {
 public:
  using EngineError::EngineError;
};

/// Transient transport failure; the gateway retries these.
class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class ContextOverflowError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

/// Scripted backend had no rule matching the prompt.
class NoScriptRuleError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class ExecError : public EngineError {
 public:
  using EngineError::EngineError;
};

/// Storage write failures are fatal to a run: the log is the audit trail.
class StoreError : public EngineError {
 public:
  using EngineError::EngineError;
};

/// Counts tokens in a piece of prompt text.
using TokenCounter = std::function<int(std::string_view)>;

/// Default counter: ceil(bytes / 4). Deterministic, monotone in length,
/// and subadditive, which keeps budget arithmetic safe when text segments
/// are costed separately and later concatenated.
int heuristic_token_count(std::string_view text);

/// The default TokenCounter wrapping heuristic_token_count.
const TokenCounter& default_token_counter();

namespace util {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);

/// Whitespace-separated tokens, quotes not interpreted.
std::vector<std::string> split_ws(std::string_view text);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
bool contains_ci(std::string_view haystack, std::string_view needle);

/// Seconds-resolution ISO-8601 UTC timestamp, e.g. "2024-05-01T12:30:00Z".
std::string iso8601_utc(TimePoint tp);

/// "2024-05-01" date part of an UTC timestamp.
std::string utc_date(TimePoint tp);

/// Parses the seconds-resolution format iso8601_utc emits.
std::optional<TimePoint> parse_iso8601_utc(std::string_view text);

}  // namespace util
}  // namespace pentagent
