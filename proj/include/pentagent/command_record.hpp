#pragma once

#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "pentagent/common.hpp"

namespace pentagent::exec {

/// One executed command. `exit_code` is present iff the child terminated on
/// its own; a timed-out command carries `timed_out = true` and no exit code,
/// plus whatever partial output was captured before the kill.
struct CommandRecord {
  int id = 0;
  std::string command;
  std::string stdout_text;
  std::string stderr_text;
  std::optional<int> exit_code;
  bool timed_out = false;
  long long duration_ms = 0;
  std::optional<std::string> analysis;
  TimePoint timestamp{};

  /// "exit=<n>" or "timeout" — the form used in history lines and digests.
  std::string exit_marker() const;
};

nlohmann::json command_record_to_json(const CommandRecord& record);
CommandRecord command_record_from_json(const nlohmann::json& j);

}  // namespace pentagent::exec
