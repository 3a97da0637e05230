#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pentagent/command_record.hpp"
#include "pentagent/common.hpp"

namespace pentagent::llm {
class Gateway;
}

namespace pentagent::exec {

struct ExecOptions {
  /// Environment variables scrubbed from every child so the model credential
  /// can never leak into an executed command.
  std::vector<std::string> scrub_env = {"PENTAGENT_API_KEY"};
};

/// Runs `command` through `sh -c` with stdout and stderr captured on separate
/// pipes. On timeout the whole process group is killed and the record carries
/// the timeout marker plus partial output. A missing program is an ordinary
/// non-zero exit (recorded, not fatal); only fork/pipe failures throw.
CommandRecord run_command(const std::string& command, int timeout_s,
                          const ExecOptions& options = {});

enum class Interactivity { NonInteractive, Interactive };

/// Static-denylist classification: known interactive programs (metasploit
/// console, smbclient, ssh, ftp, telnet, bare shells, sudo) are Interactive;
/// unknown commands default NonInteractive. The gateway fallback is only
/// consulted when `llm_fallback` is set and the static pass found nothing.
Interactivity classify_interactivity(const std::string& command,
                                     llm::Gateway* gateway = nullptr,
                                     bool llm_fallback = false);

/// One expect-style step: when `pattern` (ECMAScript regex) matches the
/// unconsumed transcript, `send` is written to the terminal. A terminal rule
/// completes the session.
struct ExpectRule {
  std::string pattern;
  std::string send;
  bool terminal = false;
};

enum class SessionState { Running, Completed, TimedOut, Failed };

std::string session_state_name(SessionState state);

struct InteractiveSession {
  std::string transcript;  // append-only; every observation is a prefix of the next
  SessionState state = SessionState::Running;
  int poll_interval_ms = 250;
  std::optional<int> exit_code;
};

struct ExpectOptions {
  int poll_interval_ms = 250;
  unsigned short rows = 24;  // fixed terminal geometry for reproducible wrapping
  unsigned short cols = 80;
  std::vector<std::string> scrub_env = {"PENTAGENT_API_KEY"};
  /// Observer invoked with the growing transcript after each append.
  std::function<void(const std::string&)> on_transcript;
};

/// Spawns `command` under a pseudo-terminal and drives it with `rules`. A
/// reader thread appends available output to the transcript at the poll
/// cadence; rules are tested in order against the unconsumed transcript.
/// Throws std::invalid_argument when rules are empty, a pattern does not
/// compile, or no rule is terminal.
InteractiveSession run_interactive_script(const std::string& command,
                                          const std::vector<ExpectRule>& rules,
                                          int overall_timeout_s,
                                          const ExpectOptions& options = {});

}  // namespace pentagent::exec
