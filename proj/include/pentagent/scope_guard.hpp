#pragma once

#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace pentagent::scope {

/// Engagement scope and forbidden-behavior policy. Checks are lexical and
/// fail-closed: a token that looks like an address or hostname and is not
/// explicitly allowed blocks the command.
struct ScopePolicy {
  std::set<std::string> allowed_targets;       // IPs or hostnames, lowercased
  std::vector<std::string> forbidden_substrings = {"nc "};
  std::vector<std::string> forbidden_programs = {
      "tcpdump", "apt", "apt-get", "aptitude", "yum", "dnf",
      "apk",     "snap", "pip",     "pip3",     "npm", "gem",
      "su",
  };
  bool allow_private_loopback = false;  // permit 127.0.0.0/8 / localhost (test harness)
  bool passwordless_sudo = false;       // when false, sudo is denied (password prompt hangs)
  std::string constraint_text;          // injected verbatim as ${constraints}
};

struct ScopeVerdict {
  bool allowed = false;
  std::string rule_fired;  // non-empty on denial
  std::string detail;
};

/// Pure check of an already-cleaned command against the policy. Denies on
/// forbidden substrings, forbidden programs (per pipeline segment), sudo
/// without the passwordless flag, CIDR/range scan arguments, and any IP or
/// hostname token outside allowed_targets.
ScopeVerdict check_command(const std::string& command, const ScopePolicy& policy);

/// Builds a policy from a JSON config block, merging the defaults with
/// config additions and rendering the constraint text for prompt injection.
/// Expected keys: targets (required, non-empty array), forbidden_substrings,
/// forbidden_programs, allow_private_loopback, passwordless_sudo.
/// Throws std::invalid_argument when no target is configured.
ScopePolicy policy_from_config(const nlohmann::json& config);

/// The hostname/IP tokens check_command would evaluate for `command`
/// (exposed for diagnostics and tests).
std::vector<std::string> extract_host_tokens(const std::string& command);

}  // namespace pentagent::scope
