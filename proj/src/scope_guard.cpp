#include "pentagent/scope_guard.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pentagent/common.hpp"

namespace pentagent::scope {

namespace {

// File-name endings that disqualify a dotted token from being read as a
// hostname. Anything dotted and unknown still counts as a hostname, which
// errs on the side of denial.
const std::set<std::string>& file_extensions() {
  static const std::set<std::string> kExts = {
      "sh",  "py",   "pl",  "rb",   "txt", "log",  "md",   "conf", "cfg", "ini",
      "lst", "json", "xml", "yml",  "yaml", "toml", "csv",  "html", "htm", "php",
      "js",  "css",  "c",   "cpp",  "h",    "hpp",  "o",    "so",   "out", "bin",
      "exe", "jar",  "war", "zip",  "tar",  "gz",   "tgz",  "bz2",  "rar", "db",
      "sql", "bak",  "pcap", "nse", "cap",
  };
  return kExts;
}

std::string strip_punct(std::string token) {
  const std::string junk = "\"'`()<>,;";
  size_t b = 0, e = token.size();
  while (b < e && junk.find(token[b]) != std::string::npos) ++b;
  while (e > b && junk.find(token[e - 1]) != std::string::npos) --e;
  return token.substr(b, e - b);
}

const std::regex& quad_regex() {
  static const std::regex re(R"((\d{1,3}\.){3}\d{1,3})");
  return re;
}

const std::regex& hostname_regex() {
  static const std::regex re(R"([A-Za-z0-9][A-Za-z0-9-]*(\.[A-Za-z0-9][A-Za-z0-9-]*)+\.?)");
  return re;
}

bool has_alpha(std::string_view s) {
  for (char c : s) {
    if (std::isalpha(static_cast<unsigned char>(c))) return true;
  }
  return false;
}

std::string last_label(const std::string& host) {
  std::string h = host;
  if (!h.empty() && h.back() == '.') h.pop_back();
  const size_t dot = h.rfind('.');
  return dot == std::string::npos ? h : h.substr(dot + 1);
}

// Hosts and range findings for one `=`-free piece of a token.
struct PieceScan {
  std::vector<std::string> hosts;
  bool range = false;
  std::string range_detail;
};

PieceScan scan_piece(const std::string& piece) {
  PieceScan out;
  std::string p = piece;

  if (const size_t scheme = p.find("://"); scheme != std::string::npos) {
    p = p.substr(scheme + 3);
    if (const size_t at = p.find('@'); at != std::string::npos) p = p.substr(at + 1);
    if (const size_t slash = p.find('/'); slash != std::string::npos) p = p.substr(0, slash);
    if (const size_t colon = p.find(':'); colon != std::string::npos) p = p.substr(0, colon);
    if (!p.empty()) out.hosts.push_back(util::to_lower(p));
    return out;
  }

  // Dotted-quad occurrences, including CIDR / dashed / wildcard range forms.
  auto begin = std::sregex_iterator(p.begin(), p.end(), quad_regex());
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    const std::string quad = it->str();
    const size_t after = static_cast<size_t>(it->position()) + quad.size();
    if (after < p.size()) {
      const char next = p[after];
      if (next == '/' && after + 1 < p.size() &&
          std::isdigit(static_cast<unsigned char>(p[after + 1]))) {
        out.range = true;
        out.range_detail = p.substr(static_cast<size_t>(it->position()));
        continue;
      }
      if (next == '-' && after + 1 < p.size() &&
          std::isdigit(static_cast<unsigned char>(p[after + 1]))) {
        out.range = true;
        out.range_detail = p.substr(static_cast<size_t>(it->position()));
        continue;
      }
    }
    out.hosts.push_back(quad);
  }
  static const std::regex wildcard_re(R"(\d\.\*)");
  if (p.find(".*") != std::string::npos && std::regex_search(p, wildcard_re)) {
    out.range = true;
    out.range_detail = p;
  }

  // Bare hostname: the whole piece must look like one.
  if (out.hosts.empty() && !out.range && p.find('/') == std::string::npos && has_alpha(p)) {
    std::smatch m;
    if (std::regex_match(p, m, hostname_regex())) {
      const std::string host = util::to_lower(p);
      if (file_extensions().count(last_label(host)) == 0) {
        out.hosts.push_back(host);
      }
    }
  }
  return out;
}

bool is_loopback(const std::string& host) {
  return host == "localhost" || host == "::1" || util::starts_with(host, "127.");
}

// First word of each pipeline segment, with env assignments and sudo flag
// words skipped so the real program name is inspected.
std::vector<std::string> program_tokens(const std::string& command) {
  std::vector<std::string> programs;
  std::string current;
  std::vector<std::string> segments;
  for (size_t i = 0; i < command.size(); ++i) {
    const char c = command[i];
    if (c == '|' || c == ';' || c == '&') {
      segments.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  segments.push_back(current);

  for (const std::string& segment : segments) {
    bool after_sudo = false;
    for (const std::string& raw : util::split_ws(segment)) {
      std::string token = strip_punct(raw);
      if (token.empty()) continue;
      if (!after_sudo && token.find('=') != std::string::npos &&
          token.find('=') > 0) {  // VAR=value prefix
        continue;
      }
      if (after_sudo && token[0] == '-') continue;  // sudo flags
      if (const size_t slash = token.rfind('/'); slash != std::string::npos) {
        token = token.substr(slash + 1);
      }
      programs.push_back(token);
      if (token == "sudo") {
        after_sudo = true;
        continue;
      }
      break;  // only the program position of this segment
    }
  }
  return programs;
}

}  // namespace

std::vector<std::string> extract_host_tokens(const std::string& command) {
  std::vector<std::string> hosts;
  for (const std::string& raw : util::split_ws(command)) {
    const std::string token = strip_punct(raw);
    if (token.empty()) continue;
    size_t start = 0;
    while (start <= token.size()) {
      const size_t eq = token.find('=', start);
      const std::string piece =
          token.substr(start, eq == std::string::npos ? std::string::npos : eq - start);
      if (!piece.empty() && piece[0] != '-') {
        PieceScan scan = scan_piece(piece);
        hosts.insert(hosts.end(), scan.hosts.begin(), scan.hosts.end());
      }
      if (eq == std::string::npos) break;
      start = eq + 1;
    }
  }
  return hosts;
}

ScopeVerdict check_command(const std::string& command, const ScopePolicy& policy) {
  ScopeVerdict verdict;

  for (const std::string& sub : policy.forbidden_substrings) {
    if (!sub.empty() && command.find(sub) != std::string::npos) {
      verdict.allowed = false;
      verdict.rule_fired = "forbidden-substring " + util::trim(sub);
      verdict.detail = "command contains forbidden text '" + sub + "'";
      return verdict;
    }
  }

  for (const std::string& program : program_tokens(command)) {
    if (program == "sudo") {
      if (!policy.passwordless_sudo) {
        verdict.allowed = false;
        verdict.rule_fired = "sudo-password";
        verdict.detail = "sudo prompts for a password and would hang the session";
        return verdict;
      }
      continue;
    }
    for (const std::string& forbidden : policy.forbidden_programs) {
      if (program == forbidden) {
        verdict.allowed = false;
        verdict.rule_fired = "forbidden-program " + forbidden;
        verdict.detail = "program '" + forbidden + "' is outside the engagement rules";
        return verdict;
      }
    }
  }

  // Range-scan arguments before per-host checks, so a CIDR over in-scope
  // space is still reported as a range scan.
  for (const std::string& raw : util::split_ws(command)) {
    const std::string token = strip_punct(raw);
    size_t start = 0;
    while (start <= token.size()) {
      const size_t eq = token.find('=', start);
      const std::string piece =
          token.substr(start, eq == std::string::npos ? std::string::npos : eq - start);
      if (!piece.empty()) {
        const PieceScan scan = scan_piece(piece);
        if (scan.range) {
          verdict.allowed = false;
          verdict.rule_fired = "range-scan";
          verdict.detail = "address range '" + scan.range_detail + "' would touch hosts " +
                           "outside the single authorized target";
          return verdict;
        }
      }
      if (eq == std::string::npos) break;
      start = eq + 1;
    }
  }

  for (const std::string& host : extract_host_tokens(command)) {
    if (policy.allowed_targets.count(host) != 0) continue;
    if (policy.allow_private_loopback && is_loopback(host)) continue;
    verdict.allowed = false;
    verdict.rule_fired = "target-out-of-scope";
    verdict.detail = "host '" + host + "' is not an authorized target";
    return verdict;
  }

  verdict.allowed = true;
  return verdict;
}

namespace {

std::string render_constraint_text(const ScopePolicy& policy) {
  std::string text = "You must stay strictly inside the authorized scope of this engagement:\n";
  text += "- Only interact with these authorized targets: ";
  bool first = true;
  for (const std::string& target : policy.allowed_targets) {
    if (!first) text += ", ";
    text += target;
    first = false;
  }
  text += "\n";
  text += "- Never use `nc` or other raw connection tools.\n";
  text += "- Probe single hosts only: no network ranges, CIDR blocks, or host discovery "
          "sweeps.\n";
  text += "- Forbidden programs: ";
  first = true;
  for (const std::string& program : policy.forbidden_programs) {
    if (!first) text += ", ";
    text += program;
    first = false;
  }
  text += ".\n";
  if (!policy.passwordless_sudo) {
    text += "- Do not use sudo or anything that prompts for a password; no credentials are "
            "available.\n";
  }
  text += "- Do not install software on the attacking machine.";
  return text;
}

}  // namespace

ScopePolicy policy_from_config(const nlohmann::json& config) {
  ScopePolicy policy;
  if (!config.contains("targets") || !config["targets"].is_array() ||
      config["targets"].empty()) {
    throw std::invalid_argument("scope config must list at least one target");
  }
  for (const auto& target : config["targets"]) {
    policy.allowed_targets.insert(util::to_lower(target.get<std::string>()));
  }
  if (config.contains("forbidden_substrings")) {
    for (const auto& sub : config["forbidden_substrings"]) {
      const std::string value = sub.get<std::string>();
      if (std::find(policy.forbidden_substrings.begin(), policy.forbidden_substrings.end(),
                    value) == policy.forbidden_substrings.end()) {
        policy.forbidden_substrings.push_back(value);
      }
    }
  }
  if (config.contains("forbidden_programs")) {
    for (const auto& program : config["forbidden_programs"]) {
      const std::string value = program.get<std::string>();
      if (std::find(policy.forbidden_programs.begin(), policy.forbidden_programs.end(), value) ==
          policy.forbidden_programs.end()) {
        policy.forbidden_programs.push_back(value);
      }
    }
  }
  policy.allow_private_loopback = config.value("allow_private_loopback", false);
  policy.passwordless_sudo = config.value("passwordless_sudo", false);
  policy.constraint_text = render_constraint_text(policy);
  return policy;
}

}  // namespace pentagent::scope
