// Shared helpers for the unit and acceptance suites: fixture paths, scratch
// directories, the scripted episode used by end-to-end checks, and run-log
// normalization for replay comparisons.
#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pentagent/orchestrator.hpp"

namespace testsupport {

inline std::filesystem::path prompts_dir() { return PENTAGENT_PROMPTS_DIR; }
inline std::filesystem::path fixtures_dir() { return PENTAGENT_FIXTURES_DIR; }
inline std::filesystem::path golden_dir() { return fixtures_dir() / "golden"; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Unique scratch directory removed when the object goes out of scope.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pentagent-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Replaces run-to-run varying fields (timestamps, durations, latencies,
/// dates) with fixed values so two logs of the same scripted run compare
/// byte-identical.
inline std::string normalize_log_text(std::string text) {
  static const std::regex ts_re(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z)");
  static const std::regex date_re(R"(\[\d{4}-\d{2}-\d{2}\])");
  static const std::regex duration_re(R"("duration_ms":\s*\d+)");
  static const std::regex latency_re(R"("latency_ms":\s*\d+)");
  static const std::regex elapsed_re(R"("elapsed_s":\s*\d+)");
  text = std::regex_replace(text, ts_re, "2000-01-01T00:00:00Z");
  text = std::regex_replace(text, date_re, "[2000-01-01]");
  text = std::regex_replace(text, duration_re, "\"duration_ms\":0");
  text = std::regex_replace(text, latency_re, "\"latency_ms\":0");
  text = std::regex_replace(text, elapsed_re, "\"elapsed_s\":0");
  return text;
}

// ---------------------------------------------------------------------------
// The scripted three-stage episode shared by orchestrator, CLI, and
// acceptance checks. Commands run the canned-output harness shell at the
// stable relative path fixtures/fake-tools.sh (tests run from the build
// tree, where CMake copies the fixtures).

inline nlohmann::json episode_rules() {
  using nlohmann::json;
  json rules = json::array();
  const auto rule = [](const std::string& match, const std::string& response,
                       int max_uses = -1) {
    json r;
    r["match"] = match;
    r["response"] = response;
    if (max_uses > 0) r["max_uses"] = max_uses;
    return r;
  };

  // Analysis replies, anchored on fragments of the canned tool outputs.
  rules.push_back(rule("139/tcp",
                       "Ports 135, 139 and 445 are open; the host presents legacy Windows "
                       "SMB services worth deeper inspection."));
  rules.push_back(rule("VULNERABLE",
                       "The SMB service is confirmed vulnerable to the ms17-010 remote code "
                       "execution flaw; exploitation is feasible."));
  rules.push_back(rule("Meterpreter session",
                       "A privileged session was opened on the target; exploitation "
                       "succeeded and access is verified."));

  // Progress evaluations, anchored on the evaluation prompt's stage phrase.
  rules.push_back(rule("the progress of \"Reconnaissance\"",
                       "Conclude Reconnaissance: service enumeration is complete and "
                       "sufficient. Recommendation: conclude the stage."));
  rules.push_back(rule("the progress of \"VulnerabilityAnalysis\"",
                       "Conclude VulnerabilityAnalysis: a critical weakness is identified. "
                       "Recommendation: conclude the stage."));
  rules.push_back(rule("the progress of \"Exploitation\"",
                       "Conclude Exploitation: the objective is achieved with a verified "
                       "session. Recommendation: conclude the stage."));

  // Objectives, anchored on the objective prompt's stage phrase.
  rules.push_back(rule("cycle named \"Reconnaissance\"",
                       "[\"Run a full TCP service scan of the target host\"]"));
  rules.push_back(rule("cycle named \"VulnerabilityAnalysis\"",
                       "[\"Probe the discovered SMB service for known critical weaknesses\"]"));
  rules.push_back(rule("cycle named \"Exploitation\"",
                       "[\"Validate the identified SMB weakness with a proof-of-concept "
                       "exploit\"]"));

  // Commands, anchored on the task description in the command prompt. Each
  // is single-use so later stages fall through to their own rule even though
  // earlier task text stays visible in the task-tree summary.
  rules.push_back(rule("Run a full TCP service scan",
                       "sh fixtures/fake-tools.sh nmap 10.10.10.40", 1));
  rules.push_back(rule("Probe the discovered SMB service",
                       "```bash\nsh fixtures/fake-tools.sh smb-vuln 10.10.10.40\n```", 1));
  rules.push_back(rule("Validate the identified SMB weakness",
                       "$ sh fixtures/fake-tools.sh exploit 10.10.10.40", 1));
  return rules;
}

inline std::filesystem::path write_episode_script(const std::filesystem::path& dir) {
  const std::filesystem::path path = dir / "episode-script.json";
  write_file(path, episode_rules().dump(2));
  return path;
}

inline pentagent::engine::RunConfig episode_config(const std::filesystem::path& log_dir,
                                                   const std::string& run_id) {
  pentagent::engine::RunConfig config;
  config.target.ip = "10.10.10.40";
  config.policy = pentagent::scope::policy_from_config({{"targets", {"10.10.10.40"}}});
  config.backend = "mock";
  config.run_id = run_id;
  config.prompts_dir = prompts_dir();
  config.log_dir = log_dir;
  config.evaluator_mode = pentagent::eval::EvaluatorMode::Llm;
  return config;
}

struct EpisodeResult {
  pentagent::engine::RunSummary summary;
  std::vector<pentagent::engine::EventKind> events;
  std::filesystem::path log_path;
};

/// Runs the scripted episode end to end against a fresh store.
inline EpisodeResult run_episode(const std::filesystem::path& scratch,
                                 const std::string& run_id) {
  using namespace pentagent;
  const std::filesystem::path script = write_episode_script(scratch);
  llm::ScriptedBackend backend = llm::ScriptedBackend::from_file(script);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch / "logs", run_id);

  EpisodeResult result;
  engine::Engine eng(episode_config(scratch / "logs", run_id), gateway, run_store,
                     [&result](const engine::EngineEvent& event) {
                       result.events.push_back(event.kind);
                     });
  result.summary = eng.run_pentest();
  result.log_path = run_store.path();
  return result;
}

inline std::string event_kinds_text(const std::vector<pentagent::engine::EventKind>& events) {
  std::string out;
  for (const auto kind : events) {
    out += pentagent::engine::event_kind_name(kind) + "\n";
  }
  return out;
}

}  // namespace testsupport
