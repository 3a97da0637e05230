// pentagent — operator front end: configure, launch, dry-run, replay, and
// report on engine runs.

#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "pentagent/cli_support.hpp"
#include "pentagent/llm_gateway.hpp"
#include "pentagent/orchestrator.hpp"

namespace {

using nlohmann::json;
using pentagent::engine::Mode;
using pentagent::engine::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitRunError = 1;
constexpr int kExitUsage = 2;

struct CliOptions {
  std::string target;
  std::string config_path;
  std::string backend;
  std::string mock_script;
  std::string prompts_dir;
  std::string log_dir;
  std::string run_id;
  std::string evaluator;
  std::string rest_url;
  std::string rest_model;
  int max_iterations = 0;
  int time_limit = 0;
  double min_new_info = -1.0;
  unsigned long seed = 0;
  bool allow_loopback = false;
  bool passwordless_sudo = false;
};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot read config file '" + path + "'");
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) {
    throw std::invalid_argument("config file '" + path + "' must hold a JSON object");
  }
  return doc;
}

std::string default_run_id() {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now).count());
}

// File values fill in what the flags left unset; flags always win.
struct ResolvedRun {
  RunConfig config;
  pentagent::llm::RestConfig rest;
  std::string mock_script;
};

ResolvedRun resolve_run_config(const CliOptions& opts, const CLI::App* sub, Mode mode) {
  json file = json::object();
  if (!opts.config_path.empty()) {
    file = load_config_file(opts.config_path);
  }
  const auto flag_given = [sub](const std::string& name) {
    return sub->count(name) > 0;
  };

  ResolvedRun resolved;
  RunConfig& config = resolved.config;
  config.mode = mode;

  const std::string target = flag_given("--target") ? opts.target : file.value("target", "");
  if (target.empty()) {
    throw CLI::ValidationError("--target is required for run/dry-run (or set \"target\" in "
                               "the config file)");
  }
  config.target.ip = target;

  config.backend = flag_given("--backend") ? opts.backend : file.value("backend", "mock");
  resolved.mock_script =
      flag_given("--mock-script") ? opts.mock_script : file.value("mock_script", "");
  config.prompts_dir =
      flag_given("--prompts-dir") ? opts.prompts_dir : file.value("prompts_dir", "prompts");
  config.log_dir = flag_given("--log-dir") ? opts.log_dir : file.value("log_dir", "logs");
  config.run_id = flag_given("--run-id") ? opts.run_id : file.value("run_id", "");
  if (config.run_id.empty()) config.run_id = default_run_id();
  if (config.run_id.find_first_not_of(
          "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-") !=
      std::string::npos) {
    throw CLI::ValidationError("--run-id may only use [A-Za-z0-9._-]");
  }

  config.max_iterations = flag_given("--max-iterations")
                              ? opts.max_iterations
                              : file.value("max_iterations", config.max_iterations);
  config.time_limit_s =
      flag_given("--time-limit") ? opts.time_limit : file.value("time_limit_s", config.time_limit_s);
  config.min_new_information = flag_given("--min-new-info")
                                   ? opts.min_new_info
                                   : file.value("min_new_information", config.min_new_information);
  config.seed = flag_given("--seed") ? opts.seed : file.value("seed", 0UL);
  config.summary_max_chars = file.value("summary_max_chars", config.summary_max_chars);
  config.state_token_cap = file.value("state_token_cap", config.state_token_cap);
  config.context_limit = file.value("context_limit", config.context_limit);
  config.reserve_tokens = file.value("reserve_tokens", config.reserve_tokens);
  config.max_output_tokens = file.value("max_output_tokens", config.max_output_tokens);
  config.command_timeout_s = file.value("command_timeout_s", config.command_timeout_s);
  config.classify_with_llm = file.value("classify_with_llm", false);

  const std::string evaluator =
      flag_given("--evaluator") ? opts.evaluator : file.value("evaluator", "llm");
  if (evaluator == "deterministic") {
    config.evaluator_mode = pentagent::eval::EvaluatorMode::Deterministic;
  } else if (evaluator == "llm") {
    config.evaluator_mode = pentagent::eval::EvaluatorMode::Llm;
  } else {
    throw CLI::ValidationError("--evaluator must be 'llm' or 'deterministic'");
  }

  if (file.contains("roles") && file["roles"].is_object()) {
    for (auto& [key, value] : file["roles"].items()) {
      if (auto stage = pentagent::plan::stage_from_name(key)) {
        config.role_text[*stage] = value.get<std::string>();
      }
    }
  }

  json scope = file.value("scope", json::object());
  if (!scope.contains("targets")) {
    scope["targets"] = json::array();
  }
  bool target_listed = false;
  for (const auto& entry : scope["targets"]) {
    if (entry.get<std::string>() == target) target_listed = true;
  }
  if (!target_listed) scope["targets"].push_back(target);
  if (flag_given("--allow-loopback")) scope["allow_private_loopback"] = opts.allow_loopback;
  if (flag_given("--passwordless-sudo")) scope["passwordless_sudo"] = opts.passwordless_sudo;
  config.policy = pentagent::scope::policy_from_config(scope);

  const json rest = file.value("rest", json::object());
  resolved.rest.base_url = flag_given("--rest-url") ? opts.rest_url : rest.value("url", "");
  resolved.rest.model =
      flag_given("--rest-model") ? opts.rest_model : rest.value("model", resolved.rest.model);
  resolved.rest.api_key_env = rest.value("api_key_env", resolved.rest.api_key_env);
  resolved.rest.context_limit = config.context_limit;
  config.credential_env = resolved.rest.api_key_env;

  return resolved;
}

void print_event(const pentagent::engine::EngineEvent& event) {
  using pentagent::engine::EventKind;
  const json& p = event.payload;
  const auto str = [&p](const char* key) { return p.value(key, std::string()); };
  switch (event.kind) {
    case EventKind::StageStarted:
      std::cout << "== stage " << str("stage") << " ==\n";
      break;
    case EventKind::TaskStarted:
      std::cout << "-- task #" << p["task"].value("id", 0) << ": "
                << p["task"].value("description", std::string()) << "\n";
      break;
    case EventKind::CommandProposed:
      std::cout << "   $ " << str("command") << "\n";
      break;
    case EventKind::CommandDenied:
      std::cout << "   DENIED (" << str("rule") << "): " << str("command") << "\n";
      break;
    case EventKind::CommandExecuted:
      std::cout << "   executed (" << p["record"].value("duration_ms", 0) << " ms)\n";
      break;
    case EventKind::AnalysisReady:
      std::cout << "   analysis: " << str("text").substr(0, 120) << "\n";
      break;
    case EventKind::VerdictReady:
      std::cout << "   verdict: " << str("decision") << " — " << str("reason").substr(0, 100)
                << "\n";
      break;
    case EventKind::StageConcluded:
      std::cout << "== stage " << str("stage") << " concluded (" << str("reason") << ") ==\n";
      break;
    case EventKind::RunFinished:
      std::cout << "run finished: " << p.value("commands_executed", 0) << " commands, "
                << p.value("denials", 0) << " denials\n";
      break;
    case EventKind::Error:
      std::cout << "   error in " << str("context") << ": " << str("message") << "\n";
      break;
  }
}

int run_engine(const CliOptions& opts, const CLI::App* sub, Mode mode, bool quiet) {
  const ResolvedRun resolved = resolve_run_config(opts, sub, mode);

  std::unique_ptr<pentagent::llm::Backend> backend;
  if (resolved.config.backend == "mock") {
    if (resolved.mock_script.empty()) {
      throw CLI::ValidationError("--mock-script is required with the mock backend");
    }
    backend = std::make_unique<pentagent::llm::ScriptedBackend>(
        pentagent::llm::ScriptedBackend::from_file(resolved.mock_script));
  } else {
    if (resolved.rest.base_url.empty()) {
      throw CLI::ValidationError("rest backend needs --rest-url (or rest.url in the config)");
    }
    backend = std::make_unique<pentagent::llm::RestBackend>(resolved.rest);
  }

  pentagent::llm::Gateway gateway(*backend);
  pentagent::store::RunStore store = pentagent::store::RunStore::open(
      resolved.config.log_dir, resolved.config.run_id);
  pentagent::engine::Observer observer;
  if (!quiet) observer = print_event;

  pentagent::engine::Engine engine(resolved.config, gateway, store, observer);
  const pentagent::engine::RunSummary summary = engine.run_pentest();
  std::cout << "log: " << summary.log_path << "\n";
  return summary.finished ? kExitOk : kExitRunError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Autonomous penetration-test engine"};
  app.require_subcommand(1);

  CliOptions opts;
  const auto add_run_flags = [&opts](CLI::App* sub) {
    sub->add_option("--target", opts.target, "Target IP address or hostname");
    sub->add_option("--config", opts.config_path, "JSON config file (flags override it)");
    sub->add_option("--backend", opts.backend, "Model backend: rest|mock")
        ->check(CLI::IsMember({"rest", "mock"}));
    sub->add_option("--mock-script", opts.mock_script, "Scripted-backend rule file (JSON)");
    sub->add_option("--prompts-dir", opts.prompts_dir, "Prompt template directory");
    sub->add_option("--log-dir", opts.log_dir, "Run log directory");
    sub->add_option("--run-id", opts.run_id, "Run identifier (log file name suffix)");
    sub->add_option("--max-iterations", opts.max_iterations, "Iteration cap per task");
    sub->add_option("--time-limit", opts.time_limit, "Per-task time limit, seconds");
    sub->add_option("--min-new-info", opts.min_new_info,
                    "Diminishing-returns threshold, fraction in [0,1]");
    sub->add_option("--seed", opts.seed, "Seed for randomized tie-breaks");
    sub->add_option("--evaluator", opts.evaluator, "Progress evaluator: llm|deterministic");
    sub->add_option("--rest-url", opts.rest_url, "Chat-completion endpoint base URL");
    sub->add_option("--rest-model", opts.rest_model, "Model name for the rest backend");
    sub->add_flag("--allow-loopback", opts.allow_loopback,
                  "Permit loopback targets (test harness)");
    sub->add_flag("--passwordless-sudo", opts.passwordless_sudo,
                  "Allow sudo (host is configured with NOPASSWD)");
    sub->add_flag("--quiet", "Suppress live console output");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "Execute a full staged run");
  add_run_flags(run_cmd);
  CLI::App* dry_cmd =
      app.add_subcommand("dry-run", "Propose and log commands without executing any");
  add_run_flags(dry_cmd);

  std::string logfile;
  CLI::App* replay_cmd = app.add_subcommand("replay", "Print the event transcript of a run log");
  replay_cmd->add_option("logfile", logfile, "Run log (.jsonl)")->required();
  CLI::App* report_cmd = app.add_subcommand("report", "Summarize a run log per stage");
  report_cmd->add_option("logfile", logfile, "Run log (.jsonl)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (run_cmd->parsed()) {
      return run_engine(opts, run_cmd, Mode::Live, run_cmd->count("--quiet") > 0);
    }
    if (dry_cmd->parsed()) {
      return run_engine(opts, dry_cmd, Mode::DryRun, dry_cmd->count("--quiet") > 0);
    }
    if (replay_cmd->parsed()) {
      return pentagent::cli::replay_run(logfile, std::cout) == 0 ? kExitOk : kExitRunError;
    }
    if (report_cmd->parsed()) {
      return pentagent::cli::emit_report(logfile, std::cout) == 0 ? kExitOk : kExitRunError;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "run error: " << e.what() << "\n";
    return kExitRunError;
  }
  return kExitUsage;
}
