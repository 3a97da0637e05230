#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pentagent/command_record.hpp"
#include "pentagent/common.hpp"
#include "pentagent/evaluator.hpp"
#include "pentagent/executor.hpp"
#include "pentagent/llm_gateway.hpp"
#include "pentagent/prompt_engine.hpp"
#include "pentagent/scope_guard.hpp"
#include "pentagent/stage.hpp"
#include "pentagent/state_store.hpp"
#include "pentagent/task_planner.hpp"

namespace pentagent::engine {

enum class Mode { Live, DryRun };

std::string mode_name(Mode mode);

struct Target {
  std::string ip;  // address or hostname; must be inside the scope policy
  std::string notes;
};

struct RunConfig {
  Target target;
  scope::ScopePolicy policy;
  std::string backend = "mock";  // "mock" | "rest"
  Mode mode = Mode::Live;
  std::string run_id;

  int max_iterations = 5;        // per task
  int time_limit_s = 300;        // per task
  double min_new_information = 0.10;
  int summary_max_chars = 1500;
  int state_token_cap = 8000;
  int context_limit = 128000;
  int reserve_tokens = 4096;  // output headroom kept free of prompt text
  int max_output_tokens = 1024;
  int command_timeout_s = 120;
  int poll_interval_ms = 250;
  double temperature_command = 0.0;
  double temperature_analysis = 0.2;
  eval::EvaluatorMode evaluator_mode = eval::EvaluatorMode::Llm;
  bool classify_with_llm = false;
  unsigned long seed = 0;  // pins any randomized tie-breaks; echoed into the log
  std::string credential_env = "PENTAGENT_API_KEY";  // scrubbed from every child process

  std::map<plan::Stage, std::string> role_text = default_role_text();
  std::filesystem::path prompts_dir = "prompts";
  std::filesystem::path log_dir = "logs";

  static std::map<plan::Stage, std::string> default_role_text();

  /// Throws std::invalid_argument on a bad field combination.
  void validate() const;
};

enum class EventKind {
  StageStarted,
  TaskStarted,
  CommandProposed,
  CommandDenied,
  CommandExecuted,
  AnalysisReady,
  VerdictReady,
  StageConcluded,
  RunFinished,
  Error,
};

std::string event_kind_name(EventKind kind);

struct EngineEvent {
  EventKind kind;
  nlohmann::json payload;
};

using Observer = std::function<void(const EngineEvent&)>;

struct StageSummary {
  plan::Stage stage = plan::Stage::Reconnaissance;
  std::string conclusion_reason;
  int tasks = 0;
  int commands = 0;
  int denials = 0;
};

struct RunSummary {
  std::vector<StageSummary> stages;
  int commands_executed = 0;
  int denials = 0;
  int errors = 0;
  bool finished = false;
  std::string log_path;
};

/// The sequential agent loop: per stage, generate objectives, then per task
/// cycle through command generation, scope check, execution, analysis, state
/// update, and progress evaluation until a verdict advances the run. Every
/// event is appended to the run store before any observer sees it.
class Engine {
 public:
  /// Loads the prompt library immediately; a missing template is fatal.
  Engine(RunConfig config, llm::Gateway& gateway, store::RunStore& store,
         Observer observer = {}, Clock clock = {});

  RunSummary run_pentest();
  StageSummary run_stage(plan::Stage stage);

  /// One full task cycle; the task must be Active.
  eval::EvaluationVerdict step_task(int task_id);

  const plan::TaskTree& tree() const { return tree_; }
  const store::StateSnapshot& state() const { return snapshot_; }

 private:
  long long emit(EventKind kind, nlohmann::json payload);
  void log_event(const std::string& event, nlohmann::json payload);
  void log_tree_mutation(const std::string& action);

  std::string current_role(plan::Stage stage) const;
  eval::ProgressInputs make_inputs(const plan::Task& task, int iteration,
                                   const std::string& new_information, TimePoint now) const;
  eval::EvaluationVerdict decide_and_apply(const plan::Task& task, int iteration,
                                           const std::string& new_information);

  /// Renders query_next_command within budget, swapping the full state text
  /// for retrieval excerpts when it no longer fits.
  std::string build_command_prompt(const plan::Task& task);

  std::optional<std::vector<exec::ExpectRule>> request_expect_rules(const std::string& command);

  RunConfig config_;
  llm::Gateway& gateway_;
  store::RunStore& store_;
  Observer observer_;
  Clock clock_;

  prompt::TemplateLibrary library_;
  plan::TaskTree tree_;
  store::StateSnapshot snapshot_;
  std::vector<exec::CommandRecord> history_;
  std::string last_analysis_;
  // Cumulative undecorated analysis text; the old side of the
  // new-information ratio (the snapshot text carries display markup).
  std::string known_information_;
  std::map<int, int> iterations_;

  int next_command_id_ = 1;
  int commands_executed_ = 0;
  int denials_ = 0;
  int errors_ = 0;
};

}  // namespace pentagent::engine
