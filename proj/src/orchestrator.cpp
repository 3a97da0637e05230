#include "pentagent/orchestrator.hpp"

#include <algorithm>
#include <regex>

#include "pentagent/executor.hpp"

namespace pentagent::engine {

using eval::EvaluationVerdict;
using nlohmann::json;

std::string mode_name(Mode mode) { return mode == Mode::Live ? "live" : "dry-run"; }

std::map<plan::Stage, std::string> RunConfig::default_role_text() {
  return {
      {plan::Stage::Reconnaissance,
       "You are a meticulous penetration tester performing authorized reconnaissance "
       "of one designated target host."},
      {plan::Stage::VulnerabilityAnalysis,
       "You are a vulnerability analyst mapping confirmed reconnaissance findings on the "
       "designated target to known, verifiable weaknesses."},
      {plan::Stage::Exploitation,
       "You are an exploitation specialist validating confirmed weaknesses on the designated "
       "target with minimal-impact proof-of-concept actions."},
  };
}

namespace {

bool looks_like_host(const std::string& value) {
  static const std::regex ip_re(R"((\d{1,3}\.){3}\d{1,3})");
  static const std::regex host_re(R"([A-Za-z0-9][A-Za-z0-9-]*(\.[A-Za-z0-9][A-Za-z0-9-]*)*)");
  return std::regex_match(value, ip_re) || std::regex_match(value, host_re);
}

}  // namespace

void RunConfig::validate() const {
  if (target.ip.empty() || !looks_like_host(target.ip)) {
    throw std::invalid_argument("target '" + target.ip + "' is not a valid address or hostname");
  }
  if (policy.allowed_targets.count(util::to_lower(target.ip)) == 0) {
    throw std::invalid_argument("target '" + target.ip + "' is not in the scope policy");
  }
  if (policy.constraint_text.empty()) {
    throw std::invalid_argument("scope policy has no constraint text");
  }
  if (backend != "mock" && backend != "rest") {
    throw std::invalid_argument("backend must be 'mock' or 'rest', got '" + backend + "'");
  }
  if (run_id.empty() ||
      run_id.find_first_not_of(
          "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-") !=
          std::string::npos) {
    throw std::invalid_argument("run_id must be non-empty and use only [A-Za-z0-9._-]");
  }
  const auto positive = [](int value, const char* name) {
    if (value <= 0) {
      throw std::invalid_argument(std::string(name) + " must be positive");
    }
  };
  positive(max_iterations, "max_iterations");
  positive(time_limit_s, "time_limit_s");
  positive(summary_max_chars, "summary_max_chars");
  positive(state_token_cap, "state_token_cap");
  positive(context_limit, "context_limit");
  positive(max_output_tokens, "max_output_tokens");
  positive(command_timeout_s, "command_timeout_s");
  positive(poll_interval_ms, "poll_interval_ms");
  if (reserve_tokens < 0) {
    throw std::invalid_argument("reserve_tokens must be non-negative");
  }
  if (min_new_information < 0.0 || min_new_information > 1.0) {
    throw std::invalid_argument("min_new_information must be in [0,1]");
  }
  for (plan::Stage stage : plan::kAllStages) {
    const auto it = role_text.find(stage);
    if (it == role_text.end() || it->second.empty()) {
      throw std::invalid_argument("role text missing for stage " + plan::stage_name(stage));
    }
  }
}

std::string event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::StageStarted:
      return "StageStarted";
    case EventKind::TaskStarted:
      return "TaskStarted";
    case EventKind::CommandProposed:
      return "CommandProposed";
    case EventKind::CommandDenied:
      return "CommandDenied";
    case EventKind::CommandExecuted:
      return "CommandExecuted";
    case EventKind::AnalysisReady:
      return "AnalysisReady";
    case EventKind::VerdictReady:
      return "VerdictReady";
    case EventKind::StageConcluded:
      return "StageConcluded";
    case EventKind::RunFinished:
      return "RunFinished";
    case EventKind::Error:
      return "Error";
  }
  return "Unknown";
}

namespace {

store::RecordKind record_kind_for(EventKind kind) {
  switch (kind) {
    case EventKind::CommandExecuted:
      return store::RecordKind::Command;
    case EventKind::AnalysisReady:
      return store::RecordKind::Analysis;
    case EventKind::VerdictReady:
      return store::RecordKind::Verdict;
    default:
      return store::RecordKind::Event;
  }
}

}  // namespace

Engine::Engine(RunConfig config, llm::Gateway& gateway, store::RunStore& store,
               Observer observer, Clock clock)
    : config_(std::move(config)),
      gateway_(gateway),
      store_(store),
      observer_(std::move(observer)),
      clock_(clock ? std::move(clock) : [] { return std::chrono::system_clock::now(); }),
      library_(prompt::TemplateLibrary::load_dir(config_.prompts_dir)) {
  config_.validate();
  for (const char* required : {"query_next_command", "analyze_cmd", "evaluate_progress",
                               "get_objectives"}) {
    if (!library_.contains(required)) {
      throw TemplateError("prompt library is missing required template '" +
                          std::string(required) + "'");
    }
  }
  gateway_.set_observer([this](const llm::CompletionRequest& request,
                               const llm::Completion& completion) {
    json payload;
    payload["event"] = "Completion";
    payload["prompt"] = request.prompt;
    payload["response"] = completion.text;
    payload["input_tokens"] = completion.input_tokens;
    payload["output_tokens"] = completion.output_tokens;
    payload["latency_ms"] = completion.latency_ms;
    store_.append_record(store::RecordKind::Event, std::move(payload), clock_());
  });
}

long long Engine::emit(EventKind kind, json payload) {
  payload["event"] = event_kind_name(kind);
  const long long seq = store_.append_record(record_kind_for(kind), payload, clock_());
  if (observer_) {
    observer_(EngineEvent{kind, std::move(payload)});
  }
  return seq;
}

void Engine::log_event(const std::string& event, json payload) {
  payload["event"] = event;
  store_.append_record(store::RecordKind::Event, std::move(payload), clock_());
}

void Engine::log_tree_mutation(const std::string& action) {
  json payload;
  payload["action"] = action;
  payload["tree"] = plan::tree_to_json(tree_);
  store_.append_record(store::RecordKind::TaskMutation, std::move(payload), clock_());
}

std::string Engine::current_role(plan::Stage stage) const {
  return config_.role_text.at(stage);
}

eval::ProgressInputs Engine::make_inputs(const plan::Task& task, int iteration,
                                         const std::string& new_information,
                                         TimePoint now) const {
  eval::ProgressInputs inputs;
  inputs.stage = task.stage;
  inputs.task_id = task.id;
  inputs.task_description = task.description;
  inputs.start_time = task.started_at.value_or(now);
  inputs.cur_time = now;
  inputs.max_time_per_task_s = task.time_limit_s;
  inputs.iteration = iteration;
  inputs.max_iterations = config_.max_iterations;
  inputs.old_information = known_information_;
  inputs.new_information = new_information;
  inputs.min_new_information = config_.min_new_information;
  return inputs;
}

// Evaluates progress, applies the iteration cap, emits the verdict, and
// mutates the tree. Shared by every step_task exit path.
EvaluationVerdict Engine::decide_and_apply(const plan::Task& task, int iteration,
                                           const std::string& new_information) {
  const eval::ProgressInputs inputs = make_inputs(task, iteration, new_information, clock_());
  EvaluationVerdict verdict = eval::evaluate_progress(inputs, &gateway_, &library_,
                                                      config_.evaluator_mode,
                                                      config_.temperature_analysis);

  json payload;
  // Loop safety: a task may not run past max_iterations even on Continue.
  if (verdict.decision == EvaluationVerdict::Decision::Continue &&
      iteration >= config_.max_iterations) {
    payload["overridden_from"] = decision_name(verdict.decision);
    verdict.decision = EvaluationVerdict::Decision::NextPhase;
    verdict.reason += "; iteration cap of " + std::to_string(config_.max_iterations) +
                      " reached, moving on";
  }

  payload["task_id"] = task.id;
  payload["iteration"] = iteration;
  payload["decision"] = decision_name(verdict.decision);
  payload["reason"] = verdict.reason;
  if (verdict.proposed_followup) payload["proposed_followup"] = *verdict.proposed_followup;
  payload["inputs"] = eval::progress_inputs_to_json(inputs);
  emit(EventKind::VerdictReady, std::move(payload));

  const plan::ApplyResult applied =
      plan::apply_outcome(tree_, task.id, verdict, new_information, config_.time_limit_s);
  log_tree_mutation("apply-outcome");
  if (applied.followup_dropped) {
    log_event("FollowupDropped", {{"task_id", task.id}});
  }
  return verdict;
}

std::string Engine::build_command_prompt(const plan::Task& task) {
  prompt::PromptBindings bindings;
  bindings.set("current_role", current_role(task.stage));
  bindings.set("current_task", task.description);
  bindings.set("constraints", config_.policy.constraint_text);
  bindings.set("target.ip", config_.target.ip);
  bindings.set("state", snapshot_.text);
  bindings.set("analyzation", last_analysis_);
  bindings.set("task_tree", plan::generate_task_summary(tree_));

  const prompt::PromptTemplate& tmpl = library_.get("query_next_command");
  try {
    return prompt::render_with_history(tmpl, bindings, history_, config_.context_limit,
                                       config_.reserve_tokens)
        .text;
  } catch (const TemplateError&) {
    // Full state no longer fits: fall back to retrieval-selected excerpts.
    store::RetrievalQuery query;
    query.query_text = task.description;
    query.limit = 5;
    std::string excerpts = "(state excerpts)\n";
    for (const store::RunRecord& record : store_.retrieve_relevant(query)) {
      std::string text;
      if (record.payload.contains("text") && record.payload["text"].is_string()) {
        text = record.payload["text"].get<std::string>();
      } else {
        text = record.payload.dump();
      }
      if (text.size() > 200) text.resize(200);
      excerpts += "- " + text + "\n";
    }
    bindings.set("state", excerpts);
    log_event("StateExcerpted", {{"task_id", task.id}});
    return prompt::render_with_history(tmpl, bindings, history_, config_.context_limit,
                                       config_.reserve_tokens)
        .text;
  }
}

std::optional<std::vector<exec::ExpectRule>> Engine::request_expect_rules(
    const std::string& command) {
  llm::CompletionRequest request;
  request.prompt =
      "The proposed command starts an interactive program. Provide the expect rules that "
      "drive it to completion as a JSON array of objects, each with fields \"pattern\" (a "
      "regular expression matched against terminal output), \"send\" (text written to the "
      "terminal when the pattern matches), and \"terminal\" (true when that match completes "
      "the session). Output only the JSON array.\n\nCommand: " +
      command + "\n";
  request.temperature = config_.temperature_command;
  request.max_output_tokens = config_.max_output_tokens;

  try {
    const llm::Completion completion = gateway_.complete(request);
    const json arr = llm::extract_json_array(completion.text);
    std::vector<exec::ExpectRule> rules;
    bool has_terminal = false;
    for (const auto& item : arr) {
      if (!item.is_object() || !item.contains("pattern")) return std::nullopt;
      exec::ExpectRule rule;
      rule.pattern = item["pattern"].get<std::string>();
      rule.send = item.value("send", "");
      rule.terminal = item.value("terminal", false);
      has_terminal = has_terminal || rule.terminal;
      rules.push_back(std::move(rule));
    }
    if (rules.empty() || !has_terminal) return std::nullopt;
    return rules;
  } catch (const GatewayError&) {
    return std::nullopt;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

EvaluationVerdict Engine::step_task(int task_id) {
  plan::Task* task_ptr = tree_.find(task_id);
  if (task_ptr == nullptr || task_ptr->status != plan::TaskStatus::Active) {
    throw std::logic_error("step_task needs an Active task");
  }
  const plan::Task task = *task_ptr;  // stable copy for this cycle
  const int iteration = ++iterations_[task.id];

  // Time budget first: an exhausted task moves on without another command.
  {
    const TimePoint now = clock_();
    const long long elapsed =
        std::chrono::duration_cast<std::chrono::seconds>(now - task.started_at.value_or(now))
            .count();
    if (elapsed >= task.time_limit_s) {
      const eval::ProgressInputs inputs = make_inputs(task, iteration, "", now);
      EvaluationVerdict verdict = eval::evaluate_progress_deterministic(inputs);
      json payload;
      payload["task_id"] = task.id;
      payload["iteration"] = iteration;
      payload["decision"] = decision_name(verdict.decision);
      payload["reason"] = verdict.reason;
      payload["inputs"] = eval::progress_inputs_to_json(inputs);
      emit(EventKind::VerdictReady, std::move(payload));
      plan::apply_outcome(tree_, task.id, verdict, "", config_.time_limit_s);
      log_tree_mutation("apply-outcome");
      return verdict;
    }
  }

  // Generate and clean the next command.
  std::optional<std::string> command;
  try {
    llm::CompletionRequest request;
    request.prompt = build_command_prompt(task);
    request.temperature = config_.temperature_command;
    request.max_output_tokens = config_.max_output_tokens;
    request.role_hint = current_role(task.stage);
    const llm::Completion completion = gateway_.complete(request);
    command = llm::clean_command_output(completion.text);
    if (!command) {
      ++errors_;
      emit(EventKind::Error, {{"context", "clean_command_output"},
                              {"task_id", task.id},
                              {"message", "model reply contained no command"}});
    }
  } catch (const EngineError& e) {
    ++errors_;
    emit(EventKind::Error,
         {{"context", "command_generation"}, {"task_id", task.id}, {"message", e.what()}});
  }
  if (!command) {
    return decide_and_apply(task, iteration, "");
  }

  emit(EventKind::CommandProposed,
       {{"task_id", task.id}, {"iteration", iteration}, {"command", *command}});

  // Fail closed: the executor is never reached without a logged allow.
  const scope::ScopeVerdict scope_verdict = scope::check_command(*command, config_.policy);
  log_event("ScopeVerdict", {{"command", *command},
                             {"allowed", scope_verdict.allowed},
                             {"rule", scope_verdict.rule_fired},
                             {"detail", scope_verdict.detail}});
  if (!scope_verdict.allowed) {
    ++denials_;
    emit(EventKind::CommandDenied, {{"task_id", task.id},
                                    {"iteration", iteration},
                                    {"command", *command},
                                    {"rule", scope_verdict.rule_fired},
                                    {"detail", scope_verdict.detail}});
    return decide_and_apply(task, iteration, "");
  }

  if (config_.mode == Mode::DryRun) {
    return decide_and_apply(task, iteration, "");
  }

  // Execute, one-shot or under a pseudo-terminal.
  exec::CommandRecord record;
  bool interactive = false;
  const exec::Interactivity kind = exec::classify_interactivity(
      *command, config_.classify_with_llm ? &gateway_ : nullptr, config_.classify_with_llm);
  if (kind == exec::Interactivity::Interactive) {
    interactive = true;
    const auto rules = request_expect_rules(*command);
    if (!rules) {
      ++denials_;
      log_event("ScopeVerdict", {{"command", *command},
                                 {"allowed", false},
                                 {"rule", "interactive-downgrade"},
                                 {"detail", "no usable expect rules for interactive command"}});
      emit(EventKind::CommandDenied,
           {{"task_id", task.id},
            {"iteration", iteration},
            {"command", *command},
            {"rule", "interactive-downgrade"},
            {"detail", "interactive command without a usable expect rule set"}});
      return decide_and_apply(task, iteration, "");
    }
    exec::ExpectOptions options;
    options.poll_interval_ms = config_.poll_interval_ms;
    options.scrub_env = {config_.credential_env};
    const auto started = std::chrono::steady_clock::now();
    record.timestamp = clock_();
    exec::InteractiveSession session;
    try {
      session = exec::run_interactive_script(*command, *rules, config_.command_timeout_s,
                                             options);
    } catch (const std::exception& e) {
      ++errors_;
      emit(EventKind::Error,
           {{"context", "interactive_session"}, {"task_id", task.id}, {"message", e.what()}});
      return decide_and_apply(task, iteration, "");
    }
    record.command = *command;
    record.stdout_text = session.transcript;
    record.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();
    if (session.state == exec::SessionState::TimedOut) {
      record.timed_out = true;
    } else if (session.state == exec::SessionState::Completed) {
      record.exit_code = session.exit_code.value_or(0);
    } else {
      record.exit_code = session.exit_code.value_or(1);
    }
  } else {
    try {
      exec::ExecOptions options;
      options.scrub_env = {config_.credential_env};
      record = exec::run_command(*command, config_.command_timeout_s, options);
    } catch (const ExecError& e) {
      ++errors_;
      emit(EventKind::Error,
           {{"context", "run_command"}, {"task_id", task.id}, {"message", e.what()}});
      return decide_and_apply(task, iteration, "");
    }
  }
  record.id = next_command_id_++;
  ++commands_executed_;

  json exec_payload;
  exec_payload["task_id"] = task.id;
  exec_payload["iteration"] = iteration;
  exec_payload["interactive"] = interactive;
  exec_payload["record"] = exec::command_record_to_json(record);
  emit(EventKind::CommandExecuted, std::move(exec_payload));

  // Analyze the outcome and fold it into the state snapshot.
  const eval::AnalysisSummary analysis = eval::analyze_command(
      record, config_.summary_max_chars, &gateway_, library_, config_.temperature_analysis);
  record.analysis = analysis.text;
  history_.push_back(record);
  last_analysis_ = analysis.text;
  emit(EventKind::AnalysisReady, {{"task_id", task.id},
                                  {"record_id", record.id},
                                  {"chars", static_cast<int>(analysis.text.size())},
                                  {"text", analysis.text}});

  store::Compactor compactor = [this](const std::string& section) -> std::optional<std::string> {
    llm::CompletionRequest request;
    request.prompt = "Condense the following penetration-test findings into one short "
                     "paragraph, keeping every concrete host, port, service, and "
                     "vulnerability fact:\n\n" +
                     section;
    request.temperature = config_.temperature_analysis;
    try {
      return util::trim(gateway_.complete(request).text);
    } catch (const GatewayError&) {
      return std::nullopt;
    }
  };
  snapshot_ = store::update_state(snapshot_, analysis.text, task.stage, clock_(),
                                  config_.state_token_cap, default_token_counter(), compactor);
  log_event("StateUpdated", {{"version", snapshot_.version},
                             {"token_size", snapshot_.token_size},
                             {"text", snapshot_.text}});

  const eval::EvaluationVerdict verdict = decide_and_apply(task, iteration, analysis.text);
  known_information_ += analysis.text + "\n";
  return verdict;
}

StageSummary Engine::run_stage(plan::Stage stage) {
  StageSummary summary;
  summary.stage = stage;
  const int commands_before = commands_executed_;
  const int denials_before = denials_;

  emit(EventKind::StageStarted, {{"stage", plan::stage_name(stage)}});

  plan::ObjectiveOptions options;
  options.default_time_limit_s = config_.time_limit_s;
  try {
    generate_objectives(tree_, stage, snapshot_.text, gateway_, library_, options);
    log_tree_mutation("objectives");
  } catch (const std::exception& e) {
    ++errors_;
    emit(EventKind::Error,
         {{"context", "generate_objectives"}, {"stage", plan::stage_name(stage)},
          {"message", e.what()}});
    summary.conclusion_reason = "no objectives";
    emit(EventKind::StageConcluded, {{"stage", plan::stage_name(stage)},
                                     {"reason", summary.conclusion_reason},
                                     {"tasks", 0},
                                     {"commands", 0},
                                     {"denials", 0}});
    return summary;
  }

  while (true) {
    std::optional<plan::Task> task = plan::select_next_task(tree_, clock_());
    if (!task) {
      summary.conclusion_reason = "exhaustion";
      break;
    }
    log_tree_mutation("select");
    ++summary.tasks;
    emit(EventKind::TaskStarted, {{"task", plan::task_to_json(*tree_.find(task->id))}});

    EvaluationVerdict verdict;
    do {
      verdict = step_task(task->id);
    } while (verdict.decision == EvaluationVerdict::Decision::Continue);

    if (verdict.decision == EvaluationVerdict::Decision::ConcludeStage) {
      summary.conclusion_reason = "concluded";
      break;
    }
  }

  summary.commands = commands_executed_ - commands_before;
  summary.denials = denials_ - denials_before;
  emit(EventKind::StageConcluded, {{"stage", plan::stage_name(stage)},
                                   {"reason", summary.conclusion_reason},
                                   {"tasks", summary.tasks},
                                   {"commands", summary.commands},
                                   {"denials", summary.denials}});
  return summary;
}

RunSummary Engine::run_pentest() {
  RunSummary summary;
  summary.log_path = store_.path().string();

  log_event("RunConfigured", {{"target", config_.target.ip},
                              {"backend", gateway_.backend().describe()},
                              {"mode", mode_name(config_.mode)},
                              {"run_id", config_.run_id},
                              {"max_iterations", config_.max_iterations},
                              {"time_limit_s", config_.time_limit_s},
                              {"min_new_information", config_.min_new_information},
                              {"summary_max_chars", config_.summary_max_chars},
                              {"state_token_cap", config_.state_token_cap},
                              {"context_limit", config_.context_limit},
                              {"reserve_tokens", config_.reserve_tokens},
                              {"seed", config_.seed}});

  for (plan::Stage stage : plan::kAllStages) {
    summary.stages.push_back(run_stage(stage));
    if (stage != plan::Stage::Exploitation) {
      tree_.advance_stage();
    }
  }

  summary.commands_executed = commands_executed_;
  summary.denials = denials_;
  summary.errors = errors_;
  summary.finished = true;

  json finished;
  finished["commands_executed"] = commands_executed_;
  finished["denials"] = denials_;
  finished["errors"] = errors_;
  finished["stages"] = json::array();
  for (const StageSummary& stage : summary.stages) {
    finished["stages"].push_back({{"stage", plan::stage_name(stage.stage)},
                                  {"reason", stage.conclusion_reason},
                                  {"tasks", stage.tasks},
                                  {"commands", stage.commands},
                                  {"denials", stage.denials}});
  }
  emit(EventKind::RunFinished, std::move(finished));
  return summary;
}

}  // namespace pentagent::engine
