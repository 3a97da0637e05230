#include "pentagent/evaluator.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pentagent/llm_gateway.hpp"
#include "pentagent/prompt_engine.hpp"

namespace pentagent::eval {

long long ProgressInputs::elapsed_s() const {
  return std::chrono::duration_cast<std::chrono::seconds>(cur_time - start_time).count();
}

std::string decision_name(EvaluationVerdict::Decision decision) {
  switch (decision) {
    case EvaluationVerdict::Decision::Continue:
      return "Continue";
    case EvaluationVerdict::Decision::NextPhase:
      return "NextPhase";
    case EvaluationVerdict::Decision::ConcludeStage:
      return "ConcludeStage";
  }
  return "Unknown";
}

namespace {

std::set<std::string> normalized_line_set(const std::string& text) {
  std::set<std::string> lines;
  for (const std::string& raw : util::split_lines(text)) {
    std::string line = util::to_lower(util::trim(raw));
    if (!line.empty()) lines.insert(std::move(line));
  }
  return lines;
}

}  // namespace

double new_information_ratio(const std::string& old_text, const std::string& new_text) {
  const std::set<std::string> new_lines = normalized_line_set(new_text);
  if (new_lines.empty()) return 0.0;
  const std::set<std::string> old_lines = normalized_line_set(old_text);
  size_t fresh = 0;
  for (const std::string& line : new_lines) {
    if (old_lines.count(line) == 0) ++fresh;
  }
  return static_cast<double>(fresh) / static_cast<double>(new_lines.size());
}

EvaluationVerdict evaluate_progress_deterministic(const ProgressInputs& inputs) {
  EvaluationVerdict verdict;
  const long long elapsed = inputs.elapsed_s();
  if (elapsed >= inputs.max_time_per_task_s) {
    verdict.decision = EvaluationVerdict::Decision::NextPhase;
    verdict.reason = "time limit reached: " + std::to_string(elapsed) + "s elapsed of " +
                     std::to_string(inputs.max_time_per_task_s) + "s allotted";
    return verdict;
  }
  const double ratio = new_information_ratio(inputs.old_information, inputs.new_information);
  if (inputs.iteration >= inputs.max_iterations && ratio < inputs.min_new_information) {
    std::ostringstream reason;
    reason << "diminishing returns: iteration " << inputs.iteration << " of "
           << inputs.max_iterations << " yielded a new-information ratio of " << ratio
           << ", under the " << inputs.min_new_information << " threshold";
    verdict.decision = EvaluationVerdict::Decision::ConcludeStage;
    verdict.reason = reason.str();
    return verdict;
  }
  verdict.decision = EvaluationVerdict::Decision::Continue;
  verdict.reason = "time and information budgets still open at iteration " +
                   std::to_string(inputs.iteration);
  return verdict;
}

namespace {

std::string format_fraction(double value) {
  std::ostringstream out;
  out << value;
  return out.str();
}

std::optional<EvaluationVerdict> map_recommendation(const std::string& text) {
  const std::string lower = util::to_lower(text);
  EvaluationVerdict verdict;
  if (lower.find("next phase") != std::string::npos) {
    verdict.decision = EvaluationVerdict::Decision::NextPhase;
  } else if (lower.find("conclude") != std::string::npos) {
    verdict.decision = EvaluationVerdict::Decision::ConcludeStage;
  } else if (lower.find("continue") != std::string::npos) {
    verdict.decision = EvaluationVerdict::Decision::Continue;
  } else {
    return std::nullopt;
  }
  verdict.reason = util::trim(text);
  if (verdict.reason.empty()) return std::nullopt;
  for (const std::string& line : util::split_lines(text)) {
    const std::string trimmed = util::trim(line);
    if (util::contains_ci(trimmed.substr(0, 9), "followup:")) {
      const std::string followup = util::trim(trimmed.substr(9));
      if (!followup.empty()) verdict.proposed_followup = followup;
    }
  }
  return verdict;
}

}  // namespace

EvaluationVerdict evaluate_progress(const ProgressInputs& inputs, llm::Gateway* gateway,
                                    const prompt::TemplateLibrary* library, EvaluatorMode mode,
                                    double temperature) {
  if (mode == EvaluatorMode::Deterministic || gateway == nullptr || library == nullptr) {
    return evaluate_progress_deterministic(inputs);
  }

  prompt::PromptBindings bindings;
  bindings.set("stage", plan::stage_name(inputs.stage));
  bindings.set("task", inputs.task_description);
  bindings.set("max_time_per_task", std::to_string(inputs.max_time_per_task_s));
  bindings.set("cur_time", util::iso8601_utc(inputs.cur_time));
  bindings.set("start_time", util::iso8601_utc(inputs.start_time));
  bindings.set("max_recon_iterations", std::to_string(inputs.max_iterations));
  bindings.set("min_new_information", format_fraction(inputs.min_new_information));
  bindings.set("new_information", inputs.new_information);
  bindings.set("old_information", inputs.old_information);

  try {
    llm::CompletionRequest request;
    request.prompt = prompt::render_template(library->get("evaluate_progress"), bindings);
    request.temperature = temperature;
    const llm::Completion completion = gateway->complete(request);
    if (auto verdict = map_recommendation(completion.text)) {
      return *verdict;
    }
  } catch (const GatewayError&) {
    // fall through to the deterministic rules
  }
  return evaluate_progress_deterministic(inputs);
}

namespace {

std::string fallback_digest(const exec::CommandRecord& record) {
  std::string digest = record.exit_marker();
  int lines_used = 0;
  const auto append_lines = [&](const std::string& label, const std::string& text) {
    for (const std::string& line : util::split_lines(text)) {
      if (lines_used >= 10) return;
      const std::string trimmed = util::trim(line);
      if (trimmed.empty()) continue;
      digest += "\n" + label + trimmed;
      ++lines_used;
    }
  };
  append_lines("", record.stdout_text);
  append_lines("stderr: ", record.stderr_text);
  return digest;
}

}  // namespace

AnalysisSummary analyze_command(const exec::CommandRecord& record, int summary_max_chars,
                                llm::Gateway* gateway, const prompt::TemplateLibrary& library,
                                double temperature) {
  AnalysisSummary summary;
  summary.source_record = record.id;

  prompt::PromptBindings bindings;
  bindings.set("cmd", record.command);
  bindings.set("stderr", record.stderr_text);
  bindings.set("resp", record.stdout_text);
  bindings.set("summary_max_chars", std::to_string(summary_max_chars));

  std::string text;
  try {
    if (gateway == nullptr) throw GatewayError("no gateway configured");
    llm::CompletionRequest request;
    request.prompt = prompt::render_template(library.get("analyze_cmd"), bindings);
    request.temperature = temperature;
    const llm::Completion completion = gateway->complete(request);
    text = util::trim(completion.text);
    if (text.empty()) text = fallback_digest(record);
  } catch (const GatewayError&) {
    text = fallback_digest(record);
  }

  if (static_cast<int>(text.size()) > summary_max_chars) {
    text.resize(static_cast<size_t>(summary_max_chars));
  }
  summary.text = std::move(text);
  return summary;
}

nlohmann::json progress_inputs_to_json(const ProgressInputs& inputs) {
  nlohmann::json j;
  j["stage"] = plan::stage_name(inputs.stage);
  j["task_id"] = inputs.task_id;
  j["task"] = inputs.task_description;
  j["start_time"] = util::iso8601_utc(inputs.start_time);
  j["cur_time"] = util::iso8601_utc(inputs.cur_time);
  j["elapsed_s"] = inputs.elapsed_s();
  j["max_time_per_task_s"] = inputs.max_time_per_task_s;
  j["iteration"] = inputs.iteration;
  j["max_iterations"] = inputs.max_iterations;
  j["min_new_information"] = inputs.min_new_information;
  j["old_information"] = inputs.old_information;
  j["new_information"] = inputs.new_information;
  j["new_information_ratio"] =
      new_information_ratio(inputs.old_information, inputs.new_information);
  return j;
}

nlohmann::json verdict_to_json(const EvaluationVerdict& verdict) {
  nlohmann::json j;
  j["decision"] = decision_name(verdict.decision);
  j["reason"] = verdict.reason;
  if (verdict.proposed_followup) {
    j["proposed_followup"] = *verdict.proposed_followup;
  }
  return j;
}

}  // namespace pentagent::eval
