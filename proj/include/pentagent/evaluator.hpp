#pragma once

#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "pentagent/command_record.hpp"
#include "pentagent/common.hpp"
#include "pentagent/stage.hpp"

namespace pentagent::llm {
class Gateway;
}
namespace pentagent::prompt {
class TemplateLibrary;
}

namespace pentagent::eval {

/// Everything the progress decision looks at for one task iteration.
struct ProgressInputs {
  plan::Stage stage = plan::Stage::Reconnaissance;
  int task_id = 0;
  std::string task_description;
  TimePoint start_time{};
  TimePoint cur_time{};
  int max_time_per_task_s = 300;
  int iteration = 1;
  int max_iterations = 5;
  std::string old_information;
  std::string new_information;
  double min_new_information = 0.10;  // fraction in [0,1]

  long long elapsed_s() const;
};

struct EvaluationVerdict {
  enum class Decision { Continue, NextPhase, ConcludeStage };

  Decision decision = Decision::Continue;
  std::string reason;  // always non-empty
  std::optional<std::string> proposed_followup;
};

std::string decision_name(EvaluationVerdict::Decision decision);

/// A model-written digest of one command outcome, capped after generation.
struct AnalysisSummary {
  std::string text;
  int source_record = 0;
};

/// Fraction of normalized lines in `new_text` not already present in
/// `old_text` (lines trimmed, case-folded, empties dropped; set semantics).
/// Empty new_text yields 0.
double new_information_ratio(const std::string& old_text, const std::string& new_text);

enum class EvaluatorMode { Deterministic, Llm };

/// Pure decision mirroring the evaluation prompt's rules, in order:
/// time limit reached -> NextPhase; iteration cap reached with the new
/// information ratio under threshold -> ConcludeStage; otherwise Continue.
EvaluationVerdict evaluate_progress_deterministic(const ProgressInputs& inputs);

/// Llm mode renders the evaluation prompt and maps the free-text
/// recommendation onto the three decisions by keyword ("next phase" before
/// "conclude" before "continue"). Unmappable output and gateway failures
/// fall back to the deterministic rules. A line starting "followup:"
/// proposes a follow-up task.
EvaluationVerdict evaluate_progress(const ProgressInputs& inputs, llm::Gateway* gateway,
                                    const prompt::TemplateLibrary* library,
                                    EvaluatorMode mode,
                                    double temperature = 0.2);

/// Renders the command-analysis prompt, completes it, and truncates the
/// result to `summary_max_chars`. On gateway failure falls back to a
/// deterministic digest: the exit marker plus the first lines of output.
AnalysisSummary analyze_command(const exec::CommandRecord& record, int summary_max_chars,
                                llm::Gateway* gateway, const prompt::TemplateLibrary& library,
                                double temperature = 0.2);

nlohmann::json progress_inputs_to_json(const ProgressInputs& inputs);
nlohmann::json verdict_to_json(const EvaluationVerdict& verdict);

}  // namespace pentagent::eval
