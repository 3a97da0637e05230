#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pentagent/common.hpp"
#include "pentagent/evaluator.hpp"
#include "pentagent/stage.hpp"

namespace pentagent::llm {
class Gateway;
}
namespace pentagent::prompt {
class TemplateLibrary;
}

namespace pentagent::plan {

enum class TaskStatus { Pending, Active, Done, Failed, Pruned };

std::string task_status_name(TaskStatus status);
std::string task_status_glyph(TaskStatus status);
bool is_terminal(TaskStatus status);

struct Task {
  int id = 0;  // monotonically increasing, assigned by the tree
  Stage stage = Stage::Reconnaissance;
  std::string description;
  TaskStatus status = TaskStatus::Pending;
  std::optional<int> parent;
  std::optional<TimePoint> started_at;
  int time_limit_s = 300;
};

/// The staged plan. Stage roots are implicit: a task with no parent is a
/// direct sub-task of its stage. Direct sub-tasks per stage are capped at 3
/// and insertion order is preserved; ids give the selection order.
class TaskTree {
 public:
  static constexpr int kMaxDirectSubtasks = 3;

  Stage current_stage() const { return current_stage_; }

  /// Moves to the next stage; returns false at Exploitation.
  bool advance_stage();

  /// Appends a task; throws std::invalid_argument on a stage behind the
  /// current one, a full stage root, or an unknown parent.
  int add_task(Stage stage, std::string description, std::optional<int> parent,
               int time_limit_s);

  const Task* find(int id) const;
  Task* find(int id);
  const std::vector<Task>& tasks() const { return tasks_; }
  std::optional<int> active_task_id() const;

  int direct_subtask_count(Stage stage) const;

 private:
  Stage current_stage_ = Stage::Reconnaissance;
  std::vector<Task> tasks_;
  int next_id_ = 1;
};

struct ObjectiveOptions {
  int default_time_limit_s = 300;
  int max_attempts = 2;  // total gateway attempts before giving up
  double temperature = 0.0;
};

/// Renders the objective-generation prompt for `stage` with `background`,
/// parses the JSON array reply, truncates it to 3 entries, and appends them
/// as Pending tasks in order. Throws GatewayError after max_attempts
/// unparseable replies or on an empty objective list.
std::vector<int> generate_objectives(TaskTree& tree, Stage stage, const std::string& background,
                                     llm::Gateway& gateway,
                                     const prompt::TemplateLibrary& library,
                                     const ObjectiveOptions& options = {});

/// Deterministic outline of the whole plan, one line per task ordered by id:
/// status glyph, stage, id, description. Sub-tasks are indented under their
/// parent. Empty tree renders as the empty string.
std::string generate_task_summary(const TaskTree& tree);

/// First Pending task (id order) in the current stage; marks it Active and
/// stamps started_at. Returns nullopt when the stage is exhausted. Throws
/// std::logic_error if some task is already Active.
std::optional<Task> select_next_task(TaskTree& tree, TimePoint now);

struct ApplyResult {
  std::vector<int> pruned_ids;
  std::optional<int> followup_id;
  bool followup_dropped = false;  // proposal arrived but the stage root is full
};

/// Applies a verdict to the Active task: Continue keeps it Active, NextPhase
/// marks it Done, ConcludeStage marks it Done and prunes the remaining
/// Pending tasks of its stage. A proposed follow-up is appended under the
/// stage root only while the root has fewer than 3 direct sub-tasks.
/// Throws std::invalid_argument on an unknown id, std::logic_error when the
/// task is not Active.
ApplyResult apply_outcome(TaskTree& tree, int task_id, const eval::EvaluationVerdict& verdict,
                          const std::string& analysis, int default_time_limit_s = 300);

/// Marks the Active task Failed (used when a stage is abandoned mid-task).
void fail_active_task(TaskTree& tree);

nlohmann::json task_to_json(const Task& task);
nlohmann::json tree_to_json(const TaskTree& tree);

}  // namespace pentagent::plan
