#include "pentagent/task_planner.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pentagent/llm_gateway.hpp"
#include "pentagent/prompt_engine.hpp"

namespace pentagent::plan {

std::string task_status_name(TaskStatus status) {
  switch (status) {
    case TaskStatus::Pending:
      return "Pending";
    case TaskStatus::Active:
      return "Active";
    case TaskStatus::Done:
      return "Done";
    case TaskStatus::Failed:
      return "Failed";
    case TaskStatus::Pruned:
      return "Pruned";
  }
  return "Unknown";
}

std::string task_status_glyph(TaskStatus status) {
  switch (status) {
    case TaskStatus::Pending:
      return "[ ]";
    case TaskStatus::Active:
      return "[>]";
    case TaskStatus::Done:
      return "[x]";
    case TaskStatus::Failed:
      return "[!]";
    case TaskStatus::Pruned:
      return "[-]";
  }
  return "[?]";
}

bool is_terminal(TaskStatus status) {
  return status == TaskStatus::Done || status == TaskStatus::Failed ||
         status == TaskStatus::Pruned;
}

bool TaskTree::advance_stage() {
  const std::optional<Stage> next = next_stage(current_stage_);
  if (!next) return false;
  current_stage_ = *next;
  return true;
}

int TaskTree::add_task(Stage stage, std::string description, std::optional<int> parent,
                       int time_limit_s) {
  if (static_cast<int>(stage) < static_cast<int>(current_stage_)) {
    throw std::invalid_argument("cannot add a task to a stage already concluded");
  }
  if (time_limit_s <= 0) {
    throw std::invalid_argument("task time limit must be positive");
  }
  if (parent) {
    const Task* parent_task = find(*parent);
    if (parent_task == nullptr) {
      throw std::invalid_argument("unknown parent task id " + std::to_string(*parent));
    }
  } else if (direct_subtask_count(stage) >= kMaxDirectSubtasks) {
    throw std::invalid_argument("stage " + stage_name(stage) + " already has " +
                                std::to_string(kMaxDirectSubtasks) + " direct sub-tasks");
  }
  Task task;
  task.id = next_id_++;
  task.stage = stage;
  task.description = std::move(description);
  task.parent = parent;
  task.time_limit_s = time_limit_s;
  tasks_.push_back(std::move(task));
  return tasks_.back().id;
}

const Task* TaskTree::find(int id) const {
  for (const Task& task : tasks_) {
    if (task.id == id) return &task;
  }
  return nullptr;
}

Task* TaskTree::find(int id) {
  for (Task& task : tasks_) {
    if (task.id == id) return &task;
  }
  return nullptr;
}

std::optional<int> TaskTree::active_task_id() const {
  for (const Task& task : tasks_) {
    if (task.status == TaskStatus::Active) return task.id;
  }
  return std::nullopt;
}

int TaskTree::direct_subtask_count(Stage stage) const {
  int count = 0;
  for (const Task& task : tasks_) {
    if (task.stage == stage && !task.parent) ++count;
  }
  return count;
}

std::vector<int> generate_objectives(TaskTree& tree, Stage stage, const std::string& background,
                                     llm::Gateway& gateway,
                                     const prompt::TemplateLibrary& library,
                                     const ObjectiveOptions& options) {
  prompt::PromptBindings bindings;
  bindings.set("stage", stage_name(stage));
  bindings.set("background", background);

  llm::CompletionRequest request;
  request.prompt = prompt::render_template(library.get("get_objectives"), bindings);
  request.temperature = options.temperature;

  const int available = TaskTree::kMaxDirectSubtasks - tree.direct_subtask_count(stage);
  if (available <= 0) {
    throw std::logic_error("stage " + stage_name(stage) + " already has its full set of tasks");
  }

  std::string last_error;
  for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
    std::vector<std::string> objectives;
    try {
      const llm::Completion completion = gateway.complete(request);
      objectives = llm::parse_json_array(completion.text);
    } catch (const GatewayError& e) {
      last_error = e.what();
      continue;
    }
    if (objectives.empty()) {
      last_error = "objective list is empty";
      continue;
    }
    if (objectives.size() > static_cast<size_t>(available)) {
      objectives.resize(static_cast<size_t>(available));
    }
    std::vector<int> ids;
    ids.reserve(objectives.size());
    for (std::string& objective : objectives) {
      ids.push_back(
          tree.add_task(stage, std::move(objective), std::nullopt, options.default_time_limit_s));
    }
    return ids;
  }
  throw GatewayError("objective generation failed after " +
                     std::to_string(options.max_attempts) + " attempts: " + last_error);
}

std::string generate_task_summary(const TaskTree& tree) {
  std::string out;
  for (const Task& task : tree.tasks()) {
    // Indent by ancestry depth so follow-ups sit under their parent.
    int depth = 0;
    std::optional<int> parent = task.parent;
    while (parent) {
      ++depth;
      const Task* parent_task = tree.find(*parent);
      parent = parent_task ? parent_task->parent : std::nullopt;
    }
    out.append(static_cast<size_t>(depth) * 2, ' ');
    out += task_status_glyph(task.status) + " " + stage_name(task.stage) + " #" +
           std::to_string(task.id) + " " + task.description + "\n";
  }
  return out;
}

std::optional<Task> select_next_task(TaskTree& tree, TimePoint now) {
  if (const std::optional<int> active = tree.active_task_id()) {
    throw std::logic_error("task #" + std::to_string(*active) + " is already active");
  }
  for (const Task& task : tree.tasks()) {
    if (task.stage != tree.current_stage() || task.status != TaskStatus::Pending) continue;
    Task* selected = tree.find(task.id);
    selected->status = TaskStatus::Active;
    selected->started_at = now;
    return *selected;
  }
  return std::nullopt;
}

ApplyResult apply_outcome(TaskTree& tree, int task_id, const eval::EvaluationVerdict& verdict,
                          const std::string& analysis, int default_time_limit_s) {
  (void)analysis;  // recorded by the caller; the tree only reacts to the verdict
  ApplyResult result;
  Task* task = tree.find(task_id);
  if (task == nullptr) {
    throw std::invalid_argument("unknown task id " + std::to_string(task_id));
  }
  if (task->status != TaskStatus::Active) {
    throw std::logic_error("verdict applied to non-active task #" + std::to_string(task_id) +
                           " (" + task_status_name(task->status) + ")");
  }

  switch (verdict.decision) {
    case eval::EvaluationVerdict::Decision::Continue:
      break;  // task stays Active
    case eval::EvaluationVerdict::Decision::NextPhase:
      task->status = TaskStatus::Done;
      break;
    case eval::EvaluationVerdict::Decision::ConcludeStage: {
      task->status = TaskStatus::Done;
      const Stage stage = task->stage;
      for (const Task& sibling : tree.tasks()) {
        if (sibling.stage == stage && sibling.status == TaskStatus::Pending) {
          tree.find(sibling.id)->status = TaskStatus::Pruned;
          result.pruned_ids.push_back(sibling.id);
        }
      }
      break;
    }
  }

  if (verdict.proposed_followup &&
      verdict.decision != eval::EvaluationVerdict::Decision::ConcludeStage) {
    const Stage stage = tree.find(task_id)->stage;
    if (tree.direct_subtask_count(stage) < TaskTree::kMaxDirectSubtasks) {
      result.followup_id = tree.add_task(stage, *verdict.proposed_followup, std::nullopt,
                                         default_time_limit_s);
    } else {
      result.followup_dropped = true;
    }
  }
  return result;
}

void fail_active_task(TaskTree& tree) {
  if (const std::optional<int> active = tree.active_task_id()) {
    tree.find(*active)->status = TaskStatus::Failed;
  }
}

nlohmann::json task_to_json(const Task& task) {
  nlohmann::json j;
  j["id"] = task.id;
  j["stage"] = stage_name(task.stage);
  j["description"] = task.description;
  j["status"] = task_status_name(task.status);
  if (task.parent) {
    j["parent"] = *task.parent;
  } else {
    j["parent"] = nullptr;
  }
  if (task.started_at) {
    j["started_at"] = util::iso8601_utc(*task.started_at);
  } else {
    j["started_at"] = nullptr;
  }
  j["time_limit_s"] = task.time_limit_s;
  return j;
}

nlohmann::json tree_to_json(const TaskTree& tree) {
  nlohmann::json j;
  j["current_stage"] = stage_name(tree.current_stage());
  j["tasks"] = nlohmann::json::array();
  for (const Task& task : tree.tasks()) {
    j["tasks"].push_back(task_to_json(task));
  }
  return j;
}

}  // namespace pentagent::plan
