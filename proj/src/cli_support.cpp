#include "pentagent/cli_support.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "pentagent/command_record.hpp"

namespace pentagent::cli {

using nlohmann::json;
using store::RunRecord;

namespace {

std::string one_line(std::string text, size_t cap = 100) {
  for (char& c : text) {
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  }
  if (text.size() > cap) {
    text.resize(cap);
    text += "...";
  }
  return text;
}

std::string payload_str(const json& payload, const char* key) {
  if (payload.contains(key) && payload[key].is_string()) {
    return payload[key].get<std::string>();
  }
  return "";
}

long long payload_int(const json& payload, const char* key) {
  if (payload.contains(key) && payload[key].is_number()) {
    return payload[key].get<long long>();
  }
  return 0;
}

}  // namespace

std::string format_record_line(const RunRecord& record) {
  const json& p = record.payload;
  const std::string event = payload_str(p, "event");
  std::ostringstream out;
  out << std::setw(5) << record.seq << "  " << std::left << std::setw(13)
      << store::record_kind_name(record.kind) << std::right << " ";

  if (event == "RunConfigured") {
    out << "RunConfigured target=" << payload_str(p, "target")
        << " backend=" << payload_str(p, "backend") << " mode=" << payload_str(p, "mode");
  } else if (event == "StageStarted") {
    out << "StageStarted " << payload_str(p, "stage");
  } else if (event == "TaskStarted") {
    const json& task = p.contains("task") ? p["task"] : json::object();
    out << "TaskStarted #" << payload_int(task, "id") << " " << one_line(payload_str(task, "description"));
  } else if (event == "CommandProposed") {
    out << "CommandProposed `" << one_line(payload_str(p, "command")) << "`";
  } else if (event == "CommandDenied") {
    out << "CommandDenied rule=" << payload_str(p, "rule") << " `"
        << one_line(payload_str(p, "command")) << "`";
  } else if (event == "CommandExecuted") {
    const json& rec = p.contains("record") ? p["record"] : json::object();
    exec::CommandRecord command_record = exec::command_record_from_json(rec);
    out << "CommandExecuted `" << one_line(command_record.command) << "` "
        << command_record.exit_marker() << " (" << command_record.stdout_text.size()
        << " bytes stdout)";
  } else if (event == "AnalysisReady") {
    out << "AnalysisReady record=" << payload_int(p, "record_id") << " chars="
        << payload_int(p, "chars") << ": " << one_line(payload_str(p, "text"), 80);
  } else if (event == "VerdictReady") {
    out << "VerdictReady " << payload_str(p, "decision") << ": "
        << one_line(payload_str(p, "reason"), 90);
  } else if (event == "StageConcluded") {
    out << "StageConcluded " << payload_str(p, "stage")
        << " reason=" << payload_str(p, "reason");
  } else if (event == "RunFinished") {
    out << "RunFinished commands=" << payload_int(p, "commands_executed")
        << " denials=" << payload_int(p, "denials") << " errors=" << payload_int(p, "errors");
  } else if (event == "Error") {
    out << "Error " << payload_str(p, "context") << ": " << one_line(payload_str(p, "message"), 90);
  } else if (event == "ScopeVerdict") {
    const bool allowed = p.contains("allowed") && p["allowed"].is_boolean() &&
                         p["allowed"].get<bool>();
    out << "ScopeVerdict " << (allowed ? "allowed" : "denied");
    if (!allowed) out << " rule=" << payload_str(p, "rule");
    out << " `" << one_line(payload_str(p, "command")) << "`";
  } else if (event == "Completion") {
    out << "Completion in=" << payload_int(p, "input_tokens")
        << " out=" << payload_int(p, "output_tokens");
  } else if (event == "StateUpdated") {
    out << "StateUpdated v" << payload_int(p, "version")
        << " tokens=" << payload_int(p, "token_size");
  } else if (record.kind == store::RecordKind::TaskMutation) {
    const json& tree = p.contains("tree") ? p["tree"] : json::object();
    const size_t task_count =
        tree.contains("tasks") && tree["tasks"].is_array() ? tree["tasks"].size() : 0;
    out << "TaskMutation action=" << payload_str(p, "action") << " tasks=" << task_count;
  } else if (!event.empty()) {
    out << event;
  } else {
    out << one_line(p.dump(), 90);
  }
  return out.str();
}

int replay_run(const std::filesystem::path& logfile, std::ostream& out) {
  std::vector<std::string> errors;
  std::vector<RunRecord> records;
  try {
    records = store::RunStore::load(logfile, &errors);
  } catch (const StoreError& e) {
    out << e.what() << "\n";
    return 1;
  }
  for (const std::string& error : errors) {
    out << error << " (skipped)\n";
  }
  if (records.empty()) {
    out << "no records\n";
    return 1;
  }
  bool finished = false;
  for (const RunRecord& record : records) {
    out << format_record_line(record) << "\n";
    if (payload_str(record.payload, "event") == "RunFinished") finished = true;
  }
  return finished ? 0 : 1;
}

namespace {

struct StageRow {
  std::string stage;
  int tasks = 0;
  int commands = 0;
  int denials = 0;
  std::string final_verdict = "-";
  std::string reason;
  long long elapsed_s = 0;
};

}  // namespace

int emit_report(const std::filesystem::path& logfile, std::ostream& out) {
  std::vector<std::string> errors;
  std::vector<RunRecord> records;
  try {
    records = store::RunStore::load(logfile, &errors);
  } catch (const StoreError& e) {
    out << e.what() << "\n";
    return 1;
  }
  for (const std::string& error : errors) {
    out << error << " (skipped)\n";
  }
  if (records.empty()) {
    out << "no records\n";
    return 1;
  }

  std::vector<StageRow> rows;
  std::vector<std::pair<long long, std::string>> analyses;  // record id, text
  bool finished = false;
  int total_commands = 0;
  int total_denials = 0;
  long long total_errors = 0;
  TimePoint stage_start{};

  for (const RunRecord& record : records) {
    const json& p = record.payload;
    const std::string event = payload_str(p, "event");
    if (event == "StageStarted") {
      rows.push_back(StageRow{payload_str(p, "stage"), 0, 0, 0, "-", "", 0});
      stage_start = record.timestamp;
    } else if (!rows.empty()) {
      StageRow& row = rows.back();
      if (event == "TaskStarted") {
        ++row.tasks;
      } else if (event == "CommandExecuted") {
        ++row.commands;
        ++total_commands;
      } else if (event == "CommandDenied") {
        ++row.denials;
        ++total_denials;
      } else if (event == "VerdictReady") {
        row.final_verdict = payload_str(p, "decision");
      } else if (event == "StageConcluded") {
        row.reason = payload_str(p, "reason");
        row.elapsed_s = std::chrono::duration_cast<std::chrono::seconds>(record.timestamp -
                                                                         stage_start)
                            .count();
      }
    }
    if (event == "AnalysisReady") {
      analyses.emplace_back(payload_int(p, "record_id"), payload_str(p, "text"));
    } else if (event == "RunFinished") {
      finished = true;
      total_errors = payload_int(p, "errors");
    }
  }

  out << "Run report: " << logfile.filename().string() << "\n\n";
  out << std::left << std::setw(24) << "Stage" << std::right << std::setw(6) << "Tasks"
      << std::setw(10) << "Commands" << std::setw(9) << "Denials" << "  " << std::left
      << std::setw(15) << "Final verdict" << std::setw(12) << "Reason" << std::right
      << std::setw(9) << "Elapsed" << "\n";
  for (const StageRow& row : rows) {
    out << std::left << std::setw(24) << row.stage << std::right << std::setw(6) << row.tasks
        << std::setw(10) << row.commands << std::setw(9) << row.denials << "  " << std::left
        << std::setw(15) << row.final_verdict << std::setw(12) << row.reason << std::right
        << std::setw(8) << row.elapsed_s << "s\n";
  }
  out << "\nTotals: commands=" << total_commands << " denials=" << total_denials
      << " errors=" << total_errors << (finished ? "" : " (run incomplete)") << "\n";

  if (!analyses.empty()) {
    out << "\nAnalyses:\n";
    for (const auto& [record_id, text] : analyses) {
      out << "  [" << record_id << "] ";
      bool first = true;
      for (const std::string& line : util::split_lines(text)) {
        if (!first) out << "      ";
        out << line << "\n";
        first = false;
      }
    }
  }
  return finished ? 0 : 1;
}

}  // namespace pentagent::cli
