#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pentagent/command_record.hpp"
#include "pentagent/common.hpp"
#include "pentagent/stage.hpp"

namespace pentagent::store {

enum class RecordKind { Command, Analysis, Verdict, TaskMutation, Event };

std::string record_kind_name(RecordKind kind);
std::optional<RecordKind> record_kind_from_name(std::string_view name);

/// One immutable line of the run log.
struct RunRecord {
  long long seq = 0;
  RecordKind kind = RecordKind::Event;
  nlohmann::json payload;
  TimePoint timestamp{};
};

struct RetrievalQuery {
  std::string query_text;
  int limit = 1;
};

/// Append-only JSON-lines log of a run, one object per line:
/// {"seq": n, "kind": "...", "timestamp": "...Z", "payload": {...}}.
/// Every append is flushed before control returns; a write failure throws
/// StoreError and is fatal to the run.
class RunStore {
 public:
  /// Creates `<dir>/run-<run_id>.jsonl` (truncating any stale file of the
  /// same name) and returns the open store.
  static RunStore open(const std::filesystem::path& dir, const std::string& run_id);

  RunStore(RunStore&&) = default;
  RunStore& operator=(RunStore&&) = default;

  long long append_record(RecordKind kind, nlohmann::json payload, TimePoint timestamp);

  const std::vector<RunRecord>& records() const { return records_; }
  const std::filesystem::path& path() const { return path_; }

  /// The newest `limit` command records, chronological order.
  std::vector<exec::CommandRecord> fetch_history(int limit) const;

  /// Keyword-overlap retrieval: case-folded token intersection between the
  /// query and each record's payload text, ties broken by recency. Records
  /// with zero overlap still rank (recency fallback).
  std::vector<RunRecord> retrieve_relevant(const RetrievalQuery& query) const;

  /// Reads a run log back; unparseable lines are reported into `errors`
  /// ("line N: ...") and skipped.
  static std::vector<RunRecord> load(const std::filesystem::path& file,
                                     std::vector<std::string>* errors = nullptr);

 private:
  RunStore() = default;

  std::filesystem::path path_;
  std::ofstream out_;
  long long next_seq_ = 1;
  std::vector<RunRecord> records_;
};

/// The evolving natural-language knowledge of the target. `token_size` is
/// always count_tokens(text); `version` increases by exactly one per update.
struct StateSnapshot {
  int version = 0;
  std::string text;
  int token_size = 0;
};

/// Optional compaction hook: given the bullet text of the oldest section,
/// return a one-bullet replacement summary (or nullopt to decline).
using Compactor = std::function<std::optional<std::string>(const std::string&)>;

/// Appends `new_facts` as a dated bullet under the heading for `stage`,
/// bumping the version and recomputing the token size. Exact duplicate facts
/// are not appended twice (the version still bumps). When the text exceeds
/// `token_cap` tokens, the oldest bullets are compacted via `compactor`,
/// falling back to dropping them oldest-first.
StateSnapshot update_state(const StateSnapshot& old_snapshot, const std::string& new_facts,
                           plan::Stage stage, TimePoint now, int token_cap,
                           const TokenCounter& counter = default_token_counter(),
                           const Compactor& compactor = {});

}  // namespace pentagent::store
