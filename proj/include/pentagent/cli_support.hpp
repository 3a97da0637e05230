#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "pentagent/state_store.hpp"

namespace pentagent::cli {

/// One human-readable transcript line for a run record (no timestamps, so
/// transcripts are stable across replays of the same log).
std::string format_record_line(const store::RunRecord& record);

/// Prints the event sequence of a run log: commands, denials, analyses, and
/// verdicts. Corrupt lines are reported with their line number and skipped.
/// Returns 0 iff the log contains a RunFinished event.
int replay_run(const std::filesystem::path& logfile, std::ostream& out);

/// Per-stage table (tasks, commands, denials, final verdict, elapsed time)
/// followed by the concatenated analysis summaries. Exit semantics match
/// replay_run.
int emit_report(const std::filesystem::path& logfile, std::ostream& out);

}  // namespace pentagent::cli
