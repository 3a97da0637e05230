#include "pentagent/state_store.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace pentagent::store {

using nlohmann::json;

std::string record_kind_name(RecordKind kind) {
  switch (kind) {
    case RecordKind::Command:
      return "Command";
    case RecordKind::Analysis:
      return "Analysis";
    case RecordKind::Verdict:
      return "Verdict";
    case RecordKind::TaskMutation:
      return "TaskMutation";
    case RecordKind::Event:
      return "Event";
  }
  return "Event";
}

std::optional<RecordKind> record_kind_from_name(std::string_view name) {
  if (name == "Command") return RecordKind::Command;
  if (name == "Analysis") return RecordKind::Analysis;
  if (name == "Verdict") return RecordKind::Verdict;
  if (name == "TaskMutation") return RecordKind::TaskMutation;
  if (name == "Event") return RecordKind::Event;
  return std::nullopt;
}

RunStore RunStore::open(const std::filesystem::path& dir, const std::string& run_id) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw StoreError("cannot create log directory '" + dir.string() + "': " + ec.message());
  }
  RunStore store;
  store.path_ = dir / ("run-" + run_id + ".jsonl");
  store.out_.open(store.path_, std::ios::binary | std::ios::trunc);
  if (!store.out_) {
    throw StoreError("cannot open run log '" + store.path_.string() + "' for writing");
  }
  return store;
}

long long RunStore::append_record(RecordKind kind, json payload, TimePoint timestamp) {
  RunRecord record;
  record.seq = next_seq_;
  record.kind = kind;
  record.payload = std::move(payload);
  record.timestamp = timestamp;

  json line;
  line["seq"] = record.seq;
  line["kind"] = record_kind_name(kind);
  line["timestamp"] = util::iso8601_utc(timestamp);
  line["payload"] = record.payload;

  out_ << line.dump() << '\n';
  out_.flush();
  if (!out_) {
    throw StoreError("write to run log '" + path_.string() + "' failed");
  }
  records_.push_back(std::move(record));
  ++next_seq_;
  return records_.back().seq;
}

std::vector<exec::CommandRecord> RunStore::fetch_history(int limit) const {
  std::vector<exec::CommandRecord> history;
  for (auto it = records_.rbegin(); it != records_.rend() && limit > 0; ++it) {
    if (it->kind != RecordKind::Command) continue;
    if (!it->payload.contains("record")) continue;
    history.push_back(exec::command_record_from_json(it->payload["record"]));
    --limit;
  }
  std::reverse(history.begin(), history.end());
  return history;
}

namespace {

std::set<std::string> fold_tokens(const std::string& text) {
  std::set<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      tokens.insert(current);
      current.clear();
    }
  }
  if (!current.empty()) tokens.insert(current);
  return tokens;
}

}  // namespace

std::vector<RunRecord> RunStore::retrieve_relevant(const RetrievalQuery& query) const {
  const std::set<std::string> query_tokens = fold_tokens(query.query_text);

  struct Scored {
    size_t overlap;
    long long seq;
    const RunRecord* record;
  };
  std::vector<Scored> scored;
  scored.reserve(records_.size());
  for (const RunRecord& record : records_) {
    const std::set<std::string> payload_tokens = fold_tokens(record.payload.dump());
    size_t overlap = 0;
    for (const std::string& token : query_tokens) {
      if (payload_tokens.count(token) != 0) ++overlap;
    }
    scored.push_back({overlap, record.seq, &record});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    return a.seq > b.seq;  // recency breaks ties
  });

  std::vector<RunRecord> out;
  const size_t limit = query.limit < 1 ? 1 : static_cast<size_t>(query.limit);
  for (const Scored& s : scored) {
    if (out.size() >= limit) break;
    out.push_back(*s.record);
  }
  return out;
}

std::vector<RunRecord> RunStore::load(const std::filesystem::path& file,
                                      std::vector<std::string>* errors) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw StoreError("cannot open run log '" + file.string() + "'");
  }
  std::vector<RunRecord> records;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (util::trim(line).empty()) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("seq") ||
        !doc.contains("kind") || !doc.contains("payload")) {
      if (errors) {
        errors->push_back("line " + std::to_string(line_number) + ": unparseable record");
      }
      continue;
    }
    RunRecord record;
    record.seq = doc["seq"].get<long long>();
    record.kind = record_kind_from_name(doc["kind"].get<std::string>())
                      .value_or(RecordKind::Event);
    record.payload = doc["payload"];
    if (doc.contains("timestamp") && doc["timestamp"].is_string()) {
      if (auto ts = util::parse_iso8601_utc(doc["timestamp"].get<std::string>())) {
        record.timestamp = *ts;
      }
    }
    records.push_back(std::move(record));
  }
  return records;
}

// ---------------------------------------------------------------------------
// State snapshot

namespace {

std::string section_heading(plan::Stage stage) { return "## " + plan::stage_name(stage); }

std::string flatten_fact(const std::string& fact) {
  std::string out;
  for (const std::string& line : util::split_lines(fact)) {
    const std::string trimmed = util::trim(line);
    if (trimmed.empty()) continue;
    if (!out.empty()) out += "; ";
    out += trimmed;
  }
  return out;
}

// Parsed view of the snapshot text: headings with their bullet lines, in
// document order (which is chronological).
struct Section {
  std::string heading;
  std::vector<std::string> bullets;
};

std::vector<Section> parse_sections(const std::string& text) {
  std::vector<Section> sections;
  for (const std::string& line : util::split_lines(text)) {
    if (util::starts_with(line, "## ")) {
      sections.push_back(Section{line, {}});
    } else if (util::starts_with(line, "- ") && !sections.empty()) {
      sections.back().bullets.push_back(line);
    }
  }
  return sections;
}

std::string render_sections(const std::vector<Section>& sections) {
  std::string out;
  for (const Section& section : sections) {
    if (section.bullets.empty()) continue;
    if (!out.empty()) out += "\n";
    out += section.heading + "\n";
    for (const std::string& bullet : section.bullets) {
      out += bullet + "\n";
    }
  }
  return out;
}

// The fact text of a bullet, with the leading "- [date] " marker removed.
std::string bullet_fact(const std::string& bullet) {
  std::string s = bullet;
  if (util::starts_with(s, "- ")) s = s.substr(2);
  if (util::starts_with(s, "[")) {
    if (const size_t close = s.find("] "); close != std::string::npos) {
      s = s.substr(close + 2);
    }
  }
  return s;
}

}  // namespace

StateSnapshot update_state(const StateSnapshot& old_snapshot, const std::string& new_facts,
                           plan::Stage stage, TimePoint now, int token_cap,
                           const TokenCounter& counter, const Compactor& compactor) {
  std::vector<Section> sections = parse_sections(old_snapshot.text);

  const std::string fact = flatten_fact(new_facts);
  bool duplicate = false;
  if (!fact.empty()) {
    for (const Section& section : sections) {
      for (const std::string& bullet : section.bullets) {
        if (bullet_fact(bullet) == fact) {
          duplicate = true;
          break;
        }
      }
      if (duplicate) break;
    }
    if (!duplicate) {
      const std::string heading = section_heading(stage);
      auto it = std::find_if(sections.begin(), sections.end(),
                             [&](const Section& s) { return s.heading == heading; });
      if (it == sections.end()) {
        sections.push_back(Section{heading, {}});
        it = std::prev(sections.end());
      }
      it->bullets.push_back("- [" + util::utc_date(now) + "] " + fact);
    }
  }

  StateSnapshot snapshot;
  snapshot.version = old_snapshot.version + 1;
  snapshot.text = render_sections(sections);
  snapshot.token_size = counter(snapshot.text);

  // Over the cap: summarize the oldest section via the compactor when one is
  // given, then (or when that is not enough) drop bullets oldest-first.
  bool compaction_tried = false;
  while (snapshot.token_size > token_cap) {
    auto oldest = std::find_if(sections.begin(), sections.end(),
                               [](const Section& s) { return !s.bullets.empty(); });
    if (oldest == sections.end()) break;
    if (compactor && !compaction_tried && oldest->bullets.size() > 1) {
      compaction_tried = true;  // one summarization attempt per update
      std::string joined;
      for (const std::string& bullet : oldest->bullets) joined += bullet + "\n";
      if (std::optional<std::string> summary = compactor(joined)) {
        oldest->bullets.clear();
        oldest->bullets.push_back("- [compacted] " + flatten_fact(*summary));
      }
    } else {
      oldest->bullets.erase(oldest->bullets.begin());
    }
    snapshot.text = render_sections(sections);
    snapshot.token_size = counter(snapshot.text);
  }

  return snapshot;
}

}  // namespace pentagent::store
