#include "pentagent/orchestrator.hpp"

#include <cstdlib>

#include "doctest.h"
#include "support.hpp"

using namespace pentagent;
using namespace pentagent::engine;
using nlohmann::json;
using testsupport::ScratchDir;

namespace {

struct Capture {
  std::vector<EngineEvent> events;
  Observer observer() {
    return [this](const EngineEvent& event) { events.push_back(event); };
  }
  int count(EventKind kind) const {
    int n = 0;
    for (const auto& event : events) n += event.kind == kind ? 1 : 0;
    return n;
  }
  std::vector<json> payloads(EventKind kind) const {
    std::vector<json> out;
    for (const auto& event : events) {
      if (event.kind == kind) out.push_back(event.payload);
    }
    return out;
  }
};

RunConfig base_config(const ScratchDir& scratch, const std::string& run_id) {
  return testsupport::episode_config(scratch.path() / "logs", run_id);
}

llm::ScriptedBackend backend_from(const json& rules) {
  std::vector<llm::ScriptedRule> parsed;
  for (const auto& rule : rules) {
    parsed.push_back({rule["match"].get<std::string>(), rule["response"].get<std::string>(),
                      rule.value("max_uses", -1)});
  }
  return llm::ScriptedBackend(std::move(parsed));
}

}  // namespace

TEST_CASE("the scripted episode walks all three stages and matches the golden sequence") {
  ScratchDir scratch("episode");
  const testsupport::EpisodeResult result = testsupport::run_episode(scratch.path(), "unit");

  CHECK(result.summary.finished);
  CHECK(result.summary.commands_executed == 3);
  CHECK(result.summary.denials == 0);
  CHECK(result.summary.errors == 0);
  REQUIRE(result.summary.stages.size() == 3);
  for (const auto& stage : result.summary.stages) {
    CHECK(stage.conclusion_reason == "concluded");
    CHECK(stage.commands == 1);
  }

  const std::string kinds = testsupport::event_kinds_text(result.events);
  const auto golden_path = testsupport::golden_dir() / "episode_events.txt";
  if (const char* regen = std::getenv("PENTAGENT_REGEN_GOLDEN"); regen && *regen == '1') {
    testsupport::write_file(golden_path, kinds);
  }
  CHECK(kinds == testsupport::read_file(golden_path));
}

TEST_CASE("every executed command was first allowed by a logged scope verdict") {
  ScratchDir scratch("guard");
  const std::filesystem::path script = testsupport::write_episode_script(scratch.path());
  llm::ScriptedBackend backend = llm::ScriptedBackend::from_file(script);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "guard");
  Engine engine(base_config(scratch, "guard"), gateway, run_store);
  engine.run_pentest();

  std::set<std::string> allowed_commands;
  int executed = 0;
  for (const auto& record : run_store.records()) {
    const std::string event = record.payload.value("event", "");
    if (event == "ScopeVerdict" && record.payload.value("allowed", false)) {
      allowed_commands.insert(record.payload["command"].get<std::string>());
    }
    if (event == "CommandExecuted") {
      ++executed;
      const std::string command = record.payload["record"]["command"].get<std::string>();
      CAPTURE(command);
      CHECK(allowed_commands.count(command) == 1);
    }
  }
  CHECK(executed == 3);
}

TEST_CASE("dry-run proposes but never executes") {
  ScratchDir scratch("dryrun");
  const std::filesystem::path script = testsupport::write_episode_script(scratch.path());
  llm::ScriptedBackend backend = llm::ScriptedBackend::from_file(script);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "dry");
  RunConfig config = base_config(scratch, "dry");
  config.mode = Mode::DryRun;
  Capture capture;
  Engine engine(config, gateway, run_store, capture.observer());
  const RunSummary summary = engine.run_pentest();

  CHECK(summary.finished);
  CHECK(summary.commands_executed == 0);
  CHECK(capture.count(EventKind::CommandProposed) == 3);
  CHECK(capture.count(EventKind::CommandExecuted) == 0);
  CHECK(capture.count(EventKind::AnalysisReady) == 0);
}

TEST_CASE("a backend proposing only denied commands still finishes the run") {
  ScratchDir scratch("denied");
  json rules = json::array();
  rules.push_back({{"match", "cycle named"}, {"response", R"(["probe the target"])"}});
  rules.push_back({{"match", "Give your command"}, {"response", "nc 10.10.10.40 80"}});
  llm::ScriptedBackend backend = backend_from(rules);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "denied");
  RunConfig config = base_config(scratch, "denied");
  config.evaluator_mode = eval::EvaluatorMode::Deterministic;
  config.max_iterations = 1;
  Capture capture;
  Engine engine(config, gateway, run_store, capture.observer());
  const RunSummary summary = engine.run_pentest();

  CHECK(summary.finished);
  CHECK(summary.commands_executed == 0);
  CHECK(summary.denials == 3);
  const auto denials = capture.payloads(EventKind::CommandDenied);
  REQUIRE(denials.size() == 3);
  for (const auto& payload : denials) {
    CHECK(payload["rule"] == "forbidden-substring nc");
    CHECK(payload["iteration"] == 1);  // denied iterations still count
  }
}

TEST_CASE("step_task continues on fresh information and concludes on stale") {
  ScratchDir scratch("steps");
  json rules = json::array();
  rules.push_back({{"match", "cycle named"}, {"response", R"(["probe the local harness"])"}});
  rules.push_back({{"match", "distill this data"},
                   {"response", "the harness echoed recon-data back; execution works"}});
  rules.push_back({{"match", "Give your command"}, {"response", "echo recon-data"}});
  llm::ScriptedBackend backend = backend_from(rules);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "steps");
  RunConfig config = base_config(scratch, "steps");
  config.evaluator_mode = eval::EvaluatorMode::Deterministic;
  config.max_iterations = 2;
  Capture capture;
  Engine engine(config, gateway, run_store, capture.observer());
  const RunSummary summary = engine.run_pentest();

  CHECK(summary.finished);
  CHECK(summary.commands_executed == 6);  // two iterations per stage
  const auto verdicts = capture.payloads(EventKind::VerdictReady);
  REQUIRE(verdicts.size() == 6);
  CHECK(verdicts[0]["decision"] == "Continue");
  CHECK(verdicts[1]["decision"] == "ConcludeStage");
  CHECK(engine.state().text.find("recon-data") != std::string::npos);
}

TEST_CASE("tasks that exceed their time limit advance without executing") {
  ScratchDir scratch("timelimit");
  json rules = json::array();
  rules.push_back({{"match", "cycle named"}, {"response", R"(["t1","t2","t3"])"}});
  llm::ScriptedBackend backend = backend_from(rules);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "time");
  RunConfig config = base_config(scratch, "time");
  config.evaluator_mode = eval::EvaluatorMode::Deterministic;

  // Every clock read jumps 400 s, so each task is over its 300 s budget by
  // the time its first iteration starts.
  auto fake_now = std::make_shared<TimePoint>(std::chrono::system_clock::from_time_t(1000));
  Clock clock = [fake_now] {
    *fake_now += std::chrono::seconds(400);
    return *fake_now;
  };
  Capture capture;
  Engine engine(config, gateway, run_store, capture.observer(), clock);
  const RunSummary summary = engine.run_pentest();

  CHECK(summary.finished);
  CHECK(summary.commands_executed == 0);
  CHECK(capture.count(EventKind::CommandProposed) == 0);
  REQUIRE(summary.stages.size() == 3);
  for (const auto& stage : summary.stages) {
    CHECK(stage.conclusion_reason == "exhaustion");
    CHECK(stage.tasks == 3);  // all three objectives ran out of time, all Done
  }
  const auto verdicts = capture.payloads(EventKind::VerdictReady);
  REQUIRE(verdicts.size() == 9);
  for (const auto& payload : verdicts) {
    CHECK(payload["decision"] == "NextPhase");
    CHECK(payload["reason"].get<std::string>().find("time limit") != std::string::npos);
  }
}

TEST_CASE("the iteration cap forces progress when the evaluator keeps continuing") {
  ScratchDir scratch("itercap");
  json rules = json::array();
  rules.push_back({{"match", "cycle named"}, {"response", R"(["keep finding new data"])"}});
  rules.push_back({{"match", "Give your command"}, {"response", "date +%s%N"}});
  // No analysis rule: the deterministic digest of the changing output keeps
  // the new-information ratio at 1.0, so the evaluator would continue forever.
  llm::ScriptedBackend backend = backend_from(rules);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "cap");
  RunConfig config = base_config(scratch, "cap");
  config.evaluator_mode = eval::EvaluatorMode::Deterministic;
  config.max_iterations = 2;
  Capture capture;
  Engine engine(config, gateway, run_store, capture.observer());
  const RunSummary summary = engine.run_pentest();

  CHECK(summary.finished);
  CHECK(summary.commands_executed <= 3 * 3 * config.max_iterations);
  CHECK(summary.commands_executed == 6);
  bool saw_override = false;
  for (const auto& payload : capture.payloads(EventKind::VerdictReady)) {
    if (payload.contains("overridden_from")) {
      saw_override = true;
      CHECK(payload["overridden_from"] == "Continue");
      CHECK(payload["decision"] == "NextPhase");
    }
  }
  CHECK(saw_override);
}

TEST_CASE("interactive commands without usable expect rules are downgraded") {
  ScratchDir scratch("downgrade");
  json rules = json::array();
  rules.push_back({{"match", "cycle named"}, {"response", R"(["inspect the smb share"])"}});
  rules.push_back({{"match", "Give your command"},
                   {"response", "smbclient //10.10.10.40/share -N"}});
  llm::ScriptedBackend backend = backend_from(rules);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "downgrade");
  RunConfig config = base_config(scratch, "downgrade");
  config.evaluator_mode = eval::EvaluatorMode::Deterministic;
  config.max_iterations = 1;
  Capture capture;
  Engine engine(config, gateway, run_store, capture.observer());
  const RunSummary summary = engine.run_pentest();

  CHECK(summary.finished);
  CHECK(summary.commands_executed == 0);
  CHECK(summary.denials == 3);
  for (const auto& payload : capture.payloads(EventKind::CommandDenied)) {
    CHECK(payload["rule"] == "interactive-downgrade");
  }
}

TEST_CASE("interactive commands with scripted expect rules run under the pty") {
  ScratchDir scratch("interactive");
  json expect_rules = json::array();
  expect_rules.push_back({{"pattern", ">>>"}, {"send", "print('hello-interactive')\n"}});
  expect_rules.push_back({{"pattern", "hello-interactive"}, {"terminal", true}});

  json rules = json::array();
  rules.push_back({{"match", "cycle named"}, {"response", R"(["open a python session"])"}});
  rules.push_back({{"match", "Provide the expect rules"}, {"response", expect_rules.dump()}});
  rules.push_back({{"match", "Give your command"}, {"response", "python3"}});
  llm::ScriptedBackend backend = backend_from(rules);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "interactive");
  RunConfig config = base_config(scratch, "interactive");
  config.evaluator_mode = eval::EvaluatorMode::Deterministic;
  config.max_iterations = 1;
  Capture capture;
  Engine engine(config, gateway, run_store, capture.observer());
  const RunSummary summary = engine.run_pentest();

  CHECK(summary.finished);
  CHECK(summary.commands_executed == 3);
  const auto executions = capture.payloads(EventKind::CommandExecuted);
  REQUIRE(!executions.empty());
  for (const auto& payload : executions) {
    CHECK(payload["interactive"] == true);
    CHECK(payload["record"]["stdout"].get<std::string>().find("hello-interactive") !=
          std::string::npos);
  }
}

TEST_CASE("oversized state falls back to retrieval excerpts") {
  ScratchDir scratch("excerpt");
  std::string big_analysis;
  for (int i = 0; i < 500; ++i) big_analysis += "finding line " + std::to_string(i) + "\n";
  REQUIRE(big_analysis.size() > 8000);

  json rules = json::array();
  rules.push_back({{"match", "cycle named"}, {"response", R"(["probe the harness deeply"])"}});
  rules.push_back({{"match", "distill this data"}, {"response", big_analysis}});
  rules.push_back({{"match", "Give your command"}, {"response", "echo probe-data"}});
  llm::ScriptedBackend backend = backend_from(rules);
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "excerpt");
  RunConfig config = base_config(scratch, "excerpt");
  config.evaluator_mode = eval::EvaluatorMode::Deterministic;
  config.max_iterations = 2;
  config.summary_max_chars = 9000;
  config.context_limit = 3500;
  config.reserve_tokens = 64;
  Capture capture;
  Engine engine(config, gateway, run_store, capture.observer());
  const RunSummary summary = engine.run_pentest();

  CHECK(summary.finished);
  CHECK(summary.errors == 0);
  bool saw_excerpt = false;
  for (const auto& record : run_store.records()) {
    if (record.payload.value("event", "") == "StateExcerpted") saw_excerpt = true;
  }
  CHECK(saw_excerpt);
}

TEST_CASE("two identical scripted runs produce byte-identical normalized logs") {
  ScratchDir scratch_a("replay-a");
  ScratchDir scratch_b("replay-b");
  const auto first = testsupport::run_episode(scratch_a.path(), "twin");
  const auto second = testsupport::run_episode(scratch_b.path(), "twin");
  const std::string log_a = testsupport::normalize_log_text(testsupport::read_file(first.log_path));
  const std::string log_b =
      testsupport::normalize_log_text(testsupport::read_file(second.log_path));
  CHECK(log_a == log_b);
  CHECK(testsupport::event_kinds_text(first.events) ==
        testsupport::event_kinds_text(second.events));
}

TEST_CASE("config validation rejects bad field combinations") {
  ScratchDir scratch("config");
  RunConfig config = base_config(scratch, "cfg");

  SUBCASE("target outside the policy") {
    config.target.ip = "10.10.99.99";
    json rules = json::array();
    llm::ScriptedBackend backend = backend_from(rules);
    llm::Gateway gateway(backend);
    store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "cfg");
    CHECK_THROWS_AS(Engine(config, gateway, run_store), std::invalid_argument);
  }
  SUBCASE("non-positive iteration cap") {
    config.max_iterations = 0;
    json rules = json::array();
    llm::ScriptedBackend backend = backend_from(rules);
    llm::Gateway gateway(backend);
    store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "cfg2");
    CHECK_THROWS_AS(Engine(config, gateway, run_store), std::invalid_argument);
  }
  SUBCASE("missing prompt directory is fatal") {
    config.prompts_dir = scratch.path() / "nope";
    json rules = json::array();
    llm::ScriptedBackend backend = backend_from(rules);
    llm::Gateway gateway(backend);
    store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "cfg3");
    CHECK_THROWS_AS(Engine(config, gateway, run_store), TemplateError);
  }
  SUBCASE("run ids are restricted to a safe character set") {
    config.run_id = "../escape";
    json rules = json::array();
    llm::ScriptedBackend backend = backend_from(rules);
    llm::Gateway gateway(backend);
    store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "cfg4");
    CHECK_THROWS_AS(Engine(config, gateway, run_store), std::invalid_argument);
  }
}
