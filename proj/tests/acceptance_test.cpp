// Acceptance gauntlet: every release criterion in one binary, one PASS/FAIL
// line per criterion. Runs offline against the scripted backend and the
// canned-output harness; no network access is required or attempted.

#include <chrono>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "pentagent/cli_support.hpp"
#include "pentagent/evaluator.hpp"
#include "pentagent/executor.hpp"
#include "pentagent/llm_gateway.hpp"
#include "pentagent/orchestrator.hpp"
#include "pentagent/prompt_engine.hpp"
#include "support.hpp"

using namespace pentagent;
using nlohmann::json;
using testsupport::ScratchDir;

namespace {

struct Criterion {
  std::string name;
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& why) {
    if (!ok && pass) {
      pass = false;
      detail = why;
    }
  }
};

std::vector<Criterion> g_results;

void run_criterion(const std::string& name, const std::function<void(Criterion&)>& body) {
  Criterion criterion;
  criterion.name = name;
  try {
    body(criterion);
  } catch (const std::exception& e) {
    criterion.require(false, std::string("exception: ") + e.what());
  }
  std::cout << (criterion.pass ? "[PASS] " : "[FAIL] ") << criterion.name;
  if (!criterion.pass) std::cout << " — " << criterion.detail;
  std::cout << "\n";
  g_results.push_back(criterion);
}

// ---------------------------------------------------------------------------

void scripted_episode(Criterion& c) {
  ScratchDir scratch("acc-episode");
  const auto started = std::chrono::steady_clock::now();
  const testsupport::EpisodeResult result = testsupport::run_episode(scratch.path(), "acc");
  const auto elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - started)
                              .count();

  c.require(result.summary.finished, "run did not finish");
  c.require(result.summary.errors == 0, "episode logged errors (unbound variables or worse)");
  c.require(result.summary.denials == 0, "episode denied an in-scope command");
  c.require(result.summary.stages.size() == 3, "expected three stages");
  int stage_started = 0;
  for (const auto event : result.events) {
    stage_started += event == engine::EventKind::StageStarted ? 1 : 0;
  }
  c.require(stage_started == 3, "expected three StageStarted events");
  for (const auto& stage : result.summary.stages) {
    c.require(stage.commands >= 1, "a stage executed no command");
  }
  c.require(!result.events.empty() &&
                result.events.back() == engine::EventKind::RunFinished,
            "missing RunFinished");

  const std::string kinds = testsupport::event_kinds_text(result.events);
  const std::string golden =
      testsupport::read_file(testsupport::golden_dir() / "episode_events.txt");
  c.require(!golden.empty(), "golden event sequence missing");
  c.require(kinds == golden, "event sequence deviates from the golden sequence");
  c.require(elapsed_ms < 10000, "episode took " + std::to_string(elapsed_ms) + " ms");
}

void objective_cap(Criterion& c) {
  const prompt::TemplateLibrary library =
      prompt::TemplateLibrary::load_dir(testsupport::prompts_dir());
  std::mt19937 rng(31337);
  std::uniform_int_distribution<int> list_len(0, 10);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = list_len(rng);
    std::vector<std::string> objectives;
    for (int i = 0; i < n; ++i) objectives.push_back("objective-" + std::to_string(i));
    llm::ScriptedBackend backend(
        {{"cycle named", llm::serialize_json_array(objectives), -1}});
    llm::Gateway gateway(backend);
    plan::TaskTree tree;
    if (n == 0) {
      try {
        plan::generate_objectives(tree, plan::Stage::Reconnaissance, "", gateway, library);
        c.require(false, "empty objective list was accepted");
      } catch (const GatewayError&) {
      }
      continue;
    }
    plan::generate_objectives(tree, plan::Stage::Reconnaissance, "", gateway, library);
    const auto& tasks = tree.tasks();
    c.require(static_cast<int>(tasks.size()) <= 3, "more than three tasks generated");
    c.require(static_cast<int>(tasks.size()) == std::min(n, 3), "wrong task count");
    for (size_t i = 0; i < tasks.size(); ++i) {
      c.require(tasks[i].description == "objective-" + std::to_string(i),
                "task order not preserved");
    }
  }
}

void scope_fail_closed(Criterion& c) {
  ScratchDir scratch("acc-scope");
  const std::vector<std::pair<std::string, std::string>> corpus = {
      {"sudo nmap -sS 10.10.10.40", "sudo-password"},
      {"nc 10.10.10.40 80", "forbidden-substring nc"},
      {"smbclient //10.10.10.40/share -N", "interactive-downgrade"},
      {"nmap -sn 10.10.10.0/24", "range-scan"},
      {"curl http://10.10.14.5/tools.txt", "target-out-of-scope"},
      {"apt-get install -y nikto", "forbidden-program apt-get"},
      {"tcpdump -i eth0 port 445", "forbidden-program tcpdump"},
      {"sqlmap -u http://assumed-db.local/login.asp", "target-out-of-scope"},
  };

  json rules = json::array();
  rules.push_back({{"match", "cycle named"}, {"response", R"(["work the corpus"])"}});
  for (const auto& [command, rule] : corpus) {
    rules.push_back({{"match", "Give your command"}, {"response", command}, {"max_uses", 1}});
  }
  rules.push_back({{"match", "Give your command"}, {"response", "nc 10.10.10.40 1"}});

  std::vector<llm::ScriptedRule> parsed;
  for (const auto& rule : rules) {
    parsed.push_back({rule["match"].get<std::string>(), rule["response"].get<std::string>(),
                      rule.value("max_uses", -1)});
  }
  llm::ScriptedBackend backend(std::move(parsed));
  llm::Gateway gateway(backend);
  store::RunStore run_store = store::RunStore::open(scratch.path() / "logs", "scope");
  engine::RunConfig config = testsupport::episode_config(scratch.path() / "logs", "scope");
  config.evaluator_mode = eval::EvaluatorMode::Deterministic;
  config.max_iterations = static_cast<int>(corpus.size());

  std::vector<json> denials;
  int executions = 0;
  engine::Engine eng(config, gateway, run_store, [&](const engine::EngineEvent& event) {
    if (event.kind == engine::EventKind::CommandDenied) denials.push_back(event.payload);
    if (event.kind == engine::EventKind::CommandExecuted) ++executions;
  });
  const engine::RunSummary summary = eng.run_pentest();

  c.require(summary.finished, "run did not finish");
  c.require(executions == 0, "the executor ran a corpus command");
  c.require(summary.commands_executed == 0, "summary reports executions");
  c.require(denials.size() >= corpus.size(), "not every corpus command was denied");
  for (size_t i = 0; i < corpus.size(); ++i) {
    const std::string command = denials[i]["command"].get<std::string>();
    const std::string rule = denials[i]["rule"].get<std::string>();
    c.require(command == corpus[i].first,
              "denial order mismatch at " + std::to_string(i) + ": " + command);
    c.require(rule == corpus[i].second,
              "rule mismatch for '" + command + "': " + rule);
  }
}

void token_budget_property(Criterion& c) {
  const prompt::TemplateLibrary library =
      prompt::TemplateLibrary::load_dir(testsupport::prompts_dir());
  const prompt::PromptTemplate& tmpl = library.get("query_next_command");

  std::mt19937 rng(271828);
  std::uniform_int_distribution<int> record_count(0, 60);
  std::uniform_int_distribution<int> text_len(0, 300);
  std::uniform_int_distribution<int> limit_dist(200, 6000);
  std::uniform_int_distribution<int> reserve_dist(0, 512);

  int rendered = 0;
  int refused = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    prompt::PromptBindings bindings;
    bindings.set("current_role", "acceptance tester");
    bindings.set("current_task", "probe the harness");
    bindings.set("constraints", std::string(static_cast<size_t>(text_len(rng)), 'c'));
    bindings.set("target.ip", "10.10.10.40");
    bindings.set("state", std::string(static_cast<size_t>(text_len(rng) * 4), 's'));
    bindings.set("analyzation", std::string(static_cast<size_t>(text_len(rng)), 'a'));
    bindings.set("task_tree", "[ ] Reconnaissance #1 probe the harness");

    std::vector<exec::CommandRecord> records;
    const int n = record_count(rng);
    for (int i = 0; i < n; ++i) {
      exec::CommandRecord record;
      record.id = i + 1;
      record.command = std::string(static_cast<size_t>(text_len(rng)), 'x');
      record.exit_code = 0;
      record.analysis = std::string(static_cast<size_t>(text_len(rng)), 'y');
      records.push_back(std::move(record));
    }

    const int limit = limit_dist(rng);
    const int reserve = reserve_dist(rng);
    try {
      const prompt::BudgetedPrompt prompt =
          prompt::render_with_history(tmpl, bindings, records, limit, reserve);
      ++rendered;
      c.require(prompt::count_tokens(prompt.text) <= limit - reserve,
                "prompt of " + std::to_string(prompt::count_tokens(prompt.text)) +
                    " tokens exceeded " + std::to_string(limit - reserve));
    } catch (const TemplateError&) {
      ++refused;  // refusing to render is the correct behavior when over budget
    }
  }
  c.require(rendered > 0, "no prompt rendered at all");
  c.require(rendered + refused == 1000, "trial accounting is off");
}

void evaluator_truth_table(Criterion& c) {
  const long long elapsed_grid[] = {0, 100, 299, 300, 900};
  const int iteration_grid[] = {1, 3, 4, 5, 8};
  const int fresh_grid[] = {0, 1, 2, 3, 4};
  int checked = 0;
  for (long long elapsed : elapsed_grid) {
    for (int iteration : iteration_grid) {
      for (int fresh : fresh_grid) {
        std::string old_text, new_text;
        for (int i = 0; i < 4; ++i) {
          new_text += "line-" + std::to_string(i) + "\n";
          if (i >= fresh) old_text += "line-" + std::to_string(i) + "\n";
        }
        eval::ProgressInputs inputs;
        inputs.start_time = std::chrono::system_clock::from_time_t(5000);
        inputs.cur_time = inputs.start_time + std::chrono::seconds(elapsed);
        inputs.max_time_per_task_s = 300;
        inputs.iteration = iteration;
        inputs.max_iterations = 5;
        inputs.old_information = old_text;
        inputs.new_information = new_text;
        inputs.min_new_information = 0.10;

        // Oracle restated directly from the rules.
        const double ratio = fresh / 4.0;
        eval::EvaluationVerdict::Decision expected;
        if (elapsed >= 300) {
          expected = eval::EvaluationVerdict::Decision::NextPhase;
        } else if (iteration >= 5 && ratio < 0.10) {
          expected = eval::EvaluationVerdict::Decision::ConcludeStage;
        } else {
          expected = eval::EvaluationVerdict::Decision::Continue;
        }
        const auto actual = eval::evaluate_progress_deterministic(inputs).decision;
        c.require(actual == expected,
                  "cell (" + std::to_string(elapsed) + "," + std::to_string(iteration) + "," +
                      std::to_string(fresh) + ") decided " + eval::decision_name(actual));
        ++checked;
      }
    }
  }
  c.require(checked == 125, "grid cell count " + std::to_string(checked));
}

void cleaner_idempotence(Criterion& c) {
  const json corpus = json::parse(
      testsupport::read_file(testsupport::fixtures_dir() / "noisy_completions.json"));
  c.require(corpus.size() == 30, "fixture corpus is not 30 entries");
  for (const auto& fixture : corpus) {
    const std::string raw = fixture["raw"].get<std::string>();
    const auto cleaned = llm::clean_command_output(raw);
    c.require(cleaned.has_value(), "fixture cleaned to nothing: " + raw.substr(0, 40));
    if (cleaned) {
      c.require(*cleaned == fixture["want"].get<std::string>(),
                "fixture mismatch: got '" + *cleaned + "'");
    }
  }

  std::mt19937 rng(5150);
  const std::string alphabet = "ab \n`$#x-\t`";
  std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> len(0, 80);
  for (int trial = 0; trial < 10000; ++trial) {
    std::string raw(static_cast<size_t>(len(rng)), ' ');
    for (char& ch : raw) ch = alphabet[pick(rng)];
    const auto once = llm::clean_command_output(raw);
    if (!once) continue;
    const auto twice = llm::clean_command_output(*once);
    c.require(twice.has_value() && *twice == *once,
              "clean not idempotent for: " + raw.substr(0, 60));
    if (!c.pass) return;
  }
}

void interactive_session(Criterion& c) {
  {
    std::vector<exec::ExpectRule> rules = {{"login:", "guest\n", false}, {"guest", "", true}};
    const auto started = std::chrono::steady_clock::now();
    const exec::InteractiveSession session =
        exec::run_interactive_script("sh fixtures/login.sh", rules, 10);
    const auto elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - started)
                                .count();
    c.require(session.state == exec::SessionState::Completed,
              "login session ended " + exec::session_state_name(session.state));
    c.require(session.transcript.find("login:") != std::string::npos, "prompt not captured");
    c.require(session.transcript.find("guest") != std::string::npos, "reply not captured");
    c.require(elapsed_ms < 2000, "login session took " + std::to_string(elapsed_ms) + " ms");
  }
  {
    std::vector<exec::ExpectRule> rules = {{"never-appears-in-output", "", true}};
    const auto started = std::chrono::steady_clock::now();
    const exec::InteractiveSession session =
        exec::run_interactive_script("sh -c 'echo waiting; sleep 30'", rules, 2);
    const auto elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - started)
                                .count();
    c.require(session.state == exec::SessionState::TimedOut,
              "session ended " + exec::session_state_name(session.state));
    c.require(elapsed_ms >= 1750 && elapsed_ms <= 2250,
              "timed out after " + std::to_string(elapsed_ms) + " ms (bound 2000 +/- 250)");
  }
}

void replay_determinism(Criterion& c) {
  ScratchDir scratch_a("acc-replay-a");
  ScratchDir scratch_b("acc-replay-b");
  const auto first = testsupport::run_episode(scratch_a.path(), "twin");
  const auto second = testsupport::run_episode(scratch_b.path(), "twin");
  const std::string log_a =
      testsupport::normalize_log_text(testsupport::read_file(first.log_path));
  const std::string log_b =
      testsupport::normalize_log_text(testsupport::read_file(second.log_path));
  c.require(!log_a.empty(), "first run produced an empty log");
  c.require(log_a == log_b, "normalized logs differ between identical runs");

  std::ostringstream transcript;
  const int exit_code =
      cli::replay_run(testsupport::golden_dir() / "episode_log.jsonl", transcript);
  c.require(exit_code == 0, "replay of the golden log failed");
  c.require(transcript.str() ==
                testsupport::read_file(testsupport::golden_dir() / "replay_transcript.txt"),
            "replay transcript deviates from the pinned transcript");
}

void summary_cap(Criterion& c) {
  ScratchDir scratch("acc-cap");
  const testsupport::EpisodeResult result = testsupport::run_episode(scratch.path(), "cap");
  c.require(result.summary.finished, "episode did not finish");
  const auto records = store::RunStore::load(result.log_path);
  int analyses = 0;
  for (const auto& record : records) {
    if (record.kind != store::RecordKind::Analysis) continue;
    ++analyses;
    const std::string text = record.payload.value("text", std::string());
    c.require(static_cast<int>(text.size()) <= 1500,
              "analysis of " + std::to_string(text.size()) + " chars exceeds the cap");
  }
  c.require(analyses >= 3, "expected at least three stored analyses");
}

}  // namespace

int main() {
  const auto suite_start = std::chrono::steady_clock::now();

  run_criterion("scripted end-to-end episode (golden event sequence, <10s, no network)",
                scripted_episode);
  run_criterion("objective cap (100 randomized lists, <=3 order-preserving)", objective_cap);
  run_criterion("scope fail-closed corpus (8 failure classes, zero executions)",
                scope_fail_closed);
  run_criterion("token budget property (1000 randomized histories/budgets)",
                token_budget_property);
  run_criterion("evaluator truth table (125 cells vs independent oracle)",
                evaluator_truth_table);
  run_criterion("cleaner fixtures + idempotence (30 fixtures, 10k random strings)",
                cleaner_idempotence);
  run_criterion("interactive session (scripted login <2s, timeout at bound +/-250ms)",
                interactive_session);
  run_criterion("replay determinism (byte-identical normalized logs, pinned transcript)",
                replay_determinism);
  run_criterion("summary cap (every stored analysis <= summary_max_chars)", summary_cap);

  const auto suite_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - suite_start)
                            .count();
  int failures = 0;
  for (const auto& criterion : g_results) failures += criterion.pass ? 0 : 1;
  std::cout << g_results.size() - failures << "/" << g_results.size() << " criteria passed in "
            << suite_ms << " ms\n";
  return failures == 0 ? 0 : 1;
}
