#include "pentagent/prompt_engine.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <utility>

namespace pentagent::prompt {

namespace {

// Scans body for ${...} spans; invokes fn(name, start, end_past_brace).
template <typename Fn>
void scan_variables(const std::string& body, Fn&& fn) {
  size_t pos = 0;
  while ((pos = body.find("${", pos)) != std::string::npos) {
    const size_t close = body.find('}', pos + 2);
    if (close == std::string::npos) {
      throw TemplateError("malformed template: '${' at offset " + std::to_string(pos) +
                          " has no closing '}'");
    }
    std::string name = body.substr(pos + 2, close - pos - 2);
    if (name.empty()) {
      throw TemplateError("malformed template: empty variable name at offset " +
                          std::to_string(pos));
    }
    if (name.find("${") != std::string::npos) {
      throw TemplateError("malformed template: nested '${' inside variable '" + name + "'");
    }
    fn(std::move(name), pos, close + 1);
    pos = close + 1;
  }
}

}  // namespace

PromptTemplate parse_template(std::string name, std::string body) {
  PromptTemplate tmpl;
  tmpl.name = std::move(name);
  scan_variables(body, [&tmpl](std::string var, size_t, size_t) {
    tmpl.required_vars.insert(std::move(var));
  });
  tmpl.body = std::move(body);
  return tmpl;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw TemplateError("template file not found: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_template(path.stem().string(), buf.str());
}

std::string render_template(const PromptTemplate& tmpl, const PromptBindings& bindings,
                            std::vector<std::string>* warnings) {
  if (warnings) {
    for (const auto& [key, _] : bindings.values) {
      if (tmpl.required_vars.count(key) == 0) {
        warnings->push_back("binding '" + key + "' matches no variable in template '" +
                            tmpl.name + "'");
      }
    }
  }
  std::string out;
  out.reserve(tmpl.body.size());
  size_t copied = 0;
  scan_variables(tmpl.body, [&](std::string var, size_t start, size_t end) {
    out.append(tmpl.body, copied, start - copied);
    auto it = bindings.values.find(var);
    if (it == bindings.values.end()) {
      throw TemplateError("unbound template variable '" + var + "' in template '" + tmpl.name +
                          "'");
    }
    out.append(it->second);
    copied = end;
  });
  out.append(tmpl.body, copied, std::string::npos);
  return out;
}

int count_tokens(std::string_view text, const TokenCounter& counter) { return counter(text); }

std::string render_history_record(const exec::CommandRecord& record) {
  std::string analysis = record.analysis.value_or("(no analysis)");
  return "$ " + record.command + "\n-> " + record.exit_marker() + "; " + analysis + "\n";
}

namespace {

// Newest suffix of records whose summed per-record cost fits `limit`,
// rendered chronologically. Returns the text and the number kept.
std::pair<std::string, int> window_records(const std::vector<exec::CommandRecord>& records,
                                           int limit, const TokenCounter& counter) {
  if (limit <= 0 || records.empty()) return {"", 0};
  std::vector<std::string> rendered;
  int total = 0;
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    std::string line = render_history_record(*it);
    const int cost = counter(line);
    if (total + cost > limit) break;
    total += cost;
    rendered.push_back(std::move(line));
  }
  std::string out;
  for (auto it = rendered.rbegin(); it != rendered.rend(); ++it) {
    out += *it;
  }
  return {std::move(out), static_cast<int>(rendered.size())};
}

}  // namespace

std::string window_history(const std::vector<exec::CommandRecord>& records,
                           const TokenBudget& budget, const TokenCounter& counter) {
  return window_records(records, budget.history_budget(), counter).first;
}

BudgetedPrompt render_with_history(const PromptTemplate& tmpl, const PromptBindings& bindings,
                                   const std::vector<exec::CommandRecord>& records,
                                   int context_limit, int reserve, const std::string& state_key,
                                   const TokenCounter& counter) {
  PromptBindings base = bindings;
  base.set("history", "");
  std::string state_value;
  if (auto it = base.values.find(state_key); it != base.values.end()) {
    state_value = it->second;
    it->second.clear();
  }

  TokenBudget budget;
  budget.context_limit = context_limit;
  budget.reserve = reserve;
  budget.template_cost = counter(render_template(tmpl, base));
  budget.state_cost = counter(state_value);
  if (!budget.ok()) {
    throw TemplateError("context budget exhausted: template " +
                        std::to_string(budget.template_cost) + " + state " +
                        std::to_string(budget.state_cost) + " + reserve " +
                        std::to_string(budget.reserve) + " tokens exceed the " +
                        std::to_string(budget.context_limit) + "-token limit");
  }

  BudgetedPrompt result;
  result.budget = budget;
  auto [history, kept] = window_records(records, budget.history_budget(), counter);
  result.history_records_kept = kept;

  PromptBindings full = bindings;
  full.set("history", std::move(history));
  if (!state_value.empty()) full.set(state_key, state_value);
  result.text = render_template(tmpl, full);
  return result;
}

TemplateLibrary TemplateLibrary::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw TemplateError("prompt directory not found: " + dir.string());
  }
  TemplateLibrary lib;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    lib.add(load_template(path));
  }
  return lib;
}

void TemplateLibrary::add(PromptTemplate tmpl) {
  const std::string name = tmpl.name;
  if (!templates_.emplace(name, std::move(tmpl)).second) {
    throw TemplateError("duplicate template name: " + name);
  }
}

const PromptTemplate& TemplateLibrary::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) {
    throw TemplateError("no template named '" + name + "' in library");
  }
  return it->second;
}

}  // namespace pentagent::prompt
