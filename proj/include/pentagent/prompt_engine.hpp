#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pentagent/command_record.hpp"
#include "pentagent/common.hpp"

namespace pentagent::prompt {

/// A named prompt template. `body` is the file content byte-exact;
/// `required_vars` is every `${...}` name occurring in it (dotted paths
/// such as `target.ip` are plain names here).
struct PromptTemplate {
  std::string name;
  std::string body;
  std::set<std::string> required_vars;
};

/// Flat map of already-serialized variable values. Dotted paths are keys
/// verbatim: bindings for `target.ip` live under the key "target.ip".
struct PromptBindings {
  std::map<std::string, std::string> values;

  bool contains(const std::string& name) const { return values.count(name) != 0; }
  void set(std::string name, std::string value) { values[std::move(name)] = std::move(value); }
};

/// Prompt-assembly budget. All figures are token counts under the same
/// counter; `reserve` is output headroom that must stay free.
struct TokenBudget {
  int context_limit = 0;
  int template_cost = 0;
  int state_cost = 0;
  int reserve = 0;

  int history_budget() const { return context_limit - template_cost - state_cost - reserve; }
  bool ok() const { return history_budget() >= 0; }
};

/// Parses `body` into a template. Throws TemplateError on a `${` with no
/// closing brace or an empty variable name.
PromptTemplate parse_template(std::string name, std::string body);

/// Loads a UTF-8 .txt template file; the template is named by the file stem.
/// Throws TemplateError on a missing/unreadable file or malformed body.
PromptTemplate load_template(const std::filesystem::path& path);

/// Substitutes every `${var}` with its binding in one left-to-right pass.
/// Throws TemplateError naming the first unbound variable. Bindings that
/// match no template variable are ignored; when `warnings` is given, one
/// message per ignored binding is appended.
std::string render_template(const PromptTemplate& tmpl, const PromptBindings& bindings,
                            std::vector<std::string>* warnings = nullptr);

int count_tokens(std::string_view text, const TokenCounter& counter = default_token_counter());

/// One history entry as it appears in a prompt: the command line plus its
/// exit marker and analysis summary (never raw stdout).
std::string render_history_record(const exec::CommandRecord& record);

/// Renders the newest suffix of `records` (chronological order preserved)
/// whose summed per-record token cost fits budget.history_budget(). Whole
/// records are dropped oldest-first; an empty result is valid.
std::string window_history(const std::vector<exec::CommandRecord>& records,
                           const TokenBudget& budget,
                           const TokenCounter& counter = default_token_counter());

/// A fully assembled prompt plus the budget figures used to assemble it.
struct BudgetedPrompt {
  std::string text;
  int history_records_kept = 0;
  TokenBudget budget;
};

/// Renders `tmpl` binding `history` to the widest window of `records` that
/// keeps the whole prompt within context_limit - reserve. `bindings` must
/// cover every required variable except `history`; `state_key` names the
/// binding counted as state. Throws TemplateError when even the empty-history
/// render cannot fit.
BudgetedPrompt render_with_history(const PromptTemplate& tmpl, const PromptBindings& bindings,
                                   const std::vector<exec::CommandRecord>& records,
                                   int context_limit, int reserve,
                                   const std::string& state_key = "state",
                                   const TokenCounter& counter = default_token_counter());

/// Loads every .txt file in a directory as a template named by file stem.
class TemplateLibrary {
 public:
  static TemplateLibrary load_dir(const std::filesystem::path& dir);

  void add(PromptTemplate tmpl);
  const PromptTemplate& get(const std::string& name) const;
  bool contains(const std::string& name) const { return templates_.count(name) != 0; }
  size_t size() const { return templates_.size(); }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace pentagent::prompt
