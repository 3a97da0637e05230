#include "pentagent/stage.hpp"

namespace pentagent::plan {

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::Reconnaissance:
      return "Reconnaissance";
    case Stage::VulnerabilityAnalysis:
      return "VulnerabilityAnalysis";
    case Stage::Exploitation:
      return "Exploitation";
  }
  return "Unknown";
}

std::optional<Stage> stage_from_name(std::string_view name) {
  for (Stage s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

std::optional<Stage> next_stage(Stage stage) {
  switch (stage) {
    case Stage::Reconnaissance:
      return Stage::VulnerabilityAnalysis;
    case Stage::VulnerabilityAnalysis:
      return Stage::Exploitation;
    case Stage::Exploitation:
      return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace pentagent::plan
