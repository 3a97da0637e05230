#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace pentagent::plan {

/// The three engagement stages, strictly ordered. A run advances through
/// them monotonically and never revisits an earlier stage.
enum class Stage { Reconnaissance = 0, VulnerabilityAnalysis = 1, Exploitation = 2 };

inline constexpr std::array<Stage, 3> kAllStages = {
    Stage::Reconnaissance, Stage::VulnerabilityAnalysis, Stage::Exploitation};

std::string stage_name(Stage stage);
std::optional<Stage> stage_from_name(std::string_view name);

/// The stage after `stage`, or nullopt at Exploitation.
std::optional<Stage> next_stage(Stage stage);

}  // namespace pentagent::plan
