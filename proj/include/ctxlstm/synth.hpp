#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ctxlstm/dataset.hpp"
#include "json.hpp"

namespace ctxlstm {

/// Explicit route for one agent; when SynthConfig::plans is non-empty it
/// replaces the random entry/visit/exit plan.
struct AgentPlan {
  int spawn_step = 0;
  Point start;
  std::vector<Point> visits;  // dwell at each, in order
  Point exit;
};

/// Social-force style crowd with attractors. Lengths in meters, speeds in
/// meters per simulation step; one step is one emitted frame.
struct SynthConfig {
  int agents = 50;
  double arena_width = 16.0;
  double arena_height = 16.0;
  int attractor_count = 3;
  std::vector<Point> attractors;  // explicit positions override attractor_count
  double attractor_margin = 3.0;
  double attractor_separation = 5.0;
  int visits_per_agent = 2;
  double preferred_speed = 0.05;
  double repulsion_strength = 0.1;
  double repulsion_radius = 0.5;
  int dwell_steps = 150;
  double visit_spread = 0.4;
  double arrival_radius = 0.15;
  double noise = 0.004;
  int spawn_interval = 15;
  int total_steps = 1500;
  std::uint64_t seed = 1;
  std::vector<AgentPlan> plans;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Unknown keys are rejected; missing keys keep their defaults.
SynthConfig synth_config_from_json(const nlohmann::json& doc);
nlohmann::json synth_config_to_json(const SynthConfig& config);

struct SynthOutput {
  TrajectoryDataset dataset;
  Scene scene;
};

/// Per step: v = goal attraction (capped at the preferred speed) +
/// Σ_j a·exp(−d_ij/r)·(unit vector away from j) + Gaussian noise.
SynthOutput generate(const SynthConfig& config, const std::string& scene_id = "synth");

}  // namespace ctxlstm
