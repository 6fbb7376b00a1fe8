#pragma once

#include <cstdint>

#include "ctxlstm/dataset.hpp"
#include "ctxlstm/gradcheck.hpp"
#include "ctxlstm/model.hpp"

namespace ctxlstm {

/// Two walkers near two static points over six steps, scaled so both stay
/// inside each other's neighborhood grid.
struct TinyProblem {
  SceneWindow window;
  SceneContext context;
  Parameters params;
};

struct GradCheckSize {
  std::size_t embed_dim = 4;
  std::size_t hidden_dim = 8;
  std::size_t max_coords = 0;  // per matrix; 0 checks every coordinate
  /// Largest step of the finite-difference ladder. The loss is O(1) while
  /// some gradients are O(1e-8), so a lone 1e-5 step drowns them in roundoff.
  double step = 1e-2;
  int levels = 10;
};

TinyProblem tiny_problem(const ModelVariant& variant, std::uint64_t seed = 7,
                         const GradCheckSize& size = {});

/// Finite-difference check of the teacher-forced sequence loss over every
/// parameter matrix, all steps scored.
GradCheckReport tiny_gradcheck(const ModelVariant& variant, std::uint64_t seed = 7,
                               const GradCheckSize& size = {});

}  // namespace ctxlstm
