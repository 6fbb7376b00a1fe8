#pragma once

#include <array>
#include <span>

#include "ctxlstm/geometry.hpp"

namespace ctxlstm {

/// |ρ| is kept below this bound so 1 − ρ² never rounds to zero.
inline constexpr double kRhoLimit = 1.0 - 1e-6;

/// Per-step bivariate normal over the next position.
struct GaussianParams {
  Point mu;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;
};

/// Raw head output r = (μx, μy, s_x, s_y, t) ↦ (μ, exp s, kRhoLimit·tanh t).
GaussianParams gaussian_from_raw(std::span<const double, 5> raw);

/// −log N(point; μ, σ, ρ).
double gaussian_nll(Point point, const GaussianParams& g);

/// NLL evaluated directly from raw head outputs; when `grad` is non-null it
/// receives ∂NLL/∂raw.
double gaussian_nll_raw(std::span<const double, 5> raw, Point point, double* grad);

}  // namespace ctxlstm
