#include "ctxlstm/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace ctxlstm {

namespace {
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}

GaussianParams gaussian_from_raw(std::span<const double, 5> raw) {
  return {{raw[0], raw[1]}, std::exp(raw[2]), std::exp(raw[3]), kRhoLimit * std::tanh(raw[4])};
}

double gaussian_nll(Point point, const GaussianParams& g) {
  const double zx = (point.x - g.mu.x) / g.sigma_x;
  const double zy = (point.y - g.mu.y) / g.sigma_y;
  const double q = 1.0 - g.rho * g.rho;
  const double z = zx * zx + zy * zy - 2.0 * g.rho * zx * zy;
  return kLog2Pi + std::log(g.sigma_x) + std::log(g.sigma_y) + 0.5 * std::log(q) + z / (2.0 * q);
}

double gaussian_nll_raw(std::span<const double, 5> raw, Point point, double* grad) {
  const double sx = std::exp(raw[2]);
  const double sy = std::exp(raw[3]);
  const double th = std::tanh(raw[4]);
  const double rho = kRhoLimit * th;
  const double zx = (point.x - raw[0]) / sx;
  const double zy = (point.y - raw[1]) / sy;
  const double q = 1.0 - rho * rho;
  const double z = zx * zx + zy * zy - 2.0 * rho * zx * zy;
  const double loss = kLog2Pi + raw[2] + raw[3] + 0.5 * std::log(q) + z / (2.0 * q);
  if (grad != nullptr) {
    grad[0] = -(zx - rho * zy) / (q * sx);
    grad[1] = -(zy - rho * zx) / (q * sy);
    grad[2] = 1.0 - (zx * zx - rho * zx * zy) / q;
    grad[3] = 1.0 - (zy * zy - rho * zx * zy) / q;
    const double d_rho = -rho / q - zx * zy / q + rho * z / (q * q);
    grad[4] = d_rho * kRhoLimit * (1.0 - th * th);
  }
  return loss;
}

}  // namespace ctxlstm
