#include "ctxlstm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ctxlstm/errors.hpp"

namespace ctxlstm {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os.precision(3);
  os << "max rel err " << std::scientific << max_rel_error << " over " << coordinates
     << " coords";
  if (!worst_name.empty()) {
    os << " (worst " << worst_name << "[" << worst_index << "]: analytic " << worst_analytic
       << ", numeric " << worst_numeric << ")";
  }
  return os.str();
}

namespace {

double central(const std::function<double()>& f, double& p, double h) {
  const double saved = p;
  p = saved + h;
  const double up = f();
  p = saved - h;
  const double down = f();
  p = saved;
  return (up - down) / (2.0 * h);
}

double ladder(const std::function<double()>& f, double& p, double h, int levels) {
  double prev = central(f, p, h);
  double best = prev;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int i = 1; i < levels; ++i) {
    h /= std::sqrt(10.0);
    const double next = central(f, p, h);
    const double gap = std::abs(next - prev);
    if (gap < best_gap) {
      best_gap = gap;
      best = next;
    }
    prev = next;
  }
  return best;
}

}  // namespace

GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  const std::vector<GradCheckTarget>& targets, double step,
                                  std::size_t max_coords) {
  return finite_diff_check(f, targets, FiniteDiffOptions{step, max_coords, 1});
}

GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  const std::vector<GradCheckTarget>& targets,
                                  const FiniteDiffOptions& options) {
  const double step = options.step;
  const std::size_t max_coords = options.max_coords;
  if (step <= 0.0) throw ConfigError("finite_diff_check: step must be positive");
  const double base = f();
  const double again = f();
  if (base != again && !(std::isnan(base) && std::isnan(again))) {
    std::ostringstream os;
    os.precision(17);
    os << "finite_diff_check: function is not deterministic (" << base << " then " << again
       << "); central differences would measure noise";
    throw UsageError(os.str());
  }

  GradCheckReport report;
  for (const auto& target : targets) {
    Matrix& p = *target.value;
    const Matrix& analytic = *target.analytic;
    if (!p.same_shape(analytic)) {
      throw ConfigError("finite_diff_check: " + target.name + " value " + p.shape_str() +
                        " vs gradient " + analytic.shape_str());
    }
    const std::size_t n = p.size();
    const std::size_t stride = (max_coords > 0 && n > max_coords) ? (n + max_coords - 1) / max_coords : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double numeric = options.levels > 1 ? ladder(f, p[i], step, options.levels)
                                             : central(f, p[i], step);
      const double err = relative_error(analytic[i], numeric);
      ++report.coordinates;
      if (report.coordinates == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_name = target.name;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace ctxlstm
