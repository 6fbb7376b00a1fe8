#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ctxlstm/matrix.hpp"

namespace ctxlstm {

/// A matrix to perturb together with the analytic gradient to compare against.
struct GradCheckTarget {
  std::string name;
  Matrix* value;
  const Matrix* analytic;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
  std::string summary() const;
};

/// |a − b| / max(|a|, |b|, 1e-8); 0 when both vanish.
double relative_error(double a, double b);

struct FiniteDiffOptions {
  double step = 1e-5;
  std::size_t max_coords = 0;
  /// Central differences on the ladder step, step/√10, ... (`levels` steps);
  /// the finer estimate of the adjacent pair that agrees best is kept. Large
  /// steps beat roundoff on tiny gradients, small ones avoid nearby ReLU kinks.
  /// 1 uses `step` alone.
  int levels = 1;
};

/// Central differences (f(p+h) − f(p−h)) / 2h for every coordinate of every
/// target, compared against the analytic gradients. `f` reads the targets'
/// current contents. Throws UsageError when f is not deterministic.
/// `max_coords` > 0 checks an evenly strided subset of each target.
GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  const std::vector<GradCheckTarget>& targets,
                                  double step = 1e-5, std::size_t max_coords = 0);
GradCheckReport finite_diff_check(const std::function<double()>& f,
                                  const std::vector<GradCheckTarget>& targets,
                                  const FiniteDiffOptions& options);

}  // namespace ctxlstm
