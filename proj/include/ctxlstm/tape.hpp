#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctxlstm/matrix.hpp"

namespace ctxlstm {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::uint32_t kNone = 0xffffffffu;
  std::uint32_t id = kNone;
  bool valid() const { return id != kNone; }
};

enum class Activation { sigmoid, tanh, relu };

/// One neighbor contribution for `Tape::pooled_embed`: row `self` receives
/// block `cell` of the weight matrix applied to row `other` of the hidden input.
struct NeighborLink {
  std::uint32_t self;
  std::uint32_t other;
  std::uint32_t cell;
};

/// Reverse-mode tape over batched matrices.
///
/// Values are recorded in execution order, so every operand precedes its
/// consumers. `backward` zeroes all gradient slots, seeds the scalar loss with
/// 1 and walks the record in reverse; fan-out accumulates additively. A tape
/// supports one backward pass; `clear` starts a fresh record.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf owning its value. Gradients are available after backward.
  Var leaf(Matrix value);
  /// Leaf that aliases external storage (model weights). `value` must outlive the tape.
  Var parameter(const Matrix& value);

  /// x·Wᵀ + b: x is A×n, W is m×n, b is 1×m (or invalid for no bias).
  Var affine(Var x, Var w, Var b = {});
  Var activate(Var x, Activation kind);
  Var exp(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var x, double factor);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var x, std::size_t begin, std::size_t count);
  /// Multiplies row r by mask[r].
  Var mask_rows(Var x, std::span<const double> mask);
  /// Sum of all entries as a 1×1 value.
  Var sum(Var x);

  /// Sparse form of W_H · flatten(H): for each link, row `self` of the
  /// output accumulates W[:, cell·D : (cell+1)·D] · hidden[other]ᵀ.
  /// W is m×(cells·D), hidden is A×D, output is A×m.
  Var pooled_embed(Var w, Var hidden, std::span<const NeighborLink> links);

  /// Σ_r weight[r] · NLL of target row r under the bivariate Gaussian encoded
  /// by raw row r = (μx, μy, log σx, log σy, atanh-ish ρ). See model.hpp for
  /// the parameterization. Returns 1×1.
  Var gaussian_nll(Var raw, const Matrix& targets, std::span<const double> weights);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  double scalar(Var v) const;

  void backward(Var loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix owned;
    const Matrix* alias = nullptr;
    Matrix grad;
    std::function<void(Tape&, std::uint32_t)> back;
    const Matrix& value() const { return alias ? *alias : owned; }
  };

  Var push(Matrix value, std::function<void(Tape&, std::uint32_t)> back);
  Node& node(Var v);
  const Node& node(Var v) const;
  Matrix& grad_slot(std::uint32_t id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

/// Value-level activation helpers shared with the non-tape code paths.
double sigmoid(double x);
double relu(double x);

}  // namespace ctxlstm
