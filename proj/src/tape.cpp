#include "ctxlstm/tape.hpp"

#include <cmath>
#include <string>

#include "ctxlstm/errors.hpp"
#include "ctxlstm/gaussian.hpp"
#include "ctxlstm/kernels.hpp"

namespace ctxlstm {

double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                      b.shape_str());
  }
}

}  // namespace

Var Tape::push(Matrix value, std::function<void(Tape&, std::uint32_t)> back) {
  if (backward_done_) throw UsageError("tape: recording after backward; call clear() first");
  Node n;
  n.owned = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw UsageError("tape: variable not on this tape");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw UsageError("tape: variable not on this tape");
  return nodes_[v.id];
}

Matrix& Tape::grad_slot(std::uint32_t id) { return nodes_[id].grad; }

Var Tape::leaf(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(const Matrix& value) {
  Var v = push(Matrix{}, nullptr);
  nodes_[v.id].alias = &value;
  return v;
}

Var Tape::affine(Var x, Var w, Var b) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(w);
  if (xv.cols() != wv.cols()) {
    throw ConfigError("affine: input " + xv.shape_str() + " incompatible with weights " +
                      wv.shape_str());
  }
  Matrix out(xv.rows(), wv.rows());
  kernels::matmul_nt(xv, wv, out);
  if (b.valid()) {
    const Matrix& bv = value(b);
    if (bv.rows() != 1 || bv.cols() != wv.rows()) {
      throw ConfigError("affine: bias " + bv.shape_str() + " incompatible with weights " +
                        wv.shape_str());
    }
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
    }
  }
  return push(std::move(out), [x, w, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    kernels::matmul_nn_acc(g, t.value(w), t.grad_slot(x.id));
    kernels::matmul_tn_acc(g, t.value(x), t.grad_slot(w.id));
    if (b.valid()) {
      Matrix& db = t.grad_slot(b.id);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
      }
    }
  });
}

Var Tape::activate(Var x, Activation kind) {
  Matrix out = value(x);
  for (double& v : out.values()) {
    switch (kind) {
      case Activation::sigmoid: v = sigmoid(v); break;
      case Activation::tanh: v = std::tanh(v); break;
      case Activation::relu: v = relu(v); break;
    }
  }
  return push(std::move(out), [x, kind](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    const Matrix& y = t.nodes_[self].owned;
    Matrix& dx = t.grad_slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case Activation::sigmoid: d = y[i] * (1.0 - y[i]); break;
        case Activation::tanh: d = 1.0 - y[i] * y[i]; break;
        case Activation::relu: d = y[i] > 0.0 ? 1.0 : 0.0; break;
      }
      dx[i] += g[i] * d;
    }
  });
}

Var Tape::exp(Var x) {
  Matrix out = value(x);
  for (double& v : out.values()) v = std::exp(v);
  return push(std::move(out), [x](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    const Matrix& y = t.nodes_[self].owned;
    Matrix& dx = t.grad_slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i];
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require_same_shape(av, bv, "add");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    Matrix& da = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    Matrix& db = t.grad_slot(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
  });
}

Var Tape::mul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require_same_shape(av, bv, "mul");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    Matrix& da = t.grad_slot(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    Matrix& db = t.grad_slot(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
  });
}

Var Tape::scale(Var x, double factor) {
  Matrix out = value(x);
  for (double& v : out.values()) v *= factor;
  return push(std::move(out), [x, factor](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    Matrix& dx = t.grad_slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    const Matrix& v = value(p);
    if (v.rows() != rows) {
      throw ConfigError("concat_cols: row mismatch " + value(parts[0]).shape_str() + " vs " +
                        v.shape_str());
    }
    cols += v.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& v = value(p);
    for (std::size_t r = 0; r < rows; ++r) {
      auto src = v.row(r);
      std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += v.cols();
  }
  std::vector<Var> ops(parts.begin(), parts.end());
  return push(std::move(out), [ops = std::move(ops)](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    std::size_t off = 0;
    for (Var p : ops) {
      Matrix& dp = t.grad_slot(p.id);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto src = g.row(r);
        auto dst = dp.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[off + c];
      }
      off += dp.cols();
    }
  });
}

Var Tape::slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Matrix& xv = value(x);
  if (begin + count > xv.cols()) {
    throw ConfigError("slice_cols: [" + std::to_string(begin) + ", " +
                      std::to_string(begin + count) + ") outside " + xv.shape_str());
  }
  Matrix out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto src = xv.row(r);
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(begin), count, out.row(r).begin());
  }
  return push(std::move(out), [x, begin](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    Matrix& dx = t.grad_slot(x.id);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto src = g.row(r);
      auto dst = dx.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[begin + c] += src[c];
    }
  });
}

Var Tape::mask_rows(Var x, std::span<const double> mask) {
  const Matrix& xv = value(x);
  if (mask.size() != xv.rows()) {
    throw ConfigError("mask_rows: mask length " + std::to_string(mask.size()) + " vs " +
                      xv.shape_str());
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (double& v : out.row(r)) v *= mask[r];
  }
  std::vector<double> m(mask.begin(), mask.end());
  return push(std::move(out), [x, m = std::move(m)](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    Matrix& dx = t.grad_slot(x.id);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      if (m[r] == 0.0) continue;
      auto src = g.row(r);
      auto dst = dx.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c] * m[r];
    }
  });
}

Var Tape::sum(Var x) {
  double s = 0.0;
  for (double v : value(x).values()) s += v;
  return push(Matrix(1, 1, s), [x](Tape& t, std::uint32_t self) {
    const double g = t.grad_slot(self)[0];
    for (double& d : t.grad_slot(x.id).values()) d += g;
  });
}

Var Tape::pooled_embed(Var w, Var hidden, std::span<const NeighborLink> links) {
  const Matrix& wv = value(w);
  const Matrix& hv = value(hidden);
  const std::size_t dim = hv.cols();
  if (dim == 0 || wv.cols() % dim != 0) {
    throw ConfigError("pooled_embed: weights " + wv.shape_str() + " incompatible with hidden " +
                      hv.shape_str());
  }
  const std::size_t cells = wv.cols() / dim;
  for (const auto& l : links) {
    if (l.self >= hv.rows() || l.other >= hv.rows() || l.cell >= cells) {
      throw ConfigError("pooled_embed: link out of range");
    }
  }
  const std::size_t m = wv.rows();
  Matrix out(hv.rows(), m);
  for (const auto& l : links) {
    const double* h = hv.data() + l.other * dim;
    double* o = out.data() + l.self * m;
    for (std::size_t e = 0; e < m; ++e) {
      const double* we = wv.data() + e * wv.cols() + l.cell * dim;
      double acc = 0.0;
      for (std::size_t d = 0; d < dim; ++d) acc += we[d] * h[d];
      o[e] += acc;
    }
  }
  std::vector<NeighborLink> ls(links.begin(), links.end());
  return push(std::move(out), [w, hidden, ls = std::move(ls)](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad_slot(self);
    const Matrix& wv = t.value(w);
    const Matrix& hv = t.value(hidden);
    Matrix& dw = t.grad_slot(w.id);
    Matrix& dh = t.grad_slot(hidden.id);
    const std::size_t dim = hv.cols();
    const std::size_t m = wv.rows();
    for (const auto& l : ls) {
      const double* ge = g.data() + l.self * m;
      const double* h = hv.data() + l.other * dim;
      double* dhj = dh.data() + l.other * dim;
      for (std::size_t e = 0; e < m; ++e) {
        const double s = ge[e];
        if (s == 0.0) continue;
        const std::size_t base = e * wv.cols() + l.cell * dim;
        const double* we = wv.data() + base;
        double* dwe = dw.data() + base;
        for (std::size_t d = 0; d < dim; ++d) {
          dwe[d] += s * h[d];
          dhj[d] += s * we[d];
        }
      }
    }
  });
}

Var Tape::gaussian_nll(Var raw, const Matrix& targets, std::span<const double> weights) {
  const Matrix& rv = value(raw);
  if (rv.cols() != 5 || targets.cols() != 2 || targets.rows() != rv.rows() ||
      weights.size() != rv.rows()) {
    throw ConfigError("gaussian_nll: raw " + rv.shape_str() + ", targets " +
                      targets.shape_str() + ", weights " + std::to_string(weights.size()));
  }
  Matrix dloss(rv.rows(), 5);
  double total = 0.0;
  for (std::size_t r = 0; r < rv.rows(); ++r) {
    if (weights[r] == 0.0) continue;
    std::span<const double, 5> row(rv.data() + r * 5, 5);
    double g[5];
    total += weights[r] * gaussian_nll_raw(row, {targets(r, 0), targets(r, 1)}, g);
    for (int k = 0; k < 5; ++k) dloss(r, k) = weights[r] * g[k];
  }
  return push(Matrix(1, 1, total), [raw, dloss = std::move(dloss)](Tape& t, std::uint32_t self) {
    const double g = t.grad_slot(self)[0];
    Matrix& dr = t.grad_slot(raw.id);
    for (std::size_t i = 0; i < dr.size(); ++i) dr[i] += g * dloss[i];
  });
}

const Matrix& Tape::value(Var v) const { return node(v).value(); }

const Matrix& Tape::grad(Var v) const {
  if (!backward_done_) throw UsageError("tape: gradients requested before backward");
  return node(v).grad;
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.size() != 1) throw UsageError("tape: value " + m.shape_str() + " is not a scalar");
  return m[0];
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= nodes_.size()) {
    throw UsageError("tape: loss is not recorded on this tape");
  }
  if (backward_done_) throw UsageError("tape: backward called twice without clear()");
  if (value(loss).size() != 1) {
    throw UsageError("tape: loss must be scalar, got " + value(loss).shape_str());
  }
  for (auto& n : nodes_) {
    const Matrix& v = n.value();
    n.grad = Matrix(v.rows(), v.cols());
  }
  nodes_[loss.id].grad[0] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    if (nodes_[id].back) nodes_[id].back(*this, id);
  }
  backward_done_ = true;
}

void Tape::clear() {
  nodes_.clear();
  backward_done_ = false;
}

}  // namespace ctxlstm
