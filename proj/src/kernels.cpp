#include "ctxlstm/kernels.hpp"

#include <algorithm>
#include <cstddef>

#include "ctxlstm/errors.hpp"

namespace ctxlstm::kernels {

namespace {

void check(bool ok, const char* op, const Matrix& a, const Matrix& b, const Matrix& c) {
  if (!ok) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_str() + ", " +
                      b.shape_str() + ", " + c.shape_str());
  }
}

// Work below this many multiply-adds stays on the calling thread.
constexpr std::size_t kParallelThreshold = 1 << 15;

}  // namespace

void matmul_nt(const Matrix& x, const Matrix& w, Matrix& out) {
  check(x.cols() == w.cols() && out.rows() == x.rows() && out.cols() == w.rows(), "matmul_nt", x,
        w, out);
  const std::size_t batch = x.rows();
  const std::size_t m = w.rows();
  const std::size_t n = x.cols();
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((m + 3) / 4);
  const bool par = x.rows() * w.size() >= kParallelThreshold;
  // 4 weight rows × 2 input rows per block: eight independent dot products
  // keep the FMA pipeline busy while each one still sums in k order.
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * 4;
    const std::size_t rows = std::min<std::size_t>(4, m - i0);
    if (rows < 4) {
      for (std::size_t i = i0; i < m; ++i) {
        const double* wi = w.data() + i * n;
        for (std::size_t a = 0; a < batch; ++a) {
          const double* xa = x.data() + a * n;
          double acc = 0.0;
          for (std::size_t k = 0; k < n; ++k) acc += xa[k] * wi[k];
          out(a, i) = acc;
        }
      }
      continue;
    }
    const double* w0 = w.data() + i0 * n;
    const double* w1 = w0 + n;
    const double* w2 = w1 + n;
    const double* w3 = w2 + n;
    std::size_t a = 0;
    for (; a + 2 <= batch; a += 2) {
      const double* x0 = x.data() + a * n;
      const double* x1 = x0 + n;
      double s00 = 0, s01 = 0, s02 = 0, s03 = 0, s10 = 0, s11 = 0, s12 = 0, s13 = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const double u = x0[k], v = x1[k];
        s00 += u * w0[k];
        s01 += u * w1[k];
        s02 += u * w2[k];
        s03 += u * w3[k];
        s10 += v * w0[k];
        s11 += v * w1[k];
        s12 += v * w2[k];
        s13 += v * w3[k];
      }
      double* o0 = out.data() + a * m + i0;
      double* o1 = o0 + m;
      o0[0] = s00, o0[1] = s01, o0[2] = s02, o0[3] = s03;
      o1[0] = s10, o1[1] = s11, o1[2] = s12, o1[3] = s13;
    }
    for (; a < batch; ++a) {
      const double* x0 = x.data() + a * n;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      for (std::size_t k = 0; k < n; ++k) {
        s0 += x0[k] * w0[k];
        s1 += x0[k] * w1[k];
        s2 += x0[k] * w2[k];
        s3 += x0[k] * w3[k];
      }
      double* o0 = out.data() + a * m + i0;
      o0[0] = s0, o0[1] = s1, o0[2] = s2, o0[3] = s3;
    }
  }
}

void matmul_nn_acc(const Matrix& g, const Matrix& w, Matrix& dx) {
  check(g.cols() == w.rows() && dx.rows() == g.rows() && dx.cols() == w.cols(), "matmul_nn_acc",
        g, w, dx);
  const std::ptrdiff_t batch = static_cast<std::ptrdiff_t>(g.rows());
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const bool par = g.rows() * w.size() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t a = 0; a < batch; ++a) {
    double* out = dx.data() + a * n;
    const double* ga = g.data() + a * m;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = ga[i];
      if (s == 0.0) continue;
      const double* wi = w.data() + i * n;
      for (std::size_t k = 0; k < n; ++k) out[k] += s * wi[k];
    }
  }
}

void matmul_tn_acc(const Matrix& g, const Matrix& x, Matrix& dw) {
  check(g.rows() == x.rows() && dw.rows() == g.cols() && dw.cols() == x.cols(), "matmul_tn_acc",
        g, x, dw);
  const std::size_t batch = g.rows();
  const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(g.cols());
  const std::size_t n = x.cols();
  const bool par = batch * dw.size() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    double* out = dw.data() + i * n;
    for (std::size_t a = 0; a < batch; ++a) {
      const double s = g(a, static_cast<std::size_t>(i));
      if (s == 0.0) continue;
      const double* xa = x.data() + a * n;
      for (std::size_t k = 0; k < n; ++k) out[k] += s * xa[k];
    }
  }
}

namespace reference {

void matmul_nt(const Matrix& x, const Matrix& w, Matrix& out) {
  check(x.cols() == w.cols() && out.rows() == x.rows() && out.cols() == w.rows(), "matmul_nt", x,
        w, out);
  for (std::size_t a = 0; a < x.rows(); ++a) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) acc += x(a, k) * w(i, k);
      out(a, i) = acc;
    }
  }
}

void matmul_nn_acc(const Matrix& g, const Matrix& w, Matrix& dx) {
  check(g.cols() == w.rows() && dx.rows() == g.rows() && dx.cols() == w.cols(), "matmul_nn_acc",
        g, w, dx);
  for (std::size_t a = 0; a < g.rows(); ++a) {
    for (std::size_t k = 0; k < w.cols(); ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w.rows(); ++i) acc += g(a, i) * w(i, k);
      dx(a, k) += acc;
    }
  }
}

void matmul_tn_acc(const Matrix& g, const Matrix& x, Matrix& dw) {
  check(g.rows() == x.rows() && dw.rows() == g.cols() && dw.cols() == x.cols(), "matmul_tn_acc",
        g, x, dw);
  for (std::size_t i = 0; i < g.cols(); ++i) {
    for (std::size_t k = 0; k < x.cols(); ++k) {
      double acc = 0.0;
      for (std::size_t a = 0; a < g.rows(); ++a) acc += g(a, i) * x(a, k);
      dw(i, k) += acc;
    }
  }
}

}  // namespace reference

}  // namespace ctxlstm::kernels
