#pragma once

#include "ctxlstm/matrix.hpp"

// Dense products used by the tape. The default versions split the outer loop
// across OpenMP threads; every output element is still reduced by a single
// thread in a fixed order, so results do not depend on the thread count.
// `reference` holds plain serial loops kept for tests and benchmarks.
namespace ctxlstm::kernels {

/// out = x · wᵀ   (x: A×n, w: m×n, out: A×m, overwritten)
void matmul_nt(const Matrix& x, const Matrix& w, Matrix& out);
/// dx += g · w    (g: A×m, w: m×n, dx: A×n)
void matmul_nn_acc(const Matrix& g, const Matrix& w, Matrix& dx);
/// dw += gᵀ · x   (g: A×m, x: A×n, dw: m×n)
void matmul_tn_acc(const Matrix& g, const Matrix& x, Matrix& dw);

namespace reference {
void matmul_nt(const Matrix& x, const Matrix& w, Matrix& out);
void matmul_nn_acc(const Matrix& g, const Matrix& w, Matrix& dx);
void matmul_tn_acc(const Matrix& g, const Matrix& x, Matrix& dw);
}  // namespace reference

}  // namespace ctxlstm::kernels
