#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include <cblas.h>

namespace vfsr::nn {

/// 5-D tensor (batch, channels, depth, height, width), row-major with width
/// fastest. Gradient storage is allocated only for tracked tensors.
template <class T>
struct Tensor5 {
  std::array<int, 5> shape{};  // n, c, d, h, w
  std::vector<T> v;
  std::vector<T> g;
  bool tracked = false;

  std::size_t size() const {
    return std::size_t(shape[0]) * shape[1] * shape[2] * shape[3] * shape[4];
  }
  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int d() const { return shape[2]; }
  int h() const { return shape[3]; }
  int w() const { return shape[4]; }
  /// Voxels per (sample, channel) slab.
  std::size_t vol() const { return std::size_t(shape[2]) * shape[3] * shape[4]; }

  void zero_grad() { std::fill(g.begin(), g.end(), T(0)); }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor5<T>>;

template <class T>
TensorPtr<T> make_tensor(int n, int c, int d, int h, int w,
                         bool tracked = false) {
  auto t = std::make_shared<Tensor5<T>>();
  t->shape = {n, c, d, h, w};
  t->v.assign(t->size(), T(0));
  t->tracked = tracked;
  if (tracked) t->g.assign(t->size(), T(0));
  return t;
}

/// Reverse-mode tape. Forward ops append their adjoint closures in execution
/// order; backward() runs them reversed after seeding the loss gradient.
template <class T>
class Tape {
 public:
  void push(std::function<void()> f) { ops_.push_back(std::move(f)); }

  void backward(const TensorPtr<T>& loss) {
    if (loss->size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    if (!loss->tracked) throw std::invalid_argument("backward: loss not tracked");
    loss->g[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() { ops_.clear(); }
  std::size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
};

// C (m x n) = alpha * op(A) op(B) + beta * C, row-major.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace vfsr::nn
