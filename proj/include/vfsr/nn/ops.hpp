#pragma once

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "vfsr/nn/tensor.hpp"

namespace vfsr::nn {

namespace detail {

/// Copies one sample of x shifted by (dz, dy, dx) into a dense (C x V)
/// buffer, zero outside the volume.
template <class T>
void shift_gather(const T* xn, int C, int D, int H, int W, int dz, int dy,
                  int dx, T* out) {
  const std::size_t V = std::size_t(D) * H * W;
  std::fill(out, out + std::size_t(C) * V, T(0));
  const int x_lo = std::max(0, -dx), x_hi = W - std::max(0, dx);
  if (x_hi <= x_lo) return;
  for (int ci = 0; ci < C; ++ci)
    for (int z = 0; z < D; ++z) {
      const int zs = z + dz;
      if (zs < 0 || zs >= D) continue;
      for (int y = 0; y < H; ++y) {
        const int ys = y + dy;
        if (ys < 0 || ys >= H) continue;
        const T* src = xn + (std::size_t(ci) * D + zs) * H * W +
                       std::size_t(ys) * W + (x_lo + dx);
        T* dst = out + std::size_t(ci) * V + (std::size_t(z) * H + y) * W + x_lo;
        std::memcpy(dst, src, std::size_t(x_hi - x_lo) * sizeof(T));
      }
    }
}

/// Adjoint of shift_gather: adds buf back into dxn at shifted positions.
template <class T>
void shift_scatter_add(T* dxn, int C, int D, int H, int W, int dz, int dy,
                       int dx, const T* buf) {
  const std::size_t V = std::size_t(D) * H * W;
  const int x_lo = std::max(0, -dx), x_hi = W - std::max(0, dx);
  if (x_hi <= x_lo) return;
  for (int ci = 0; ci < C; ++ci)
    for (int z = 0; z < D; ++z) {
      const int zs = z + dz;
      if (zs < 0 || zs >= D) continue;
      for (int y = 0; y < H; ++y) {
        const int ys = y + dy;
        if (ys < 0 || ys >= H) continue;
        T* dst = dxn + (std::size_t(ci) * D + zs) * H * W +
                 std::size_t(ys) * W + (x_lo + dx);
        const T* src =
            buf + std::size_t(ci) * V + (std::size_t(z) * H + y) * W + x_lo;
        for (int x = 0; x < x_hi - x_lo; ++x) dst[x] += src[x];
      }
    }
}

/// Copies one sample (C x DHW) into the interior of a one-voxel zero-padded
/// volume laid out (C x (D+2)(H+2)(W+2)). The shell stays zero.
template <class T>
void pad_embed(const T* xn, int C, int D, int H, int W, T* out) {
  const int Hp = H + 2, Wp = W + 2;
  const std::size_t Vp = std::size_t(D + 2) * Hp * Wp;
  for (int ci = 0; ci < C; ++ci)
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y) {
        const T* src = xn + (std::size_t(ci) * D + z) * H * W +
                       std::size_t(y) * W;
        T* dst = out + std::size_t(ci) * Vp +
                 (std::size_t(z + 1) * Hp + (y + 1)) * Wp + 1;
        std::memcpy(dst, src, std::size_t(W) * sizeof(T));
      }
}

/// Interior of a padded (C x (D+2)(H+2)(W+2)) volume, added into (C x DHW).
template <class T>
void pad_extract_add(const T* padded, int C, int D, int H, int W, T* out) {
  const int Hp = H + 2, Wp = W + 2;
  const std::size_t Vp = std::size_t(D + 2) * Hp * Wp;
  for (int ci = 0; ci < C; ++ci)
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y) {
        const T* src = padded + std::size_t(ci) * Vp +
                       (std::size_t(z + 1) * Hp + (y + 1)) * Wp + 1;
        T* dst = out + (std::size_t(ci) * D + z) * H * W + std::size_t(y) * W;
        for (int xx = 0; xx < W; ++xx) dst[xx] += src[xx];
      }
}

}  // namespace detail

/// 3-D convolution (cross-correlation), zero-padded "same", kernel 1 or 3.
/// Weights (Co, Ci, k, k, k), bias (1, Co, 1, 1, 1).
///
/// k=3 runs one GEMM per kernel offset over a single zero-padded copy of the
/// sample: a shift by (dz, dy, dx) is then just a pointer offset into the
/// padded buffer, with the zero shell supplying the boundary values, so no
/// per-offset gather/scatter passes are needed. The buffers carry a margin of
/// max|offset| elements at both ends so offset reads stay in bounds; results
/// landing in shell or margin positions are discarded on extraction.
template <class T>
TensorPtr<T> conv3d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& b) {
  const int N = x->n(), Ci = x->c(), D = x->d(), H = x->h(), W = x->w();
  const int Co = w->shape[0], k = w->shape[2];
  if (w->shape[1] != Ci) throw std::invalid_argument("conv3d: channel mismatch");
  if (w->shape[3] != k || w->shape[4] != k || (k != 1 && k != 3))
    throw std::invalid_argument("conv3d: kernel must be 1^3 or 3^3");
  if (b->shape[1] != Co || b->size() != std::size_t(Co))
    throw std::invalid_argument("conv3d: bias shape mismatch");
  const int k3 = k * k * k;
  const std::size_t V = std::size_t(D) * H * W;
  const int Hp = H + 2, Wp = W + 2;
  const std::size_t Vp = std::size_t(D + 2) * Hp * Wp;
  const std::ptrdiff_t margin = std::ptrdiff_t(Hp) * Wp + Wp + 1;
  auto off_of = [=](int o) {
    const int dz = o / 9 - 1, dy = (o / 3) % 3 - 1, dx = o % 3 - 1;
    return std::ptrdiff_t(dz) * Hp * Wp + std::ptrdiff_t(dy) * Wp + dx;
  };

  auto y = make_tensor<T>(N, Co, D, H, W,
                          tape && (x->tracked || w->tracked || b->tracked));

  // Per-offset weight matrices (k^3 x Co x Ci).
  std::vector<T> w_off(std::size_t(k3) * Co * Ci);
  for (int co = 0; co < Co; ++co)
    for (int ci = 0; ci < Ci; ++ci)
      for (int o = 0; o < k3; ++o)
        w_off[std::size_t(o) * Co * Ci + std::size_t(co) * Ci + ci] =
            w->v[(std::size_t(co) * Ci + ci) * k3 + o];

  std::vector<T> xp, yp;
  if (k == 3) {
    xp.assign(2 * margin + std::size_t(Ci) * Vp, T(0));
    yp.resize(std::size_t(Co) * Vp);
  }
  for (int n = 0; n < N; ++n) {
    const T* xn = x->v.data() + std::size_t(n) * Ci * V;
    T* yn = y->v.data() + std::size_t(n) * Co * V;
    if (k == 1) {
      gemm(false, false, Co, int(V), Ci, T(1), w_off.data(), Ci, xn, int(V),
           T(0), yn, int(V));
    } else {
      detail::pad_embed(xn, Ci, D, H, W, xp.data() + margin);
      std::fill(yp.begin(), yp.end(), T(0));
      for (int o = 0; o < k3; ++o)
        gemm(false, false, Co, int(Vp), Ci, T(1),
             w_off.data() + std::size_t(o) * Co * Ci, Ci,
             xp.data() + margin + off_of(o), int(Vp), T(1), yp.data(),
             int(Vp));
      std::fill(yn, yn + std::size_t(Co) * V, T(0));
      detail::pad_extract_add(yp.data(), Co, D, H, W, yn);
    }
    for (int co = 0; co < Co; ++co) {
      T* row = yn + std::size_t(co) * V;
      const T bias = b->v[std::size_t(co)];
      for (std::size_t i = 0; i < V; ++i) row[i] += bias;
    }
  }

  if (y->tracked)
    tape->push([=]() {
      std::vector<T> dw_off(std::size_t(k3) * Co * Ci, T(0));
      std::vector<T> xpb, dyp, dxp;
      if (k == 3) {
        xpb.assign(2 * margin + std::size_t(Ci) * Vp, T(0));
        dyp.assign(2 * margin + std::size_t(Co) * Vp, T(0));
        if (x->tracked) dxp.resize(std::size_t(Ci) * Vp);
      }
      for (int n = 0; n < N; ++n) {
        const T* xn = x->v.data() + std::size_t(n) * Ci * V;
        const T* dyn = y->g.data() + std::size_t(n) * Co * V;
        if (k == 1) {
          if (w->tracked)
            gemm(false, true, Co, Ci, int(V), T(1), dyn, int(V), xn, int(V),
                 T(1), dw_off.data(), Ci);
          if (x->tracked)
            gemm(true, false, Ci, int(V), Co, T(1), w_off.data(), Ci, dyn,
                 int(V), T(1), x->g.data() + std::size_t(n) * Ci * V, int(V));
        } else {
          if (w->tracked) detail::pad_embed(xn, Ci, D, H, W, xpb.data() + margin);
          detail::pad_embed(dyn, Co, D, H, W, dyp.data() + margin);
          if (x->tracked) std::fill(dxp.begin(), dxp.end(), T(0));
          for (int o = 0; o < k3; ++o) {
            if (w->tracked)
              // dW_off (Co x Ci) += dY_pad (Co x Vp) * X_pad_shifted^T
              gemm(false, true, Co, Ci, int(Vp), T(1), dyp.data() + margin,
                   int(Vp), xpb.data() + margin + off_of(o), int(Vp), T(1),
                   dw_off.data() + std::size_t(o) * Co * Ci, Ci);
            if (x->tracked)
              // dX_pad (Ci x Vp) += W_off^T * dY_pad shifted by -offset
              gemm(true, false, Ci, int(Vp), Co, T(1),
                   w_off.data() + std::size_t(o) * Co * Ci, Ci,
                   dyp.data() + margin - off_of(o), int(Vp), T(1), dxp.data(),
                   int(Vp));
          }
          if (x->tracked)
            detail::pad_extract_add(dxp.data(), Ci, D, H, W,
                                    x->g.data() + std::size_t(n) * Ci * V);
        }
        if (b->tracked)
          for (int co = 0; co < Co; ++co) {
            const T* row = dyn + std::size_t(co) * V;
            T acc = T(0);
            for (std::size_t i = 0; i < V; ++i) acc += row[i];
            b->g[std::size_t(co)] += acc;
          }
      }
      if (w->tracked)
        for (int co = 0; co < Co; ++co)
          for (int ci = 0; ci < Ci; ++ci)
            for (int o = 0; o < k3; ++o)
              w->g[(std::size_t(co) * Ci + ci) * k3 + o] +=
                  dw_off[std::size_t(o) * Co * Ci + std::size_t(co) * Ci + ci];
    });
  return y;
}

template <class T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x) {
  auto y = make_tensor<T>(x->shape[0], x->shape[1], x->shape[2], x->shape[3],
                          x->shape[4], tape && x->tracked);
  const std::size_t n = x->size();
  for (std::size_t i = 0; i < n; ++i) y->v[i] = x->v[i] > T(0) ? x->v[i] : T(0);
  if (y->tracked)
    tape->push([=]() {
      for (std::size_t i = 0; i < n; ++i)
        if (x->v[i] > T(0)) x->g[i] += y->g[i];
    });
  return y;
}

template <class T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape != b->shape) throw std::invalid_argument("add: shape mismatch");
  auto y = make_tensor<T>(a->shape[0], a->shape[1], a->shape[2], a->shape[3],
                          a->shape[4], tape && (a->tracked || b->tracked));
  const std::size_t n = a->size();
  for (std::size_t i = 0; i < n; ++i) y->v[i] = a->v[i] + b->v[i];
  if (y->tracked)
    tape->push([=]() {
      if (a->tracked)
        for (std::size_t i = 0; i < n; ++i) a->g[i] += y->g[i];
      if (b->tracked)
        for (std::size_t i = 0; i < n; ++i) b->g[i] += y->g[i];
    });
  return y;
}

template <class T>
TensorPtr<T> concat_channels(Tape<T>* tape,
                             const std::vector<TensorPtr<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: empty input list");
  int C = 0;
  bool tracked = false;
  for (auto& x : xs) {
    if (x->shape[0] != xs[0]->shape[0] || x->shape[2] != xs[0]->shape[2] ||
        x->shape[3] != xs[0]->shape[3] || x->shape[4] != xs[0]->shape[4])
      throw std::invalid_argument("concat: shape mismatch");
    C += x->shape[1];
    tracked = tracked || x->tracked;
  }
  const int N = xs[0]->n();
  const std::size_t V = xs[0]->vol();
  auto y = make_tensor<T>(N, C, xs[0]->d(), xs[0]->h(), xs[0]->w(),
                          tape && tracked);
  for (int n = 0; n < N; ++n) {
    std::size_t off = 0;
    for (auto& x : xs) {
      const std::size_t len = std::size_t(x->shape[1]) * V;
      std::memcpy(y->v.data() + (std::size_t(n) * C) * V + off,
                  x->v.data() + std::size_t(n) * x->shape[1] * V,
                  len * sizeof(T));
      off += len;
    }
  }
  if (y->tracked)
    tape->push([=]() {
      for (int n = 0; n < N; ++n) {
        std::size_t off = 0;
        for (auto& x : xs) {
          const std::size_t len = std::size_t(x->shape[1]) * V;
          if (x->tracked) {
            const T* src = y->g.data() + (std::size_t(n) * C) * V + off;
            T* dst = x->g.data() + std::size_t(n) * x->shape[1] * V;
            for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
          }
          off += len;
        }
      }
    });
  return y;
}

template <class T>
TensorPtr<T> slice_channels(Tape<T>* tape, const TensorPtr<T>& x, int c0,
                            int len) {
  if (c0 < 0 || len <= 0 || c0 + len > x->c())
    throw std::invalid_argument("slice: bad channel range");
  const int N = x->n();
  const std::size_t V = x->vol();
  auto y = make_tensor<T>(N, len, x->d(), x->h(), x->w(), tape && x->tracked);
  for (int n = 0; n < N; ++n)
    std::memcpy(y->v.data() + std::size_t(n) * len * V,
                x->v.data() + (std::size_t(n) * x->c() + c0) * V,
                std::size_t(len) * V * sizeof(T));
  if (y->tracked)
    tape->push([=]() {
      for (int n = 0; n < N; ++n) {
        const T* src = y->g.data() + std::size_t(n) * len * V;
        T* dst = x->g.data() + (std::size_t(n) * x->c() + c0) * V;
        for (std::size_t i = 0; i < std::size_t(len) * V; ++i) dst[i] += src[i];
      }
    });
  return y;
}

namespace detail {

struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

inline LerpAxis lerp_axis(int n_in, int factor) {
  LerpAxis a;
  const int n_out = n_in * factor;
  a.i0.resize(n_out);
  a.i1.resize(n_out);
  a.w1.resize(n_out);
  for (int i = 0; i < n_out; ++i) {
    const double src = (i + 0.5) / factor - 0.5;
    const double fl = std::floor(src);
    int i0 = int(fl);
    double t = src - fl;
    int i1 = i0 + 1;
    if (i0 < 0) { i0 = 0; i1 = 0; t = 0; }
    if (i1 > n_in - 1) { i1 = n_in - 1; i0 = n_in - 1; t = 0; }
    a.i0[i] = i0;
    a.i1[i] = i1;
    a.w1[i] = t;
  }
  return a;
}

}  // namespace detail

/// Trilinear upsampling by an integer factor (align-corners false, edges
/// clamped). The adjoint scatters with the same interpolation weights.
template <class T>
TensorPtr<T> upsample_trilinear(Tape<T>* tape, const TensorPtr<T>& x,
                                int factor) {
  if (factor < 2) throw std::invalid_argument("upsample: factor must be >= 2");
  const int N = x->n(), C = x->c(), D = x->d(), H = x->h(), W = x->w();
  const int Do = D * factor, Ho = H * factor, Wo = W * factor;
  auto y = make_tensor<T>(N, C, Do, Ho, Wo, tape && x->tracked);
  const auto az = detail::lerp_axis(D, factor);
  const auto ay = detail::lerp_axis(H, factor);
  const auto ax = detail::lerp_axis(W, factor);

  // by-value capture: the tape closure below outlives this stack frame
  auto idx_in = [H, W](int z, int yy, int xx) {
    return (std::size_t(z) * H + yy) * W + xx;
  };
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xi = x->v.data() + (std::size_t(n) * C + c) * x->vol();
      T* yo = y->v.data() + (std::size_t(n) * C + c) * y->vol();
      std::size_t o = 0;
      for (int z = 0; z < Do; ++z)
        for (int yy = 0; yy < Ho; ++yy)
          for (int xx = 0; xx < Wo; ++xx, ++o) {
            const double wz = az.w1[z], wy = ay.w1[yy], wx = ax.w1[xx];
            const int z0 = az.i0[z], z1 = az.i1[z], y0 = ay.i0[yy],
                      y1 = ay.i1[yy], x0 = ax.i0[xx], x1 = ax.i1[xx];
            const double v =
                (1 - wz) * ((1 - wy) * ((1 - wx) * xi[idx_in(z0, y0, x0)] +
                                        wx * xi[idx_in(z0, y0, x1)]) +
                            wy * ((1 - wx) * xi[idx_in(z0, y1, x0)] +
                                  wx * xi[idx_in(z0, y1, x1)])) +
                wz * ((1 - wy) * ((1 - wx) * xi[idx_in(z1, y0, x0)] +
                                  wx * xi[idx_in(z1, y0, x1)]) +
                      wy * ((1 - wx) * xi[idx_in(z1, y1, x0)] +
                            wx * xi[idx_in(z1, y1, x1)]));
            yo[o] = T(v);
          }
    }

  if (y->tracked)
    tape->push([=]() {
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          T* gx = x->g.data() + (std::size_t(n) * C + c) * x->vol();
          const T* gy = y->g.data() + (std::size_t(n) * C + c) * y->vol();
          std::size_t o = 0;
          for (int z = 0; z < Do; ++z)
            for (int yy = 0; yy < Ho; ++yy)
              for (int xx = 0; xx < Wo; ++xx, ++o) {
                const double wz = az.w1[z], wy = ay.w1[yy], wx = ax.w1[xx];
                const int z0 = az.i0[z], z1 = az.i1[z], y0 = ay.i0[yy],
                          y1 = ay.i1[yy], x0 = ax.i0[xx], x1 = ax.i1[xx];
                const T gv = gy[o];
                gx[idx_in(z0, y0, x0)] += T((1 - wz) * (1 - wy) * (1 - wx)) * gv;
                gx[idx_in(z0, y0, x1)] += T((1 - wz) * (1 - wy) * wx) * gv;
                gx[idx_in(z0, y1, x0)] += T((1 - wz) * wy * (1 - wx)) * gv;
                gx[idx_in(z0, y1, x1)] += T((1 - wz) * wy * wx) * gv;
                gx[idx_in(z1, y0, x0)] += T(wz * (1 - wy) * (1 - wx)) * gv;
                gx[idx_in(z1, y0, x1)] += T(wz * (1 - wy) * wx) * gv;
                gx[idx_in(z1, y1, x0)] += T(wz * wy * (1 - wx)) * gv;
                gx[idx_in(z1, y1, x1)] += T(wz * wy * wx) * gv;
              }
        }
    });
  return y;
}

/// Multiplies each batch sample by its own scalar (VENC rescaling of the
/// output heads).
template <class T>
TensorPtr<T> scale_per_sample(Tape<T>* tape, const TensorPtr<T>& x,
                              const std::vector<T>& scale) {
  if (int(scale.size()) != x->n())
    throw std::invalid_argument("scale_per_sample: need one scalar per sample");
  auto y = make_tensor<T>(x->shape[0], x->shape[1], x->shape[2], x->shape[3],
                          x->shape[4], tape && x->tracked);
  const std::size_t per = std::size_t(x->c()) * x->vol();
  for (int n = 0; n < x->n(); ++n) {
    const T s = scale[std::size_t(n)];
    const T* src = x->v.data() + std::size_t(n) * per;
    T* dst = y->v.data() + std::size_t(n) * per;
    for (std::size_t i = 0; i < per; ++i) dst[i] = s * src[i];
  }
  if (y->tracked) {
    const int N = x->n();
    tape->push([=]() {
      for (int n = 0; n < N; ++n) {
        const T s = scale[std::size_t(n)];
        const T* src = y->g.data() + std::size_t(n) * per;
        T* dst = x->g.data() + std::size_t(n) * per;
        for (std::size_t i = 0; i < per; ++i) dst[i] += s * src[i];
      }
    });
  }
  return y;
}

/// Split-region MSE: mean over fluid voxels of the summed squared component
/// error, plus the same mean over non-fluid voxels. Truth and mask are plain
/// buffers shaped like one head output per component.
template <class T>
TensorPtr<T> loss_mse_split(Tape<T>* tape,
                            const std::array<TensorPtr<T>, 3>& pred,
                            const std::array<std::vector<T>, 3>& truth,
                            const std::vector<T>& mask) {
  const std::size_t n = pred[0]->size();
  for (int c = 0; c < 3; ++c) {
    if (pred[std::size_t(c)]->size() != n ||
        truth[std::size_t(c)].size() != n)
      throw std::invalid_argument("loss: shape mismatch");
  }
  if (mask.size() != n) throw std::invalid_argument("loss: mask shape mismatch");

  std::size_t nf = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] != T(0)) ++nf;
  const std::size_t nn = n - nf;

  double fluid = 0, non_fluid = 0;
  for (int c = 0; c < 3; ++c) {
    const auto& p = pred[std::size_t(c)]->v;
    const auto& t = truth[std::size_t(c)];
    for (std::size_t i = 0; i < n; ++i) {
      const double e = double(p[i]) - double(t[i]);
      (mask[i] != T(0) ? fluid : non_fluid) += e * e;
    }
  }
  double L = 0;
  if (nf) L += fluid / double(nf);
  if (nn) L += non_fluid / double(nn);

  bool tracked = tape && (pred[0]->tracked || pred[1]->tracked || pred[2]->tracked);
  auto y = make_tensor<T>(1, 1, 1, 1, 1, tracked);
  y->v[0] = T(L);
  if (tracked)
    tape->push([=]() {
      const T gl = y->g[0];
      for (int c = 0; c < 3; ++c) {
        auto& p = pred[std::size_t(c)];
        if (!p->tracked) continue;
        const auto& t = truth[std::size_t(c)];
        for (std::size_t i = 0; i < n; ++i) {
          const bool f = mask[i] != T(0);
          const std::size_t cnt = f ? nf : nn;
          if (!cnt) continue;
          p->g[i] += gl * T(2) * (p->v[i] - t[i]) / T(cnt);
        }
      }
    });
  return y;
}

}  // namespace vfsr::nn
