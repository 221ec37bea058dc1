#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "vfsr/volume.hpp"

#include "json.hpp"

namespace vfsr {

/// Arctangent-bounded mean relative speed error over fluid voxels:
/// mean arctan(||v' - v|| / (||v|| + eps)), in radians, bounded in [0, pi/2).
inline double relative_error(const FlowVolume& pred, const FlowVolume& truth,
                             const Grid3<float>& mask, double eps = 1e-4) {
  if (!(pred.dims == truth.dims) || !(mask.dims == truth.dims))
    throw std::invalid_argument("relative_error: shape mismatch");
  double acc = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data[i] == 0.0f) continue;
    const double ex = double(pred.vx.data[i]) - double(truth.vx.data[i]);
    const double ey = double(pred.vy.data[i]) - double(truth.vy.data[i]);
    const double ez = double(pred.vz.data[i]) - double(truth.vz.data[i]);
    const double tv = std::sqrt(double(truth.vx.data[i]) * truth.vx.data[i] +
                                double(truth.vy.data[i]) * truth.vy.data[i] +
                                double(truth.vz.data[i]) * truth.vz.data[i]);
    acc += std::atan(std::sqrt(ex * ex + ey * ey + ez * ez) / (tv + eps));
    ++cnt;
  }
  if (cnt == 0) throw std::runtime_error("relative_error: empty fluid mask");
  return acc / double(cnt);
}

/// RMSE over fluid voxels of one velocity component, plus the standard
/// deviation of the per-voxel absolute errors.
inline std::array<double, 2> rmse_component(const FlowVolume& pred,
                                            const FlowVolume& truth,
                                            const Grid3<float>& mask,
                                            int component) {
  if (!(pred.dims == truth.dims) || !(mask.dims == truth.dims))
    throw std::invalid_argument("rmse_component: shape mismatch");
  const Grid3<float>* pc[3] = {&pred.vx, &pred.vy, &pred.vz};
  const Grid3<float>* tc[3] = {&truth.vx, &truth.vy, &truth.vz};
  if (component < 0 || component > 2)
    throw std::invalid_argument("rmse_component: component must be 0..2");
  double se = 0, ae = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data[i] == 0.0f) continue;
    const double e = double(pc[component]->data[i]) - double(tc[component]->data[i]);
    se += e * e;
    ae += std::abs(e);
    ++cnt;
  }
  if (cnt == 0) throw std::runtime_error("rmse_component: empty fluid mask");
  const double rmse = std::sqrt(se / double(cnt));
  const double mean_ae = ae / double(cnt);
  // var(|e|) = E[e^2] - E[|e|]^2; clamp tiny negative round-off
  const double var = std::max(0.0, se / double(cnt) - mean_ae * mean_ae);
  return {rmse, std::sqrt(var)};
}

/// Mean local SSIM with a cubic sliding window (valid positions only),
/// uniform weights, C1=(K1*L)^2, C2=(K2*L)^2 with L the dynamic range of the
/// truth volume (L=1 when the truth is constant).
inline double ssim3d(const Grid3<float>& pred, const Grid3<float>& truth,
                     int window = 7, double k1 = 0.01, double k2 = 0.03) {
  if (!(pred.dims == truth.dims))
    throw std::invalid_argument("ssim3d: shape mismatch");
  if (truth.dims.x < window || truth.dims.y < window || truth.dims.z < window)
    throw std::invalid_argument("ssim3d: volume smaller than window");

  float tmin = truth.data[0], tmax = truth.data[0];
  for (float v : truth.data) {
    tmin = std::min(tmin, v);
    tmax = std::max(tmax, v);
  }
  const double L = (tmax > tmin) ? double(tmax) - double(tmin) : 1.0;
  const double c1 = (k1 * L) * (k1 * L);
  const double c2 = (k2 * L) * (k2 * L);
  const double n = double(window) * window * window;

  double acc = 0;
  std::size_t cnt = 0;
  for (int z0 = 0; z0 + window <= truth.dims.z; ++z0)
    for (int y0 = 0; y0 + window <= truth.dims.y; ++y0)
      for (int x0 = 0; x0 + window <= truth.dims.x; ++x0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int z = z0; z < z0 + window; ++z)
          for (int y = y0; y < y0 + window; ++y)
            for (int x = x0; x < x0 + window; ++x) {
              const double a = pred.at(x, y, z);
              const double b = truth.at(x, y, z);
              sa += a;
              sb += b;
              saa += a * a;
              sbb += b * b;
              sab += a * b;
            }
        const double ma = sa / n, mb = sb / n;
        const double va = saa / n - ma * ma;
        const double vb = sbb / n - mb * mb;
        const double cov = sab / n - ma * mb;
        acc += (2 * ma * mb + c1) * (2 * cov + c2) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++cnt;
      }
  return acc / double(cnt);
}

struct RegressionStats {
  double slope = 0, intercept = 0, r2 = 0;
  double bias = 0, loa_lower = 0, loa_upper = 0;  // bias +/- 1.96 s.d.
  std::size_t n = 0;
};

/// Least-squares regression of pred on truth plus Bland-Altman agreement
/// statistics on the paired differences.
inline RegressionStats regression_bland_altman(
    const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("regression: size mismatch");
  const std::size_t n = pred.size();
  if (n < 2) throw std::invalid_argument("regression: need >= 2 pairs");
  double sp = 0, st = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sp += pred[i];
    st += truth[i];
  }
  const double mp = sp / double(n), mt = st / double(n);
  double stt = 0, spt = 0, spp = 0, sd = 0, sdd = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = truth[i] - mt, dp = pred[i] - mp;
    stt += dt * dt;
    spt += dt * dp;
    spp += dp * dp;
    const double d = pred[i] - truth[i];
    sd += d;
    sdd += d * d;
  }
  if (stt == 0.0)
    throw std::runtime_error("regression: zero variance in truth");
  RegressionStats r;
  r.n = n;
  r.slope = spt / stt;
  r.intercept = mp - r.slope * mt;
  r.r2 = spp > 0 ? (spt * spt) / (stt * spp) : 1.0;
  r.bias = sd / double(n);
  const double var_d = std::max(0.0, sdd / double(n) - r.bias * r.bias);
  const double sdv = std::sqrt(var_d);
  r.loa_lower = r.bias - 1.96 * sdv;
  r.loa_upper = r.bias + 1.96 * sdv;
  return r;
}

struct EvalReport {
  std::array<std::array<double, 2>, 3> rmse{};  // per component: mean, s.d.
  std::array<double, 3> ssim{};
  double re = 0;  // Eq. 4 relative error, radians
  std::array<RegressionStats, 3> regression{};
  RegressionStats speed_regression{};
  std::size_t fluid_voxels = 0, nonfluid_voxels = 0;
};

inline nlohmann::json to_json(const RegressionStats& r) {
  return {{"slope", r.slope},         {"intercept", r.intercept},
          {"r2", r.r2},               {"bias", r.bias},
          {"loa_lower", r.loa_lower}, {"loa_upper", r.loa_upper},
          {"n", r.n}};
}

inline nlohmann::json to_json(const EvalReport& e) {
  nlohmann::json j;
  const char* comp[3] = {"vx", "vy", "vz"};
  for (int c = 0; c < 3; ++c) {
    j["rmse"][comp[c]] = {{"mean", e.rmse[std::size_t(c)][0]},
                          {"sd", e.rmse[std::size_t(c)][1]}};
    j["ssim"][comp[c]] = e.ssim[std::size_t(c)];
    j["regression"][comp[c]] = to_json(e.regression[std::size_t(c)]);
  }
  j["re"] = e.re;
  j["regression"]["speed"] = to_json(e.speed_regression);
  j["fluid_voxels"] = e.fluid_voxels;
  j["nonfluid_voxels"] = e.nonfluid_voxels;
  return j;
}

/// Full evaluation of a prediction against ground truth. RMSE, RE and the
/// regression statistics use the fluid mask; SSIM uses the full volume.
inline EvalReport evaluate(const FlowVolume& pred, const FlowVolume& truth) {
  if (!(pred.dims == truth.dims))
    throw std::invalid_argument("evaluate: shape mismatch");
  const Grid3<float>& mask = truth.mask;
  EvalReport e;
  e.re = relative_error(pred, truth, mask);
  const Grid3<float>* pc[3] = {&pred.vx, &pred.vy, &pred.vz};
  const Grid3<float>* tc[3] = {&truth.vx, &truth.vy, &truth.vz};
  std::array<std::vector<double>, 3> pv, tv;
  std::vector<double> ps, ts;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.data[i] == 0.0f) {
      ++e.nonfluid_voxels;
      continue;
    }
    ++e.fluid_voxels;
    double p2 = 0, t2 = 0;
    for (int c = 0; c < 3; ++c) {
      pv[std::size_t(c)].push_back(pc[c]->data[i]);
      tv[std::size_t(c)].push_back(tc[c]->data[i]);
      p2 += double(pc[c]->data[i]) * pc[c]->data[i];
      t2 += double(tc[c]->data[i]) * tc[c]->data[i];
    }
    ps.push_back(std::sqrt(p2));
    ts.push_back(std::sqrt(t2));
  }
  for (int c = 0; c < 3; ++c) {
    e.rmse[std::size_t(c)] = rmse_component(pred, truth, mask, c);
    e.ssim[std::size_t(c)] = ssim3d(*pc[c], *tc[c]);
    e.regression[std::size_t(c)] =
        regression_bland_altman(pv[std::size_t(c)], tv[std::size_t(c)]);
  }
  e.speed_regression = regression_bland_altman(ps, ts);
  return e;
}

/// Paired truth/pred values over fluid voxels for external plotting.
inline void write_pairs_csv(const std::string& path, const FlowVolume& pred,
                            const FlowVolume& truth) {
  if (!(pred.dims == truth.dims))
    throw std::invalid_argument("write_pairs_csv: shape mismatch");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "component,truth,pred\n";
  const Grid3<float>* pc[3] = {&pred.vx, &pred.vy, &pred.vz};
  const Grid3<float>* tc[3] = {&truth.vx, &truth.vy, &truth.vz};
  const char* comp[3] = {"vx", "vy", "vz"};
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < truth.mask.size(); ++i)
      if (truth.mask.data[i] != 0.0f)
        os << comp[c] << "," << tc[c]->data[i] << "," << pc[c]->data[i] << "\n";
  if (!os) throw std::runtime_error("CSV write failed: " + path);
}

}  // namespace vfsr
