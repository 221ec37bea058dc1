#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "vfsr/core.hpp"

namespace vfsr {

enum class TiltDirection { none, up, down, side };

/// Venturi-tube surrogate for a regurgitant orifice. The tube axis runs
/// along +x; the constricted section may be tilted (theta) and/or shifted
/// off-centre (delta). Lengths and radii in mm, velocities in m/s.
struct GeometrySpec {
  int id = 0;
  double v_max = 0.3;                // peak inlet velocity, m/s
  double inlet_radius = 5.0;         // R_I, mm
  double constriction_radius = 1.0;  // R_C, mm
  double theta_deg = 0.0;
  double delta_mm = 0.0;
  TiltDirection direction = TiltDirection::none;
  double upstream_len = 20.0;
  double constriction_len = 5.0;
  double downstream_len = 40.0;
  double transition_len = 4.0;  // smooth ramp length on each side

  double length() const { return upstream_len + constriction_len + downstream_len; }

  void validate() const {
    if (constriction_radius <= 0 || constriction_radius >= inlet_radius)
      throw std::invalid_argument("geometry: need 0 < R_C < R_I");
    if (theta_deg < 0 || theta_deg >= 90)
      throw std::invalid_argument("geometry: need 0 <= theta < 90");
    if (delta_mm < 0 || delta_mm >= inlet_radius - constriction_radius)
      throw std::invalid_argument("geometry: need 0 <= delta < R_I - R_C");
    if (v_max <= 0) throw std::invalid_argument("geometry: v_max must be > 0");
    if (transition_len <= 0 || 2 * transition_len > std::min(upstream_len, downstream_len))
      throw std::invalid_argument("geometry: bad transition length");
  }
};

/// The 20 study geometries. 1-10 vary v_max/R_I/R_C; 11-20 are geometry 3
/// with tilted and/or off-centre constrictions.
inline std::vector<GeometrySpec> builtin_geometries() {
  struct Basic { double v_mm_s, ri, rc; };
  static const Basic basic[10] = {
      {300, 5.00, 1.00}, {150, 5.00, 1.00}, {500, 5.00, 1.50},
      {100, 5.00, 0.75}, {100, 5.00, 0.60}, {450, 8.00, 2.00},
      {450, 6.00, 2.00}, {100, 8.00, 1.00}, {150, 10.0, 2.00},
      {100, 10.0, 1.50}};
  struct Shaped { double theta, delta; TiltDirection dir; };
  static const Shaped shaped[10] = {
      {20, 0.00, TiltDirection::up},   {40, 0.00, TiltDirection::up},
      {0, 1.50, TiltDirection::none},  {0, 3.00, TiltDirection::none},
      {20, 1.50, TiltDirection::up},   {40, 1.50, TiltDirection::up},
      {20, 3.00, TiltDirection::up},   {40, 3.00, TiltDirection::up},
      {30, 2.25, TiltDirection::side}, {30, 2.25, TiltDirection::down}};

  std::vector<GeometrySpec> out;
  for (int i = 0; i < 10; ++i) {
    GeometrySpec g;
    g.id = i + 1;
    g.v_max = basic[i].v_mm_s / 1000.0;
    g.inlet_radius = basic[i].ri;
    g.constriction_radius = basic[i].rc;
    out.push_back(g);
  }
  for (int i = 0; i < 10; ++i) {
    GeometrySpec g;  // based on geometry 3
    g.id = i + 11;
    g.v_max = 0.5;
    g.inlet_radius = 5.0;
    g.constriction_radius = 1.5;
    g.theta_deg = shaped[i].theta;
    g.delta_mm = shaped[i].delta;
    g.direction = shaped[i].dir;
    out.push_back(g);
  }
  return out;
}

inline GeometrySpec geometry(int id) {
  if (id < 1 || id > 20) throw std::invalid_argument("geometry id must be 1..20");
  return builtin_geometries()[id - 1];
}

/// Inlet flow waveform over one diastole: gamma-variate pulse, rapid rise
/// then slow decay, normalized so the maximum over frames is exactly 1.
struct Waveform {
  int n_frames = 71;
  double duration = 0.5;        // seconds
  double alpha = 2.0;
  double t_peak_fraction = 0.15;
};

inline double waveform_value(int t_index, const Waveform& w = {}) {
  if (t_index < 0 || t_index >= w.n_frames)
    throw std::out_of_range("waveform frame index out of range");
  const double tp = w.t_peak_fraction * w.duration;
  auto raw = [&](int i) {
    const double t = w.duration * double(i) / double(w.n_frames - 1);
    const double u = t / tp;
    return std::pow(u, w.alpha) * std::exp(w.alpha * (1.0 - u));
  };
  double peak = 0;
  for (int i = 0; i < w.n_frames; ++i) peak = std::max(peak, raw(i));
  return raw(t_index) / peak;
}

}  // namespace vfsr
