#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vfsr/geometry.hpp"
#include "vfsr/volume.hpp"

namespace vfsr {

/// Parabolic inlet profile (cross-section coordinates, mm). Zero outside
/// the inlet disc.
inline double inlet_profile(double y_mm, double z_mm, const GeometrySpec& g,
                            double w) {
  const double r2 = y_mm * y_mm + z_mm * z_mm;
  const double ri2 = g.inlet_radius * g.inlet_radius;
  if (r2 > ri2) return 0.0;
  return w * g.v_max * (1.0 - r2 / ri2);
}

namespace detail {

// Quintic smootherstep: C2 at both ends, which keeps the finite-difference
// divergence of sampled fields second-order clean across the ramp junctions.
inline double smoothstep(double u) {
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}
inline double smoothstep_dx(double u) {
  return 30.0 * u * u * (1.0 - u) * (1.0 - u);
}

// Lateral unit direction of the constriction displacement, in the (y, z)
// cross-section plane. "Up" is +z.
inline void tilt_dir(const GeometrySpec& g, double& ey, double& ez) {
  switch (g.direction) {
    case TiltDirection::up: ey = 0; ez = 1; break;
    case TiltDirection::down: ey = 0; ez = -1; break;
    case TiltDirection::side: ey = 1; ez = 0; break;
    default: ey = 0; ez = 0; break;
  }
}

}  // namespace detail

/// Local lumen radius R(x): R_I upstream and downstream, R_C through the
/// constriction, smoothstep ramps over the transition zones.
inline double lumen_radius(const GeometrySpec& g, double x) {
  const double x0 = g.upstream_len;                     // constriction start
  const double x1 = x0 + g.constriction_len;            // constriction end
  const double T = g.transition_len;
  if (x <= x0 - T || x >= x1 + T) return g.inlet_radius;
  if (x >= x0 && x <= x1) return g.constriction_radius;
  const double dR = g.constriction_radius - g.inlet_radius;
  if (x < x0) return g.inlet_radius + dR * detail::smoothstep((x - (x0 - T)) / T);
  return g.inlet_radius + dR * detail::smoothstep(1.0 - (x - x1) / T);
}

inline double lumen_radius_dx(const GeometrySpec& g, double x) {
  const double x0 = g.upstream_len;
  const double x1 = x0 + g.constriction_len;
  const double T = g.transition_len;
  const double dR = g.constriction_radius - g.inlet_radius;
  if (x > x0 - T && x < x0)
    return dR * detail::smoothstep_dx((x - (x0 - T)) / T) / T;
  if (x > x1 && x < x1 + T)
    return -dR * detail::smoothstep_dx(1.0 - (x - x1) / T) / T;
  return 0.0;
}

/// Lateral centreline displacement d(x) along the tilt direction: zero far
/// up/downstream, ramping to delta plus the tilt-induced shift through the
/// constricted section.
inline double centerline_offset(const GeometrySpec& g, double x) {
  if (g.theta_deg == 0 && g.delta_mm == 0) return 0.0;
  const double x0 = g.upstream_len;
  const double x1 = x0 + g.constriction_len;
  const double T = g.transition_len;
  double bump;
  if (x <= x0 - T || x >= x1 + T) bump = 0.0;
  else if (x < x0) bump = detail::smoothstep((x - (x0 - T)) / T);
  else if (x <= x1) bump = 1.0;
  else bump = detail::smoothstep(1.0 - (x - x1) / T);
  const double xm = 0.5 * (x0 + x1);
  const double tilt = std::tan(g.theta_deg * M_PI / 180.0);
  return bump * (g.delta_mm + tilt * (x - xm));
}

inline double centerline_offset_dx(const GeometrySpec& g, double x) {
  if (g.theta_deg == 0 && g.delta_mm == 0) return 0.0;
  const double x0 = g.upstream_len;
  const double x1 = x0 + g.constriction_len;
  const double T = g.transition_len;
  double bump, dbump;
  if (x <= x0 - T || x >= x1 + T) { bump = 0; dbump = 0; }
  else if (x < x0) {
    bump = detail::smoothstep((x - (x0 - T)) / T);
    dbump = detail::smoothstep_dx((x - (x0 - T)) / T) / T;
  } else if (x <= x1) { bump = 1; dbump = 0; }
  else {
    bump = detail::smoothstep(1.0 - (x - x1) / T);
    dbump = -detail::smoothstep_dx(1.0 - (x - x1) / T) / T;
  }
  const double xm = 0.5 * (x0 + x1);
  const double tilt = std::tan(g.theta_deg * M_PI / 180.0);
  return dbump * (g.delta_mm + tilt * (x - xm)) + bump * tilt;
}

inline bool inside_lumen(const GeometrySpec& g, const Vec3& p_mm) {
  if (p_mm.x < 0 || p_mm.x > g.length()) return false;
  double ey, ez;
  detail::tilt_dir(g, ey, ez);
  const double d = centerline_offset(g, p_mm.x);
  const double ly = p_mm.y - d * ey;
  const double lz = p_mm.z - d * ez;
  const double R = lumen_radius(g, p_mm.x);
  return ly * ly + lz * lz <= R * R;
}

/// Mass-conserving quasi-1D jet model. Axial velocity keeps the parabolic
/// shape with the flux implied by the inlet profile; the radial component is
/// the exact continuity solution for that profile. For straight geometries
/// the field is divergence-free; tilted/offset variants are approximate.
inline Vec3 analytic_velocity(const GeometrySpec& g, const Vec3& p_mm,
                              double w) {
  if (w == 0.0) return {};
  if (p_mm.x < 0 || p_mm.x > g.length()) return {};
  double ey, ez;
  detail::tilt_dir(g, ey, ez);
  const double d = centerline_offset(g, p_mm.x);
  const double ly = p_mm.y - d * ey;
  const double lz = p_mm.z - d * ez;
  const double R = lumen_radius(g, p_mm.x);
  const double r2 = ly * ly + lz * lz;
  if (r2 > R * R) return {};

  const double Q = M_PI * g.inlet_radius * g.inlet_radius * w * g.v_max / 2.0;
  const double shape = 1.0 - r2 / (R * R);
  const double u_ax = 2.0 * Q / (M_PI * R * R) * shape;
  const double Rp = lumen_radius_dx(g, p_mm.x);
  const double v_r_over_r = 2.0 * Q * Rp / (M_PI * R * R * R) * shape;

  Vec3 v{u_ax, v_r_over_r * ly, v_r_over_r * lz};
  // Advection along the displaced centreline.
  const double dp = centerline_offset_dx(g, p_mm.x);
  v.y += u_ax * dp * ey;
  v.z += u_ax * dp * ez;
  return v;
}

inline Vec3 analytic_field(const Vec3& p_mm, int t_index, const GeometrySpec& g,
                           const Waveform& wf = {}) {
  return analytic_velocity(g, p_mm, waveform_value(t_index, wf));
}

/// Axial volume flux through the cross-section at x (analytic, exact for
/// straight geometries). Units mm^2 * m/s.
inline double analytic_flux(const GeometrySpec& g, double w) {
  return M_PI * g.inlet_radius * g.inlet_radius * w * g.v_max / 2.0;
}

struct SampleOptions {
  double spacing = 0.5;            // mm per HR voxel
  int pad_multiple = 4;            // dims forced to a multiple of this
  int min_cross_dim = 48;          // minimum lateral dims (one LR patch)
  std::size_t max_voxels = std::size_t(1) << 28;
};

/// Evaluates the analytic field at voxel centres on a uniform grid spanning
/// the geometry. Lateral dims are padded so a full LR patch always fits.
inline FlowVolume sample_to_grid(const GeometrySpec& g, int t_index,
                                 const SampleOptions& opt = {},
                                 const Waveform& wf = {}) {
  g.validate();
  if (opt.spacing <= 0) throw std::invalid_argument("spacing must be > 0");
  const double h = opt.spacing;
  const double L = g.length();

  auto round_up = [&](int n, int lo) {
    n = std::max(n, lo);
    const int m = opt.pad_multiple;
    return ((n + m - 1) / m) * m;
  };

  int nx = round_up(int(std::ceil(L / h)), opt.min_cross_dim);
  double max_lat = 0;
  for (double x = 0; x <= L; x += h * 0.5)
    max_lat = std::max(max_lat, std::abs(centerline_offset(g, x)) + lumen_radius(g, x));
  const double half = max_lat + h;
  int nlat = round_up(int(std::ceil(2.0 * half / h)), opt.min_cross_dim);

  if (std::size_t(nx) * nlat * nlat > opt.max_voxels)
    throw std::runtime_error("sample_to_grid: grid exceeds memory cap");

  FlowVolume out({nx, nlat, nlat}, h, {0, -0.5 * nlat * h, -0.5 * nlat * h},
                 t_index);
  const double w = waveform_value(t_index, wf);
  for (int z = 0; z < nlat; ++z)
    for (int y = 0; y < nlat; ++y)
      for (int x = 0; x < nx; ++x) {
        const Vec3 p{out.origin.x + (x + 0.5) * h, out.origin.y + (y + 0.5) * h,
                     out.origin.z + (z + 0.5) * h};
        const std::size_t i = out.mask.idx(x, y, z);
        if (!inside_lumen(g, p)) continue;
        out.mask.data[i] = 1.0f;
        const Vec3 v = analytic_velocity(g, p, w);
        out.vx.data[i] = float(v.x);
        out.vy.data[i] = float(v.y);
        out.vz.data[i] = float(v.z);
      }
  return out;
}

}  // namespace vfsr
