#pragma once

#include <array>
#include <limits>

#include "vfsr/core.hpp"

namespace vfsr {

/// Ground-truth velocity field on a uniform Cartesian grid.
/// Velocities in m/s, spacing/origin in mm. mask is 1 inside the lumen.
struct FlowVolume {
  Int3 dims{};
  double spacing = 0.5;
  Vec3 origin{};
  int t_index = 0;
  Grid3<float> vx, vy, vz, mask;

  FlowVolume() = default;
  FlowVolume(Int3 d, double sp, Vec3 org, int t = 0)
      : dims(d), spacing(sp), origin(org), t_index(t),
        vx(d), vy(d), vz(d), mask(d) {}
};

/// Synthetic MR volume: magnitude plus three decoded velocity channels.
/// snr_db = +inf marks a noise-free volume.
struct MRVolume {
  Int3 dims{};
  double spacing = 0.5;
  Vec3 origin{};
  Grid3<float> mag, vx, vy, vz, mask;
  std::array<double, 3> venc{1.0, 1.0, 1.0};
  double snr_db = std::numeric_limits<double>::infinity();

  MRVolume() = default;
  MRVolume(Int3 d, double sp, Vec3 org)
      : dims(d), spacing(sp), origin(org),
        mag(d), vx(d), vy(d), vz(d), mask(d) {}

  Grid3<float>& component(int c) { return c == 0 ? vx : c == 1 ? vy : vz; }
  const Grid3<float>& component(int c) const {
    return c == 0 ? vx : c == 1 ? vy : vz;
  }
};

}  // namespace vfsr
