#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <utility>

#include "vfsr/core.hpp"
#include "vfsr/volume.hpp"

namespace vfsr {

/// Velocity-to-phase encoding: +/-VENC maps to +/-pi (a full 360 degree span).
inline double encode_phase(double v, double venc) {
  if (venc <= 0) throw std::invalid_argument("encode_phase: venc must be > 0");
  return M_PI * v / venc;
}

/// Maps v into (-venc, venc] by removing integer multiples of 2*venc; equals
/// decode(encode(v)).
inline double wrap_velocity(double v, double venc) {
  if (venc <= 0) throw std::invalid_argument("wrap_velocity: venc must be > 0");
  return v - 2.0 * venc * std::ceil((v - venc) / (2.0 * venc));
}

inline std::complex<double> to_complex(double mag, double v, double venc) {
  if (mag < 0) throw std::invalid_argument("to_complex: mag must be >= 0");
  return std::polar(mag, encode_phase(v, venc));
}

/// Returns (magnitude, velocity). Zero signal decodes to (0, 0).
inline std::pair<double, double> decode_velocity(std::complex<double> c,
                                                 double venc) {
  if (venc <= 0) throw std::invalid_argument("decode_velocity: venc must be > 0");
  const double mag = std::abs(c);
  if (mag == 0.0) return {0.0, 0.0};
  return {mag, venc * std::arg(c) / M_PI};
}

/// Complex block-average downsampling by an integer factor, per velocity
/// component. Input dims not divisible by the factor are padded with zero
/// magnitude. The LR mask takes the HR-mask block majority (mean >= 0.5);
/// the LR magnitude is the component mean of the decoded magnitudes.
inline MRVolume block_downsample(const MRVolume& hr, int factor) {
  if (factor < 2) throw std::invalid_argument("block_downsample: factor < 2");
  const Int3 ld{(hr.dims.x + factor - 1) / factor,
                (hr.dims.y + factor - 1) / factor,
                (hr.dims.z + factor - 1) / factor};
  MRVolume lr(ld, hr.spacing * factor, hr.origin);
  lr.venc = hr.venc;
  lr.snr_db = hr.snr_db;
  const double inv = 1.0 / (double(factor) * factor * factor);

  for (int z = 0; z < ld.z; ++z)
    for (int y = 0; y < ld.y; ++y)
      for (int x = 0; x < ld.x; ++x) {
        std::array<std::complex<double>, 3> acc{};
        double mask_acc = 0;
        for (int dz = 0; dz < factor; ++dz)
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx) {
              const int hx = x * factor + dx, hy = y * factor + dy,
                        hz = z * factor + dz;
              if (!hr.mag.in_bounds(hx, hy, hz)) continue;  // zero padding
              const std::size_t i = hr.mag.idx(hx, hy, hz);
              const double m = hr.mag.data[i];
              mask_acc += hr.mask.data[i];
              for (int c = 0; c < 3; ++c)
                acc[c] += std::polar(
                    m, M_PI * hr.component(c).data[i] / hr.venc[c]);
            }
        const std::size_t o = lr.mag.idx(x, y, z);
        double mag_mean = 0;
        for (int c = 0; c < 3; ++c) {
          auto [m, v] = decode_velocity(acc[c] * inv, lr.venc[c]);
          lr.component(c).data[o] = float(v);
          mag_mean += m;
        }
        lr.mag.data[o] = float(mag_mean / 3.0);
        lr.mask.data[o] = mask_acc * inv >= 0.5 ? 1.0f : 0.0f;
      }
  return lr;
}

/// Adds i.i.d. Gaussian noise of sigma = fluid_mag / 10^(snr_db/20) to the
/// real and imaginary parts of each velocity-encoded complex volume, then
/// decodes. Deterministic given the seed; +inf SNR is a no-op.
inline MRVolume add_noise(const MRVolume& lr, double snr_db, double fluid_mag,
                          std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return lr;
  if (!std::isfinite(snr_db)) throw std::invalid_argument("add_noise: bad SNR");
  if (fluid_mag <= 0) throw std::invalid_argument("add_noise: fluid magnitude must be > 0");
  const double sigma = fluid_mag / std::pow(10.0, snr_db / 20.0);

  MRVolume out = lr;
  out.snr_db = snr_db;
  const std::size_t n = lr.mag.size();
  std::array<double, 3> mag_acc{};
  std::vector<std::array<double, 3>> mags(n);
  for (int c = 0; c < 3; ++c) {
    Rng rng(mix_seed(seed, std::uint64_t(c)));
    for (std::size_t i = 0; i < n; ++i) {
      std::complex<double> s =
          to_complex(lr.mag.data[i], lr.component(c).data[i], lr.venc[c]);
      s += std::complex<double>(sigma * rng.normal(), sigma * rng.normal());
      auto [m, v] = decode_velocity(s, lr.venc[c]);
      out.component(c).data[i] = float(v);
      mags[i][c] = m;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    out.mag.data[i] = float((mags[i][0] + mags[i][1] + mags[i][2]) / 3.0);
  return out;
}

struct DegradeOptions {
  std::array<double, 3> venc{1.5, 1.5, 1.5};
  double intensity = 120.0;   // fluid magnitude, a.u.
  double tissue_frac = 0.05;  // static-tissue magnitude fraction
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  int factor = 4;
};

/// Ground truth to paired HR/LR synthetic MR volumes. HR stays noise-free;
/// the LR volume is the complex block-mean of HR with noise injected at the
/// target SNR. Velocities beyond VENC alias into (-VENC, VENC].
inline std::pair<MRVolume, MRVolume> degrade(const FlowVolume& hr_flow,
                                             const DegradeOptions& opt = {}) {
  for (double v : opt.venc)
    if (v <= 0) throw std::invalid_argument("degrade: venc must be > 0");
  MRVolume hr(hr_flow.dims, hr_flow.spacing, hr_flow.origin);
  hr.venc = opt.venc;
  const std::size_t n = hr.mag.size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool fluid = hr_flow.mask.data[i] != 0.0f;
    hr.mask.data[i] = fluid ? 1.0f : 0.0f;
    hr.mag.data[i] = float(fluid ? opt.intensity : opt.tissue_frac * opt.intensity);
    hr.vx.data[i] = float(wrap_velocity(hr_flow.vx.data[i], opt.venc[0]));
    hr.vy.data[i] = float(wrap_velocity(hr_flow.vy.data[i], opt.venc[1]));
    hr.vz.data[i] = float(wrap_velocity(hr_flow.vz.data[i], opt.venc[2]));
  }
  MRVolume lr = block_downsample(hr, opt.factor);
  lr = add_noise(lr, opt.snr_db, opt.intensity, opt.seed);
  return {std::move(hr), std::move(lr)};
}

}  // namespace vfsr
