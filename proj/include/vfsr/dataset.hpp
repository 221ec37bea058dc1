#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "vfsr/flowgen.hpp"
#include "vfsr/io.hpp"
#include "vfsr/mrsim.hpp"

#include "json.hpp"

namespace vfsr {

struct AugmentConfig {
  double venc_min = 0.3, venc_max = 6.0, venc_step = 0.3;  // m/s grid
  double alias_prob = 0.10;
  std::array<double, 2> alias_deltas{0.3, 0.6};
  double intensity_min = 60, intensity_max = 240;  // a.u.
  double snr_min = 14, snr_max = 17;               // dB
  int patches_per_frame = 10;
  double min_fluid_frac = 0.20;
  int lr_patch = 12;
  int factor = 4;
  int max_corner_attempts = 1000;
  bool rotate_duplicates = true;
  std::uint64_t seed = 0;

  std::vector<double> venc_grid() const {
    std::vector<double> g;
    for (int i = 0;; ++i) {
      const double v = venc_min + i * venc_step;
      if (v > venc_max + 1e-9) break;
      g.push_back(v);
    }
    return g;
  }
};

struct VencChoice {
  double venc = 0;
  bool aliased = false;
};

/// VENC selection given the explicit aliased/non-aliased path.
/// Non-aliased: uniform among grid values above the peak (max grid value,
/// flagged, when the peak tops the grid). Aliased: 0.3 or 0.6 below the
/// smallest grid value covering the peak, clamped to the grid minimum.
inline VencChoice choose_venc_on_path(double peak, const AugmentConfig& cfg,
                                      Rng& rng, bool alias_path) {
  const auto grid = cfg.venc_grid();
  if (!alias_path) {
    std::vector<double> above;
    for (double v : grid)
      if (v > peak) above.push_back(v);
    if (above.empty()) return {grid.back(), true};
    return {above[std::size_t(rng.uniform_int(int(above.size())))], false};
  }
  double vstar = grid.back();
  for (double v : grid)
    if (v >= peak) { vstar = v; break; }
  const double delta = cfg.alias_deltas[rng.uniform_int(2)];
  const double venc = std::max(vstar - delta, grid.front());
  return {venc, venc < peak};
}

/// Draws the aliasing path at cfg.alias_prob, then selects the VENC.
inline VencChoice choose_venc(double peak, const AugmentConfig& cfg, Rng& rng) {
  const bool alias_path = rng.uniform() < cfg.alias_prob;
  return choose_venc_on_path(peak, cfg, rng, alias_path);
}

/// 3-D summed-area table for O(1) box sums over a mask.
class IntegralGrid {
 public:
  explicit IntegralGrid(const Grid3<float>& g) : dims_(g.dims) {
    sum_.assign(std::size_t(dims_.x + 1) * (dims_.y + 1) * (dims_.z + 1), 0.0);
    for (int z = 0; z < dims_.z; ++z)
      for (int y = 0; y < dims_.y; ++y)
        for (int x = 0; x < dims_.x; ++x)
          at(x + 1, y + 1, z + 1) = double(g.at(x, y, z)) + at(x, y + 1, z + 1) +
                                    at(x + 1, y, z + 1) + at(x + 1, y + 1, z) -
                                    at(x, y, z + 1) - at(x, y + 1, z) -
                                    at(x + 1, y, z) + at(x, y, z);
  }

  /// Sum over [x0, x0+sx) x [y0, y0+sy) x [z0, z0+sz).
  double box(int x0, int y0, int z0, int sx, int sy, int sz) const {
    const int x1 = x0 + sx, y1 = y0 + sy, z1 = z0 + sz;
    return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) +
           at(x0, y0, z1) + at(x0, y1, z0) + at(x1, y0, z0) - at(x0, y0, z0);
  }

  double total() const { return at(dims_.x, dims_.y, dims_.z); }

 private:
  double& at(int x, int y, int z) {
    return sum_[(std::size_t(z) * (dims_.y + 1) + y) * (dims_.x + 1) + x];
  }
  double at(int x, int y, int z) const {
    return sum_[(std::size_t(z) * (dims_.y + 1) + y) * (dims_.x + 1) + x];
  }
  Int3 dims_;
  std::vector<double> sum_;
};

/// Random in-bounds patch corners whose mask window meets the fluid-fraction
/// bound. After the attempt cap the best corner seen so far is accepted with
/// a warning.
inline std::vector<Int3> sample_patch_corners(const Grid3<float>& lr_mask,
                                              int count, double min_frac,
                                              Rng& rng, int patch = 12,
                                              int max_attempts = 1000) {
  const Int3 d = lr_mask.dims;
  if (d.x < patch || d.y < patch || d.z < patch)
    throw std::invalid_argument("sample_patch_corners: volume smaller than patch");
  IntegralGrid integral(lr_mask);
  if (integral.total() == 0.0)
    throw std::runtime_error("sample_patch_corners: volume has no fluid");

  const double win = double(patch) * patch * patch;
  std::vector<Int3> corners;
  for (int p = 0; p < count; ++p) {
    Int3 best{};
    double best_frac = -1;
    bool ok = false;
    for (int a = 0; a < max_attempts; ++a) {
      Int3 c{rng.uniform_int(d.x - patch + 1), rng.uniform_int(d.y - patch + 1),
             rng.uniform_int(d.z - patch + 1)};
      const double frac =
          integral.box(c.x, c.y, c.z, patch, patch, patch) / win;
      if (frac > best_frac) {
        best_frac = frac;
        best = c;
      }
      if (frac >= min_frac) {
        ok = true;
        break;
      }
    }
    if (!ok)
      std::cerr << "warning: patch corner below fluid fraction bound ("
                << best_frac << " < " << min_frac << ")\n";
    corners.push_back(best);
  }
  return corners;
}

/// One of the 24 proper axis-aligned cube rotations as a signed axis
/// permutation: output axis i reads input axis perm[i], flipped when
/// sign[i] < 0. The matrix entry R[i][perm[i]] = sign[i].
struct CubeRotation {
  std::array<int, 3> perm{0, 1, 2};
  std::array<int, 3> sign{1, 1, 1};
};

inline const std::array<CubeRotation, 24>& cube_rotations() {
  static const std::array<CubeRotation, 24> table = [] {
    std::array<CubeRotation, 24> t{};
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                             {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    const int parity[6] = {1, -1, -1, 1, 1, -1};
    int n = 0;
    for (int p = 0; p < 6; ++p)
      for (int s = 0; s < 8; ++s) {
        const int sg[3] = {(s & 1) ? -1 : 1, (s & 2) ? -1 : 1,
                           (s & 4) ? -1 : 1};
        if (parity[p] * sg[0] * sg[1] * sg[2] != 1) continue;  // proper only
        t[n].perm = {perms[p][0], perms[p][1], perms[p][2]};
        t[n].sign = {sg[0], sg[1], sg[2]};
        ++n;
      }
    return t;
  }();
  return table;
}

/// Voxel permutation of a cubic grid under a cube rotation (scalar fields).
inline Grid3<float> rotate_grid(const Grid3<float>& in, const CubeRotation& r) {
  const int s = in.dims.x;
  if (in.dims.y != s || in.dims.z != s)
    throw std::invalid_argument("rotate_grid: grid must be cubic");
  Grid3<float> out(in.dims);
  for (int z = 0; z < s; ++z)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const int o[3] = {x, y, z};
        int src[3];
        for (int i = 0; i < 3; ++i)
          src[r.perm[i]] = r.sign[i] > 0 ? o[i] : s - 1 - o[i];
        out.at(x, y, z) = in.at(src[0], src[1], src[2]);
      }
  return out;
}

/// Matched LR/HR training patch. LR grids: vx, vy, vz, mag, mask (12^3);
/// HR grids: vx, vy, vz, mask (48^3).
struct PatchPair {
  std::uint32_t geom_id = 0;
  std::uint16_t frame = 0;
  std::array<std::uint16_t, 3> corner{};
  std::uint8_t rotation_id = 0;
  std::uint8_t aliased = 0;
  std::array<float, 3> venc{};
  float intensity = 0;
  float snr_db = 0;
  std::array<Grid3<float>, 5> lr;  // vx vy vz mag mask
  std::array<Grid3<float>, 4> hr;  // vx vy vz mask
};

/// Rotates every grid of the pair and applies the matching vector transform
/// to the velocity components.
inline PatchPair rotate_pair(const PatchPair& p, int rotation_id) {
  if (rotation_id < 0 || rotation_id >= 24)
    throw std::invalid_argument("rotate_pair: rotation id must be 0..23");
  const CubeRotation& r = cube_rotations()[std::size_t(rotation_id)];
  PatchPair out = p;
  out.rotation_id = std::uint8_t(rotation_id);
  for (int i = 0; i < 3; ++i) {
    out.lr[i] = rotate_grid(p.lr[r.perm[i]], r);
    out.hr[i] = rotate_grid(p.hr[r.perm[i]], r);
    if (r.sign[i] < 0) {
      for (float& v : out.lr[i].data) v = -v;
      for (float& v : out.hr[i].data) v = -v;
    }
    out.venc[i] = p.venc[r.perm[i]];
  }
  out.lr[3] = rotate_grid(p.lr[3], r);  // mag
  out.lr[4] = rotate_grid(p.lr[4], r);  // mask
  out.hr[3] = rotate_grid(p.hr[3], r);  // mask
  return out;
}

namespace detail {

inline Grid3<float> crop(const Grid3<float>& g, Int3 c, int s) {
  Grid3<float> out({s, s, s});
  for (int z = 0; z < s; ++z)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        out.at(x, y, z) = g.at(c.x + x, c.y + y, c.z + z);
  return out;
}

}  // namespace detail

// FPCH record layout (packed little-endian): geometry id u32, frame u16,
// corner u16[3], rotation u8, aliased u8, venc f32[3], intensity f32,
// snr f32, then LR 5 x 12^3 f32 and HR 4 x 48^3 f32 grids, C-order.
inline constexpr std::size_t kFpchHeaderBytes = 4 + 2 + 6 + 1 + 1 + 12 + 4 + 4;
inline constexpr std::size_t kFpchRecordBytes =
    kFpchHeaderBytes + 5 * 12 * 12 * 12 * 4 + std::size_t(4) * 48 * 48 * 48 * 4;

class FpchWriter {
 public:
  explicit FpchWriter(const std::string& path) : os_(path, std::ios::binary) {
    if (!os_) throw std::runtime_error("cannot open for write: " + path);
    os_.write("FPCH", 4);
    vfsr::detail::put_u32(os_, 1);
    vfsr::detail::put_u32(os_, 0);  // count, patched on close
  }

  void write(const PatchPair& p) {
    vfsr::detail::put_u32(os_, p.geom_id);
    put_u16(p.frame);
    for (int i = 0; i < 3; ++i) put_u16(p.corner[std::size_t(i)]);
    os_.put(char(p.rotation_id));
    os_.put(char(p.aliased));
    for (float v : p.venc) vfsr::detail::put_f32(os_, v);
    vfsr::detail::put_f32(os_, p.intensity);
    vfsr::detail::put_f32(os_, p.snr_db);
    for (const auto& g : p.lr) put_grid(g, 12);
    for (const auto& g : p.hr) put_grid(g, 48);
    ++count_;
  }

  std::uint32_t count() const { return count_; }

  void close() {
    os_.seekp(8);
    vfsr::detail::put_u32(os_, count_);
    os_.close();
    if (os_.fail()) throw std::runtime_error("FPCH write failed");
  }

  /// Best-effort count patch; call close() to detect write failures.
  ~FpchWriter() {
    if (os_.is_open()) {
      os_.seekp(8);
      vfsr::detail::put_u32(os_, count_);
    }
  }

 private:
  void put_u16(std::uint16_t v) {
    os_.write(reinterpret_cast<const char*>(&v), 2);
  }
  void put_grid(const Grid3<float>& g, int s) {
    if (g.dims.x != s || g.dims.y != s || g.dims.z != s)
      throw std::runtime_error("FPCH: wrong patch dims");
    os_.write(reinterpret_cast<const char*>(g.data.data()),
              std::streamsize(g.data.size() * 4));
  }
  std::ofstream os_;
  std::uint32_t count_ = 0;
};

class FpchReader {
 public:
  explicit FpchReader(const std::string& path) : is_(path, std::ios::binary) {
    if (!is_) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is_.read(magic, 4);
    if (std::memcmp(magic, "FPCH", 4) != 0)
      throw std::runtime_error("not an FPCH file: " + path);
    if (vfsr::detail::get_u32(is_) != 1)
      throw std::runtime_error("unsupported FPCH version");
    count_ = vfsr::detail::get_u32(is_);
  }

  std::uint32_t count() const { return count_; }

  PatchPair read(std::uint32_t i) {
    if (i >= count_) throw std::out_of_range("FPCH record index");
    is_.seekg(std::streamoff(12 + std::uint64_t(i) * kFpchRecordBytes));
    PatchPair p;
    p.geom_id = vfsr::detail::get_u32(is_);
    p.frame = get_u16();
    for (auto& c : p.corner) c = get_u16();
    p.rotation_id = std::uint8_t(is_.get());
    p.aliased = std::uint8_t(is_.get());
    for (auto& v : p.venc) v = vfsr::detail::get_f32(is_);
    p.intensity = vfsr::detail::get_f32(is_);
    p.snr_db = vfsr::detail::get_f32(is_);
    for (auto& g : p.lr) get_grid(g, 12);
    for (auto& g : p.hr) get_grid(g, 48);
    if (!is_) throw std::runtime_error("truncated FPCH record");
    return p;
  }

 private:
  std::uint16_t get_u16() {
    std::uint16_t v = 0;
    is_.read(reinterpret_cast<char*>(&v), 2);
    return v;
  }
  void get_grid(Grid3<float>& g, int s) {
    g = Grid3<float>({s, s, s});
    is_.read(reinterpret_cast<char*>(g.data.data()),
             std::streamsize(g.data.size() * 4));
  }
  std::ifstream is_;
  std::uint32_t count_ = 0;
};

struct DatasetStats {
  std::uint32_t patches = 0;
  std::uint32_t frames = 0;
  std::uint32_t aliased_frames = 0;
  std::vector<std::pair<int, std::uint32_t>> per_geometry;
};

inline void write_dataset_index(const std::string& path, const DatasetStats& s,
                                const AugmentConfig& cfg) {
  nlohmann::json j;
  j["patches"] = s.patches;
  j["frames"] = s.frames;
  j["aliased_frames"] = s.aliased_frames;
  j["aliased_frame_fraction"] =
      s.frames ? double(s.aliased_frames) / s.frames : 0.0;
  j["seed"] = cfg.seed;
  j["alias_prob"] = cfg.alias_prob;
  j["patches_per_frame"] = cfg.patches_per_frame;
  for (auto& [id, n] : s.per_geometry)
    j["per_geometry"][std::to_string(id)] = n;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << j.dump(2) << "\n";
}

/// Builds the augmented patch dataset: per frame choose per-component VENC
/// (one aliasing decision per frame), intensity and SNR, degrade, sample
/// corners, then store each patch plus one non-identity rotated duplicate.
/// Deterministic given cfg.seed.
inline DatasetStats build_dataset(
    const std::vector<GeometrySpec>& geometries, const AugmentConfig& cfg,
    const SampleOptions& sample_opt, const Waveform& wf,
    const std::string& out_path, int frame_stride = 1) {
  if (frame_stride < 1) throw std::invalid_argument("frame_stride must be >= 1");
  FpchWriter writer(out_path);
  DatasetStats stats;

  for (const GeometrySpec& geom : geometries) {
    std::uint32_t geom_patches = 0;
    for (int frame = 0; frame < wf.n_frames; frame += frame_stride) {
      const FlowVolume fv = sample_to_grid(geom, frame, sample_opt, wf);
      Rng rng(mix_seed(cfg.seed, std::uint64_t(geom.id) * 131071u +
                                     std::uint64_t(frame)));

      // Acquisition-level draws: shared aliasing decision, per-component
      // VENC from per-component peaks.
      std::array<double, 3> peak{};
      for (std::size_t i = 0; i < fv.mask.size(); ++i) {
        if (fv.mask.data[i] == 0.0f) continue;
        peak[0] = std::max(peak[0], std::abs(double(fv.vx.data[i])));
        peak[1] = std::max(peak[1], std::abs(double(fv.vy.data[i])));
        peak[2] = std::max(peak[2], std::abs(double(fv.vz.data[i])));
      }
      const bool alias_path = rng.uniform() < cfg.alias_prob;
      std::array<VencChoice, 3> venc;
      bool any_aliased = false;
      for (int c = 0; c < 3; ++c) {
        venc[std::size_t(c)] =
            choose_venc_on_path(peak[std::size_t(c)], cfg, rng, alias_path);
        any_aliased = any_aliased || venc[std::size_t(c)].aliased;
      }
      DegradeOptions dopt;
      dopt.venc = {venc[0].venc, venc[1].venc, venc[2].venc};
      dopt.intensity = rng.uniform(cfg.intensity_min, cfg.intensity_max);
      dopt.snr_db = rng.uniform(cfg.snr_min, cfg.snr_max);
      dopt.seed = mix_seed(cfg.seed, std::uint64_t(geom.id) * 524287u +
                                         std::uint64_t(frame) + 1);
      dopt.factor = cfg.factor;
      auto [hr_mr, lr_mr] = degrade(fv, dopt);

      const auto corners =
          sample_patch_corners(lr_mr.mask, cfg.patches_per_frame,
                               cfg.min_fluid_frac, rng, cfg.lr_patch,
                               cfg.max_corner_attempts);
      ++stats.frames;
      if (any_aliased) ++stats.aliased_frames;

      for (const Int3& c : corners) {
        PatchPair p;
        p.geom_id = std::uint32_t(geom.id);
        p.frame = std::uint16_t(frame);
        p.corner = {std::uint16_t(c.x), std::uint16_t(c.y),
                    std::uint16_t(c.z)};
        p.aliased = any_aliased ? 1 : 0;
        p.venc = {float(dopt.venc[0]), float(dopt.venc[1]),
                  float(dopt.venc[2])};
        p.intensity = float(dopt.intensity);
        p.snr_db = float(dopt.snr_db);
        p.lr[0] = detail::crop(lr_mr.vx, c, cfg.lr_patch);
        p.lr[1] = detail::crop(lr_mr.vy, c, cfg.lr_patch);
        p.lr[2] = detail::crop(lr_mr.vz, c, cfg.lr_patch);
        p.lr[3] = detail::crop(lr_mr.mag, c, cfg.lr_patch);
        p.lr[4] = detail::crop(lr_mr.mask, c, cfg.lr_patch);
        const Int3 hc{c.x * cfg.factor, c.y * cfg.factor, c.z * cfg.factor};
        const int hs = cfg.lr_patch * cfg.factor;
        p.hr[0] = detail::crop(hr_mr.vx, hc, hs);
        p.hr[1] = detail::crop(hr_mr.vy, hc, hs);
        p.hr[2] = detail::crop(hr_mr.vz, hc, hs);
        p.hr[3] = detail::crop(hr_mr.mask, hc, hs);
        writer.write(p);
        ++geom_patches;
        if (cfg.rotate_duplicates) {
          const int rot = 1 + rng.uniform_int(23);  // exclude identity
          writer.write(rotate_pair(p, rot));
          ++geom_patches;
        }
      }
    }
    stats.per_geometry.emplace_back(geom.id, geom_patches);
    stats.patches += geom_patches;
  }
  writer.close();
  write_dataset_index(out_path + ".json", stats, cfg);
  return stats;
}

}  // namespace vfsr
