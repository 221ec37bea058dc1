#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "vfsr/dataset.hpp"
#include "vfsr/nn/train.hpp"

namespace vfsr {

/// One patch of the stitching plan. `corner` is the LR-space patch corner;
/// `keep_lo`/`keep_hi` bound the half-open HR-space box written from this
/// patch's prediction (absolute HR coordinates).
struct PatchPlacement {
  Int3 corner{};
  Int3 keep_lo{};
  Int3 keep_hi{};
};

struct StitchPlan {
  int lr_patch = 12;
  int lr_stride = 8;
  int factor = 4;
  std::vector<PatchPlacement> patches;
};

/// Exact-cover patch plan: corners at 0, stride, 2*stride, ... with the last
/// corner clamped to dim - patch. Interior patches keep their central HR
/// region (stride*factor wide, starting factor*corner + margin where margin
/// strips (patch-stride)/2 LR voxels' worth per side); boundary patches keep
/// their outer margins. Every HR voxel is covered exactly once.
inline StitchPlan plan_patches(Int3 lr_dims, int lr_patch = 12,
                               int lr_stride = 8, int factor = 4) {
  if (lr_dims.x < lr_patch || lr_dims.y < lr_patch || lr_dims.z < lr_patch)
    throw std::invalid_argument("plan_patches: volume smaller than patch");
  if (lr_stride < 1 || lr_stride > lr_patch)
    throw std::invalid_argument("plan_patches: invalid stride");
  // HR margin in voxels stripped from the leading side of interior patches.
  const int margin = (lr_patch - lr_stride) / 2 * factor;

  auto axis_corners = [&](int dim) {
    std::vector<int> cs;
    for (int c = 0;; c += lr_stride) {
      if (c + lr_patch >= dim) {
        cs.push_back(dim - lr_patch);
        break;
      }
      cs.push_back(c);
    }
    return cs;
  };
  const std::array<std::vector<int>, 3> corners = {
      axis_corners(lr_dims.x), axis_corners(lr_dims.y), axis_corners(lr_dims.z)};

  // Kept interval per axis: boundaries at factor*corner + margin, with the
  // volume faces absorbed by the first/last patch.
  auto axis_bounds = [&](const std::vector<int>& cs, int dim) {
    std::vector<std::array<int, 2>> b(cs.size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
      b[i][0] = i == 0 ? 0 : factor * cs[i] + margin;
      b[i][1] = i + 1 == cs.size() ? factor * dim : factor * cs[i + 1] + margin;
    }
    return b;
  };
  const std::array<std::vector<std::array<int, 2>>, 3> bounds = {
      axis_bounds(corners[0], lr_dims.x), axis_bounds(corners[1], lr_dims.y),
      axis_bounds(corners[2], lr_dims.z)};

  StitchPlan plan;
  plan.lr_patch = lr_patch;
  plan.lr_stride = lr_stride;
  plan.factor = factor;
  for (std::size_t k = 0; k < corners[2].size(); ++k)
    for (std::size_t j = 0; j < corners[1].size(); ++j)
      for (std::size_t i = 0; i < corners[0].size(); ++i) {
        PatchPlacement p;
        p.corner = {corners[0][i], corners[1][j], corners[2][k]};
        p.keep_lo = {bounds[0][i][0], bounds[1][j][0], bounds[2][k][0]};
        p.keep_hi = {bounds[0][i][1], bounds[1][j][1], bounds[2][k][1]};
        plan.patches.push_back(p);
      }
  return plan;
}

/// Per-HR-voxel write counts under a plan (1 everywhere iff exact cover).
inline Grid3<float> coverage_map(const StitchPlan& plan, Int3 lr_dims) {
  Grid3<float> count({lr_dims.x * plan.factor, lr_dims.y * plan.factor,
                      lr_dims.z * plan.factor});
  for (const PatchPlacement& p : plan.patches)
    for (int z = p.keep_lo.z; z < p.keep_hi.z; ++z)
      for (int y = p.keep_lo.y; y < p.keep_hi.y; ++y)
        for (int x = p.keep_lo.x; x < p.keep_hi.x; ++x)
          count.at(x, y, z) += 1.0f;
  return count;
}

/// Maps an LR patch (vx, vy, vz, mag, mask grids, m/s) to its HR velocity
/// prediction (3 grids, factor^3 times the voxels). VENC is passed for
/// predictors that normalize by it.
using PatchPredictor = std::function<std::array<Grid3<float>, 3>(
    const std::array<Grid3<float>, 5>&, const std::array<float, 3>&)>;

/// Trilinear upsampling of a single scalar grid (align-corners=false).
inline Grid3<float> upsample_grid(const Grid3<float>& g, int factor) {
  auto t = nn::make_tensor<float>(1, 1, g.dims.z, g.dims.y, g.dims.x);
  std::copy(g.data.begin(), g.data.end(), t->v.begin());
  auto u = nn::upsample_trilinear<float>(nullptr, t, factor);
  Grid3<float> out({g.dims.x * factor, g.dims.y * factor, g.dims.z * factor});
  std::copy(u->v.begin(), u->v.end(), out.data.begin());
  return out;
}

/// Nearest-neighbor (block replication) upsampling, used for masks.
inline Grid3<float> upsample_grid_nn(const Grid3<float>& g, int factor) {
  Grid3<float> out({g.dims.x * factor, g.dims.y * factor, g.dims.z * factor});
  for (int z = 0; z < out.dims.z; ++z)
    for (int y = 0; y < out.dims.y; ++y)
      for (int x = 0; x < out.dims.x; ++x)
        out.at(x, y, z) = g.at(x / factor, y / factor, z / factor);
  return out;
}

/// Model-free baseline / stub predictor: trilinear upsampling of the three
/// velocity channels.
inline PatchPredictor trilinear_predictor(int factor = 4) {
  return [factor](const std::array<Grid3<float>, 5>& lr,
                  const std::array<float, 3>&) {
    return std::array<Grid3<float>, 3>{upsample_grid(lr[0], factor),
                                       upsample_grid(lr[1], factor),
                                       upsample_grid(lr[2], factor)};
  };
}

/// Network predictor: normalizes the patch, runs the model, rescales heads
/// to m/s by the acquisition VENC.
inline PatchPredictor model_predictor(const nn::Model<float>& model,
                                      double mag_scale = 1.0 / 240.0) {
  return [&model, mag_scale](const std::array<Grid3<float>, 5>& lr,
                             const std::array<float, 3>& venc) {
    PatchPair p;
    for (int i = 0; i < 5; ++i) p.lr[std::size_t(i)] = lr[std::size_t(i)];
    p.venc = venc;
    const int hs = lr[0].dims.x * model.spec().upsample_factor;
    for (int i = 0; i < 4; ++i) p.hr[std::size_t(i)] = Grid3<float>({hs, hs, hs});
    std::vector<PatchPair> batch{p};
    auto heads = nn::forward_physical(model, nullptr, batch, mag_scale);
    std::array<Grid3<float>, 3> out;
    for (int c = 0; c < 3; ++c) {
      out[std::size_t(c)] = Grid3<float>({hs, hs, hs});
      std::copy(heads[std::size_t(c)]->v.begin(), heads[std::size_t(c)]->v.end(),
                out[std::size_t(c)].data.begin());
    }
    return out;
  };
}

/// Patch-based super-resolution of a full LR volume with exact-cover
/// stitching. The SR mask is the nearest-neighbor upsampled LR mask.
inline FlowVolume predict_volume(const MRVolume& lr,
                                 const PatchPredictor& predictor,
                                 const StitchPlan& plan) {
  const int f = plan.factor;
  const double hsp = lr.spacing / f;
  const double shift = -lr.spacing / 2 + hsp / 2;
  // HR grid centers cover the same physical extent as the LR grid.
  FlowVolume sr({lr.dims.x * f, lr.dims.y * f, lr.dims.z * f}, hsp,
                {lr.origin.x + shift, lr.origin.y + shift, lr.origin.z + shift});
  sr.mask = upsample_grid_nn(lr.mask, f);

  const std::array<float, 3> venc = {float(lr.venc[0]), float(lr.venc[1]),
                                     float(lr.venc[2])};
  for (const PatchPlacement& p : plan.patches) {
    std::array<Grid3<float>, 5> in = {
        detail::crop(lr.vx, p.corner, plan.lr_patch),
        detail::crop(lr.vy, p.corner, plan.lr_patch),
        detail::crop(lr.vz, p.corner, plan.lr_patch),
        detail::crop(lr.mag, p.corner, plan.lr_patch),
        detail::crop(lr.mask, p.corner, plan.lr_patch)};
    const auto pred = predictor(in, venc);
    Grid3<float>* dst[3] = {&sr.vx, &sr.vy, &sr.vz};
    for (int c = 0; c < 3; ++c) {
      const Grid3<float>& src = pred[std::size_t(c)];
      for (int z = p.keep_lo.z; z < p.keep_hi.z; ++z)
        for (int y = p.keep_lo.y; y < p.keep_hi.y; ++y)
          for (int x = p.keep_lo.x; x < p.keep_hi.x; ++x)
            dst[c]->at(x, y, z) = src.at(x - p.corner.x * f,
                                         y - p.corner.y * f,
                                         z - p.corner.z * f);
    }
  }
  return sr;
}

/// Whole-volume trilinear baseline (no patching), same output geometry as
/// predict_volume.
inline FlowVolume upsample_volume(const MRVolume& lr, int factor = 4) {
  const double hsp = lr.spacing / factor;
  const double shift = -lr.spacing / 2 + hsp / 2;
  FlowVolume sr({lr.dims.x * factor, lr.dims.y * factor, lr.dims.z * factor},
                hsp,
                {lr.origin.x + shift, lr.origin.y + shift, lr.origin.z + shift});
  sr.vx = upsample_grid(lr.vx, factor);
  sr.vy = upsample_grid(lr.vy, factor);
  sr.vz = upsample_grid(lr.vz, factor);
  sr.mask = upsample_grid_nn(lr.mask, factor);
  return sr;
}

}  // namespace vfsr
