#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "vfsr/volume.hpp"

namespace vfsr {

/// Scattered CFD samples: positions in mm, velocities in m/s. vel may be
/// empty when only a fluid mask is needed.
struct ScatteredPoints {
  std::vector<Vec3> pos;
  std::vector<Vec3> vel;
};

/// Uniform-cell spatial hash for k-nearest-neighbour queries.
class PointIndex {
 public:
  PointIndex(const std::vector<Vec3>& pts, double cell_size)
      : pts_(pts), cell_(cell_size) {
    if (pts.empty()) throw std::invalid_argument("PointIndex: empty point set");
    if (cell_ <= 0) throw std::invalid_argument("PointIndex: bad cell size");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec3& p = pts[i];
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
        throw std::invalid_argument("PointIndex: non-finite point");
      const int x = cx(p.x), y = cx(p.y), z = cx(p.z);
      if (i == 0) {
        clo_ = {x, y, z};
        chi_ = {x, y, z};
      } else {
        clo_ = {std::min(clo_.x, x), std::min(clo_.y, y), std::min(clo_.z, z)};
        chi_ = {std::max(chi_.x, x), std::max(chi_.y, y), std::max(chi_.z, z)};
      }
      cells_[key(x, y, z)].push_back(int(i));
    }
  }

  /// k nearest points to q; returns (squared distance, index) sorted by
  /// distance. Fewer than k only if the cloud is smaller than k.
  std::vector<std::pair<double, int>> knn(const Vec3& q, int k) const {
    std::priority_queue<std::pair<double, int>> best;  // max-heap of k best
    const int qx = cx(q.x), qy = cx(q.y), qz = cx(q.z);
    // Rings out to here cover every occupied cell.
    const int rmax = std::max({std::abs(qx - clo_.x), std::abs(qx - chi_.x),
                               std::abs(qy - clo_.y), std::abs(qy - chi_.y),
                               std::abs(qz - clo_.z), std::abs(qz - chi_.z)});
    for (int ring = 0; ring <= rmax; ++ring) {
      // Once k found, stop when no point in this ring can beat the
      // current k-th distance.
      if (ring > 0 && int(best.size()) >= k) {
        const double ring_min = double(ring - 1) * cell_;
        if (ring_min * ring_min > best.top().first) break;
      }
      scan_ring(qx, qy, qz, ring, q, k, best);
    }
    std::vector<std::pair<double, int>> out;
    out.resize(best.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = best.top();
      best.pop();
    }
    return out;
  }

  std::size_t size() const { return pts_.size(); }

 private:
  int cx(double v) const { return int(std::floor(v / cell_)); }
  static std::int64_t key(int x, int y, int z) {
    return (std::int64_t(x) & 0x1fffff) | ((std::int64_t(y) & 0x1fffff) << 21) |
           ((std::int64_t(z) & 0x1fffff) << 42);
  }
  void scan_ring(int qx, int qy, int qz, int ring, const Vec3& q, int k,
                 std::priority_queue<std::pair<double, int>>& best) const {
    auto visit = [&](int x, int y, int z) {
      auto it = cells_.find(key(x, y, z));
      if (it == cells_.end()) return;
      for (int i : it->second) {
        const Vec3 d = pts_[i] - q;
        const double d2 = d.dot(d);
        if (int(best.size()) < k) best.emplace(d2, i);
        else if (d2 < best.top().first) {
          best.pop();
          best.emplace(d2, i);
        }
      }
    };
    if (ring == 0) {
      visit(qx, qy, qz);
      return;
    }
    for (int z = qz - ring; z <= qz + ring; ++z)
      for (int y = qy - ring; y <= qy + ring; ++y)
        for (int x = qx - ring; x <= qx + ring; ++x) {
          const int d = std::max({std::abs(x - qx), std::abs(y - qy),
                                  std::abs(z - qz)});
          if (d == ring) visit(x, y, z);
        }
  }

  const std::vector<Vec3>& pts_;
  double cell_;
  Int3 clo_{}, chi_{};
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

/// Fluid mask by k-NN distance gating: a voxel is fluid iff its k-th nearest
/// fluid point lies within d_max (default 1.5 * spacing).
inline Grid3<float> knn_mask(const std::vector<Vec3>& fluid_points, Int3 dims,
                             double spacing, Vec3 origin, int k = 5,
                             double d_max = -1) {
  if (fluid_points.empty()) throw std::invalid_argument("knn_mask: no points");
  if (k < 1) throw std::invalid_argument("knn_mask: k must be >= 1");
  if (d_max <= 0) d_max = 1.5 * spacing;
  PointIndex index(fluid_points, d_max);
  Grid3<float> mask(dims);
  const double d2max = d_max * d_max;
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x) {
        const Vec3 p{origin.x + (x + 0.5) * spacing,
                     origin.y + (y + 0.5) * spacing,
                     origin.z + (z + 0.5) * spacing};
        auto nb = index.knn(p, k);
        if (int(nb.size()) >= k && nb.back().first <= d2max)
          mask.at(x, y, z) = 1.0f;
      }
  return mask;
}

struct IngestOptions {
  int k = 8;          // IDW neighbours
  int mask_k = 5;     // k-NN mask neighbours
  double d_max = -1;  // mask gate, default 1.5 * spacing
  double snap_dist = 1e-9;
};

/// Rasterizes a scattered point cloud onto a uniform grid with
/// inverse-distance-weighted (power 2) averaging of the k nearest samples.
/// A voxel coinciding with a data point takes that point's value exactly.
inline FlowVolume ingest_points(const ScatteredPoints& pts, double spacing,
                                const IngestOptions& opt = {}) {
  if (pts.pos.empty()) throw std::invalid_argument("ingest_points: empty cloud");
  if (pts.vel.size() != pts.pos.size())
    throw std::invalid_argument("ingest_points: pos/vel size mismatch");
  if (int(pts.pos.size()) < opt.k)
    throw std::invalid_argument("ingest_points: fewer points than k");
  for (const Vec3& v : pts.vel)
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
      throw std::invalid_argument("ingest_points: non-finite velocity");

  Vec3 lo = pts.pos[0], hi = pts.pos[0];
  for (const Vec3& p : pts.pos) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  // Half-voxel margin: the first voxel center lands on the data bounding
  // box corner, so grid-sampled clouds reconstruct center-aligned.
  const double m = 0.5 * spacing;
  Int3 dims{int(std::ceil((hi.x - lo.x + 2 * m) / spacing)),
            int(std::ceil((hi.y - lo.y + 2 * m) / spacing)),
            int(std::ceil((hi.z - lo.z + 2 * m) / spacing))};
  dims = {std::max(dims.x, 1), std::max(dims.y, 1), std::max(dims.z, 1)};
  Vec3 origin{lo.x - m, lo.y - m, lo.z - m};

  FlowVolume out(dims, spacing, origin);
  out.mask = knn_mask(pts.pos, dims, spacing, origin, opt.mask_k, opt.d_max);

  PointIndex index(pts.pos, spacing);
  const double snap2 = opt.snap_dist * opt.snap_dist;
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x) {
        const std::size_t i = out.mask.idx(x, y, z);
        if (out.mask.data[i] == 0.0f) continue;
        const Vec3 p{origin.x + (x + 0.5) * spacing,
                     origin.y + (y + 0.5) * spacing,
                     origin.z + (z + 0.5) * spacing};
        auto nb = index.knn(p, opt.k);
        Vec3 acc{};
        double wsum = 0;
        bool snapped = false;
        for (auto [d2, j] : nb) {
          if (d2 <= snap2) {
            acc = pts.vel[j];
            snapped = true;
            break;
          }
          const double w = 1.0 / d2;
          acc = acc + pts.vel[j] * w;
          wsum += w;
        }
        const Vec3 v = snapped ? acc : acc * (1.0 / wsum);
        out.vx.data[i] = float(v.x);
        out.vy.data[i] = float(v.y);
        out.vz.data[i] = float(v.z);
      }
  return out;
}

}  // namespace vfsr
