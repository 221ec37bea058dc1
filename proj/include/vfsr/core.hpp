#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vfsr {

struct Int3 {
  int x = 0, y = 0, z = 0;
  friend bool operator==(const Int3&, const Int3&) = default;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
};

/// Dense 3-D grid, C-order with x fastest.
template <class T>
struct Grid3 {
  Int3 dims{};
  std::vector<T> data;

  Grid3() = default;
  Grid3(Int3 d, T fill = T{})
      : dims(d), data(std::size_t(d.x) * d.y * d.z, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t idx(int x, int y, int z) const {
    return (std::size_t(z) * dims.y + y) * dims.x + x;
  }
  T& at(int x, int y, int z) { return data[idx(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data[idx(x, y, z)]; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims.x && y >= 0 && y < dims.y && z >= 0 && z < dims.z;
  }
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Order-sensitive seed combiner for per-item RNG streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2));
  splitmix64(s);
  return splitmix64(s);
}

/// Deterministic RNG with a fixed cross-platform algorithm (splitmix64 core,
/// Box-Muller normals). Same seed gives bit-identical streams on any build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x106689d45497fdb5ULL) {
    splitmix64(state_);
  }

  std::uint64_t next() { return splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) { return int(next() % std::uint64_t(n)); }

  /// Standard normal (Box-Muller, pair cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0;
  bool has_cached_ = false;
};

}  // namespace vfsr
