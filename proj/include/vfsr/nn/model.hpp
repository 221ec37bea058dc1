#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "vfsr/core.hpp"
#include "vfsr/nn/ops.hpp"

namespace vfsr::nn {

enum class BlockVariant : std::uint32_t { Res = 0, Dense = 1, Csp = 2 };

inline const char* variant_name(BlockVariant v) {
  switch (v) {
    case BlockVariant::Res: return "res";
    case BlockVariant::Dense: return "dense";
    case BlockVariant::Csp: return "csp";
  }
  return "?";
}

inline BlockVariant variant_from_name(const std::string& s) {
  if (s == "res") return BlockVariant::Res;
  if (s == "dense") return BlockVariant::Dense;
  if (s == "csp") return BlockVariant::Csp;
  throw std::invalid_argument("unknown variant: " + s);
}

/// Architecture hyperparameters. Defaults follow the 4x super-resolution
/// setup: 12 blocks around a central upsampling stage, 64-channel trunk,
/// growth rate a quarter of the channels.
struct ModelSpec {
  BlockVariant variant = BlockVariant::Res;
  int lr_blocks = 8;
  int hr_blocks = 4;
  int channels = 64;
  int growth_rate = 16;
  float csp_split = 0.25f;
  int upsample_factor = 4;
  int in_patch = 12;
  int dense_layers = 4;

  int out_patch() const { return in_patch * upsample_factor; }

  void validate() const {
    if (channels < 4 || lr_blocks < 0 || hr_blocks < 0 || growth_rate < 1 ||
        dense_layers < 1 || upsample_factor < 2 || in_patch < 1)
      throw std::invalid_argument("invalid model spec");
    if (csp_split <= 0 || csp_split >= 1)
      throw std::invalid_argument("csp_split must be in (0, 1)");
    if (int(csp_split * channels) < 1)
      throw std::invalid_argument("csp bypass would be empty");
  }
};

/// Super-resolution network: 4-channel LR input (vx, vy, vz, mag), conv stem,
/// LR-space blocks (denoising), trilinear upsampling plus conv, HR-space
/// blocks (refinement), and three linear heads, one per velocity component.
template <class T>
class Model {
 public:
  explicit Model(const ModelSpec& spec, std::uint64_t init_seed = 1)
      : spec_(spec) {
    spec.validate();
    build(init_seed);
  }

  const ModelSpec& spec() const { return spec_; }

  std::vector<std::pair<std::string, TensorPtr<T>>>& params() { return params_; }
  const std::vector<std::pair<std::string, TensorPtr<T>>>& params() const {
    return params_;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, p] : params_) n += p->size();
    return n;
  }

  TensorPtr<T> param(const std::string& name) const {
    for (auto& [n, p] : params_)
      if (n == name) return p;
    throw std::out_of_range("no such parameter: " + name);
  }

  /// Forward pass on a normalized input (velocities already divided by VENC,
  /// magnitude scaled to order one). Returns the three component heads.
  std::array<TensorPtr<T>, 3> forward(Tape<T>* tape,
                                      const TensorPtr<T>& x) const {
    if (x->c() != 4) throw std::invalid_argument("model: input needs 4 channels");
    auto h = relu(tape, conv(tape, x, "stem"));
    for (int i = 0; i < spec_.lr_blocks; ++i)
      h = block(tape, h, "lr" + std::to_string(i));
    h = upsample_trilinear(tape, h, spec_.upsample_factor);
    h = relu(tape, conv(tape, h, "up"));
    for (int i = 0; i < spec_.hr_blocks; ++i)
      h = block(tape, h, "hr" + std::to_string(i));
    return {conv(tape, h, "head0"), conv(tape, h, "head1"),
            conv(tape, h, "head2")};
  }

 private:
  TensorPtr<T> conv(Tape<T>* tape, const TensorPtr<T>& x,
                    const std::string& name) const {
    return conv3d(tape, x, param(name + ".w"), param(name + ".b"));
  }

  TensorPtr<T> block(Tape<T>* tape, TensorPtr<T> x,
                     const std::string& name) const {
    switch (spec_.variant) {
      case BlockVariant::Res: {
        auto h = relu(tape, conv(tape, x, name + ".c1"));
        return add(tape, x, conv(tape, h, name + ".c2"));
      }
      case BlockVariant::Dense: {
        std::vector<TensorPtr<T>> maps{x};
        for (int l = 0; l < spec_.dense_layers; ++l) {
          auto in = maps.size() == 1 ? maps[0] : concat_channels(tape, maps);
          maps.push_back(
              relu(tape, conv(tape, in, name + ".l" + std::to_string(l))));
        }
        return conv(tape, concat_channels(tape, maps), name + ".tr");
      }
      case BlockVariant::Csp: {
        const int bypass = int(spec_.csp_split * spec_.channels);
        auto part_a = slice_channels(tape, x, 0, bypass);
        auto part_b = slice_channels(tape, x, bypass, spec_.channels - bypass);
        std::vector<TensorPtr<T>> maps{part_b};
        for (int l = 0; l < spec_.dense_layers; ++l) {
          auto in = maps.size() == 1 ? maps[0] : concat_channels(tape, maps);
          maps.push_back(
              relu(tape, conv(tape, in, name + ".l" + std::to_string(l))));
        }
        std::vector<TensorPtr<T>> all{part_a};
        all.insert(all.end(), maps.begin(), maps.end());
        return conv(tape, concat_channels(tape, all), name + ".tr");
      }
    }
    throw std::logic_error("unreachable");
  }

  void add_conv(const std::string& name, int co, int ci, int k, Rng& rng) {
    auto w = make_tensor<T>(co, ci, k, k, k, true);
    const double bound = std::sqrt(6.0 / (double(ci) * k * k * k));
    for (auto& v : w->v) v = T(rng.uniform(-bound, bound));
    auto b = make_tensor<T>(1, co, 1, 1, 1, true);  // zero bias
    params_.emplace_back(name + ".w", w);
    params_.emplace_back(name + ".b", b);
  }

  void add_block(const std::string& name, Rng& rng) {
    const int C = spec_.channels, G = spec_.growth_rate;
    switch (spec_.variant) {
      case BlockVariant::Res:
        add_conv(name + ".c1", C, C, 3, rng);
        add_conv(name + ".c2", C, C, 3, rng);
        break;
      case BlockVariant::Dense: {
        int in = C;
        for (int l = 0; l < spec_.dense_layers; ++l) {
          add_conv(name + ".l" + std::to_string(l), G, in, 3, rng);
          in += G;
        }
        add_conv(name + ".tr", C, in, 1, rng);
        break;
      }
      case BlockVariant::Csp: {
        const int bypass = int(spec_.csp_split * C);
        int in = C - bypass;
        for (int l = 0; l < spec_.dense_layers; ++l) {
          add_conv(name + ".l" + std::to_string(l), G, in, 3, rng);
          in += G;
        }
        add_conv(name + ".tr", C, bypass + in, 1, rng);
        break;
      }
    }
  }

  void build(std::uint64_t init_seed) {
    Rng rng(mix_seed(init_seed, 0x6d6f64656cULL));
    const int C = spec_.channels;
    add_conv("stem", C, 4, 3, rng);
    for (int i = 0; i < spec_.lr_blocks; ++i)
      add_block("lr" + std::to_string(i), rng);
    add_conv("up", C, C, 3, rng);
    for (int i = 0; i < spec_.hr_blocks; ++i)
      add_block("hr" + std::to_string(i), rng);
    add_conv("head0", 1, C, 3, rng);
    add_conv("head1", 1, C, 3, rng);
    add_conv("head2", 1, C, 3, rng);
  }

  ModelSpec spec_;
  std::vector<std::pair<std::string, TensorPtr<T>>> params_;
};

// FWTS weights file: magic "FWTS", u32 version=1, ModelSpec fields, u32
// tensor count, then per tensor a 64-byte ASCII name, u32 rank, u32 dims and
// the f32 data.
inline void write_fwts(const std::string& path, const Model<float>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  auto u32 = [&](std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
  };
  auto f32 = [&](float v) { os.write(reinterpret_cast<const char*>(&v), 4); };
  const ModelSpec& s = model.spec();
  os.write("FWTS", 4);
  u32(1);
  u32(std::uint32_t(s.variant));
  u32(std::uint32_t(s.lr_blocks));
  u32(std::uint32_t(s.hr_blocks));
  u32(std::uint32_t(s.channels));
  u32(std::uint32_t(s.growth_rate));
  f32(s.csp_split);
  u32(std::uint32_t(s.upsample_factor));
  u32(std::uint32_t(s.in_patch));
  u32(std::uint32_t(s.dense_layers));
  u32(std::uint32_t(model.params().size()));
  for (auto& [name, p] : model.params()) {
    if (name.size() > 63) throw std::runtime_error("FWTS name too long");
    char buf[64] = {};
    std::memcpy(buf, name.data(), name.size());
    os.write(buf, 64);
    u32(5);
    for (int d : p->shape) u32(std::uint32_t(d));
    os.write(reinterpret_cast<const char*>(p->v.data()),
             std::streamsize(p->size() * 4));
  }
  if (!os) throw std::runtime_error("FWTS write failed: " + path);
}

inline Model<float> read_fwts(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  auto u32 = [&]() {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto f32 = [&]() {
    float v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, "FWTS", 4) != 0)
    throw std::runtime_error("not an FWTS file: " + path);
  if (u32() != 1) throw std::runtime_error("unsupported FWTS version");
  ModelSpec s;
  s.variant = BlockVariant(u32());
  s.lr_blocks = int(u32());
  s.hr_blocks = int(u32());
  s.channels = int(u32());
  s.growth_rate = int(u32());
  s.csp_split = f32();
  s.upsample_factor = int(u32());
  s.in_patch = int(u32());
  s.dense_layers = int(u32());
  Model<float> model(s);
  const std::uint32_t count = u32();
  if (count != model.params().size())
    throw std::runtime_error("FWTS tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    char buf[65] = {};
    is.read(buf, 64);
    if (u32() != 5) throw std::runtime_error("FWTS bad tensor rank");
    auto p = model.param(buf);
    for (int d : p->shape)
      if (u32() != std::uint32_t(d))
        throw std::runtime_error(std::string("FWTS dim mismatch: ") + buf);
    is.read(reinterpret_cast<char*>(p->v.data()),
            std::streamsize(p->size() * 4));
  }
  if (!is) throw std::runtime_error("truncated FWTS file");
  return model;
}

}  // namespace vfsr::nn
