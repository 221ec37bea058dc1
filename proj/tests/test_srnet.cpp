/// Autograd engine tests: finite-difference gradient checks in double
/// precision for every op and for tiny end-to-end models, brute-force value
/// oracles for conv3d and trilinear upsampling, Adam against a scalar
/// reference, parameter-count closed forms, and training-loop behaviour.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "doctest.h"
#include "vfsr/dataset.hpp"
#include "vfsr/nn/model.hpp"
#include "vfsr/nn/ops.hpp"
#include "vfsr/nn/train.hpp"

using namespace vfsr;
using namespace vfsr::nn;
namespace fs = std::filesystem;

namespace {

using DT = TensorPtr<double>;

DT rand_tensor(int n, int c, int d, int h, int w, Rng& rng,
               bool tracked = true, double lo = -1, double hi = 1) {
  auto t = make_tensor<double>(n, c, d, h, w, tracked);
  for (auto& v : t->v) v = rng.uniform(lo, hi);
  return t;
}

/// Test-local scalarizer: fixed-weight sum with its own adjoint, so any op
/// output can be reduced to a checkable scalar loss.
DT wsum(Tape<double>* tape, const DT& x, const std::vector<double>& w) {
  REQUIRE(w.size() == x->size());
  auto y = make_tensor<double>(1, 1, 1, 1, 1, tape && x->tracked);
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x->v[i];
  y->v[0] = s;
  if (y->tracked)
    tape->push([=]() {
      for (std::size_t i = 0; i < w.size(); ++i) x->g[i] += w[i] * y->g[0];
    });
  return y;
}

std::vector<double> rand_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.uniform(-1, 1);
  return w;
}

/// Central-difference gradient check: analytic tape gradients of the scalar
/// forward() against (f(x+h) - f(x-h)) / 2h at sampled coordinates.
void grad_check(const std::vector<DT>& inputs,
                const std::function<DT(Tape<double>*)>& forward,
                double tol = 1e-6, int samples_per_input = 24) {
  Tape<double> tape;
  for (const DT& in : inputs) in->zero_grad();
  auto loss = forward(&tape);
  REQUIRE(loss->tracked);
  tape.backward(loss);

  Rng rng(0xfd);
  const double h = 1e-5;
  for (const DT& in : inputs) {
    const int n_coord =
        std::min<int>(samples_per_input, int(in->size()));
    for (int s = 0; s < n_coord; ++s) {
      const std::size_t i = std::size_t(rng.uniform_int(int(in->size())));
      const double v0 = in->v[i];
      in->v[i] = v0 + h;
      const double fp = forward(nullptr)->v[0];
      in->v[i] = v0 - h;
      const double fm = forward(nullptr)->v[0];
      in->v[i] = v0;
      const double num = (fp - fm) / (2 * h);
      const double ana = in->g[i];
      CHECK(std::abs(num - ana) <=
            tol * std::max({1.0, std::abs(num), std::abs(ana)}));
    }
  }
}

}  // namespace

TEST_CASE("conv3d k=3: value matches brute-force convolution") {
  Rng rng(1);
  auto x = rand_tensor(2, 3, 4, 5, 6, rng, false);
  auto w = rand_tensor(4, 3, 3, 3, 3, rng, false);
  auto b = rand_tensor(1, 4, 1, 1, 1, rng, false);
  auto y = conv3d<double>(nullptr, x, w, b);
  REQUIRE(y->shape == std::array<int, 5>{2, 4, 4, 5, 6});

  const int D = 4, H = 5, W = 6;
  auto xat = [&](int n, int c, int z, int yy, int xx) -> double {
    if (z < 0 || z >= D || yy < 0 || yy >= H || xx < 0 || xx >= W) return 0;
    return x->v[(((std::size_t(n) * 3 + c) * D + z) * H + yy) * W + xx];
  };
  Rng pick(2);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = pick.uniform_int(2), co = pick.uniform_int(4),
              z = pick.uniform_int(D), yy = pick.uniform_int(H),
              xx = pick.uniform_int(W);
    double acc = b->v[std::size_t(co)];
    for (int ci = 0; ci < 3; ++ci)
      for (int kz = 0; kz < 3; ++kz)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx)
            acc += w->v[((((std::size_t(co) * 3 + ci) * 3 + kz) * 3 + ky) * 3 +
                         kx)] *
                   xat(n, ci, z + kz - 1, yy + ky - 1, xx + kx - 1);
    const double got =
        y->v[(((std::size_t(n) * 4 + co) * D + z) * H + yy) * W + xx];
    CHECK(got == doctest::Approx(acc).epsilon(1e-12));
  }
}

TEST_CASE("conv3d k=1: equals a per-voxel channel matmul") {
  Rng rng(3);
  auto x = rand_tensor(1, 4, 3, 3, 3, rng, false);
  auto w = rand_tensor(2, 4, 1, 1, 1, rng, false);
  auto b = rand_tensor(1, 2, 1, 1, 1, rng, false);
  auto y = conv3d<double>(nullptr, x, w, b);
  const std::size_t V = 27;
  for (int co = 0; co < 2; ++co)
    for (std::size_t i = 0; i < V; ++i) {
      double acc = b->v[std::size_t(co)];
      for (int ci = 0; ci < 4; ++ci)
        acc += w->v[std::size_t(co) * 4 + ci] * x->v[std::size_t(ci) * V + i];
      CHECK(y->v[std::size_t(co) * V + i] ==
            doctest::Approx(acc).epsilon(1e-12));
    }
  // shape validation
  auto w5 = rand_tensor(2, 4, 5, 5, 5, rng, false);
  CHECK_THROWS_AS((void)conv3d<double>(nullptr, x, w5, b),
                  std::invalid_argument);
  auto wbadc = rand_tensor(2, 3, 3, 3, 3, rng, false);
  CHECK_THROWS_AS((void)conv3d<double>(nullptr, x, wbadc, b),
                  std::invalid_argument);
}

TEST_CASE("conv3d k=3: gradient check for x, w, b") {
  Rng rng(10);
  auto x = rand_tensor(2, 3, 4, 4, 4, rng);
  auto w = rand_tensor(2, 3, 3, 3, 3, rng);
  auto b = rand_tensor(1, 2, 1, 1, 1, rng);
  const auto ws = rand_weights(2 * 2 * 4 * 4 * 4, rng);
  grad_check({x, w, b}, [&](Tape<double>* t) {
    return wsum(t, conv3d<double>(t, x, w, b), ws);
  });
}

TEST_CASE("conv3d k=1: gradient check") {
  Rng rng(11);
  auto x = rand_tensor(1, 5, 3, 3, 3, rng);
  auto w = rand_tensor(3, 5, 1, 1, 1, rng);
  auto b = rand_tensor(1, 3, 1, 1, 1, rng);
  const auto ws = rand_weights(3 * 27, rng);
  grad_check({x, w, b}, [&](Tape<double>* t) {
    return wsum(t, conv3d<double>(t, x, w, b), ws);
  });
}

TEST_CASE("relu: values and gradient away from the kink") {
  Rng rng(12);
  auto x = rand_tensor(1, 2, 3, 3, 3, rng);
  for (auto& v : x->v)  // keep |x| > 0.05 so h=1e-5 cannot cross zero
    v = (v >= 0 ? 1 : -1) * (0.05 + std::abs(v));
  auto y = relu<double>(nullptr, x);
  for (std::size_t i = 0; i < x->size(); ++i)
    CHECK(y->v[i] == (x->v[i] > 0 ? x->v[i] : 0.0));
  const auto ws = rand_weights(x->size(), rng);
  grad_check({x}, [&](Tape<double>* t) {
    return wsum(t, relu<double>(t, x), ws);
  });
}

TEST_CASE("add / concat_channels / slice_channels: gradient checks") {
  Rng rng(13);
  auto a = rand_tensor(2, 3, 2, 2, 2, rng);
  auto b = rand_tensor(2, 3, 2, 2, 2, rng);
  const auto ws = rand_weights(a->size(), rng);
  grad_check({a, b}, [&](Tape<double>* t) {
    return wsum(t, add<double>(t, a, b), ws);
  });
  auto bad = rand_tensor(2, 4, 2, 2, 2, rng);
  CHECK_THROWS_AS((void)add<double>(nullptr, a, bad), std::invalid_argument);

  auto c = rand_tensor(2, 2, 2, 2, 2, rng);
  const auto wc = rand_weights((3 + 3 + 2) * 2 * 8, rng);
  grad_check({a, b, c}, [&](Tape<double>* t) {
    return wsum(t, concat_channels<double>(t, {a, b, c}), wc);
  });
  auto y = concat_channels<double>(nullptr, {a, b, c});
  CHECK(y->shape == std::array<int, 5>{2, 8, 2, 2, 2});
  // channel layout: a then b then c, per sample
  CHECK(y->v[0] == a->v[0]);
  CHECK(y->v[3 * 8] == b->v[0]);
  CHECK(y->v[6 * 8] == c->v[0]);

  const auto wsl = rand_weights(2 * 2 * 8, rng);
  grad_check({a}, [&](Tape<double>* t) {
    return wsum(t, slice_channels<double>(t, a, 1, 2), wsl);
  });
  auto s = slice_channels<double>(nullptr, a, 1, 2);
  CHECK(s->shape == std::array<int, 5>{2, 2, 2, 2, 2});
  CHECK(s->v[0] == a->v[8]);  // channel 1 of sample 0
  CHECK_THROWS_AS((void)slice_channels<double>(nullptr, a, 2, 2),
                  std::invalid_argument);
}

TEST_CASE("upsample_trilinear: constants, ramps, and the half-voxel "
          "alignment") {
  auto x = make_tensor<double>(1, 1, 2, 2, 2, false);
  std::fill(x->v.begin(), x->v.end(), 3.5);
  auto y = upsample_trilinear<double>(nullptr, x, 4);
  REQUIRE(y->shape == std::array<int, 5>{1, 1, 8, 8, 8});
  for (double v : y->v) CHECK(v == doctest::Approx(3.5).epsilon(1e-12));

  // 1-D ramp along width: align-corners=false maps output i to input
  // (i + 0.5) / f - 0.5, clamped at the edges
  auto r = make_tensor<double>(1, 1, 1, 1, 4, false);
  r->v = {0, 1, 2, 3};
  auto ry = upsample_trilinear<double>(nullptr, r, 2);
  const std::vector<double> expect = {0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3};
  for (int i = 0; i < 8; ++i)
    CHECK(ry->v[std::size_t(i)] == doctest::Approx(expect[std::size_t(i)]));

  CHECK_THROWS_AS((void)upsample_trilinear<double>(nullptr, r, 1),
                  std::invalid_argument);
}

TEST_CASE("upsample_trilinear: gradient check") {
  Rng rng(14);
  auto x = rand_tensor(2, 2, 3, 3, 3, rng);
  const auto ws = rand_weights(2 * 2 * 6 * 6 * 6, rng);
  grad_check({x}, [&](Tape<double>* t) {
    return wsum(t, upsample_trilinear<double>(t, x, 2), ws);
  });
}

TEST_CASE("scale_per_sample: values and gradient") {
  Rng rng(15);
  auto x = rand_tensor(3, 2, 2, 2, 2, rng);
  const std::vector<double> scale = {0.5, -2.0, 3.0};
  auto y = scale_per_sample<double>(nullptr, x, scale);
  for (int n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < 16; ++i)
      CHECK(y->v[std::size_t(n) * 16 + i] ==
            doctest::Approx(scale[std::size_t(n)] * x->v[std::size_t(n) * 16 + i]));
  const auto ws = rand_weights(x->size(), rng);
  grad_check({x}, [&](Tape<double>* t) {
    return wsum(t, scale_per_sample<double>(t, x, scale), ws);
  });
  CHECK_THROWS_AS((void)scale_per_sample<double>(nullptr, x, {1.0}),
                  std::invalid_argument);
}

TEST_CASE("loss_mse_split: hand value and gradient") {
  // two voxels, one fluid one not: loss = sum_c e_f^2 + sum_c e_n^2
  std::array<DT, 3> pred;
  std::array<std::vector<double>, 3> truth;
  for (int c = 0; c < 3; ++c) {
    pred[std::size_t(c)] = make_tensor<double>(1, 1, 1, 1, 2, true);
    pred[std::size_t(c)]->v = {0.1 * (c + 1), -0.2 * (c + 1)};
    truth[std::size_t(c)] = {0.05 * (c + 1), 0.0};
  }
  const std::vector<double> mask = {1.0, 0.0};
  auto loss = [&](Tape<double>* t) {
    return loss_mse_split<double>(t, pred, truth, mask);
  };
  double fluid = 0, nonf = 0;
  for (int c = 0; c < 3; ++c) {
    fluid += std::pow(0.1 * (c + 1) - 0.05 * (c + 1), 2);
    nonf += std::pow(-0.2 * (c + 1), 2);
  }
  CHECK(loss(nullptr)->v[0] == doctest::Approx(fluid + nonf).epsilon(1e-12));
  grad_check({pred[0], pred[1], pred[2]}, loss);

  // all-fluid mask: non-fluid term drops out
  const std::vector<double> all_fluid = {1.0, 1.0};
  auto l2 = loss_mse_split<double>(nullptr, pred, truth, all_fluid);
  double mean = 0;
  for (int c = 0; c < 3; ++c)
    mean += (std::pow(0.05 * (c + 1), 2) + std::pow(-0.2 * (c + 1), 2)) / 2;
  CHECK(l2->v[0] == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("tiny models: end-to-end gradient check for all three variants") {
  for (BlockVariant variant :
       {BlockVariant::Res, BlockVariant::Dense, BlockVariant::Csp}) {
    CAPTURE(variant_name(variant));
    ModelSpec spec;
    spec.variant = variant;
    spec.channels = 8;
    spec.lr_blocks = 1;
    spec.hr_blocks = 1;
    spec.growth_rate = 4;
    spec.dense_layers = 2;
    spec.upsample_factor = 2;
    spec.in_patch = 3;
    Model<double> model(spec, 21);

    Rng rng(16);
    auto x = rand_tensor(1, 4, 3, 3, 3, rng, false);
    std::array<std::vector<double>, 3> truth;
    std::vector<double> mask(6 * 6 * 6);
    for (auto& t : truth) t = rand_weights(6 * 6 * 6, rng);
    for (auto& m : mask) m = rng.uniform() < 0.5 ? 1.0 : 0.0;

    auto forward = [&](Tape<double>* t) {
      auto heads = model.forward(t, x);
      return loss_mse_split<double>(t, heads, truth, mask);
    };
    // check a few parameters spread through the network
    std::vector<DT> checked = {model.param("stem.w"), model.param("up.b"),
                               model.param("head1.w")};
    if (variant == BlockVariant::Res)
      checked.push_back(model.param("lr0.c2.w"));
    else
      checked.push_back(model.param("hr0.tr.w"));
    grad_check(checked, forward, 1e-4, 12);
  }
}

TEST_CASE("model: forward shapes and init determinism") {
  ModelSpec spec;
  spec.channels = 8;
  spec.lr_blocks = 1;
  spec.hr_blocks = 1;
  spec.growth_rate = 4;
  Model<float> m(spec, 3);
  auto x = make_tensor<float>(2, 4, 12, 12, 12, false);
  auto heads = m.forward(nullptr, x);
  for (const auto& h : heads)
    CHECK(h->shape == std::array<int, 5>{2, 1, 48, 48, 48});

  auto bad = make_tensor<float>(1, 3, 12, 12, 12, false);
  CHECK_THROWS_AS((void)m.forward(nullptr, bad), std::invalid_argument);

  Model<float> m2(spec, 3), m3(spec, 4);
  CHECK(m2.param("stem.w")->v == m.param("stem.w")->v);
  CHECK(m3.param("stem.w")->v != m.param("stem.w")->v);

  ModelSpec invalid = spec;
  invalid.channels = 2;
  CHECK_THROWS_AS((void)Model<float>(invalid), std::invalid_argument);
  invalid = spec;
  invalid.csp_split = 1.5f;
  CHECK_THROWS_AS((void)Model<float>(invalid), std::invalid_argument);
}

TEST_CASE("parameter counts: closed forms and Res > Dense > CSP ordering") {
  // [DERIVED] default spec (64 ch, 8+4 blocks, growth 16, 4 dense layers):
  //   fixed part (stem + up + 3 heads)            122,819
  //   per block: Res 221,312 / Dense 160,384 / CSP 132,736
  auto count = [](BlockVariant v) {
    ModelSpec s;
    s.variant = v;
    return Model<float>(s).parameter_count();
  };
  const std::size_t res = count(BlockVariant::Res);
  const std::size_t dense = count(BlockVariant::Dense);
  const std::size_t csp = count(BlockVariant::Csp);
  CHECK(res == 122819 + 12 * 221312);    // 2,778,563
  CHECK(dense == 122819 + 12 * 160384);  // 2,047,427
  CHECK(csp == 122819 + 12 * 132736);    // 1,715,651
  CHECK(res > dense);
  CHECK(dense > csp);
}

TEST_CASE("lr_schedule: sqrt-2 decay every 14 epochs") {
  TrainConfig cfg;
  cfg.lr0 = 1e-4;
  CHECK(lr_schedule(0, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(13, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_schedule(14, cfg) ==
        doctest::Approx(1e-4 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(lr_schedule(28, cfg) == doctest::Approx(5e-5).epsilon(1e-12));
  CHECK(lr_schedule(196, cfg) ==
        doctest::Approx(1e-4 / std::pow(std::sqrt(2.0), 14)).epsilon(1e-12));
  CHECK_THROWS_AS((void)lr_schedule(-1, cfg), std::invalid_argument);
}

TEST_CASE("adam_step: matches a scalar reference over three steps") {
  auto p = make_tensor<double>(1, 1, 1, 1, 2, true);
  p->v = {1.0, -2.0};
  std::vector<std::pair<std::string, DT>> params = {{"p", p}};
  TrainConfig cfg;
  AdamState<double> st;
  st.init(params);

  // independent scalar reference
  double rv[2] = {1.0, -2.0}, rm[2] = {0, 0}, rvv[2] = {0, 0};
  const double g[2] = {0.5, -1.0}, lr = 0.1;
  for (int t = 1; t <= 3; ++t) {
    p->g[0] = g[0];
    p->g[1] = g[1];
    adam_step(params, st, lr, cfg);
    for (int i = 0; i < 2; ++i) {
      rm[i] = cfg.beta1 * rm[i] + (1 - cfg.beta1) * g[i];
      rvv[i] = cfg.beta2 * rvv[i] + (1 - cfg.beta2) * g[i] * g[i];
      const double mh = rm[i] / (1 - std::pow(cfg.beta1, t));
      const double vh = rvv[i] / (1 - std::pow(cfg.beta2, t));
      rv[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
      CHECK(p->v[std::size_t(i)] == doctest::Approx(rv[i]).epsilon(1e-12));
    }
  }
  CHECK(st.t == 3);
  // with constant gradients the early update is ~lr * sign(g)
  CHECK(std::abs(p->v[0] - (1.0 - 3 * lr)) < 1e-6);
}

namespace {

PatchPair synth_patch(std::uint64_t seed) {
  Rng rng(seed);
  PatchPair p;
  p.venc = {1.5f, 1.5f, 1.5f};
  p.intensity = 120.0f;
  for (int i = 0; i < 5; ++i) p.lr[i] = Grid3<float>({12, 12, 12});
  for (int i = 0; i < 4; ++i) p.hr[i] = Grid3<float>({48, 48, 48});
  for (int c = 0; c < 3; ++c) {
    for (float& v : p.lr[c].data) v = float(rng.uniform(-1, 1));
    for (float& v : p.hr[c].data) v = float(rng.uniform(-1, 1));
  }
  for (float& v : p.lr[3].data) v = float(rng.uniform(50, 200));
  for (float& v : p.lr[4].data) v = rng.uniform() < 0.5f ? 1.0f : 0.0f;
  for (float& v : p.hr[3].data) v = rng.uniform() < 0.5f ? 1.0f : 0.0f;
  return p;
}

std::string write_synth_fpch(const fs::path& path, int n,
                             std::uint64_t seed) {
  FpchWriter w(path.string());
  for (int i = 0; i < n; ++i) w.write(synth_patch(seed + std::uint64_t(i)));
  w.close();
  return path.string();
}

/// Patch whose HR truth is a constant vector, so even a few optimizer steps
/// must cut the loss by moving the head biases.
PatchPair const_target_patch(std::uint64_t seed) {
  PatchPair p = synth_patch(seed);
  const float target[3] = {0.5f, -0.3f, 0.2f};
  for (int c = 0; c < 3; ++c)
    std::fill(p.hr[c].data.begin(), p.hr[c].data.end(), target[c]);
  return p;
}

std::string write_const_fpch(const fs::path& path, int n, std::uint64_t seed) {
  FpchWriter w(path.string());
  for (int i = 0; i < n; ++i)
    w.write(const_target_patch(seed + std::uint64_t(i)));
  w.close();
  return path.string();
}

}  // namespace

TEST_CASE("make_input / forward_physical: normalization and VENC rescale") {
  std::vector<PatchPair> batch = {synth_patch(1), synth_patch(2)};
  batch[1].venc = {0.5f, 2.0f, 4.0f};
  const double mag_scale = 1.0 / 240.0;
  auto x = make_input(batch, mag_scale);
  REQUIRE(x->shape == std::array<int, 5>{2, 4, 12, 12, 12});
  const std::size_t V = 12 * 12 * 12;
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      CHECK(x->v[(std::size_t(n) * 4 + c) * V + 5] ==
            doctest::Approx(batch[std::size_t(n)].lr[std::size_t(c)].data[5] /
                            batch[std::size_t(n)].venc[std::size_t(c)]));
  CHECK(x->v[3 * V + 7] ==
        doctest::Approx(batch[0].lr[3].data[7] * mag_scale));

  ModelSpec spec;
  spec.channels = 4;
  spec.lr_blocks = 0;
  spec.hr_blocks = 0;
  Model<float> model(spec, 5);
  auto phys = forward_physical(model, nullptr, batch, mag_scale);
  auto raw = model.forward(nullptr, x);
  const std::size_t HV = 48 * 48 * 48;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i : {std::size_t(0), HV - 1, HV + 10}) {
      const int n = i < HV ? 0 : 1;
      CHECK(phys[std::size_t(c)]->v[i] ==
            doctest::Approx(raw[std::size_t(c)]->v[i] *
                            batch[std::size_t(n)].venc[std::size_t(c)]));
    }
}

TEST_CASE("patch_relative_error: arctangent-bounded fluid mean") {
  std::array<TensorPtr<float>, 3> pred;
  std::array<std::vector<float>, 3> truth;
  for (int c = 0; c < 3; ++c) {
    pred[std::size_t(c)] = make_tensor<float>(1, 1, 1, 1, 2);
    truth[std::size_t(c)] = {0.0f, 0.0f};
    pred[std::size_t(c)]->v = {0.0f, 0.0f};
  }
  // voxel 0: e = (1, 0, 0), v = (1, 0, 0); voxel 1 masked out
  pred[0]->v[0] = 2.0f;
  truth[0][0] = 1.0f;
  pred[0]->v[1] = 99.0f;  // must be ignored
  const std::vector<float> mask = {1.0f, 0.0f};
  const double expect = std::atan(1.0 / (1.0 + 1e-4));
  CHECK(patch_relative_error(pred, truth, mask) ==
        doctest::Approx(expect).epsilon(1e-6));
  const std::vector<float> none = {0.0f, 0.0f};
  CHECK(patch_relative_error(pred, truth, none) == 0.0);
}

TEST_CASE("train: deterministic, logs epochs, loss decreases on a "
          "memorizable set") {
  const fs::path dir =
      fs::temp_directory_path() / "vfsr_train_test";
  fs::create_directories(dir);
  const std::string data = write_const_fpch(dir / "d.fpch", 2, 40);

  ModelSpec spec;
  spec.channels = 4;
  spec.lr_blocks = 1;
  spec.hr_blocks = 0;
  Model<float> model(spec, 7);
  TrainConfig cfg;
  cfg.batch = 2;
  cfg.epochs = 30;
  cfg.lr0 = 5e-3;
  cfg.seed = 9;

  FpchReader r(data);
  FpchReader rv(data);
  std::ostringstream jsonl;
  const std::string ckpt = (dir / "w.fwts").string();
  const TrainResult res = train(model, r, &rv, cfg, ckpt, &jsonl);

  CHECK(res.log.size() == 30);
  CHECK(res.steps == 30);  // one batch per epoch
  CHECK(res.best_epoch >= 0);
  CHECK(fs::exists(ckpt));
  // jsonl: one line per epoch with the expected keys
  std::istringstream lines(jsonl.str());
  std::string line;
  int n_lines = 0;
  while (std::getline(lines, line)) {
    CHECK(line.find("\"epoch\":") != std::string::npos);
    CHECK(line.find("\"train_loss\":") != std::string::npos);
    CHECK(line.find("\"val_re\":") != std::string::npos);
    CHECK(line.find("\"wall_time\":") != std::string::npos);
    ++n_lines;
  }
  CHECK(n_lines == 30);
  // random targets are memorizable only partially, but the loss must drop
  CHECK(res.log.back().train_loss < 0.7 * res.log.front().train_loss);

  // determinism: identical rerun gives identical parameters
  Model<float> model2(spec, 7);
  FpchReader r2(data);
  FpchReader rv2(data);
  const TrainResult res2 = train(model2, r2, &rv2, cfg, "", nullptr);
  CHECK(res2.log.back().train_loss ==
        doctest::Approx(res.log.back().train_loss).epsilon(1e-12));
  for (std::size_t i = 0; i < model.params().size(); ++i)
    CHECK(model2.params()[i].second->v == model.params()[i].second->v);

  // max_steps caps optimization mid-epoch
  Model<float> model3(spec, 7);
  FpchReader r3(data);
  TrainConfig cfg3 = cfg;
  cfg3.epochs = 100;
  cfg3.max_steps = 5;
  const TrainResult res3 = train(model3, r3, nullptr, cfg3, "", nullptr);
  CHECK(res3.steps == 5);

  // empty dataset rejected
  {
    FpchWriter w((dir / "e.fpch").string());
    w.close();
  }
  FpchReader re((dir / "e.fpch").string());
  Model<float> m4(spec, 1);
  CHECK_THROWS_AS((void)train(m4, re, nullptr, cfg), std::invalid_argument);

  fs::remove_all(dir);
}
