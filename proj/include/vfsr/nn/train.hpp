#pragma once

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "vfsr/dataset.hpp"
#include "vfsr/nn/model.hpp"

namespace vfsr::nn {

struct TrainConfig {
  double lr0 = 1e-4;
  double decay_factor = std::sqrt(2.0);
  int decay_every = 14;  // epochs
  int batch = 16;
  int epochs = 200;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t seed = 0;
  int max_steps = -1;          // optional hard step cap
  double mag_scale = 1.0 / 240.0;  // magnitude input normalization
};

/// Step schedule: lr0 / decay_factor^floor(epoch / decay_every).
inline double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
  return cfg.lr0 / std::pow(cfg.decay_factor, double(epoch / cfg.decay_every));
}

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  long t = 0;

  template <class Params>
  void init(const Params& params) {
    m.clear();
    v.clear();
    for (auto& [name, p] : params) {
      m.emplace_back(p->size(), T(0));
      v.emplace_back(p->size(), T(0));
    }
    t = 0;
  }
};

/// One bias-corrected Adam update from the gradients stored in the params.
template <class T, class Params>
void adam_step(Params& params, AdamState<T>& state, double lr,
               const TrainConfig& cfg) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  std::size_t pi = 0;
  for (auto& [name, p] : params) {
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    ++pi;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = double(p->g[i]);
      m[i] = T(cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * g);
      v[i] = T(cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * g * g);
      const double mh = double(m[i]) / bc1;
      const double vh = double(v[i]) / bc2;
      p->v[i] = T(double(p->v[i]) - lr * mh / (std::sqrt(vh) + cfg.eps));
    }
  }
}

/// Normalized network input for a batch of patches: velocity channels are
/// divided by their VENC (phase units), magnitude scaled by mag_scale.
inline TensorPtr<float> make_input(const std::vector<PatchPair>& batch,
                                   double mag_scale) {
  const int B = int(batch.size());
  const int s = batch[0].lr[0].dims.x;
  auto x = make_tensor<float>(B, 4, s, s, s, false);
  const std::size_t V = x->vol();
  for (int n = 0; n < B; ++n) {
    const PatchPair& p = batch[std::size_t(n)];
    for (int c = 0; c < 3; ++c) {
      const float inv = 1.0f / p.venc[std::size_t(c)];
      const auto& src = p.lr[std::size_t(c)].data;
      float* dst = x->v.data() + (std::size_t(n) * 4 + c) * V;
      for (std::size_t i = 0; i < V; ++i) dst[i] = src[i] * inv;
    }
    const auto& mag = p.lr[3].data;
    float* dst = x->v.data() + (std::size_t(n) * 4 + 3) * V;
    for (std::size_t i = 0; i < V; ++i) dst[i] = float(mag[i] * mag_scale);
  }
  return x;
}

/// Forward pass in physical units: heads are rescaled by each sample's VENC
/// so predictions and loss are in m/s.
inline std::array<TensorPtr<float>, 3> forward_physical(
    const Model<float>& model, Tape<float>* tape,
    const std::vector<PatchPair>& batch, double mag_scale) {
  auto input = make_input(batch, mag_scale);
  auto heads = model.forward(tape, input);
  for (int c = 0; c < 3; ++c) {
    std::vector<float> venc(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n)
      venc[n] = batch[n].venc[std::size_t(c)];
    heads[std::size_t(c)] = scale_per_sample(tape, heads[std::size_t(c)], venc);
  }
  return heads;
}

inline std::array<std::vector<float>, 3> make_truth(
    const std::vector<PatchPair>& batch) {
  const std::size_t V = batch[0].hr[0].size();
  std::array<std::vector<float>, 3> t;
  for (int c = 0; c < 3; ++c) {
    t[std::size_t(c)].resize(batch.size() * V);
    for (std::size_t n = 0; n < batch.size(); ++n)
      std::copy(batch[n].hr[std::size_t(c)].data.begin(),
                batch[n].hr[std::size_t(c)].data.end(),
                t[std::size_t(c)].begin() + std::ptrdiff_t(n * V));
  }
  return t;
}

inline std::vector<float> make_mask(const std::vector<PatchPair>& batch) {
  const std::size_t V = batch[0].hr[3].size();
  std::vector<float> m(batch.size() * V);
  for (std::size_t n = 0; n < batch.size(); ++n)
    std::copy(batch[n].hr[3].data.begin(), batch[n].hr[3].data.end(),
              m.begin() + std::ptrdiff_t(n * V));
  return m;
}

/// Arctangent-bounded relative speed error over fluid voxels (patch-level,
/// used for validation tracking during training).
inline double patch_relative_error(const std::array<TensorPtr<float>, 3>& pred,
                                   const std::array<std::vector<float>, 3>& truth,
                                   const std::vector<float>& mask) {
  const std::size_t n = mask.size();
  double acc = 0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] == 0.0f) continue;
    double e2 = 0, v2 = 0;
    for (int c = 0; c < 3; ++c) {
      const double d =
          double(pred[std::size_t(c)]->v[i]) - double(truth[std::size_t(c)][i]);
      e2 += d * d;
      const double t = double(truth[std::size_t(c)][i]);
      v2 += t * t;
    }
    acc += std::atan(std::sqrt(e2) / (std::sqrt(v2) + 1e-4));
    ++cnt;
  }
  return cnt ? acc / double(cnt) : 0.0;
}

struct EpochLog {
  int epoch = 0;
  double lr = 0, train_loss = 0, val_re = 0, wall_s = 0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_re = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  long steps = 0;
};

/// Mini-batch training: seeded shuffling, split-region MSE loss, Adam with
/// the step schedule. Saves a checkpoint whenever the validation relative
/// error improves. Single-threaded and deterministic.
inline TrainResult train(Model<float>& model, FpchReader& data,
                         FpchReader* val, const TrainConfig& cfg,
                         const std::string& checkpoint_path = "",
                         std::ostream* jsonl = nullptr) {
  if (data.count() == 0) throw std::invalid_argument("train: empty dataset");
  AdamState<float> adam;
  adam.init(model.params());
  TrainResult result;

  std::vector<std::uint32_t> order(data.count());
  std::iota(order.begin(), order.end(), 0u);
  const auto t0 = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    Rng shuffle_rng(mix_seed(cfg.seed, 0xe90cu + std::uint64_t(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[std::size_t(shuffle_rng.uniform_int(int(i)))]);

    double loss_acc = 0;
    long batches = 0;
    bool stop = false;
    for (std::size_t at = 0; at < order.size() && !stop;
         at += std::size_t(cfg.batch)) {
      std::vector<PatchPair> batch;
      for (std::size_t j = at;
           j < std::min(order.size(), at + std::size_t(cfg.batch)); ++j)
        batch.push_back(data.read(order[j]));

      Tape<float> tape;
      auto pred = forward_physical(model, &tape, batch, cfg.mag_scale);
      auto truth = make_truth(batch);
      auto mask = make_mask(batch);
      auto loss = loss_mse_split(&tape, pred, truth, mask);
      if (!std::isfinite(loss->v[0]))
        throw std::runtime_error(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            ", step " + std::to_string(result.steps));
      for (auto& [name, p] : model.params()) p->zero_grad();
      tape.backward(loss);
      adam_step(model.params(), adam, lr, cfg);
      loss_acc += loss->v[0];
      ++batches;
      ++result.steps;
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) stop = true;
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = batches ? loss_acc / double(batches) : 0.0;

    if (val && val->count() > 0) {
      double re_acc = 0;
      std::size_t re_cnt = 0;
      for (std::uint32_t i = 0; i < val->count(); i += std::uint32_t(cfg.batch)) {
        std::vector<PatchPair> batch;
        for (std::uint32_t j = i;
             j < std::min(val->count(), i + std::uint32_t(cfg.batch)); ++j)
          batch.push_back(val->read(j));
        auto pred = forward_physical(model, nullptr, batch, cfg.mag_scale);
        auto truth = make_truth(batch);
        auto mask = make_mask(batch);
        // per-patch mean, patch by patch
        const std::size_t V = batch[0].hr[0].size();
        for (std::size_t b = 0; b < batch.size(); ++b) {
          std::array<TensorPtr<float>, 3> p1;
          std::array<std::vector<float>, 3> t1;
          for (int c = 0; c < 3; ++c) {
            p1[std::size_t(c)] = make_tensor<float>(1, 1, batch[b].hr[0].dims.z,
                                                    batch[b].hr[0].dims.y,
                                                    batch[b].hr[0].dims.x);
            std::copy(pred[std::size_t(c)]->v.begin() + std::ptrdiff_t(b * V),
                      pred[std::size_t(c)]->v.begin() + std::ptrdiff_t((b + 1) * V),
                      p1[std::size_t(c)]->v.begin());
            t1[std::size_t(c)].assign(
                truth[std::size_t(c)].begin() + std::ptrdiff_t(b * V),
                truth[std::size_t(c)].begin() + std::ptrdiff_t((b + 1) * V));
          }
          std::vector<float> m1(mask.begin() + std::ptrdiff_t(b * V),
                                mask.begin() + std::ptrdiff_t((b + 1) * V));
          re_acc += patch_relative_error(p1, t1, m1);
          ++re_cnt;
        }
      }
      log.val_re = re_cnt ? re_acc / double(re_cnt) : 0.0;
      if (log.val_re < result.best_val_re) {
        result.best_val_re = log.val_re;
        result.best_epoch = epoch;
        if (!checkpoint_path.empty()) write_fwts(checkpoint_path, model);
      }
    }

    log.wall_s = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (jsonl)
      *jsonl << "{\"epoch\":" << log.epoch << ",\"lr\":" << log.lr
             << ",\"train_loss\":" << log.train_loss
             << ",\"val_re\":" << log.val_re << ",\"wall_time\":" << log.wall_s
             << "}\n";
    if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
  }
  if ((!val || result.best_epoch < 0) && !checkpoint_path.empty() &&
      cfg.epochs > 0)
    write_fwts(checkpoint_path, model);
  return result;
}

}  // namespace vfsr::nn
