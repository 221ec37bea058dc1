// vfsr command-line driver: flowgen / degrade / patchify / train / predict /
// evaluate / demo subcommands over the header-only library.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vfsr/vfsr.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#ifndef VFSR_VERSION
#define VFSR_VERSION "1.0.0"
#endif

extern "C" void openblas_set_num_threads(int);

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// JSON run-config support for CLI11: a flat object maps to global options,
/// a nested object keyed by subcommand name to that subcommand's options.
/// Command-line flags override config values (CLI11 default precedence).
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool,
                        std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    input >> j;
    if (!j.is_object())
      throw CLI::FileError("config root must be a JSON object");
    std::vector<CLI::ConfigItem> out;
    for (auto& [key, val] : j.items()) {
      if (val.is_object()) {
        for (auto& [k2, v2] : val.items()) append(out, {key}, k2, v2);
      } else {
        append(out, {}, key, val);
      }
    }
    return out;
  }

 private:
  static void append(std::vector<CLI::ConfigItem>& out,
                     std::vector<std::string> parents, const std::string& name,
                     const json& val) {
    CLI::ConfigItem item;
    item.parents = std::move(parents);
    item.name = name;
    if (val.is_array())
      for (auto& e : val) item.inputs.push_back(scalar(e));
    else
      item.inputs.push_back(scalar(val));
    out.push_back(std::move(item));
  }
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
};

std::string frame_name(const std::string& prefix, int frame) {
  std::ostringstream ss;
  ss << prefix << "_t" << std::setw(3) << std::setfill('0') << frame << ".fvol";
  return ss.str();
}

// ---------------------------------------------------------------- flowgen --

struct FlowgenArgs {
  int geom = 3;
  int frames = 71;
  int frame = -1;  // single-frame mode when >= 0
  double spacing = 0.5;
  std::string out;
  std::string prefix;
  std::string csv;  // CSV ingestion mode
  bool vtk = false;
};

void run_flowgen(const FlowgenArgs& a) {
  if (!a.csv.empty()) {
    const vfsr::ScatteredPoints pts = vfsr::read_csv_points(a.csv);
    const vfsr::FlowVolume vol = vfsr::ingest_points(pts, a.spacing);
    vfsr::write_fvol(a.out, vfsr::to_fields(vol));
    if (a.vtk)
      vfsr::write_vtk(fs::path(a.out).replace_extension(".vtk").string(),
                      vfsr::to_fields(vol));
    std::cout << "ingested " << pts.pos.size() << " points -> " << a.out
              << "\n";
    return;
  }
  const vfsr::GeometrySpec g = vfsr::geometry(a.geom);
  vfsr::SampleOptions opt;
  opt.spacing = a.spacing;
  vfsr::Waveform wf;
  wf.n_frames = a.frames;
  fs::create_directories(a.out);
  const std::string prefix =
      a.prefix.empty() ? "geom" + std::to_string(a.geom) : a.prefix;
  const int lo = a.frame >= 0 ? a.frame : 0;
  const int hi = a.frame >= 0 ? a.frame + 1 : a.frames;
  for (int t = lo; t < hi; ++t) {
    const vfsr::FlowVolume vol = vfsr::sample_to_grid(g, t, opt, wf);
    const fs::path path = fs::path(a.out) / frame_name(prefix, t);
    vfsr::write_fvol(path.string(), vfsr::to_fields(vol));
    if (a.vtk)
      vfsr::write_vtk(fs::path(path).replace_extension(".vtk").string(),
                      vfsr::to_fields(vol));
  }
  std::cout << "wrote " << (hi - lo) << " frame(s) to " << a.out << "\n";
}

// ---------------------------------------------------------------- degrade --

struct DegradeArgs {
  std::string in, out, out_hr;
  vfsr::DegradeOptions opt;
  double snr_db = -1;  // < 0 means noise-free
};

void run_degrade(const DegradeArgs& a) {
  vfsr::DegradeOptions opt = a.opt;
  opt.snr_db = a.snr_db < 0 ? std::numeric_limits<double>::infinity() : a.snr_db;
  const vfsr::FlowVolume flow = vfsr::flow_from_fields(vfsr::read_fvol(a.in));
  auto [hr, lr] = vfsr::degrade(flow, opt);
  vfsr::write_fvol(a.out, vfsr::to_fields(lr));
  if (!a.out_hr.empty()) vfsr::write_fvol(a.out_hr, vfsr::to_fields(hr));
  std::cout << "degraded " << a.in << " -> " << a.out << " (" << lr.dims.x
            << "x" << lr.dims.y << "x" << lr.dims.z << ")\n";
}

// --------------------------------------------------------------- patchify --

struct PatchifyArgs {
  std::vector<int> geoms{3};
  std::string out;
  double spacing = 0.5;
  int frame_stride = 1;
  vfsr::AugmentConfig cfg;
};

void run_patchify(const PatchifyArgs& a) {
  std::vector<vfsr::GeometrySpec> geoms;
  for (int id : a.geoms) geoms.push_back(vfsr::geometry(id));
  vfsr::SampleOptions opt;
  opt.spacing = a.spacing;
  const vfsr::DatasetStats stats =
      vfsr::build_dataset(geoms, a.cfg, opt, {}, a.out, a.frame_stride);
  std::cout << "wrote " << stats.patches << " patches from " << stats.frames
            << " frames to " << a.out << "\n";
}

// ------------------------------------------------------------------ train --

struct TrainArgs {
  std::string data, val, out, log;
  std::string variant = "res";
  vfsr::nn::ModelSpec spec;
  vfsr::nn::TrainConfig cfg;
  std::uint64_t init_seed = 1;
};

void run_train(const TrainArgs& a) {
  vfsr::nn::ModelSpec spec = a.spec;
  spec.variant = vfsr::nn::variant_from_name(a.variant);
  vfsr::nn::Model<float> model(spec, a.init_seed);
  vfsr::FpchReader data(a.data);
  std::optional<vfsr::FpchReader> val;
  if (!a.val.empty()) val.emplace(a.val);
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw std::runtime_error("cannot open for write: " + a.log);
  }
  const vfsr::nn::TrainResult r =
      vfsr::nn::train(model, data, val ? &*val : nullptr, a.cfg, a.out,
                      log.is_open() ? &log : nullptr);
  std::cout << "trained " << r.steps << " steps ("
            << model.parameter_count() << " params)";
  if (r.best_epoch >= 0)
    std::cout << "; best val RE " << r.best_val_re << " at epoch "
              << r.best_epoch;
  std::cout << "; weights -> " << a.out << "\n";
}

// ---------------------------------------------------------------- predict --

struct PredictArgs {
  std::string weights, in, out, vtk;
  std::array<double, 3> venc{1.0, 1.0, 1.0};
};

void run_predict(const PredictArgs& a) {
  const vfsr::nn::Model<float> model = vfsr::nn::read_fwts(a.weights);
  vfsr::MRVolume lr = vfsr::mr_from_fields(vfsr::read_fvol(a.in));
  lr.venc = a.venc;
  const vfsr::StitchPlan plan = vfsr::plan_patches(
      lr.dims, model.spec().in_patch, model.spec().in_patch - 4,
      model.spec().upsample_factor);
  const vfsr::FlowVolume sr =
      vfsr::predict_volume(lr, vfsr::model_predictor(model), plan);
  vfsr::write_fvol(a.out, vfsr::to_fields(sr));
  if (!a.vtk.empty()) vfsr::write_vtk(a.vtk, vfsr::to_fields(sr));
  std::cout << "predicted " << plan.patches.size() << " patches -> " << a.out
            << " (" << sr.dims.x << "x" << sr.dims.y << "x" << sr.dims.z
            << ")\n";
}

// --------------------------------------------------------------- evaluate --

struct EvaluateArgs {
  std::string pred, truth, out, csv;
};

void run_evaluate(const EvaluateArgs& a) {
  const vfsr::FlowVolume pred = vfsr::flow_from_fields(vfsr::read_fvol(a.pred));
  const vfsr::FlowVolume truth =
      vfsr::flow_from_fields(vfsr::read_fvol(a.truth));
  const vfsr::EvalReport report = vfsr::evaluate(pred, truth);
  const json j = vfsr::to_json(report);
  if (a.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream os(a.out);
    if (!os) throw std::runtime_error("cannot open for write: " + a.out);
    os << j.dump(2) << "\n";
    std::cout << "report -> " << a.out << " (RE " << report.re << ")\n";
  }
  if (!a.csv.empty()) vfsr::write_pairs_csv(a.csv, pred, truth);
}

// ------------------------------------------------------------------- demo --

struct DemoArgs {
  std::uint64_t seed = 7;
  std::string out = "demo_out";
};

/// Desk-scale end-to-end run: build a small patch dataset from one geometry,
/// train a tiny CSP model briefly, super-resolve a held-out frame and emit an
/// EvalReport. Deterministic for a fixed seed.
void run_demo(const DemoArgs& a) {
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  const int geom_id = 6;
  const int eval_frame = 35;

  // 1. Patch dataset (small: every 14th frame, 4 patches per frame).
  vfsr::AugmentConfig cfg;
  cfg.seed = a.seed;
  cfg.patches_per_frame = 4;
  vfsr::SampleOptions sopt;  // 0.5 mm
  const std::string fpch = (dir / "demo.fpch").string();
  const vfsr::DatasetStats stats = vfsr::build_dataset(
      {vfsr::geometry(geom_id)}, cfg, sopt, {}, fpch, /*frame_stride=*/14);
  std::cout << "demo: " << stats.patches << " patches\n";

  // 2. Tiny CSP model, short training run.
  vfsr::nn::ModelSpec spec;
  spec.variant = vfsr::nn::BlockVariant::Csp;
  spec.channels = 16;
  spec.lr_blocks = 2;
  spec.hr_blocks = 1;
  spec.growth_rate = 8;
  vfsr::nn::Model<float> model(spec, a.seed);
  vfsr::nn::TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch = 4;
  tcfg.lr0 = 1e-3;
  tcfg.seed = a.seed;
  vfsr::FpchReader data(fpch);
  std::ofstream log((dir / "train.jsonl").string());
  const std::string weights = (dir / "weights.fwts").string();
  const vfsr::nn::TrainResult r =
      vfsr::nn::train(model, data, &data, tcfg, weights, &log);
  std::cout << "demo: trained " << r.steps << " steps, best val RE "
            << r.best_val_re << "\n";

  // 3. Super-resolve a held-out frame and evaluate against ground truth.
  const vfsr::GeometrySpec g = vfsr::geometry(geom_id);
  const vfsr::FlowVolume truth = vfsr::sample_to_grid(g, eval_frame, sopt);
  vfsr::DegradeOptions dopt;
  dopt.venc = {1.0, 1.0, 1.0};
  dopt.snr_db = 15.0;
  dopt.seed = vfsr::mix_seed(a.seed, 0xdeadbeefULL);
  auto [hr_mr, lr_mr] = vfsr::degrade(truth, dopt);
  const vfsr::nn::Model<float> best = vfsr::nn::read_fwts(weights);
  const vfsr::StitchPlan plan = vfsr::plan_patches(lr_mr.dims);
  const vfsr::FlowVolume sr =
      vfsr::predict_volume(lr_mr, vfsr::model_predictor(best), plan);
  vfsr::write_fvol((dir / "sr.fvol").string(), vfsr::to_fields(sr));

  const vfsr::EvalReport report = vfsr::evaluate(sr, truth);
  std::ofstream os((dir / "report.json").string());
  os << vfsr::to_json(report).dump(2) << "\n";
  std::cout << "demo: RE " << report.re << " rad; artifacts in " << a.out
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic 4D flow MRI super-resolution toolkit"};
  app.set_version_flag("--version", std::string(VFSR_VERSION));
  app.require_subcommand(1);
  app.set_config("--config", "", "JSON run-config (flags override)");
  app.config_formatter(std::make_shared<JsonConfig>());

  int jobs = 1;
  if (const char* env = std::getenv("VF_THREADS")) jobs = std::atoi(env);
  app.add_option("--jobs", jobs, "worker thread count (1 = deterministic)");
  // Subcommand callbacks run inside parse(), after all options are bound.
  auto run = [&jobs](auto fn) {
    return [&jobs, fn] {
      openblas_set_num_threads(jobs < 1 ? 1 : jobs);
      fn();
    };
  };

  FlowgenArgs fa;
  auto* fg = app.add_subcommand("flowgen", "generate ground-truth flow volumes");
  fg->add_option("--geom", fa.geom, "geometry id (1-20)")->check(CLI::Range(1, 20));
  fg->add_option("--frames", fa.frames, "number of timeframes")->check(CLI::PositiveNumber);
  fg->add_option("--frame", fa.frame, "single frame index");
  fg->add_option("--spacing", fa.spacing, "voxel spacing, mm")->check(CLI::PositiveNumber);
  fg->add_option("--out", fa.out, "output directory (or file with --csv)")->required();
  fg->add_option("--prefix", fa.prefix, "output filename prefix");
  fg->add_option("--csv", fa.csv, "ingest a CSV point cloud instead");
  fg->add_flag("--vtk", fa.vtk, "also write VTK files");
  fg->callback(run([&] { run_flowgen(fa); }));

  DegradeArgs da;
  auto* dg = app.add_subcommand("degrade", "synthesize HR/LR MR volumes");
  dg->add_option("--in", da.in, "ground-truth FVOL")->required();
  dg->add_option("--out", da.out, "LR output FVOL")->required();
  dg->add_option("--out-hr", da.out_hr, "HR MR output FVOL");
  dg->add_option("--venc-x", da.opt.venc[0], "VENC x, m/s")->check(CLI::PositiveNumber);
  dg->add_option("--venc-y", da.opt.venc[1], "VENC y, m/s")->check(CLI::PositiveNumber);
  dg->add_option("--venc-z", da.opt.venc[2], "VENC z, m/s")->check(CLI::PositiveNumber);
  dg->add_option("--snr-db", da.snr_db, "target SNR in dB (omit: noise-free)");
  dg->add_option("--intensity", da.opt.intensity, "fluid magnitude, a.u.");
  dg->add_option("--seed", da.opt.seed, "noise seed");
  dg->add_option("--factor", da.opt.factor, "downsampling factor")->check(CLI::Range(2, 8));
  dg->callback(run([&] { run_degrade(da); }));

  PatchifyArgs pa;
  auto* pf = app.add_subcommand("patchify", "build the augmented patch dataset");
  pf->add_option("--geoms", pa.geoms, "geometry ids")->delimiter(',');
  pf->add_option("--out", pa.out, "output FPCH file")->required();
  pf->add_option("--seed", pa.cfg.seed, "augmentation seed");
  pf->add_option("--alias-prob", pa.cfg.alias_prob, "aliased-frame probability")
      ->check(CLI::Range(0.0, 1.0));
  pf->add_option("--spacing", pa.spacing, "HR voxel spacing, mm")->check(CLI::PositiveNumber);
  pf->add_option("--frame-stride", pa.frame_stride, "use every k-th frame")->check(CLI::PositiveNumber);
  pf->add_option("--patches-per-frame", pa.cfg.patches_per_frame, "patches per frame")
      ->check(CLI::PositiveNumber);
  pf->add_flag("!--no-rotate", pa.cfg.rotate_duplicates, "disable rotated duplicates");
  pf->callback(run([&] { run_patchify(pa); }));

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a super-resolution model");
  tr->add_option("--data", ta.data, "training FPCH")->required();
  tr->add_option("--val", ta.val, "validation FPCH");
  tr->add_option("--out", ta.out, "output FWTS weights")->required();
  tr->add_option("--log", ta.log, "JSON-lines training log");
  tr->add_option("--variant", ta.variant, "block variant: res|dense|csp")
      ->check(CLI::IsMember({"res", "dense", "csp"}));
  tr->add_option("--channels", ta.spec.channels, "trunk channels");
  tr->add_option("--lr-blocks", ta.spec.lr_blocks, "blocks before upsampling");
  tr->add_option("--hr-blocks", ta.spec.hr_blocks, "blocks after upsampling");
  tr->add_option("--growth", ta.spec.growth_rate, "dense growth rate");
  tr->add_option("--epochs", ta.cfg.epochs, "training epochs");
  tr->add_option("--batch", ta.cfg.batch, "mini-batch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr0", ta.cfg.lr0, "initial learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--seed", ta.cfg.seed, "shuffle seed");
  tr->add_option("--init-seed", ta.init_seed, "weight init seed");
  tr->add_option("--max-steps", ta.cfg.max_steps, "hard step cap (-1: none)");
  tr->callback(run([&] { run_train(ta); }));

  PredictArgs ra;
  auto* pr = app.add_subcommand("predict", "patch-stitched super-resolution");
  pr->add_option("--weights", ra.weights, "FWTS weights")->required();
  pr->add_option("--in", ra.in, "LR FVOL (vx,vy,vz,mask,mag)")->required();
  pr->add_option("--out", ra.out, "SR output FVOL")->required();
  pr->add_option("--vtk", ra.vtk, "also write a VTK file");
  pr->add_option("--venc-x", ra.venc[0], "acquisition VENC x, m/s")->check(CLI::PositiveNumber);
  pr->add_option("--venc-y", ra.venc[1], "acquisition VENC y, m/s")->check(CLI::PositiveNumber);
  pr->add_option("--venc-z", ra.venc[2], "acquisition VENC z, m/s")->check(CLI::PositiveNumber);
  pr->callback(run([&] { run_predict(ra); }));

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "metrics report vs ground truth");
  ev->add_option("--pred", ea.pred, "predicted FVOL")->required();
  ev->add_option("--truth", ea.truth, "ground-truth FVOL")->required();
  ev->add_option("--out", ea.out, "report JSON (default: stdout)");
  ev->add_option("--csv", ea.csv, "paired truth/pred CSV");
  ev->callback(run([&] { run_evaluate(ea); }));

  DemoArgs ma;
  auto* dm = app.add_subcommand("demo", "deterministic end-to-end example");
  dm->add_option("--seed", ma.seed, "run seed");
  dm->add_option("--out", ma.out, "output directory");
  dm->callback(run([&] { run_demo(ma); }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
