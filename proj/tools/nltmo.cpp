// nltmo: command-line front end.
//
// Exit codes: 0 success, 1 other failure, 2 unreadable or malformed input
// file, 3 bad checkpoint, 4 degenerate image or dimension mismatch,
// 64 usage error.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "nltmo/checkpoint.hpp"
#include "nltmo/config.hpp"
#include "nltmo/hdr_io.hpp"
#include "nltmo/metrics.hpp"
#include "nltmo/nlpd_opt.hpp"
#include "nltmo/scenes.hpp"
#include "nltmo/tonemap.hpp"
#include "nltmo/training.hpp"

namespace fs = std::filesystem;
using namespace nltmo;

namespace {

constexpr int kExitGeneric = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitBadCheckpoint = 3;
constexpr int kExitDegenerate = 4;
constexpr int kExitUsage = 64;

// Output failures must not be reported as bad input.
struct OutputError : Error {
  using Error::Error;
};

bool g_verbose = false;
std::mutex g_log_mutex;

void log(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "nltmo: " << msg << '\n';
}

void vlog(const std::string& msg) {
  if (g_verbose) log(msg);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const OutputError*>(&e)) return kExitGeneric;
  if (dynamic_cast<const CheckpointError*>(&e)) return kExitBadCheckpoint;
  if (dynamic_cast<const FormatError*>(&e)) return kExitBadInput;
  if (dynamic_cast<const DegenerateInputError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kExitDegenerate;
  return kExitGeneric;
}

void write_output(const fs::path& path, std::span<const std::uint8_t> bytes) {
  try {
    write_file(path, bytes);
  } catch (const Error& e) {
    throw OutputError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_output(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelBundle load_models(const fs::path& path, bool need_tonemap, bool need_fusion) {
  ModelBundle b = load_checkpoint_file(path);
  if (need_tonemap && !b.tonemap) throw CheckpointError(path.string() + ": checkpoint has no tone-mapping model");
  if (need_fusion && !b.fusion) throw CheckpointError(path.string() + ": checkpoint has no fusion model");
  return b;
}

// Luminance of a tone-mapped test image in cd/m^2. PNGs are display
// referred: decoded with gamma 2.2 and mapped onto [5, 300]; PFMs already
// hold display luminance.
LuminanceMap load_test_luminance(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    LdrImage img;
    try {
      img = load_png(read_file(path));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
    LuminanceMap lum(img.width, img.height, LuminanceUnits::cd_per_m2);
    for (std::size_t p = 0; p < lum.size(); ++p) {
      double v;
      if (img.channels == 1) {
        v = std::pow(img.values[p], 2.2);
      } else {
        const float* c = &img.values[p * static_cast<std::size_t>(img.channels)];
        v = kRec709R * std::pow(c[0], 2.2) + kRec709G * std::pow(c[1], 2.2) + kRec709B * std::pow(c[2], 2.2);
      }
      lum.data[p] = kDisplayMin + (kDisplayMax - kDisplayMin) * v;
    }
    return lum;
  }
  LuminanceMap lum = extract_luminance(load_hdr_file(path));
  lum.units = LuminanceUnits::cd_per_m2;
  return lum;
}

// Brings the reference to the test image's size when the two differ only by
// a short-side resize.
HdrImage match_reference(const HdrImage& ref, int width, int height) {
  if (ref.width == width && ref.height == height) return ref;
  const auto [w, h] = short_side_dims(ref.width, ref.height, std::min(width, height));
  if (w != width || h != height)
    throw ShapeError("reference is " + std::to_string(ref.width) + "x" + std::to_string(ref.height) + ", test is " +
                     std::to_string(width) + "x" + std::to_string(height));
  return resize_bilinear(ref, width, height);
}

// ---------------------------------------------------------------------------

struct TonemapArgs {
  std::vector<std::string> inputs;
  std::string checkpoint;
  std::string output;
  std::string out_dir;
  int k = kDefaultStackSize;
  std::vector<double> smax_range{kStackMinLuminance, kStackMaxLuminance};
  double rho = kDefaultRho;
  int levels = 0;
  int short_side = kDefaultShortSide;
  int jobs = 1;
};

int run_tonemap(const TonemapArgs& a) {
  if (a.inputs.size() > 1 && !a.output.empty()) throw CLI::ValidationError("-o takes a single input; use --out-dir");
  if (a.output.empty() && a.out_dir.empty()) throw CLI::ValidationError("one of -o or --out-dir is required");
  if (a.smax_range.size() != 2) throw CLI::ValidationError("--smax-range takes two values");

  ModelBundle models = load_models(a.checkpoint, true, true);
  if (a.levels > 0) {
    models.tonemap->levels = a.levels;
    models.tonemap->validate();
  }
  PipelineOptions opt;
  opt.k = a.k;
  opt.s_range = {a.smax_range[0], a.smax_range[1]};
  opt.rho = a.rho;
  opt.short_side = a.short_side;
  vlog("stack of " + std::to_string(opt.k) + " images, pyramid levels " + std::to_string(models.tonemap->levels));

  std::atomic<std::size_t> next{0};
  std::vector<int> codes(a.inputs.size(), 0);
  std::vector<std::string> results(a.inputs.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < a.inputs.size(); i = next++) {
      const fs::path in = a.inputs[i];
      const fs::path out = a.output.empty() ? fs::path(a.out_dir) / in.filename().replace_extension(".png") : fs::path(a.output);
      try {
        auto t0 = std::chrono::steady_clock::now();
        const HdrImage hdr = load_hdr_file(in);
        const double read_s = seconds_since(t0);
        const PipelineResult r = run_pipeline(hdr, *models.tonemap, *models.fusion, opt);
        if (g_verbose) {
          std::ostringstream os;
          os << in.string() << ": stack S_max =";
          for (double s : r.stack.max_luminances) os << ' ' << s;
          log(os.str());
        }
        t0 = std::chrono::steady_clock::now();
        write_output(out, save_png(r.image, false));
        const double write_s = seconds_since(t0);
        const PipelineTimings& t = r.timings;
        std::ostringstream os;
        os << "file=" << out.string() << " width=" << r.image.width << " height=" << r.image.height << " k=" << opt.k
           << " io_s=" << fixed6(read_s + write_s) << " resize_s=" << fixed6(t.resize_s) << " stack_s=" << fixed6(t.stack_s)
           << " fusion_s=" << fixed6(t.fusion_s) << " color_s=" << fixed6(t.color_s)
           << " total_s=" << fixed6(read_s + write_s + t.resize_s + t.stack_s + t.fusion_s + t.color_s);
        results[i] = os.str();
      } catch (const std::exception& e) {
        codes[i] = exit_code_for(e);
        log("error: " + in.string() + ": " + e.what());
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(a.jobs, static_cast<int>(a.inputs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int code = 0;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    if (!results[i].empty()) std::cout << results[i] << '\n';
    code = std::max(code, codes[i]);
  }
  return code;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ref;
  std::string test;
  std::string metric = "nlpd";
  double smax = kEvalMaxLuminance;
  bool ref_calibrated = false;
  std::string checkpoint;
  int k = kDefaultStackSize;
};

int run_eval(const EvalArgs& a) {
  const HdrImage ref_full = load_hdr_file(a.ref);
  const LuminanceMap test = load_test_luminance(a.test);
  const HdrImage ref = match_reference(ref_full, test.width, test.height);
  const LuminanceMap ref_lum = extract_luminance(ref);

  double value = 0.0;
  if (a.metric == "nlpd") {
    const LuminanceMap s = a.ref_calibrated ? LuminanceMap(ref_lum, LuminanceUnits::cd_per_m2)
                                            : calibrate(ref_lum, kDisplayMin, a.smax);
    value = nlpd(s, test);
  } else {
    if (a.checkpoint.empty()) throw CLI::ValidationError("--metric mefssim requires --checkpoint");
    const ModelBundle models = load_models(a.checkpoint, true, false);
    const ExposureStack stack = generate_stack(ref_lum, *models.tonemap, a.k);
    Raster fused(test.width, test.height);
    for (std::size_t p = 0; p < fused.size(); ++p)
      fused.data[p] = (test.data[p] - kDisplayMin) / (kDisplayMax - kDisplayMin);
    value = mef_ssim_variant(stack, fused);
  }
  std::cout << fixed6(value) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string stage;
  std::string data;
  std::string config;
  std::string out;
  std::string trace;
  std::string tonemap;  // fusion stage: checkpoint holding the frozen tone-mapping model
  int test_count = 0;
  std::vector<std::string> sets;
  // Explicit flags, applied over the config file.
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, lr_decay;
  std::optional<int> decay_interval, epochs, max_steps, batch_size, crop_size, levels, stack_k, eval_interval;
  std::optional<std::string> smax_choices;
};

KeyValueConfig train_overrides(const TrainArgs& a) {
  KeyValueConfig kv;
  for (const std::string& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  auto num = [&](const char* key, const auto& v) {
    if (!v) return;
    std::ostringstream o;
    o << std::setprecision(17) << *v;
    kv.set(key, o.str());
  };
  num("seed", a.seed);
  num("lr", a.lr);
  num("lr_decay", a.lr_decay);
  num("decay_interval", a.decay_interval);
  num("epochs", a.epochs);
  num("max_steps", a.max_steps);
  num("batch_size", a.batch_size);
  num("crop_size", a.crop_size);
  num("levels", a.levels);
  num("stack_k", a.stack_k);
  num("eval_interval", a.eval_interval);
  if (a.smax_choices) kv.set("smax_choices", *a.smax_choices);
  return kv;
}

int run_train(const TrainArgs& a) {
  const bool fusion = a.stage == "fusion";
  // defaults < config file < flags
  KeyValueConfig kv;
  if (!a.config.empty()) kv = KeyValueConfig::load(a.config);
  kv.merge(train_overrides(a));
  const TrainConfig cfg = TrainConfig::from_config(kv, fusion ? fusion_defaults() : TrainConfig{});
  vlog("config: " + cfg.to_config().serialize());

  std::optional<ToneMapModel> frozen;
  if (fusion) {
    if (a.tonemap.empty()) throw CLI::ValidationError("train fusion requires --tonemap <checkpoint>");
    frozen = load_models(a.tonemap, true, false).tonemap;
  }
  const Corpus corpus = Corpus::load_directory(a.data, a.test_count);
  log("training " + a.stage + " on " + std::to_string(corpus.train.size()) + " images");

  auto observer = [](const TraceRow& r) {
    vlog("epoch " + std::to_string(r.epoch) + " " + r.split + " " + r.metric + " " + fixed6(r.value));
  };
  ModelBundle bundle;
  std::vector<TraceRow> trace;
  if (fusion) {
    FusionTraining t = train_fusion(corpus, *frozen, cfg, observer);
    bundle.tonemap = std::move(frozen);
    bundle.fusion = std::move(t.model);
    trace = std::move(t.trace);
  } else {
    ToneMapTraining t = train_tonemap(corpus, cfg, observer);
    bundle.tonemap = std::move(t.model);
    trace = std::move(t.trace);
  }
  try {
    save_checkpoint_file(a.out, bundle);
  } catch (const FormatError& e) {
    throw OutputError(e.what());
  }
  const fs::path trace_path = a.trace.empty() ? fs::path(a.out + ".trace.csv") : fs::path(a.trace);
  write_text(trace_path, trace_csv(trace));
  std::cout << "checkpoint=" << a.out << " trace=" << trace_path.string() << " epochs=" << trace.size();
  if (!trace.empty()) std::cout << " final_" << trace.back().metric << '=' << fixed6(trace.back().value);
  std::cout << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct OptArgs {
  std::string input;
  std::string output;
  std::string trace;
  std::string luminance_out;
  double smax = kEvalMaxLuminance;
  int iters = OptConfig{}.max_iters;
  double step = OptConfig{}.step_size;
  double tol = OptConfig{}.tol;
  double rho = kDefaultRho;
  int short_side = 0;
};

int run_nlpd_opt(const OptArgs& a) {
  HdrImage hdr = load_hdr_file(a.input);
  if (a.short_side > 0) {
    const auto [w, h] = short_side_dims(hdr.width, hdr.height, a.short_side);
    hdr = resize_bilinear(hdr, w, h);
  }
  const LuminanceMap lum = extract_luminance(hdr);
  const LuminanceMap s = calibrate(lum, kDisplayMin, a.smax);
  OptConfig cfg;
  cfg.max_iters = a.iters;
  cfg.step_size = a.step;
  cfg.tol = a.tol;
  const auto t0 = std::chrono::steady_clock::now();
  const OptResult r = nlpd_opt(s, cfg);
  const double secs = seconds_since(t0);

  Raster f(r.image.width, r.image.height);
  for (std::size_t p = 0; p < f.size(); ++p) f.data[p] = (r.image.data[p] - kDisplayMin) / (kDisplayMax - kDisplayMin);
  write_output(a.output, save_png(gamma_encode(color_reproduce(hdr, lum, f, a.rho)), false));
  if (!a.luminance_out.empty()) write_output(a.luminance_out, save_pfm(r.image));

  std::ostringstream csv;
  csv << "iter,loss,step\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.trace.loss.size(); ++i) csv << i << ',' << r.trace.loss[i] << ',' << r.trace.step[i] << '\n';
  const fs::path trace_path = a.trace.empty() ? fs::path(a.output + ".trace.csv") : fs::path(a.trace);
  write_text(trace_path, csv.str());
  std::cout << "file=" << a.output << " trace=" << trace_path.string() << " initial_nlpd=" << fixed6(r.trace.loss.front())
            << " final_nlpd=" << fixed6(r.trace.loss.back()) << " iterations=" << r.trace.loss.size() - 1
            << " seconds=" << fixed6(secs) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::uint64_t seed = 0;
  int count = 1;
  int width = SceneOptions{}.width;
  int height = SceneOptions{}.height;
  double decades = SceneOptions{}.dynamic_range_decades;
  std::string format = "hdr";
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out_dir);
  SceneOptions opt;
  opt.width = a.width;
  opt.height = a.height;
  opt.dynamic_range_decades = a.decades;
  for (int i = 0; i < a.count; ++i) {
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(i);
    const HdrImage img = synthesize_scene(seed, opt);
    char name[64];
    std::snprintf(name, sizeof name, "scene_%06llu.%s", static_cast<unsigned long long>(seed), a.format.c_str());
    const fs::path path = fs::path(a.out_dir) / name;
    write_output(path, a.format == "pfm" ? save_pfm(img) : save_radiance_hdr(img));
    std::cout << path.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HDR tone mapping with perceptually optimized networks"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", g_verbose, "Log progress to stderr");

  TonemapArgs tm;
  auto* c_tm = app.add_subcommand("tonemap", "Tone map HDR images (.hdr/.pfm) to color PNGs");
  c_tm->add_option("inputs", tm.inputs, "Input HDR files")->required()->check(CLI::ExistingFile);
  c_tm->add_option("--checkpoint", tm.checkpoint, "Checkpoint with tone-mapping and fusion models")->required();
  c_tm->add_option("-o,--output", tm.output, "Output PNG (single input)");
  c_tm->add_option("--out-dir", tm.out_dir, "Output directory (one PNG per input)");
  c_tm->add_option("--k", tm.k, "Stack length")->check(CLI::Range(1, 64))->capture_default_str();
  c_tm->add_option("--smax-range", tm.smax_range, "Lowest and highest simulated S_max (cd/m^2)")->expected(2)->capture_default_str();
  c_tm->add_option("--rho", tm.rho, "Color saturation exponent")->capture_default_str();
  c_tm->add_option("--levels", tm.levels, "Override the pyramid depth (1-6)")->check(CLI::Range(1, kMaxPyramidLevels));
  c_tm->add_option("--short-side", tm.short_side, "Resize so the short side has this size; 0 keeps the input size")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_tm->add_option("--jobs", tm.jobs, "Process this many inputs concurrently")->check(CLI::PositiveNumber)->capture_default_str();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score a tone-mapped image against its HDR reference");
  c_ev->add_option("--ref", ev.ref, "Reference HDR image")->required();
  c_ev->add_option("--test", ev.test, "Tone-mapped image (.png) or display luminance (.pfm, cd/m^2)")->required();
  c_ev->add_option("--metric", ev.metric, "nlpd or mefssim")->check(CLI::IsMember({"nlpd", "mefssim"}))->capture_default_str();
  c_ev->add_option("--smax", ev.smax, "Calibration maximum luminance for nlpd (cd/m^2)")->check(CLI::PositiveNumber)->capture_default_str();
  c_ev->add_flag("--ref-calibrated", ev.ref_calibrated, "Reference already holds luminance in cd/m^2; skip calibration");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Tone-mapping model used to build the stack (mefssim)");
  c_ev->add_option("--k", ev.k, "Stack length (mefssim)")->check(CLI::Range(1, 64))->capture_default_str();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the tone-mapping or the fusion model");
  c_tr->add_option("stage", tr.stage, "tonemap or fusion")->required()->check(CLI::IsMember({"tonemap", "fusion"}));
  c_tr->add_option("--data", tr.data, "Directory of training HDR images")->required();
  c_tr->add_option("--config", tr.config, "key=value training config");
  c_tr->add_option("--out", tr.out, "Output checkpoint")->required();
  c_tr->add_option("--trace", tr.trace, "Loss trace CSV (default: <out>.trace.csv)");
  c_tr->add_option("--tonemap", tr.tonemap, "Checkpoint with the frozen tone-mapping model (fusion stage)");
  c_tr->add_option("--test-count", tr.test_count, "Hold out the last N files as the test split")->capture_default_str();
  c_tr->add_option("--set", tr.sets, "Override any config key (key=value); repeatable");
  c_tr->add_option("--seed", tr.seed, "Random seed");
  c_tr->add_option("--lr", tr.lr, "Initial learning rate");
  c_tr->add_option("--lr-decay", tr.lr_decay, "Learning-rate multiplier per decay interval");
  c_tr->add_option("--decay-interval", tr.decay_interval, "Epochs between learning-rate decays");
  c_tr->add_option("--epochs", tr.epochs, "Epochs (full passes over the training split)");
  c_tr->add_option("--max-steps", tr.max_steps, "Stop after this many optimizer steps (0 = no cap)");
  c_tr->add_option("--batch-size", tr.batch_size, "Images per optimizer step");
  c_tr->add_option("--crop-size", tr.crop_size, "Random crop size in pixels");
  c_tr->add_option("--levels", tr.levels, "Pyramid levels");
  c_tr->add_option("--stack-k", tr.stack_k, "Stack length (fusion stage)");
  c_tr->add_option("--eval-interval", tr.eval_interval, "Epochs between held-out evaluations (0 = off)");
  c_tr->add_option("--smax-choices", tr.smax_choices, "Comma-separated S_max values sampled during training");

  OptArgs op;
  auto* c_op = app.add_subcommand("nlpd-opt", "Tone map one image by direct NLPD minimization");
  c_op->add_option("input", op.input, "Input HDR file")->required();
  c_op->add_option("-o,--output", op.output, "Output PNG")->required();
  c_op->add_option("--smax", op.smax, "Calibration maximum luminance (cd/m^2)")->check(CLI::PositiveNumber)->capture_default_str();
  c_op->add_option("--iters", op.iters, "Maximum iterations")->check(CLI::NonNegativeNumber)->capture_default_str();
  c_op->add_option("--step", op.step, "Initial step (largest per-pixel change, cd/m^2)")->check(CLI::PositiveNumber)->capture_default_str();
  c_op->add_option("--tol", op.tol, "Relative loss-change stopping threshold")->capture_default_str();
  c_op->add_option("--rho", op.rho, "Color saturation exponent")->capture_default_str();
  c_op->add_option("--short-side", op.short_side, "Resize first so the short side has this size (0 = no resize)")->capture_default_str();
  c_op->add_option("--trace", op.trace, "Loss trace CSV (default: <output>.trace.csv)");
  c_op->add_option("--luminance-out", op.luminance_out, "Also write the display luminance as PFM");

  SynthArgs sy;
  auto* c_sy = app.add_subcommand("synth", "Write procedural HDR test scenes");
  c_sy->add_option("--out-dir", sy.out_dir, "Output directory")->required();
  c_sy->add_option("--seed", sy.seed, "Seed of the first scene")->capture_default_str();
  c_sy->add_option("--count", sy.count, "Number of scenes")->check(CLI::PositiveNumber)->capture_default_str();
  c_sy->add_option("--width", sy.width, "Width")->check(CLI::Range(2, 1 << 15))->capture_default_str();
  c_sy->add_option("--height", sy.height, "Height")->check(CLI::Range(2, 1 << 15))->capture_default_str();
  c_sy->add_option("--decades", sy.decades, "Illumination range in decades")->capture_default_str();
  c_sy->add_option("--format", sy.format, "hdr or pfm")->check(CLI::IsMember({"hdr", "pfm"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "nltmo: error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (c_tm->parsed()) return run_tonemap(tm);
    if (c_ev->parsed()) return run_eval(ev);
    if (c_tr->parsed()) return run_train(tr);
    if (c_op->parsed()) return run_nlpd_opt(op);
    if (c_sy->parsed()) return run_synth(sy);
  } catch (const CLI::ParseError& e) {
    std::cerr << "nltmo: error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "nltmo: error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitGeneric;
}
