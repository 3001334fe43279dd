#include "nltmo/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "nltmo/nn/adam.hpp"
#include "nltmo/rng.hpp"

namespace nltmo {

namespace {

Raster crop_flip(const Raster& src, int x0, int y0, int w, int h, bool flip) {
  Raster out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = src.at(x0 + (flip ? w - 1 - x : x), y0 + y);
  return out;
}

struct Crop {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  bool flip = false;
};

Crop draw_crop(int width, int height, int size, std::mt19937_64& crop_rng, std::mt19937_64& flip_rng) {
  Crop c;
  c.w = std::min(size, width);
  c.h = std::min(size, height);
  c.x0 = uniform_index(crop_rng, width - c.w + 1);
  c.y0 = uniform_index(crop_rng, height - c.h + 1);
  c.flip = uniform01(flip_rng) < 0.5;
  return c;
}

std::vector<int> shuffled(int n, std::mt19937_64& rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(uniform_index(rng, i + 1))]);
  return order;
}

std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<Raster> luminances(const std::vector<CorpusEntry>& entries) {
  std::vector<Raster> out;
  for (const CorpusEntry& e : entries) out.push_back(extract_luminance(e.image));
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(lr_decay > 0.0)) throw Error("train: lr and lr_decay must be positive");
  if (decay_interval < 1 || epochs < 1 || batch_size < 1) throw Error("train: decay_interval, epochs and batch_size must be >= 1");
  if (max_steps < 0) throw Error("train: max_steps must be >= 0");
  if (crop_size < 8) throw Error("train: crop_size must be >= 8");
  if (smax_choices.empty()) throw Error("train: smax_choices is empty");
  for (std::size_t i = 0; i < smax_choices.size(); ++i) {
    if (!(smax_choices[i] > kDisplayMin)) throw Error("train: smax_choices must exceed 5 cd/m^2");
    if (i > 0 && !(smax_choices[i] > smax_choices[i - 1])) throw Error("train: smax_choices must be sorted ascending");
  }
  if (levels < 1 || levels > kMaxPyramidLevels) throw Error("train: levels must be in [1, 6]");
  if (stack_k < 1) throw Error("train: stack_k must be >= 1");
  if (eval_interval < 0) throw Error("train: eval_interval must be >= 0");
}

double TrainConfig::lr_at_epoch(int epoch) const { return lr * std::pow(lr_decay, epoch / decay_interval); }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{"lr", "lr_decay", "decay_interval", "epochs", "max_steps", "batch_size",
                                          "crop_size", "seed", "smax_choices", "levels", "stack_k", "eval_interval"};
  return k;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) { return from_config(kv, TrainConfig{}); }

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv, const TrainConfig& d) {
  kv.require_known(keys());
  TrainConfig c;
  c.lr = kv.get_double("lr", d.lr);
  c.lr_decay = kv.get_double("lr_decay", d.lr_decay);
  c.decay_interval = static_cast<int>(kv.get_int("decay_interval", d.decay_interval));
  c.epochs = static_cast<int>(kv.get_int("epochs", d.epochs));
  c.max_steps = static_cast<int>(kv.get_int("max_steps", d.max_steps));
  c.batch_size = static_cast<int>(kv.get_int("batch_size", d.batch_size));
  c.crop_size = static_cast<int>(kv.get_int("crop_size", d.crop_size));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(d.seed)));
  c.smax_choices = kv.get_doubles("smax_choices", d.smax_choices);
  c.levels = static_cast<int>(kv.get_int("levels", d.levels));
  c.stack_k = static_cast<int>(kv.get_int("stack_k", d.stack_k));
  c.eval_interval = static_cast<int>(kv.get_int("eval_interval", d.eval_interval));
  c.validate();
  return c;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("lr", format_value(lr));
  kv.set("lr_decay", format_value(lr_decay));
  kv.set("decay_interval", std::to_string(decay_interval));
  kv.set("epochs", std::to_string(epochs));
  kv.set("max_steps", std::to_string(max_steps));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("crop_size", std::to_string(crop_size));
  kv.set("seed", std::to_string(seed));
  std::string s;
  for (double v : smax_choices) s += (s.empty() ? "" : ",") + format_value(v);
  kv.set("smax_choices", s);
  kv.set("levels", std::to_string(levels));
  kv.set("stack_k", std::to_string(stack_k));
  kv.set("eval_interval", std::to_string(eval_interval));
  return kv;
}

TrainConfig fusion_defaults() {
  TrainConfig c;
  c.batch_size = 1;
  return c;
}

void Corpus::validate() const {
  if (train.empty()) throw Error("corpus: training split is empty");
  for (const CorpusEntry& a : train)
    for (const CorpusEntry& b : test)
      if (a.id == b.id) throw Error("corpus: '" + a.id + "' appears in both splits");
}

Corpus Corpus::load_directory(const std::filesystem::path& dir, int test_count) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".hdr" || ext == ".pfm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("no .hdr or .pfm files in " + dir.string());
  if (test_count < 0 || test_count >= static_cast<int>(files.size()))
    throw Error("corpus: test split must leave at least one training image");
  Corpus c;
  for (std::size_t i = 0; i < files.size(); ++i) {
    CorpusEntry e{files[i].filename().string(), load_hdr_file(files[i])};
    (i + static_cast<std::size_t>(test_count) < files.size() ? c.train : c.test).push_back(std::move(e));
  }
  c.validate();
  return c;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream os;
  os << "epoch,split,metric,value,lr\n";
  for (const TraceRow& r : rows)
    os << r.epoch << ',' << r.split << ',' << r.metric << ',' << format_value(r.value) << ',' << format_value(r.lr) << '\n';
  return os.str();
}

ToneMapTraining train_tonemap(const Corpus& corpus, const TrainConfig& cfg, const TraceObserver& observer) {
  cfg.validate();
  return train_tonemap(corpus, cfg, ToneMapModel::initialize(cfg.seed, cfg.levels), observer);
}

ToneMapTraining train_tonemap(const Corpus& corpus, const TrainConfig& cfg, ToneMapModel init,
                              const TraceObserver& observer) {
  cfg.validate();
  corpus.validate();
  init.validate();
  const SeedTree tree(cfg.seed);
  auto shuffle_rng = tree.stream("shuffle");
  auto crop_rng = tree.stream("crop");
  auto flip_rng = tree.stream("flip");
  auto smax_rng = tree.stream("smax");

  ToneMapTraining out;
  out.model = std::move(init);
  ToneMapModel& model = out.model;
  nn::Adam<float> adam_band(model.band_config), adam_low(model.low_config);
  const std::vector<Raster> lum = luminances(corpus.train);
  const std::vector<Raster> test_lum = luminances(corpus.test);
  const int n = static_cast<int>(lum.size());
  NlpdConfig metric;
  metric.levels = model.levels;

  auto emit = [&](TraceRow row) {
    if (observer) observer(row);
    out.trace.push_back(std::move(row));
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps > 0 && out.steps >= cfg.max_steps) break;
    const double lr = cfg.lr_at_epoch(epoch);
    const std::vector<int> order = shuffled(n, shuffle_rng);
    double epoch_loss = 0.0;
    int epoch_count = 0;
    for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
      if (cfg.max_steps > 0 && out.steps >= cfg.max_steps) break;
      const int b1 = std::min(n, b0 + cfg.batch_size);
      auto g_band = nn::CanParams<float>::zeros(model.band_config);
      auto g_low = nn::CanParams<float>::zeros(model.low_config);
      for (int j = b0; j < b1; ++j) {
        const int idx = order[static_cast<std::size_t>(j)];
        const Raster& l = lum[static_cast<std::size_t>(idx)];
        const double smax = cfg.smax_choices[static_cast<std::size_t>(
            uniform_index(smax_rng, static_cast<int>(cfg.smax_choices.size())))];
        const Crop c = draw_crop(l.width, l.height, cfg.crop_size, crop_rng, flip_rng);
        const Raster s = crop_flip(calibrate(l, kDisplayMin, smax), c.x0, c.y0, c.w, c.h, c.flip);

        ToneMapTrace trace;
        const Raster xi = tone_map_gamma(s, model, &trace);
        Raster g;
        const double loss = NlpdReference(s, metric).value_and_gradient_gamma(xi, g);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "train_tonemap: non-finite loss at epoch " << epoch + 1 << " on '"
              << corpus.train[static_cast<std::size_t>(idx)].id << "' (S_max " << smax << ")";
          throw NumericError(msg.str());
        }
        for (double& v : g.data) v /= (b1 - b0);
        tone_map_gamma_backward(model, trace, g, g_band, g_low);
        epoch_loss += loss;
        ++epoch_count;
      }
      adam_band.step(model.band, g_band, lr);
      adam_low.step(model.low, g_low, lr);
      ++out.steps;
    }
    emit({epoch + 1, "train", "nlpd", epoch_loss / std::max(epoch_count, 1), lr});

    if (cfg.eval_interval > 0 && !test_lum.empty() && (epoch + 1) % cfg.eval_interval == 0) {
      double acc = 0.0;
      for (const Raster& l : test_lum) {
        const LuminanceMap s = calibrate(l, kDisplayMin, kEvalMaxLuminance);
        acc += nlpd(s, tone_map_single(s, model), metric);
      }
      emit({epoch + 1, "test", "nlpd", acc / static_cast<double>(test_lum.size()), lr});
    }
  }
  return out;
}

FusionTraining train_fusion(const Corpus& corpus, const ToneMapModel& tmodel, const TrainConfig& cfg,
                            const TraceObserver& observer) {
  cfg.validate();
  corpus.validate();
  tmodel.validate();
  const SeedTree tree(cfg.seed);
  auto shuffle_rng = tree.stream("shuffle");
  auto crop_rng = tree.stream("crop");
  auto flip_rng = tree.stream("flip");

  FusionTraining out;
  out.model = FusionModel::initialize(cfg.seed);
  FusionModel& model = out.model;
  nn::Adam<float> adam(model.config);
  const MefSsimConfig metric;

  // The tone-mapping model is frozen, so each image's stack is fixed.
  std::vector<ExposureStack> stacks;
  for (const Raster& l : luminances(corpus.train)) stacks.push_back(generate_stack(l, tmodel, cfg.stack_k));
  std::vector<ExposureStack> test_stacks;
  for (const Raster& l : luminances(corpus.test)) test_stacks.push_back(generate_stack(l, tmodel, cfg.stack_k));
  const int n = static_cast<int>(stacks.size());

  auto emit = [&](TraceRow row) {
    if (observer) observer(row);
    out.trace.push_back(std::move(row));
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps > 0 && out.steps >= cfg.max_steps) break;
    const double lr = cfg.lr_at_epoch(epoch);
    const std::vector<int> order = shuffled(n, shuffle_rng);
    double epoch_score = 0.0;
    int epoch_count = 0;
    for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
      if (cfg.max_steps > 0 && out.steps >= cfg.max_steps) break;
      const int b1 = std::min(n, b0 + cfg.batch_size);
      auto grad = nn::CanParams<float>::zeros(model.config);
      for (int j = b0; j < b1; ++j) {
        const int idx = order[static_cast<std::size_t>(j)];
        const ExposureStack& full = stacks[static_cast<std::size_t>(idx)];
        const Crop c = draw_crop(full.width(), full.height(), cfg.crop_size, crop_rng, flip_rng);
        ExposureStack st;
        st.max_luminances = full.max_luminances;
        for (const Raster& im : full.images) st.images.push_back(crop_flip(im, c.x0, c.y0, c.w, c.h, c.flip));

        FusionTrace trace;
        const FusionResult fr = fuse_stack_traced(st, model, &trace);
        Raster g;
        const double score = mef_ssim_value_and_gradient(st, fr.fused, metric, &g);
        if (!std::isfinite(score)) {
          std::ostringstream msg;
          msg << "train_fusion: non-finite score at epoch " << epoch + 1 << " on '"
              << corpus.train[static_cast<std::size_t>(idx)].id << "'";
          throw NumericError(msg.str());
        }
        // loss = 1 - score
        for (double& v : g.data) v = -v / (b1 - b0);
        fuse_stack_backward(st, model, trace, g, grad);
        epoch_score += score;
        ++epoch_count;
      }
      adam.step(model.params, grad, lr);
      ++out.steps;
    }
    emit({epoch + 1, "train", "mefssim", epoch_score / std::max(epoch_count, 1), lr});

    if (cfg.eval_interval > 0 && !test_stacks.empty() && (epoch + 1) % cfg.eval_interval == 0) {
      double acc = 0.0;
      for (const ExposureStack& st : test_stacks) acc += mef_ssim_variant(st, fuse_stack(st, model).fused, metric);
      emit({epoch + 1, "test", "mefssim", acc / static_cast<double>(test_stacks.size()), lr});
    }
  }
  return out;
}

std::vector<EvalRow> evaluate(const std::vector<CorpusEntry>& split, const ToneMapModel& tmodel,
                              const FusionModel& fmodel, int k) {
  NlpdConfig metric;
  metric.levels = tmodel.levels;
  const std::vector<double> choices = stack_max_luminances(kDefaultStackSize);
  std::vector<EvalRow> rows;
  for (const CorpusEntry& e : split) {
    const LuminanceMap lum = extract_luminance(e.image);
    EvalRow r;
    r.id = e.id;
    {
      const LuminanceMap s = calibrate(lum, kDisplayMin, kEvalMaxLuminance);
      r.nlpd_ref = nlpd(s, tone_map_single(s, tmodel), metric);
    }
    r.nlpd_best = INFINITY;
    for (double smax : choices) {
      const LuminanceMap s = calibrate(lum, kDisplayMin, smax);
      const double v = nlpd(s, tone_map_single(s, tmodel), metric);
      if (v < r.nlpd_best) {
        r.nlpd_best = v;
        r.best_smax = smax;
      }
    }
    const ExposureStack st = generate_stack(lum, tmodel, k);
    r.mef_ssim = mef_ssim_variant(st, fuse_stack(st, fmodel).fused);
    rows.push_back(r);
  }
  return rows;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "id,nlpd_smax1e5,nlpd_best,best_smax,mefssim\n" << std::fixed << std::setprecision(6);
  for (const EvalRow& r : rows)
    os << r.id << ',' << r.nlpd_ref << ',' << r.nlpd_best << ',' << std::setprecision(0) << r.best_smax
       << std::setprecision(6) << ',' << r.mef_ssim << '\n';
  return os.str();
}

}  // namespace nltmo
