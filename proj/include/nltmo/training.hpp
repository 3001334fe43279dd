#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "nltmo/config.hpp"
#include "nltmo/metrics.hpp"
#include "nltmo/tonemap.hpp"

namespace nltmo {

struct TrainConfig {
  double lr = 1e-3;
  double lr_decay = 0.1;    // multiplier applied every decay_interval epochs
  int decay_interval = 200;  // epochs
  int epochs = 500;
  int max_steps = 0;        // 0 = no cap; otherwise training stops after this many optimizer steps
  int batch_size = 4;       // 4 for tone mapping, 1 for fusion
  int crop_size = 128;
  std::uint64_t seed = 0;
  std::vector<double> smax_choices{1e3, 1e4, 1e5, 1e6, 1e7};
  int levels = kDefaultPyramidLevels;
  int stack_k = kDefaultStackSize;
  int eval_interval = 0;    // epochs between held-out evaluations; 0 disables

  void validate() const;
  double lr_at_epoch(int epoch) const;  // epoch is zero-based

  // Every key is optional; absent keys keep the defaults above.
  static TrainConfig from_config(const KeyValueConfig& kv);
  static TrainConfig from_config(const KeyValueConfig& kv, const TrainConfig& defaults);
  KeyValueConfig to_config() const;
  static const std::vector<std::string>& keys();
};

// Defaults for the fusion stage (batch 1).
TrainConfig fusion_defaults();

struct CorpusEntry {
  std::string id;
  HdrImage image;
};

struct Corpus {
  std::vector<CorpusEntry> train;
  std::vector<CorpusEntry> test;

  // Throws when the training split is empty or an id appears in both splits.
  void validate() const;
  // Every .hdr / .pfm file in `dir`, sorted by name; the last `test_count`
  // files form the test split.
  static Corpus load_directory(const std::filesystem::path& dir, int test_count = 0);
};

// One row of the CSV trace: epoch,split,metric,value,lr.
struct TraceRow {
  int epoch = 0;  // 1-based
  std::string split;
  std::string metric;
  double value = 0.0;
  double lr = 0.0;
};

std::string trace_csv(const std::vector<TraceRow>& rows);

using TraceObserver = std::function<void(const TraceRow&)>;

struct ToneMapTraining {
  ToneMapModel model;
  std::vector<TraceRow> trace;
  long long steps = 0;
};

struct FusionTraining {
  FusionModel model;
  std::vector<TraceRow> trace;
  long long steps = 0;
};

// Minimizes NLPD between calibrated crops and the network output. Each
// epoch visits every training image once in shuffled order.
ToneMapTraining train_tonemap(const Corpus& corpus, const TrainConfig& cfg, const TraceObserver& observer = {});
// Continues from an existing model instead of a fresh initialization.
ToneMapTraining train_tonemap(const Corpus& corpus, const TrainConfig& cfg, ToneMapModel init,
                              const TraceObserver& observer = {});

// Maximizes the MEF-SSIM variant of the fused output against its own stack
// with the tone-mapping model frozen.
FusionTraining train_fusion(const Corpus& corpus, const ToneMapModel& tmodel, const TrainConfig& cfg,
                            const TraceObserver& observer = {});

struct EvalRow {
  std::string id;
  double nlpd_ref = 0.0;   // at S_max = 1e5
  double nlpd_best = 0.0;  // lowest over the stack calibrations
  double best_smax = 0.0;
  double mef_ssim = 0.0;   // fused output against its own stack
};

inline constexpr double kEvalMaxLuminance = 1e5;

std::vector<EvalRow> evaluate(const std::vector<CorpusEntry>& split, const ToneMapModel& tmodel,
                              const FusionModel& fmodel, int k = kDefaultStackSize);
std::string eval_csv(const std::vector<EvalRow>& rows);

}  // namespace nltmo
