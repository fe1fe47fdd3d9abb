#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "f2c/cache.hpp"
#include "f2c/network.hpp"

namespace f2c {

struct TrainConfig {
  double base_lr = 1e-3;
  double gamma = 0.9;  // per-epoch decay
  int epochs = 25;
  int batch_size = 32;
  uint64_t seed = 1;
  double val_fraction = 0.2;
  int threads = 0;
  bool single_precision = false;

  /// Reads "train.*" keys.
  static TrainConfig from_config(const KeyValueConfig& cfg);
  void validate() const;
  std::string canonical_text() const;
};

/// Returns the loss; writes softmax(logits) - onehot(label) into grad.
template <typename Real>
Real softmax_cross_entropy(std::span<const Real> logits, int label, std::span<Real> grad);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t t = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

template <typename Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state, double lr);

/// base_lr * gamma^epoch.
double lr_schedule(int epoch, const TrainConfig& config);

struct CropOffset {
  int top = 0;
  int left = 0;
  friend bool operator==(const CropOffset&, const CropOffset&) = default;
};

/// `count` seeded offsets, each coordinate uniform in [0, margin].
std::vector<CropOffset> crop_offsets(int count, int margin, uint64_t seed);

/// Crops every stream of a stored quad with the same offsets.
std::vector<ImageQuad> augment_crops(const ImageQuad& stored, int height, int width, int count, uint64_t seed);

/// One training/evaluation sample: a cache entry and where to crop it.
struct SampleRef {
  size_t entry = 0;
  CropOffset offset;
};

enum class SampleSet { kTrain, kValidation, kTest, kAll };

SampleSet parse_sample_set(const std::string& name);

/// Source sequences held out for validation: for each class, the last
/// val_fraction (rounded) of a seeded shuffle of its training sources.
std::vector<int> validation_sources(const ImageCache& cache, double val_fraction, uint64_t seed);

/// Training samples are every training entry (both subject orders when the
/// cache was encoded with pair_swap) times `crops` seeded crops. Validation and
/// test use original-order entries with the centre crop.
std::vector<SampleRef> expand_samples(const ImageCache& cache, SampleSet set, const std::vector<int>& validation,
                                      uint64_t seed);

template <typename Real>
typename F2CNet<Real>::Inputs make_inputs(const ImageCache& cache, const SampleRef& sample);

// ----------------------------------------------------------- metrics

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = 0);

  void add(int truth, int predicted);
  int classes() const { return classes_; }
  long long at(int truth, int predicted) const { return counts_[static_cast<size_t>(truth) * classes_ + predicted]; }
  long long total() const;
  long long correct() const;
  long long support(int c) const;    // row sum
  long long predicted(int c) const;  // column sum
  double accuracy() const;
  /// TP / (TP + FP); 0 when the class is never predicted.
  double precision(int c) const;
  /// TP / (TP + FN); 0 when the class has no samples.
  double recall(int c) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int classes_ = 0;
  std::vector<long long> counts_;
};

struct EvalReport {
  std::string split;
  ConfusionMatrix confusion;
};

/// Human-readable table (precision/recall in percent to one decimal) followed
/// by one structured record per line.
std::string format_report(const EvalReport& report);
/// Rebuilds a report from its structured records and cross-checks the
/// derived numbers.
EvalReport parse_report(const std::string& text);

// ----------------------------------------------------------- loops

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;  // NaN without a validation set
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_acc = 0;
  std::filesystem::path best_checkpoint;
};

struct TrainHooks {
  /// Called after each epoch; returning false stops training.
  std::function<bool(const EpochRecord&)> on_epoch;
};

/// Mean softmax cross-entropy over a batch plus its gradient (summed in sample
/// order, so the result does not depend on the thread count).
template <typename Real>
double batch_gradient(const F2CNet<Real>& net, const ImageCache& cache, std::span<const SampleRef> batch,
                      std::span<Real> grad, int threads, int* correct = nullptr);

/// Full loop. Writes metrics.tsv, best.f2cp and last.f2cp into out_dir when it
/// is non-empty.
template <typename Real>
TrainResult train(F2CNet<Real>& net, const ImageCache& cache, const TrainConfig& config,
                  const std::filesystem::path& out_dir, const TrainHooks& hooks = {});

template <typename Real>
std::vector<int> predict(const F2CNet<Real>& net, const ImageCache& cache, std::span<const SampleRef> samples,
                         int threads);

template <typename Real>
EvalReport evaluate(const F2CNet<Real>& net, const ImageCache& cache, SampleSet set, int threads,
                    const std::vector<int>& validation = {});

}  // namespace f2c
