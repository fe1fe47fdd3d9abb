#include "f2c/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "f2c/error.hpp"

namespace fs = std::filesystem;

namespace f2c {

// ================================================================ config

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  TrainConfig c;
  c.base_lr = cfg.get_double_or("train.lr", c.base_lr);
  c.gamma = cfg.get_double_or("train.gamma", c.gamma);
  c.epochs = static_cast<int>(cfg.get_int_or("train.epochs", c.epochs));
  c.batch_size = static_cast<int>(cfg.get_int_or("train.batch_size", c.batch_size));
  c.seed = static_cast<uint64_t>(cfg.get_int_or("train.seed", static_cast<long long>(c.seed)));
  c.val_fraction = cfg.get_double_or("train.val_fraction", c.val_fraction);
  const std::string precision = cfg.get_or("train.precision", "f64");
  if (precision != "f64" && precision != "f32") {
    fail(ErrorCode::kConfig, "train.precision must be f32 or f64, got '" + precision + "'");
  }
  c.single_precision = precision == "f32";
  return c;
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) fail(ErrorCode::kConfig, "train.lr must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail(ErrorCode::kConfig, "train.gamma must lie in (0, 1]");
  if (epochs < 1) fail(ErrorCode::kConfig, "train.epochs must be at least 1");
  if (batch_size < 1) fail(ErrorCode::kConfig, "train.batch_size must be at least 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) fail(ErrorCode::kConfig, "train.val_fraction must lie in [0, 1)");
}

std::string TrainConfig::canonical_text() const {
  char buf[64];
  KeyValueConfig kv;
  std::snprintf(buf, sizeof buf, "%.17g", base_lr);
  kv.set("train.lr", buf);
  std::snprintf(buf, sizeof buf, "%.17g", gamma);
  kv.set("train.gamma", buf);
  kv.set("train.epochs", std::to_string(epochs));
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.seed", std::to_string(seed));
  std::snprintf(buf, sizeof buf, "%.17g", val_fraction);
  kv.set("train.val_fraction", buf);
  kv.set("train.precision", single_precision ? "f32" : "f64");
  return kv.canonical_text();
}

// ================================================================ loss, optimizer

template <typename Real>
Real softmax_cross_entropy(std::span<const Real> logits, int label, std::span<Real> grad) {
  require(!logits.empty() && grad.size() == logits.size(), "softmax_cross_entropy: size mismatch");
  require(label >= 0 && static_cast<size_t>(label) < logits.size(), "softmax_cross_entropy: label out of range");
  Real mx = logits[0];
  for (Real v : logits) mx = std::max(mx, v);
  Real sum = 0;
  for (Real v : logits) sum += std::exp(v - mx);
  const Real lse = mx + std::log(sum);
  for (size_t i = 0; i < logits.size(); ++i) grad[i] = std::exp(logits[i] - lse);
  grad[static_cast<size_t>(label)] -= Real(1);
  return lse - logits[static_cast<size_t>(label)];
}

template <typename Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& s, double lr) {
  require(params.size() == grads.size() && s.m.size() == params.size() && s.v.size() == params.size(),
          "adam_step: state does not match parameters");
  s.t += 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] = static_cast<Real>(static_cast<double>(params[i]) - lr * mhat / (std::sqrt(vhat) + s.eps));
  }
}

double lr_schedule(int epoch, const TrainConfig& config) {
  require(epoch >= 0, "lr_schedule: negative epoch");
  return config.base_lr * std::pow(config.gamma, static_cast<double>(epoch));
}

// ================================================================ samples

std::vector<CropOffset> crop_offsets(int count, int margin, uint64_t seed) {
  require(count >= 1 && margin >= 0, "crop_offsets: bad count or margin");
  Rng rng(seed);
  std::vector<CropOffset> out(static_cast<size_t>(count));
  for (CropOffset& o : out) {
    o.top = static_cast<int>(rng.below(static_cast<uint64_t>(margin) + 1));
    o.left = static_cast<int>(rng.below(static_cast<uint64_t>(margin) + 1));
  }
  return out;
}

std::vector<ImageQuad> augment_crops(const ImageQuad& stored, int height, int width, int count, uint64_t seed) {
  const int margin_h = stored[0].height - height;
  const int margin_w = stored[0].width - width;
  require(margin_h == margin_w && margin_h >= 0, "augment_crops: stored images must exceed the crop by a square margin");
  std::vector<ImageQuad> out;
  for (const CropOffset& o : crop_offsets(count, margin_h, seed)) {
    ImageQuad q;
    for (int s = 0; s < kStreams; ++s) q[s] = crop(stored[s], o.top, o.left, height, width);
    out.push_back(std::move(q));
  }
  return out;
}

SampleSet parse_sample_set(const std::string& name) {
  if (name == "train") return SampleSet::kTrain;
  if (name == "val" || name == "validation") return SampleSet::kValidation;
  if (name == "test") return SampleSet::kTest;
  if (name == "all") return SampleSet::kAll;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + name + "' (expected train, val, test or all)");
}

namespace {

const char* sample_set_name(SampleSet set) {
  switch (set) {
    case SampleSet::kTrain: return "train";
    case SampleSet::kValidation: return "val";
    case SampleSet::kTest: return "test";
    case SampleSet::kAll: return "all";
  }
  return "?";
}

}  // namespace

std::vector<int> validation_sources(const ImageCache& cache, double val_fraction, uint64_t seed) {
  std::map<int, std::vector<int>> by_class;
  std::set<int> seen;
  for (const CacheEntry& e : cache.entries) {
    if (e.train && seen.insert(e.source).second) by_class[e.label].push_back(e.source);
  }
  std::vector<int> val;
  for (auto& [label, sources] : by_class) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(label) + 0x5eed));
    rng.shuffle(sources);
    const auto n = static_cast<size_t>(std::lround(val_fraction * static_cast<double>(sources.size())));
    val.insert(val.end(), sources.end() - static_cast<std::ptrdiff_t>(std::min(n, sources.size())), sources.end());
  }
  std::sort(val.begin(), val.end());
  return val;
}

std::vector<SampleRef> expand_samples(const ImageCache& cache, SampleSet set, const std::vector<int>& validation,
                                      uint64_t seed) {
  const std::set<int> val(validation.begin(), validation.end());
  const int margin = cache.info.margin;
  const CropOffset centre{margin / 2, margin / 2};
  std::vector<SampleRef> out;
  for (size_t i = 0; i < cache.entries.size(); ++i) {
    const CacheEntry& e = cache.entries[i];
    const bool held_out = val.count(e.source) != 0;
    switch (set) {
      case SampleSet::kTrain:
        if (e.train && !held_out) {
          for (const CropOffset& o : crop_offsets(cache.info.crops, margin, mix_seed(seed, i))) out.push_back({i, o});
        }
        break;
      case SampleSet::kValidation:
        if (e.train && held_out && !e.swapped) out.push_back({i, centre});
        break;
      case SampleSet::kTest:
        if (!e.train && !e.swapped) out.push_back({i, centre});
        break;
      case SampleSet::kAll:
        if (!e.swapped) out.push_back({i, centre});
        break;
    }
  }
  return out;
}

template <typename Real>
typename F2CNet<Real>::Inputs make_inputs(const ImageCache& cache, const SampleRef& sample) {
  require(sample.entry < cache.images.size(), "make_inputs: entry out of range");
  const int h = cache.info.image_h, w = cache.info.image_w;
  typename F2CNet<Real>::Inputs in;
  for (int s = 0; s < kStreams; ++s) {
    const SkeletonImage& img = cache.images[sample.entry][s];
    require(sample.offset.top + h <= img.height && sample.offset.left + w <= img.width, "make_inputs: crop outside image");
    Tensor<Real> t(3, h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          t.at(c, y, x) = static_cast<Real>(img.at(sample.offset.top + y, sample.offset.left + x, c)) / Real(255);
        }
      }
    }
    in[s] = std::move(t);
  }
  return in;
}

// ================================================================ metrics

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<size_t>(classes) * static_cast<size_t>(classes), 0) {
  require(classes >= 0, "ConfusionMatrix: negative class count");
}

void ConfusionMatrix::add(int truth, int predicted) {
  require(truth >= 0 && truth < classes_ && predicted >= 0 && predicted < classes_,
          "ConfusionMatrix::add: class out of range");
  ++counts_[static_cast<size_t>(truth) * classes_ + predicted];
}

long long ConfusionMatrix::total() const {
  long long n = 0;
  for (long long v : counts_) n += v;
  return n;
}

long long ConfusionMatrix::correct() const {
  long long n = 0;
  for (int c = 0; c < classes_; ++c) n += at(c, c);
  return n;
}

long long ConfusionMatrix::support(int c) const {
  long long n = 0;
  for (int p = 0; p < classes_; ++p) n += at(c, p);
  return n;
}

long long ConfusionMatrix::predicted(int c) const {
  long long n = 0;
  for (int t = 0; t < classes_; ++t) n += at(t, c);
  return n;
}

double ConfusionMatrix::accuracy() const {
  const long long n = total();
  return n == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(n);
}

double ConfusionMatrix::precision(int c) const {
  const long long p = predicted(c);
  return p == 0 ? 0.0 : static_cast<double>(at(c, c)) / static_cast<double>(p);
}

double ConfusionMatrix::recall(int c) const {
  const long long s = support(c);
  return s == 0 ? 0.0 : static_cast<double>(at(c, c)) / static_cast<double>(s);
}

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::map<std::string, std::string> record_fields(const std::string& line, size_t lineno) {
  std::map<std::string, std::string> f;
  std::istringstream ss(line);
  std::string tok;
  std::getline(ss, tok, '\t');
  while (std::getline(ss, tok, '\t')) {
    const size_t eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kParse, "report line " + std::to_string(lineno) + ": field without '='");
    f[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return f;
}

long long to_ll(const std::map<std::string, std::string>& f, const std::string& key, size_t lineno) {
  auto it = f.find(key);
  if (it == f.end()) fail(ErrorCode::kParse, "report line " + std::to_string(lineno) + ": missing " + key);
  char* end = nullptr;
  const long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') {
    fail(ErrorCode::kParse, "report line " + std::to_string(lineno) + ": bad integer for " + key);
  }
  return v;
}

double to_d(const std::map<std::string, std::string>& f, const std::string& key, size_t lineno) {
  auto it = f.find(key);
  if (it == f.end()) fail(ErrorCode::kParse, "report line " + std::to_string(lineno) + ": missing " + key);
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0') {
    fail(ErrorCode::kParse, "report line " + std::to_string(lineno) + ": bad number for " + key);
  }
  return v;
}

}  // namespace

std::string format_report(const EvalReport& r) {
  const ConfusionMatrix& m = r.confusion;
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "evaluation on split '%s': %lld samples, accuracy %.1f%% (%lld correct)\n\n",
                r.split.c_str(), m.total(), 100.0 * m.accuracy(), m.correct());
  out << buf;
  out << "class   prec.    rec.  support\n";
  for (int c = 0; c < m.classes(); ++c) {
    std::snprintf(buf, sizeof buf, "%5d  %5.1f   %5.1f  %7lld\n", c + 1, 100.0 * m.precision(c), 100.0 * m.recall(c),
                  m.support(c));
    out << buf;
  }
  out << "\nconfusion (rows = true class, columns = predicted)\n     ";
  for (int c = 0; c < m.classes(); ++c) {
    std::snprintf(buf, sizeof buf, " %5d", c + 1);
    out << buf;
  }
  out << '\n';
  for (int t = 0; t < m.classes(); ++t) {
    std::snprintf(buf, sizeof buf, "%5d", t + 1);
    out << buf;
    for (int p = 0; p < m.classes(); ++p) {
      std::snprintf(buf, sizeof buf, " %5lld", m.at(t, p));
      out << buf;
    }
    out << '\n';
  }
  out << '\n';
  out << "report\tsplit=" << r.split << "\tclasses=" << m.classes() << "\tsamples=" << m.total()
      << "\tcorrect=" << m.correct() << "\taccuracy=" << exact(m.accuracy()) << '\n';
  for (int c = 0; c < m.classes(); ++c) {
    out << "class\tid=" << c << "\tsupport=" << m.support(c) << "\tpredicted=" << m.predicted(c) << "\ttp=" << m.at(c, c)
        << "\tprecision=" << exact(m.precision(c)) << "\trecall=" << exact(m.recall(c)) << '\n';
  }
  for (int t = 0; t < m.classes(); ++t) {
    out << "confusion\trow=" << t << "\tcounts=";
    for (int p = 0; p < m.classes(); ++p) out << (p ? "," : "") << m.at(t, p);
    out << '\n';
  }
  return out.str();
}

EvalReport parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  std::map<std::string, std::string> head;
  size_t head_line = 0;
  std::vector<std::pair<size_t, std::map<std::string, std::string>>> classes;
  std::map<int, std::vector<long long>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string kind = line.substr(0, line.find('\t'));
    if (line.find('\t') == std::string::npos) continue;
    if (kind == "report") {
      head = record_fields(line, lineno);
      head_line = lineno;
    } else if (kind == "class") {
      classes.emplace_back(lineno, record_fields(line, lineno));
    } else if (kind == "confusion") {
      const auto f = record_fields(line, lineno);
      const int row = static_cast<int>(to_ll(f, "row", lineno));
      std::vector<long long> counts;
      std::istringstream cs(f.count("counts") ? f.at("counts") : "");
      std::string tok;
      while (std::getline(cs, tok, ',')) {
        char* end = nullptr;
        counts.push_back(std::strtoll(tok.c_str(), &end, 10));
        if (end == tok.c_str() || *end != '\0') fail(ErrorCode::kParse, "report line " + std::to_string(lineno) + ": bad count");
      }
      rows[row] = std::move(counts);
    }
  }
  if (head_line == 0) fail(ErrorCode::kParse, "report: no 'report' record");
  const int k = static_cast<int>(to_ll(head, "classes", head_line));
  if (k < 0 || static_cast<int>(rows.size()) != k) fail(ErrorCode::kParse, "report: confusion rows do not match class count");
  EvalReport r;
  r.split = head.count("split") ? head.at("split") : "";
  r.confusion = ConfusionMatrix(k);
  for (const auto& [t, counts] : rows) {
    if (t < 0 || t >= k || static_cast<int>(counts.size()) != k) fail(ErrorCode::kParse, "report: malformed confusion row");
    for (int p = 0; p < k; ++p) {
      if (counts[p] < 0) fail(ErrorCode::kParse, "report: negative count");
      for (long long n = 0; n < counts[p]; ++n) r.confusion.add(t, p);
    }
  }
  const ConfusionMatrix& m = r.confusion;
  if (to_ll(head, "samples", head_line) != m.total() || to_ll(head, "correct", head_line) != m.correct() ||
      to_d(head, "accuracy", head_line) != m.accuracy()) {
    fail(ErrorCode::kParse, "report: summary record disagrees with the confusion matrix");
  }
  if (static_cast<int>(classes.size()) != k) fail(ErrorCode::kParse, "report: class records do not match class count");
  for (const auto& [ln, f] : classes) {
    const int c = static_cast<int>(to_ll(f, "id", ln));
    if (c < 0 || c >= k || to_ll(f, "support", ln) != m.support(c) || to_ll(f, "predicted", ln) != m.predicted(c) ||
        to_ll(f, "tp", ln) != m.at(c, c) || to_d(f, "precision", ln) != m.precision(c) ||
        to_d(f, "recall", ln) != m.recall(c)) {
      fail(ErrorCode::kParse, "report line " + std::to_string(ln) + ": class record disagrees with the confusion matrix");
    }
  }
  return r;
}

// ================================================================ loops

namespace {

template <typename Real>
int argmax(const std::vector<Real>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

constexpr size_t kPerSampleGradientBudget = size_t{256} << 20;

}  // namespace

template <typename Real>
double batch_gradient(const F2CNet<Real>& net, const ImageCache& cache, std::span<const SampleRef> batch,
                      std::span<Real> grad, int threads, int* correct) {
  require(!batch.empty(), "batch_gradient: empty batch");
  require(grad.size() == net.param_count(), "batch_gradient: gradient buffer has the wrong size");
  const size_t B = batch.size();
  const Real inv_b = Real(1) / static_cast<Real>(B);
  std::vector<double> losses(B);
  std::vector<int> hits(B);

  auto one = [&](size_t i, std::span<Real> out) {
    const SampleRef& s = batch[i];
    const int label = cache.entries[s.entry].label;
    require(label < net.arch().classes, "sample label " + std::to_string(label) + " exceeds the class count");
    typename F2CNet<Real>::Cache fc;
    const std::vector<Real> logits = net.forward(make_inputs<Real>(cache, s), &fc);
    std::vector<Real> dlogits(logits.size());
    losses[i] = static_cast<double>(softmax_cross_entropy<Real>(logits, label, dlogits));
    hits[i] = argmax(logits) == label ? 1 : 0;
    for (Real& g : dlogits) g *= inv_b;
    net.backward(fc, dlogits, out);
  };

  // Each parameter receives exactly one addition per sample, so summing
  // per-sample buffers in order equals accumulating sample by sample.
  const int workers = threads > 0 ? threads : default_threads();
  if (workers > 1 && B > 1 && B * net.param_count() * sizeof(Real) <= kPerSampleGradientBudget) {
    std::vector<std::vector<Real>> per(B, std::vector<Real>(net.param_count(), Real(0)));
    parallel_for(B, [&](size_t i) { one(i, per[i]); }, workers);
    for (size_t i = 0; i < B; ++i) {
      for (size_t j = 0; j < grad.size(); ++j) grad[j] += per[i][j];
    }
  } else {
    for (size_t i = 0; i < B; ++i) one(i, grad);
  }
  double loss = 0;
  int n_correct = 0;
  for (size_t i = 0; i < B; ++i) {
    loss += losses[i];
    n_correct += hits[i];
  }
  if (correct != nullptr) *correct = n_correct;
  return loss / static_cast<double>(B);
}

template <typename Real>
std::vector<int> predict(const F2CNet<Real>& net, const ImageCache& cache, std::span<const SampleRef> samples,
                         int threads) {
  std::vector<int> out(samples.size());
  parallel_for(
      samples.size(), [&](size_t i) { out[i] = argmax(net.forward(make_inputs<Real>(cache, samples[i]))); }, threads);
  return out;
}

namespace {

void check_compatible(const ArchConfig& arch, const CacheInfo& info) {
  if (arch.classes != info.classes) {
    fail(ErrorCode::kConfig, "architecture has " + std::to_string(arch.classes) + " classes, cache has " +
                                 std::to_string(info.classes));
  }
  if (arch.image_h != info.image_h || arch.image_w != info.image_w) {
    fail(ErrorCode::kConfig, "architecture expects " + std::to_string(arch.image_h) + "x" + std::to_string(arch.image_w) +
                                 " images, cache holds " + std::to_string(info.image_h) + "x" +
                                 std::to_string(info.image_w));
  }
}

double accuracy_of(const std::vector<int>& pred, const ImageCache& cache, std::span<const SampleRef> samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  size_t ok = 0;
  for (size_t i = 0; i < samples.size(); ++i) ok += pred[i] == cache.entries[samples[i].entry].label ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(samples.size());
}

std::string metrics_text(const std::vector<EpochRecord>& history) {
  std::string out = "epoch\tlr\ttrain_loss\ttrain_acc\tval_acc\n";
  char buf[160];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%d\t%.10g\t%.10g\t%.6f\t%.6f\n", r.epoch, r.lr, r.train_loss, r.train_acc, r.val_acc);
    out += buf;
  }
  return out;
}

}  // namespace

template <typename Real>
TrainResult train(F2CNet<Real>& net, const ImageCache& cache, const TrainConfig& config, const fs::path& out_dir,
                  const TrainHooks& hooks) {
  config.validate();
  check_compatible(net.arch(), cache.info);
  const std::vector<int> validation = validation_sources(cache, config.val_fraction, config.seed);
  const std::vector<SampleRef> train_set = expand_samples(cache, SampleSet::kTrain, validation, config.seed);
  const std::vector<SampleRef> val_set = expand_samples(cache, SampleSet::kValidation, validation, config.seed);
  if (train_set.empty()) fail(ErrorCode::kConfig, "training split is empty");
  for (const SampleRef& s : train_set) {
    if (cache.entries[s.entry].label >= net.arch().classes) fail(ErrorCode::kConfig, "class id exceeds class count");
  }

  net.set_threads(config.threads);
  AdamState adam(net.param_count());
  std::vector<Real> grad(net.param_count());
  TrainResult result;
  double best = -1.0;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_schedule(epoch, config);
    std::vector<SampleRef> order = train_set;
    Rng rng(mix_seed(config.seed, static_cast<uint64_t>(epoch) + 1));
    rng.shuffle(order);
    double loss_sum = 0;
    long long hits = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::span<const SampleRef> batch(order.data() + start, end - start);
      std::fill(grad.begin(), grad.end(), Real(0));
      int correct = 0;
      const double loss = batch_gradient<Real>(net, cache, batch, grad, config.threads, &correct);
      if (!std::isfinite(loss)) fail(ErrorCode::kNumeric, "training loss became non-finite at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(batch.size());
      hits += correct;
      adam_step<Real>(net.params(), grad, adam, rec.lr);
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
    rec.val_acc = accuracy_of(predict(net, cache, val_set, config.threads), cache, val_set);
    result.history.push_back(rec);

    const double score = val_set.empty() ? rec.train_acc : rec.val_acc;
    if (score > best) {
      best = score;
      result.best_epoch = epoch;
      result.best_val_acc = rec.val_acc;
      if (!out_dir.empty()) {
        result.best_checkpoint = out_dir / "best.f2cp";
        save_checkpoint(net, result.best_checkpoint);
      }
    }
    if (!out_dir.empty()) write_file_atomic(out_dir / "metrics.tsv", metrics_text(result.history));
    if (hooks.on_epoch && !hooks.on_epoch(rec)) break;
  }
  if (!out_dir.empty()) save_checkpoint(net, out_dir / "last.f2cp");
  return result;
}

template <typename Real>
EvalReport evaluate(const F2CNet<Real>& net, const ImageCache& cache, SampleSet set, int threads,
                    const std::vector<int>& validation) {
  check_compatible(net.arch(), cache.info);
  const std::vector<SampleRef> samples = expand_samples(cache, set, validation, 0);
  if (samples.empty()) fail(ErrorCode::kConfig, std::string("split '") + sample_set_name(set) + "' is empty");
  const std::vector<int> pred = predict(net, cache, samples, threads);
  EvalReport r;
  r.split = sample_set_name(set);
  r.confusion = ConfusionMatrix(net.arch().classes);
  for (size_t i = 0; i < samples.size(); ++i) r.confusion.add(cache.entries[samples[i].entry].label, pred[i]);
  return r;
}

#define F2C_INSTANTIATE(Real)                                                                                        \
  template Real softmax_cross_entropy<Real>(std::span<const Real>, int, std::span<Real>);                            \
  template void adam_step<Real>(std::span<Real>, std::span<const Real>, AdamState&, double);                         \
  template F2CNet<Real>::Inputs make_inputs<Real>(const ImageCache&, const SampleRef&);                              \
  template double batch_gradient<Real>(const F2CNet<Real>&, const ImageCache&, std::span<const SampleRef>,            \
                                       std::span<Real>, int, int*);                                                  \
  template TrainResult train<Real>(F2CNet<Real>&, const ImageCache&, const TrainConfig&, const fs::path&,           \
                                   const TrainHooks&);                                                               \
  template std::vector<int> predict<Real>(const F2CNet<Real>&, const ImageCache&, std::span<const SampleRef>, int); \
  template EvalReport evaluate<Real>(const F2CNet<Real>&, const ImageCache&, SampleSet, int, const std::vector<int>&);

F2C_INSTANTIATE(double)
F2C_INSTANTIATE(float)

#undef F2C_INSTANTIATE

}  // namespace f2c
