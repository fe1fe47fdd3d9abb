#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "f2c/common.hpp"
#include "f2c/image.hpp"

namespace f2c {

inline constexpr int kFusionStages = 3;

/// Architecture of one F2C model. The image is cut into `segments` temporal
/// bands and five body-part bands of slice_h x slice_w; columns beyond
/// 5 * slice_w are cropped.
struct ArchConfig {
  std::string name = "default";
  int segments = 7;
  int slice_h = 32;
  int slice_w = 44;
  int image_h = 224;
  int image_w = 224;
  std::array<int, kFusionStages> filters{64, 128, 256};
  int hidden = 256;
  int classes = kNtuClasses;

  /// "default" (the full network) or "mini" (desk-scale: m=4, 8x10 slices,
  /// filters 2/3/4).
  static ArchConfig preset(std::string_view name, int classes);
  /// Reads "arch.*" keys on top of the preset named by "arch" (default "default").
  static ArchConfig from_config(const KeyValueConfig& cfg, int classes);

  /// Throws a config error naming the violated constraint.
  void validate() const;
  int crop_columns() const { return image_w - kBodyParts * slice_w; }
  std::string canonical_text() const;
  std::string digest() const { return sha256_hex(canonical_text()); }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct SliceShape {
  int temporal = 0;  // slices along time
  int spatial = 0;   // slices along the joint axis
  int channels = 0;
  int height = 0;
  int width = 0;

  int count() const { return temporal * spatial; }
  friend bool operator==(const SliceShape&, const SliceShape&) = default;
};

struct ShapeLedger {
  SliceShape input;                              // partitioned image
  std::array<SliceShape, kFusionStages> fused;   // after each concatenation step
  std::array<SliceShape, kFusionStages> conv;    // after each conv block
  int stream_features = 0;
  int head_input = 0;
};

ShapeLedger shape_ledger(const ArchConfig& arch);
std::string format_ledger(const ArchConfig& arch);

/// Which slices are concatenated at each stage. Spatial pairs index the
/// previous stage's spatial columns as (left, right) of the mosaic; temporal
/// pairing is always (t, t + 1).
struct FusionPlan {
  int segments = 7;
  std::array<std::vector<std::pair<int, int>>, kFusionStages> spatial_pairs;

  static FusionPlan for_arch(const ArchConfig& arch);
  int temporal_out(int stage) const { return segments - stage; }
  int spatial_out(int stage) const { return static_cast<int>(spatial_pairs[stage - 1].size()); }
};

template <typename Real>
struct Tensor {
  int channels = 0, height = 0, width = 0;
  std::vector<Real> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, Real(0)) {}

  size_t size() const { return data.size(); }
  Real& at(int c, int y, int x) { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
  Real at(int c, int y, int x) const { return data[(static_cast<size_t>(c) * height + y) * width + x]; }
  bool same_shape(const Tensor& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

/// Slices indexed (temporal, spatial), row-major.
template <typename Real>
struct SliceGrid {
  int temporal = 0;
  int spatial = 0;
  std::vector<Tensor<Real>> slices;

  Tensor<Real>& at(int t, int s) { return slices[static_cast<size_t>(t) * spatial + s]; }
  const Tensor<Real>& at(int t, int s) const { return slices[static_cast<size_t>(t) * spatial + s]; }
};

/// Bytes to [0, 1], CHW.
template <typename Real>
Tensor<Real> image_to_tensor(const SkeletonImage& image);

// --------------------------------------------------------------- layer ops

template <typename Real>
SliceGrid<Real> partition_slices(const Tensor<Real>& image, const ArchConfig& arch);
/// Adjoint of partition: scatters slice gradients back, zeros in the cropped strip.
template <typename Real>
Tensor<Real> partition_backward(const SliceGrid<Real>& grads, const ArchConfig& arch);

template <typename Real>
SliceGrid<Real> fuse(const SliceGrid<Real>& grid, int stage, const FusionPlan& plan);
/// Adjoint of fuse: accumulates mosaic quadrants back onto the input slices.
template <typename Real>
SliceGrid<Real> fuse_backward(const SliceGrid<Real>& grads, int stage, const FusionPlan& plan,
                              const SliceShape& input_shape);

/// 3x3, stride 1, zero padding 1. weights: out x in x 3 x 3.
template <typename Real>
void conv3x3_forward(const Tensor<Real>& in, std::span<const Real> weights, std::span<const Real> bias,
                     Tensor<Real>& out);
/// Accumulates into dweights/dbias; writes din when non-null.
template <typename Real>
void conv3x3_backward(const Tensor<Real>& in, std::span<const Real> weights, const Tensor<Real>& dout,
                      std::span<Real> dweights, std::span<Real> dbias, Tensor<Real>* din);

/// 2x2 stride 2, floor on odd sizes. argmax ties resolve to the first
/// maximal element in row-major window order.
template <typename Real>
void maxpool2x2_forward(const Tensor<Real>& in, Tensor<Real>& out, std::vector<int>& argmax);
template <typename Real>
void maxpool2x2_backward(const Tensor<Real>& dout, const std::vector<int>& argmax, Tensor<Real>& din);

template <typename Real>
struct ConvBlockParams {
  std::span<const Real> w1, b1, w2, b2;
};

template <typename Real>
struct ConvBlockGrads {
  std::span<Real> w1, b1, w2, b2;
};

template <typename Real>
struct ConvBlockCache {
  Tensor<Real> input;
  Tensor<Real> act1;  // ReLU(conv1)
  std::vector<int> arg1;
  Tensor<Real> pool1;
  Tensor<Real> act2;
  std::vector<int> arg2;
};

/// conv -> ReLU -> maxpool -> conv -> ReLU -> maxpool.
template <typename Real>
Tensor<Real> conv_block_forward(const Tensor<Real>& in, const ConvBlockParams<Real>& p, ConvBlockCache<Real>* cache);
template <typename Real>
void conv_block_backward(const ConvBlockCache<Real>& cache, const ConvBlockParams<Real>& p, const Tensor<Real>& dout,
                         const ConvBlockGrads<Real>& grads, Tensor<Real>* din);

// --------------------------------------------------------------- model

struct ParamTensor {
  std::string name;
  size_t offset = 0;
  std::vector<int> dims;
  int fan_in = 0;  // 0 for biases
  size_t size() const;
};

template <typename Real>
class F2CNet {
 public:
  struct StreamCache {
    std::array<std::vector<ConvBlockCache<Real>>, kFusionStages> blocks;
  };

  struct Cache {
    std::array<StreamCache, kStreams> streams;
    std::vector<Real> features;  // concatenated stream outputs
    std::vector<Real> hidden;    // ReLU(fc1)
  };

  using Inputs = std::array<Tensor<Real>, kStreams>;
  using real_type = Real;

  explicit F2CNet(ArchConfig arch);

  const ArchConfig& arch() const { return arch_; }
  const FusionPlan& plan() const { return plan_; }
  const ShapeLedger& ledger() const { return ledger_; }
  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  const ParamTensor& tensor(std::string_view name) const;
  size_t param_count() const { return params_.size(); }
  std::span<Real> params() { return params_; }
  std::span<const Real> params() const { return params_; }

  /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
  void init(uint64_t seed);

  /// Worker count for slice-level parallelism (0 = library default).
  void set_threads(int threads) { threads_ = threads; }

  ConvBlockParams<Real> block_params(int stream, int stage, int slice) const;
  ConvBlockGrads<Real> block_grads(std::span<Real> grad, int stream, int stage, int slice) const;

  /// One stream: partition, three fuse + conv-block stages, flatten.
  std::vector<Real> stream_forward(int stream, const Tensor<Real>& image, StreamCache* cache) const;
  /// Logits for one sample.
  std::vector<Real> forward(const Inputs& inputs, Cache* cache = nullptr) const;
  std::vector<Real> predict_proba(const Inputs& inputs) const;

  /// Accumulates parameter gradients into `grad` (same layout as params()).
  void backward(const Cache& cache, std::span<const Real> dlogits, std::span<Real> grad,
                Inputs* dinputs = nullptr) const;

 private:
  void stream_backward(int stream, const StreamCache& cache, std::span<const Real> dfeatures, std::span<Real> grad,
                       Tensor<Real>* dimage) const;
  size_t add_tensor(std::string name, std::vector<int> dims, int fan_in);

  ArchConfig arch_;
  FusionPlan plan_;
  ShapeLedger ledger_;
  std::vector<ParamTensor> tensors_;
  std::vector<Real> params_;
  // [stream][stage] -> first tensor index of slice 0; each block has 4 tensors.
  std::array<std::array<size_t, kFusionStages>, kStreams> block_base_{};
  size_t head_base_ = 0;
  int threads_ = 0;
};

/// Closed-form scalar count for an architecture.
uint64_t param_count(const ArchConfig& arch);

/// One row per parameter group (stage block sizes, head layers).
std::string format_param_table(const ArchConfig& arch);

template <typename Real>
std::vector<Real> softmax(std::span<const Real> logits);

// Checkpoint ("F2CP"): magic, version u16, arch digest (64 hex chars), arch
// text, then per-tensor records (name, dims, float64 data).
template <typename Real>
void save_checkpoint(const F2CNet<Real>& net, const std::filesystem::path& path);
template <typename Real>
F2CNet<Real> load_checkpoint(const std::filesystem::path& path);
ArchConfig read_checkpoint_arch(const std::filesystem::path& path);

}  // namespace f2c
