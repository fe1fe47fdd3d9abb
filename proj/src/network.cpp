#include "f2c/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "binary_io.hpp"
#include "f2c/error.hpp"

namespace f2c {

// ================================================================ config

ArchConfig ArchConfig::preset(std::string_view name, int classes) {
  ArchConfig a;
  if (name == "default") {
    // defaults above
  } else if (name == "mini") {
    a.name = "mini";
    a.segments = 4;
    a.slice_h = 8;
    a.slice_w = 10;
    a.image_h = 32;
    a.image_w = 52;  // keeps a 2-column cropped strip, like the full network
    a.filters = {2, 3, 4};
    a.hidden = 32;
  } else {
    fail(ErrorCode::kConfig, "unknown architecture preset '" + std::string(name) + "' (expected default or mini)");
  }
  a.classes = classes;
  return a;
}

ArchConfig ArchConfig::from_config(const KeyValueConfig& cfg, int classes) {
  ArchConfig a = preset(cfg.get_or("arch", "default"), classes);
  a.name = cfg.get_or("arch.name", a.name);
  a.segments = static_cast<int>(cfg.get_int_or("arch.segments", a.segments));
  a.slice_h = static_cast<int>(cfg.get_int_or("arch.slice_h", a.slice_h));
  a.slice_w = static_cast<int>(cfg.get_int_or("arch.slice_w", a.slice_w));
  a.image_h = static_cast<int>(cfg.get_int_or("arch.image_h", a.image_h));
  a.image_w = static_cast<int>(cfg.get_int_or("arch.image_w", a.image_w));
  a.hidden = static_cast<int>(cfg.get_int_or("arch.hidden", a.hidden));
  a.classes = static_cast<int>(cfg.get_int_or("arch.classes", a.classes));
  if (cfg.has("arch.filters")) {
    const std::vector<int> f = cfg.get_ints("arch.filters");
    if (f.size() != kFusionStages) fail(ErrorCode::kConfig, "arch.filters needs three values");
    std::copy(f.begin(), f.end(), a.filters.begin());
  }
  return a;
}

namespace {

int pooled(int x) { return x / 2; }

}  // namespace

void ArchConfig::validate() const {
  auto bad = [&](const std::string& what) { fail(ErrorCode::kConfig, "architecture '" + name + "': " + what); };
  if (segments < kFusionStages + 1) {
    bad("segments m = " + std::to_string(segments) +
        " breaks the 3-stage fusion chain m -> m-1 -> m-2 -> m-3; need m >= 4 so the last stage keeps a slice");
  }
  if (slice_h < 1 || slice_w < 1) bad("slice dimensions must be positive");
  if (image_h != segments * slice_h) {
    bad("image height " + std::to_string(image_h) + " must equal segments x slice height (" +
        std::to_string(segments) + " x " + std::to_string(slice_h) + ")");
  }
  if (image_w < kBodyParts * slice_w) {
    bad("image width " + std::to_string(image_w) + " is narrower than 5 body-part slices of " + std::to_string(slice_w));
  }
  for (int f : filters) {
    if (f < 1) bad("filter counts must be positive");
  }
  if (hidden < 1) bad("hidden width must be positive");
  if (classes < 2) bad("need at least 2 classes");
  int h = slice_h, w = slice_w;
  for (int stage = 0; stage < kFusionStages; ++stage) {
    h = pooled(pooled(2 * h));
    w = pooled(pooled(2 * w));
    if (h < 1 || w < 1) bad("stage " + std::to_string(stage + 1) + " pools the slices away; use larger slices");
  }
}

std::string ArchConfig::canonical_text() const {
  KeyValueConfig kv;
  kv.set("arch.name", name);
  kv.set("arch.segments", std::to_string(segments));
  kv.set("arch.slice_h", std::to_string(slice_h));
  kv.set("arch.slice_w", std::to_string(slice_w));
  kv.set("arch.image_h", std::to_string(image_h));
  kv.set("arch.image_w", std::to_string(image_w));
  kv.set("arch.filters",
         std::to_string(filters[0]) + " " + std::to_string(filters[1]) + " " + std::to_string(filters[2]));
  kv.set("arch.hidden", std::to_string(hidden));
  kv.set("arch.classes", std::to_string(classes));
  return kv.canonical_text();
}

ShapeLedger shape_ledger(const ArchConfig& arch) {
  arch.validate();
  ShapeLedger l;
  l.input = {arch.segments, kBodyParts, 3, arch.slice_h, arch.slice_w};
  const FusionPlan plan = FusionPlan::for_arch(arch);
  SliceShape cur = l.input;
  for (int stage = 1; stage <= kFusionStages; ++stage) {
    SliceShape fused{plan.temporal_out(stage), plan.spatial_out(stage), cur.channels, 2 * cur.height, 2 * cur.width};
    SliceShape conv{fused.temporal, fused.spatial, arch.filters[stage - 1], pooled(pooled(fused.height)),
                    pooled(pooled(fused.width))};
    l.fused[stage - 1] = fused;
    l.conv[stage - 1] = conv;
    cur = conv;
  }
  l.stream_features = cur.count() * cur.channels * cur.height * cur.width;
  l.head_input = kStreams * l.stream_features;
  return l;
}

namespace {

std::string with_commas(long long v) {
  std::string s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<size_t>(i), ",");
  return s;
}

}  // namespace

std::string format_ledger(const ArchConfig& arch) {
  const ShapeLedger l = shape_ledger(arch);
  std::ostringstream out;
  char buf[160];
  out << "architecture " << arch.name << "  (digest " << arch.digest().substr(0, 16) << ")\n";
  std::snprintf(buf, sizeof buf, "input image      %dx%d RGB, %d cropped column(s)\n", arch.image_h, arch.image_w,
                arch.crop_columns());
  out << buf;
  std::snprintf(buf, sizeof buf, "%-16s %7s %9s %7s %6s\n", "step", "slices", "channels", "height", "width");
  out << buf;
  auto row = [&](const char* label, const SliceShape& s) {
    std::snprintf(buf, sizeof buf, "%-16s %7d %9d %7d %6d\n", label, s.count(), s.channels, s.height, s.width);
    out << buf;
  };
  row("partition", l.input);
  const char* fuse_names[] = {"fuse-1", "fuse-2", "fuse-3"};
  const char* conv_names[] = {"conv-block-1", "conv-block-2", "conv-block-3"};
  for (int k = 0; k < kFusionStages; ++k) {
    row(fuse_names[k], l.fused[k]);
    row(conv_names[k], l.conv[k]);
  }
  const int per_slice = l.conv[2].channels * l.conv[2].height * l.conv[2].width;
  out << "output           " << l.conv[2].count() << "x" << with_commas(per_slice) << " per stream ("
      << with_commas(l.stream_features) << "), head input " << with_commas(l.head_input) << "\n";

  // Machine-readable records.
  auto record = [&](const char* step, const SliceShape& s) {
    std::snprintf(buf, sizeof buf, "ledger\tstep=%s\tslices=%d\tchannels=%d\theight=%d\twidth=%d\n", step, s.count(),
                  s.channels, s.height, s.width);
    out << buf;
  };
  record("partition", l.input);
  for (int k = 0; k < kFusionStages; ++k) {
    record(fuse_names[k], l.fused[k]);
    record(conv_names[k], l.conv[k]);
  }
  std::snprintf(buf, sizeof buf, "ledger\tstep=output\tslices=%d\tper_slice=%d\tstream=%d\thead_input=%d\n",
                l.conv[2].count(), per_slice, l.stream_features, l.head_input);
  out << buf;
  return out.str();
}

FusionPlan FusionPlan::for_arch(const ArchConfig& arch) {
  FusionPlan p;
  p.segments = arch.segments;
  using BP = BodyPart;
  auto i = [](BP b) { return static_cast<int>(b); };
  // Stage 1: each limb with the torso (limb on the left of the mosaic).
  p.spatial_pairs[0] = {{i(BP::kLeftArm), i(BP::kTorso)},
                        {i(BP::kRightArm), i(BP::kTorso)},
                        {i(BP::kLeftLeg), i(BP::kTorso)},
                        {i(BP::kRightLeg), i(BP::kTorso)}};
  // Stage 2: the two arm groups, the two leg groups.
  p.spatial_pairs[1] = {{0, 1}, {2, 3}};
  // Stage 3: upper body with lower body.
  p.spatial_pairs[2] = {{0, 1}};
  return p;
}

// ================================================================ tensors

template <typename Real>
Tensor<Real> image_to_tensor(const SkeletonImage& image) {
  Tensor<Real> t(3, image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = static_cast<Real>(image.at(y, x, c)) / Real(255);
    }
  }
  return t;
}

template <typename Real>
SliceGrid<Real> partition_slices(const Tensor<Real>& image, const ArchConfig& arch) {
  require(image.channels == 3 && image.height == arch.image_h && image.width == arch.image_w,
          "partition_slices: image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
              ", architecture expects " + std::to_string(arch.image_h) + "x" + std::to_string(arch.image_w));
  SliceGrid<Real> g;
  g.temporal = arch.segments;
  g.spatial = kBodyParts;
  g.slices.reserve(static_cast<size_t>(g.temporal) * g.spatial);
  for (int t = 0; t < g.temporal; ++t) {
    for (int s = 0; s < g.spatial; ++s) {
      Tensor<Real> slice(3, arch.slice_h, arch.slice_w);
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < arch.slice_h; ++y) {
          const Real* src = &image.data[(static_cast<size_t>(c) * image.height + t * arch.slice_h + y) * image.width +
                                        static_cast<size_t>(s) * arch.slice_w];
          std::copy(src, src + arch.slice_w, &slice.at(c, y, 0));
        }
      }
      g.slices.push_back(std::move(slice));
    }
  }
  return g;
}

template <typename Real>
Tensor<Real> partition_backward(const SliceGrid<Real>& grads, const ArchConfig& arch) {
  Tensor<Real> out(3, arch.image_h, arch.image_w);
  for (int t = 0; t < grads.temporal; ++t) {
    for (int s = 0; s < grads.spatial; ++s) {
      const Tensor<Real>& g = grads.at(t, s);
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < arch.slice_h; ++y) {
          for (int x = 0; x < arch.slice_w; ++x) out.at(c, t * arch.slice_h + y, s * arch.slice_w + x) += g.at(c, y, x);
        }
      }
    }
  }
  return out;
}

template <typename Real>
SliceGrid<Real> fuse(const SliceGrid<Real>& grid, int stage, const FusionPlan& plan) {
  require(stage >= 1 && stage <= kFusionStages, "fuse: stage must be 1..3");
  const auto& pairs = plan.spatial_pairs[stage - 1];
  require(grid.temporal == plan.segments - stage + 1, "fuse: wrong temporal slice count for this stage");
  SliceGrid<Real> out;
  out.temporal = grid.temporal - 1;
  out.spatial = static_cast<int>(pairs.size());
  out.slices.reserve(static_cast<size_t>(out.temporal) * out.spatial);
  for (int t = 0; t < out.temporal; ++t) {
    for (const auto& [a, b] : pairs) {
      require(a < grid.spatial && b < grid.spatial, "fuse: missing pair member");
      const Tensor<Real>* quad[2][2] = {{&grid.at(t, a), &grid.at(t, b)}, {&grid.at(t + 1, a), &grid.at(t + 1, b)}};
      const Tensor<Real>& ref = *quad[0][0];
      Tensor<Real> m(ref.channels, 2 * ref.height, 2 * ref.width);
      for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx) {
          const Tensor<Real>& src = *quad[qy][qx];
          require(src.same_shape(ref), "fuse: slices of different shapes");
          for (int c = 0; c < ref.channels; ++c) {
            for (int y = 0; y < ref.height; ++y) {
              std::copy(&src.data[(static_cast<size_t>(c) * ref.height + y) * ref.width],
                        &src.data[(static_cast<size_t>(c) * ref.height + y) * ref.width] + ref.width,
                        &m.at(c, qy * ref.height + y, qx * ref.width));
            }
          }
        }
      }
      out.slices.push_back(std::move(m));
    }
  }
  return out;
}

template <typename Real>
SliceGrid<Real> fuse_backward(const SliceGrid<Real>& grads, int stage, const FusionPlan& plan,
                              const SliceShape& in) {
  const auto& pairs = plan.spatial_pairs[stage - 1];
  SliceGrid<Real> out;
  out.temporal = in.temporal;
  out.spatial = in.spatial;
  out.slices.assign(static_cast<size_t>(in.count()), Tensor<Real>(in.channels, in.height, in.width));
  for (int t = 0; t < grads.temporal; ++t) {
    for (int p = 0; p < grads.spatial; ++p) {
      const auto [a, b] = pairs[p];
      const Tensor<Real>& g = grads.at(t, p);
      Tensor<Real>* quad[2][2] = {{&out.at(t, a), &out.at(t, b)}, {&out.at(t + 1, a), &out.at(t + 1, b)}};
      for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx) {
          Tensor<Real>& dst = *quad[qy][qx];
          for (int c = 0; c < in.channels; ++c) {
            for (int y = 0; y < in.height; ++y) {
              const Real* src = &g.data[(static_cast<size_t>(c) * g.height + qy * in.height + y) * g.width + qx * in.width];
              Real* d = &dst.at(c, y, 0);
              for (int x = 0; x < in.width; ++x) d[x] += src[x];
            }
          }
        }
      }
    }
  }
  return out;
}

// ================================================================ layers

namespace {

template <typename Real>
void im2col3x3(const Tensor<Real>& in, std::vector<Real>& col) {
  const int H = in.height, W = in.width;
  const size_t hw = static_cast<size_t>(H) * W;
  col.assign(static_cast<size_t>(in.channels) * 9 * hw, Real(0));
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        Real* row = &col[(static_cast<size_t>(c) * 9 + ky * 3 + kx) * hw];
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          const Real* src = &in.data[(static_cast<size_t>(c) * H + sy) * W];
          for (int x = 0; x < W; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < W) row[static_cast<size_t>(y) * W + x] = src[sx];
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im3x3(const std::vector<Real>& col, Tensor<Real>& out) {
  const int H = out.height, W = out.width;
  const size_t hw = static_cast<size_t>(H) * W;
  std::fill(out.data.begin(), out.data.end(), Real(0));
  for (int c = 0; c < out.channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Real* row = &col[(static_cast<size_t>(c) * 9 + ky * 3 + kx) * hw];
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          Real* dst = &out.data[(static_cast<size_t>(c) * H + sy) * W];
          for (int x = 0; x < W; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < W) dst[sx] += row[static_cast<size_t>(y) * W + x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Real>
void conv3x3_forward(const Tensor<Real>& in, std::span<const Real> weights, std::span<const Real> bias,
                     Tensor<Real>& out) {
  const int cout = static_cast<int>(bias.size());
  const size_t k = static_cast<size_t>(in.channels) * 9;
  require(weights.size() == k * cout, "conv3x3_forward: weight shape does not match input channels");
  const size_t hw = static_cast<size_t>(in.height) * in.width;
  std::vector<Real> col;
  im2col3x3(in, col);
  out = Tensor<Real>(cout, in.height, in.width);
  for (int o = 0; o < cout; ++o) {
    Real* dst = &out.data[static_cast<size_t>(o) * hw];
    std::fill(dst, dst + hw, bias[o]);
    const Real* w = &weights[static_cast<size_t>(o) * k];
    for (size_t i = 0; i < k; ++i) {
      const Real wi = w[i];
      const Real* src = &col[i * hw];
      for (size_t p = 0; p < hw; ++p) dst[p] += wi * src[p];
    }
  }
}

template <typename Real>
void conv3x3_backward(const Tensor<Real>& in, std::span<const Real> weights, const Tensor<Real>& dout,
                      std::span<Real> dweights, std::span<Real> dbias, Tensor<Real>* din) {
  const int cout = dout.channels;
  const size_t k = static_cast<size_t>(in.channels) * 9;
  const size_t hw = static_cast<size_t>(in.height) * in.width;
  require(dweights.size() == k * cout && dbias.size() == static_cast<size_t>(cout), "conv3x3_backward: shape mismatch");
  std::vector<Real> col;
  im2col3x3(in, col);
  for (int o = 0; o < cout; ++o) {
    const Real* g = &dout.data[static_cast<size_t>(o) * hw];
    Real bsum = 0;
    for (size_t p = 0; p < hw; ++p) bsum += g[p];
    dbias[o] += bsum;
    Real* dw = &dweights[static_cast<size_t>(o) * k];
    for (size_t i = 0; i < k; ++i) {
      const Real* src = &col[i * hw];
      Real acc = 0;
      for (size_t p = 0; p < hw; ++p) acc += g[p] * src[p];
      dw[i] += acc;
    }
  }
  if (din == nullptr) return;
  std::vector<Real> dcol(k * hw, Real(0));
  for (int o = 0; o < cout; ++o) {
    const Real* g = &dout.data[static_cast<size_t>(o) * hw];
    const Real* w = &weights[static_cast<size_t>(o) * k];
    for (size_t i = 0; i < k; ++i) {
      const Real wi = w[i];
      Real* dst = &dcol[i * hw];
      for (size_t p = 0; p < hw; ++p) dst[p] += wi * g[p];
    }
  }
  *din = Tensor<Real>(in.channels, in.height, in.width);
  col2im3x3(dcol, *din);
}

template <typename Real>
void maxpool2x2_forward(const Tensor<Real>& in, Tensor<Real>& out, std::vector<int>& argmax) {
  const int oh = in.height / 2, ow = in.width / 2;
  require(oh >= 1 && ow >= 1, "maxpool2x2: input smaller than the window");
  out = Tensor<Real>(in.channels, oh, ow);
  argmax.assign(out.size(), 0);
  size_t o = 0;
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x, ++o) {
        int best = (c * in.height + 2 * y) * in.width + 2 * x;
        Real best_v = in.data[best];
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int idx = (c * in.height + 2 * y + dy) * in.width + 2 * x + dx;
            if (in.data[idx] > best_v) {
              best_v = in.data[idx];
              best = idx;
            }
          }
        }
        out.data[o] = best_v;
        argmax[o] = best;
      }
    }
  }
}

template <typename Real>
void maxpool2x2_backward(const Tensor<Real>& dout, const std::vector<int>& argmax, Tensor<Real>& din) {
  std::fill(din.data.begin(), din.data.end(), Real(0));
  for (size_t o = 0; o < dout.size(); ++o) din.data[static_cast<size_t>(argmax[o])] += dout.data[o];
}

namespace {

template <typename Real>
void relu_inplace(Tensor<Real>& t) {
  for (Real& v : t.data) v = v > Real(0) ? v : Real(0);
}

template <typename Real>
void relu_mask(const Tensor<Real>& act, Tensor<Real>& grad) {
  for (size_t i = 0; i < grad.size(); ++i) {
    if (!(act.data[i] > Real(0))) grad.data[i] = Real(0);
  }
}

}  // namespace

template <typename Real>
Tensor<Real> conv_block_forward(const Tensor<Real>& in, const ConvBlockParams<Real>& p, ConvBlockCache<Real>* cache) {
  Tensor<Real> act1, pool1, act2, out;
  std::vector<int> arg1, arg2;
  conv3x3_forward(in, p.w1, p.b1, act1);
  relu_inplace(act1);
  maxpool2x2_forward(act1, pool1, arg1);
  conv3x3_forward(pool1, p.w2, p.b2, act2);
  relu_inplace(act2);
  maxpool2x2_forward(act2, out, arg2);
  if (cache != nullptr) {
    cache->input = in;
    cache->act1 = std::move(act1);
    cache->arg1 = std::move(arg1);
    cache->pool1 = std::move(pool1);
    cache->act2 = std::move(act2);
    cache->arg2 = std::move(arg2);
  }
  return out;
}

template <typename Real>
void conv_block_backward(const ConvBlockCache<Real>& cache, const ConvBlockParams<Real>& p, const Tensor<Real>& dout,
                         const ConvBlockGrads<Real>& grads, Tensor<Real>* din) {
  require(!cache.arg2.empty(), "conv_block_backward: forward cache missing");
  Tensor<Real> dact2(cache.act2.channels, cache.act2.height, cache.act2.width);
  maxpool2x2_backward(dout, cache.arg2, dact2);
  relu_mask(cache.act2, dact2);
  Tensor<Real> dpool1;
  conv3x3_backward(cache.pool1, p.w2, dact2, grads.w2, grads.b2, &dpool1);
  Tensor<Real> dact1(cache.act1.channels, cache.act1.height, cache.act1.width);
  maxpool2x2_backward(dpool1, cache.arg1, dact1);
  relu_mask(cache.act1, dact1);
  conv3x3_backward(cache.input, p.w1, dact1, grads.w1, grads.b1, din);
}

// ================================================================ model

size_t ParamTensor::size() const {
  size_t n = 1;
  for (int d : dims) n *= static_cast<size_t>(d);
  return n;
}

template <typename Real>
size_t F2CNet<Real>::add_tensor(std::string name, std::vector<int> dims, int fan_in) {
  ParamTensor t{std::move(name), params_.size(), std::move(dims), fan_in};
  params_.resize(params_.size() + t.size(), Real(0));
  tensors_.push_back(std::move(t));
  return tensors_.size() - 1;
}

template <typename Real>
F2CNet<Real>::F2CNet(ArchConfig arch)
    : arch_(std::move(arch)), plan_(FusionPlan::for_arch(arch_)), ledger_(shape_ledger(arch_)) {
  for (int s = 0; s < kStreams; ++s) {
    for (int stage = 1; stage <= kFusionStages; ++stage) {
      const SliceShape& fused = ledger_.fused[stage - 1];
      const int cin = fused.channels;
      const int f = arch_.filters[stage - 1];
      block_base_[s][stage - 1] = tensors_.size();
      for (int t = 0; t < fused.temporal; ++t) {
        for (int p = 0; p < fused.spatial; ++p) {
          const std::string prefix = std::string(stream_name(s)) + ".stage" + std::to_string(stage) + ".t" +
                                     std::to_string(t) + "p" + std::to_string(p);
          add_tensor(prefix + ".conv1.weight", {f, cin, 3, 3}, cin * 9);
          add_tensor(prefix + ".conv1.bias", {f}, 0);
          add_tensor(prefix + ".conv2.weight", {f, f, 3, 3}, f * 9);
          add_tensor(prefix + ".conv2.bias", {f}, 0);
        }
      }
    }
  }
  head_base_ = tensors_.size();
  add_tensor("head.fc1.weight", {arch_.hidden, ledger_.head_input}, ledger_.head_input);
  add_tensor("head.fc1.bias", {arch_.hidden}, 0);
  add_tensor("head.fc2.weight", {arch_.classes, arch_.hidden}, arch_.hidden);
  add_tensor("head.fc2.bias", {arch_.classes}, 0);
}

template <typename Real>
const ParamTensor& F2CNet<Real>::tensor(std::string_view name) const {
  for (const ParamTensor& t : tensors_) {
    if (t.name == name) return t;
  }
  fail(ErrorCode::kInvalidArgument, "no parameter tensor named '" + std::string(name) + "'");
}

template <typename Real>
void F2CNet<Real>::init(uint64_t seed) {
  Rng rng(seed);
  for (const ParamTensor& t : tensors_) {
    Real* p = &params_[t.offset];
    if (t.fan_in == 0) {
      std::fill(p, p + t.size(), Real(0));
      continue;
    }
    const double bound = std::sqrt(6.0 / t.fan_in);
    for (size_t i = 0; i < t.size(); ++i) p[i] = static_cast<Real>(rng.uniform(-bound, bound));
  }
}

template <typename Real>
ConvBlockParams<Real> F2CNet<Real>::block_params(int stream, int stage, int slice) const {
  const size_t base = block_base_[stream][stage - 1] + static_cast<size_t>(slice) * 4;
  auto view = [&](size_t i) {
    const ParamTensor& t = tensors_[base + i];
    return std::span<const Real>(&params_[t.offset], t.size());
  };
  return {view(0), view(1), view(2), view(3)};
}

template <typename Real>
ConvBlockGrads<Real> F2CNet<Real>::block_grads(std::span<Real> grad, int stream, int stage, int slice) const {
  const size_t base = block_base_[stream][stage - 1] + static_cast<size_t>(slice) * 4;
  auto view = [&](size_t i) {
    const ParamTensor& t = tensors_[base + i];
    return grad.subspan(t.offset, t.size());
  };
  return {view(0), view(1), view(2), view(3)};
}

template <typename Real>
std::vector<Real> F2CNet<Real>::stream_forward(int stream, const Tensor<Real>& image, StreamCache* cache) const {
  SliceGrid<Real> cur = partition_slices(image, arch_);
  for (int stage = 1; stage <= kFusionStages; ++stage) {
    const SliceGrid<Real> fused = fuse(cur, stage, plan_);
    SliceGrid<Real> next;
    next.temporal = fused.temporal;
    next.spatial = fused.spatial;
    next.slices.resize(fused.slices.size());
    if (cache != nullptr) cache->blocks[stage - 1].resize(fused.slices.size());
    parallel_for(
        fused.slices.size(),
        [&](size_t i) {
          next.slices[i] = conv_block_forward(fused.slices[i], block_params(stream, stage, static_cast<int>(i)),
                                              cache != nullptr ? &cache->blocks[stage - 1][i] : nullptr);
        },
        threads_);
    cur = std::move(next);
  }
  std::vector<Real> out;
  out.reserve(static_cast<size_t>(ledger_.stream_features));
  for (const Tensor<Real>& s : cur.slices) out.insert(out.end(), s.data.begin(), s.data.end());
  return out;
}

template <typename Real>
std::vector<Real> F2CNet<Real>::forward(const Inputs& inputs, Cache* cache) const {
  const size_t nf = static_cast<size_t>(ledger_.stream_features);
  std::vector<Real> features(kStreams * nf);
  for (int s = 0; s < kStreams; ++s) {
    const std::vector<Real> f = stream_forward(s, inputs[s], cache != nullptr ? &cache->streams[s] : nullptr);
    std::copy(f.begin(), f.end(), features.begin() + static_cast<std::ptrdiff_t>(s * nf));
  }
  const ParamTensor& w1 = tensors_[head_base_];
  const ParamTensor& b1 = tensors_[head_base_ + 1];
  const ParamTensor& w2 = tensors_[head_base_ + 2];
  const ParamTensor& b2 = tensors_[head_base_ + 3];
  const size_t in = features.size();
  std::vector<Real> hidden(static_cast<size_t>(arch_.hidden));
  for (int j = 0; j < arch_.hidden; ++j) {
    const Real* w = &params_[w1.offset + static_cast<size_t>(j) * in];
    Real acc = params_[b1.offset + j];
    for (size_t i = 0; i < in; ++i) acc += w[i] * features[i];
    hidden[j] = acc > Real(0) ? acc : Real(0);
  }
  std::vector<Real> logits(static_cast<size_t>(arch_.classes));
  for (int c = 0; c < arch_.classes; ++c) {
    const Real* w = &params_[w2.offset + static_cast<size_t>(c) * arch_.hidden];
    Real acc = params_[b2.offset + c];
    for (int j = 0; j < arch_.hidden; ++j) acc += w[j] * hidden[j];
    logits[c] = acc;
  }
  if (cache != nullptr) {
    cache->features = std::move(features);
    cache->hidden = std::move(hidden);
  }
  return logits;
}

template <typename Real>
std::vector<Real> softmax(std::span<const Real> logits) {
  Real mx = logits[0];
  for (Real v : logits) mx = std::max(mx, v);
  std::vector<Real> p(logits.size());
  Real sum = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (Real& v : p) v /= sum;
  return p;
}

template <typename Real>
std::vector<Real> F2CNet<Real>::predict_proba(const Inputs& inputs) const {
  const std::vector<Real> logits = forward(inputs);
  return softmax<Real>(logits);
}

template <typename Real>
void F2CNet<Real>::backward(const Cache& cache, std::span<const Real> dlogits, std::span<Real> grad,
                            Inputs* dinputs) const {
  require(!cache.features.empty() && !cache.hidden.empty(), "backward: forward cache missing");
  require(grad.size() == params_.size(), "backward: gradient buffer has the wrong size");
  require(dlogits.size() == static_cast<size_t>(arch_.classes), "backward: dlogits has the wrong size");
  const ParamTensor& w1 = tensors_[head_base_];
  const ParamTensor& b1 = tensors_[head_base_ + 1];
  const ParamTensor& w2 = tensors_[head_base_ + 2];
  const ParamTensor& b2 = tensors_[head_base_ + 3];
  const size_t in = cache.features.size();
  const int H = arch_.hidden;

  std::vector<Real> dhidden(static_cast<size_t>(H), Real(0));
  for (int c = 0; c < arch_.classes; ++c) {
    const Real g = dlogits[c];
    grad[b2.offset + c] += g;
    Real* gw = &grad[w2.offset + static_cast<size_t>(c) * H];
    const Real* w = &params_[w2.offset + static_cast<size_t>(c) * H];
    for (int j = 0; j < H; ++j) {
      gw[j] += g * cache.hidden[j];
      dhidden[j] += w[j] * g;
    }
  }
  for (int j = 0; j < H; ++j) {
    if (!(cache.hidden[j] > Real(0))) dhidden[j] = Real(0);
  }
  std::vector<Real> dfeatures(in, Real(0));
  for (int j = 0; j < H; ++j) {
    const Real g = dhidden[j];
    if (g == Real(0)) continue;
    grad[b1.offset + j] += g;
    Real* gw = &grad[w1.offset + static_cast<size_t>(j) * in];
    const Real* w = &params_[w1.offset + static_cast<size_t>(j) * in];
    for (size_t i = 0; i < in; ++i) {
      gw[i] += g * cache.features[i];
      dfeatures[i] += w[i] * g;
    }
  }
  const size_t nf = static_cast<size_t>(ledger_.stream_features);
  for (int s = 0; s < kStreams; ++s) {
    stream_backward(s, cache.streams[s], std::span<const Real>(dfeatures).subspan(s * nf, nf), grad,
                    dinputs != nullptr ? &(*dinputs)[s] : nullptr);
  }
}

template <typename Real>
void F2CNet<Real>::stream_backward(int stream, const StreamCache& cache, std::span<const Real> dfeatures,
                                   std::span<Real> grad, Tensor<Real>* dimage) const {
  // Unflatten into the last conv grid.
  const SliceShape& last = ledger_.conv[kFusionStages - 1];
  SliceGrid<Real> dcur;
  dcur.temporal = last.temporal;
  dcur.spatial = last.spatial;
  size_t off = 0;
  for (int i = 0; i < last.count(); ++i) {
    Tensor<Real> t(last.channels, last.height, last.width);
    std::copy(dfeatures.begin() + static_cast<std::ptrdiff_t>(off),
              dfeatures.begin() + static_cast<std::ptrdiff_t>(off + t.size()), t.data.begin());
    off += t.size();
    dcur.slices.push_back(std::move(t));
  }
  for (int stage = kFusionStages; stage >= 1; --stage) {
    const auto& blocks = cache.blocks[stage - 1];
    require(static_cast<int>(blocks.size()) == ledger_.fused[stage - 1].count(), "backward: stream cache missing");
    const bool need_input_grad = stage > 1 || dimage != nullptr;
    SliceGrid<Real> dfused;
    dfused.temporal = dcur.temporal;
    dfused.spatial = dcur.spatial;
    dfused.slices.resize(blocks.size());
    parallel_for(
        blocks.size(),
        [&](size_t i) {
          const int slice = static_cast<int>(i);
          conv_block_backward(blocks[i], block_params(stream, stage, slice), dcur.slices[i],
                              block_grads(grad, stream, stage, slice), need_input_grad ? &dfused.slices[i] : nullptr);
        },
        threads_);
    if (!need_input_grad) return;
    const SliceShape& in_shape = stage == 1 ? ledger_.input : ledger_.conv[stage - 2];
    dcur = fuse_backward(dfused, stage, plan_, in_shape);
  }
  *dimage = partition_backward(dcur, arch_);
}

uint64_t param_count(const ArchConfig& arch) {
  const ShapeLedger l = shape_ledger(arch);
  uint64_t total = 0;
  for (int k = 0; k < kFusionStages; ++k) {
    const uint64_t cin = static_cast<uint64_t>(l.fused[k].channels);
    const uint64_t f = static_cast<uint64_t>(arch.filters[k]);
    const uint64_t block = (cin * 9 * f + f) + (f * 9 * f + f);
    total += block * static_cast<uint64_t>(l.fused[k].count()) * kStreams;
  }
  const uint64_t in = static_cast<uint64_t>(l.head_input), h = static_cast<uint64_t>(arch.hidden),
                 c = static_cast<uint64_t>(arch.classes);
  total += in * h + h + h * c + c;
  return total;
}

std::string format_param_table(const ArchConfig& arch) {
  const ShapeLedger l = shape_ledger(arch);
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-22s %14s %8s %16s\n", "group", "per unit", "units", "scalars");
  out << buf;
  uint64_t total = 0;
  for (int k = 0; k < kFusionStages; ++k) {
    const uint64_t cin = static_cast<uint64_t>(l.fused[k].channels);
    const uint64_t f = static_cast<uint64_t>(arch.filters[k]);
    const uint64_t block = (cin * 9 * f + f) + (f * 9 * f + f);
    const uint64_t units = static_cast<uint64_t>(l.fused[k].count()) * kStreams;
    std::snprintf(buf, sizeof buf, "stage%d conv block      %14s %8llu %16s\n", k + 1,
                  with_commas(static_cast<long long>(block)).c_str(), static_cast<unsigned long long>(units),
                  with_commas(static_cast<long long>(block * units)).c_str());
    out << buf;
    total += block * units;
  }
  const uint64_t in = static_cast<uint64_t>(l.head_input), h = static_cast<uint64_t>(arch.hidden),
                 c = static_cast<uint64_t>(arch.classes);
  std::snprintf(buf, sizeof buf, "head fc1               %14s %8d %16s\n", with_commas(static_cast<long long>(in * h + h)).c_str(), 1,
                with_commas(static_cast<long long>(in * h + h)).c_str());
  out << buf;
  std::snprintf(buf, sizeof buf, "head fc2               %14s %8d %16s\n", with_commas(static_cast<long long>(h * c + c)).c_str(), 1,
                with_commas(static_cast<long long>(h * c + c)).c_str());
  out << buf;
  total += in * h + h + h * c + c;
  std::snprintf(buf, sizeof buf, "total                  %14s %8s %16s\n", "", "", with_commas(static_cast<long long>(total)).c_str());
  out << buf;
  std::snprintf(buf, sizeof buf, "params\ttotal=%llu\n", static_cast<unsigned long long>(total));
  out << buf;
  return out.str();
}

// ================================================================ checkpoints

namespace {
constexpr std::string_view kCheckpointMagic = "F2CP";
constexpr uint16_t kCheckpointVersion = 1;
}  // namespace

template <typename Real>
void save_checkpoint(const F2CNet<Real>& net, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  const std::string text = net.arch().canonical_text();
  w.str(sha256_hex(text));
  w.str(text);
  w.u32(static_cast<uint32_t>(net.tensors().size()));
  for (const ParamTensor& t : net.tensors()) {
    w.str(t.name);
    w.u8(static_cast<uint8_t>(t.dims.size()));
    for (int d : t.dims) w.u32(static_cast<uint32_t>(d));
    for (size_t i = 0; i < t.size(); ++i) w.f64(static_cast<double>(net.params()[t.offset + i]));
  }
  write_file_atomic(path, w.buffer());
}

namespace {

ArchConfig read_arch_header(detail::ByteReader& r) {
  r.expect_magic(kCheckpointMagic);
  const uint16_t version = r.u16();
  if (version != kCheckpointVersion) fail(ErrorCode::kFormat, r.context() + ": unsupported checkpoint version");
  const std::string digest = r.str();
  const std::string text = r.str();
  if (sha256_hex(text) != digest) fail(ErrorCode::kFormat, r.context() + ": architecture digest mismatch");
  const KeyValueConfig cfg = KeyValueConfig::parse(text, r.context());
  ArchConfig arch = ArchConfig::from_config(cfg, static_cast<int>(cfg.get_int("arch.classes")));
  arch.validate();
  return arch;
}

}  // namespace

ArchConfig read_checkpoint_arch(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  detail::ByteReader r(bytes, path.string());
  return read_arch_header(r);
}

template <typename Real>
F2CNet<Real> load_checkpoint(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  detail::ByteReader r(bytes, path.string());
  F2CNet<Real> net(read_arch_header(r));
  const uint32_t count = r.u32();
  if (count != net.tensors().size()) fail(ErrorCode::kFormat, path.string() + ": tensor count does not match architecture");
  for (const ParamTensor& t : net.tensors()) {
    const std::string name = r.str();
    const uint8_t nd = r.u8();
    std::vector<int> dims(nd);
    for (int& d : dims) d = static_cast<int>(r.u32());
    if (name != t.name || dims != t.dims) fail(ErrorCode::kFormat, path.string() + ": unexpected tensor '" + name + "'");
    for (size_t i = 0; i < t.size(); ++i) net.params()[t.offset + i] = static_cast<Real>(r.f64());
  }
  if (r.remaining() != 0) fail(ErrorCode::kFormat, path.string() + ": trailing bytes");
  return net;
}

// ================================================================ instantiations

#define F2C_INSTANTIATE(Real)                                                                                     \
  template Tensor<Real> image_to_tensor<Real>(const SkeletonImage&);                                              \
  template SliceGrid<Real> partition_slices<Real>(const Tensor<Real>&, const ArchConfig&);                        \
  template Tensor<Real> partition_backward<Real>(const SliceGrid<Real>&, const ArchConfig&);                      \
  template SliceGrid<Real> fuse<Real>(const SliceGrid<Real>&, int, const FusionPlan&);                            \
  template SliceGrid<Real> fuse_backward<Real>(const SliceGrid<Real>&, int, const FusionPlan&, const SliceShape&); \
  template void conv3x3_forward<Real>(const Tensor<Real>&, std::span<const Real>, std::span<const Real>,         \
                                      Tensor<Real>&);                                                             \
  template void conv3x3_backward<Real>(const Tensor<Real>&, std::span<const Real>, const Tensor<Real>&,          \
                                       std::span<Real>, std::span<Real>, Tensor<Real>*);                          \
  template void maxpool2x2_forward<Real>(const Tensor<Real>&, Tensor<Real>&, std::vector<int>&);                  \
  template void maxpool2x2_backward<Real>(const Tensor<Real>&, const std::vector<int>&, Tensor<Real>&);           \
  template Tensor<Real> conv_block_forward<Real>(const Tensor<Real>&, const ConvBlockParams<Real>&,               \
                                                 ConvBlockCache<Real>*);                                          \
  template void conv_block_backward<Real>(const ConvBlockCache<Real>&, const ConvBlockParams<Real>&,              \
                                          const Tensor<Real>&, const ConvBlockGrads<Real>&, Tensor<Real>*);       \
  template std::vector<Real> softmax<Real>(std::span<const Real>);                                                \
  template class F2CNet<Real>;                                                                                    \
  template void save_checkpoint<Real>(const F2CNet<Real>&, const std::filesystem::path&);                         \
  template F2CNet<Real> load_checkpoint<Real>(const std::filesystem::path&);

F2C_INSTANTIATE(double)
F2C_INSTANTIATE(float)

#undef F2C_INSTANTIATE

}  // namespace f2c
