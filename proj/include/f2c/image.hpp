#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "f2c/features.hpp"

namespace f2c {

struct ImageProvenance {
  FeatureBasis basis = FeatureBasis::kWholeBody;
  FeatureKind kind = FeatureKind::kPosition;
  friend bool operator==(const ImageProvenance&, const ImageProvenance&) = default;
};

/// H x W x 3 interleaved RGB bytes; rows = time, columns = joint slots.
struct SkeletonImage {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> pixels;
  ImageProvenance provenance;

  SkeletonImage() = default;
  SkeletonImage(int h, int w, ImageProvenance p = {})
      : height(h), width(w), pixels(static_cast<size_t>(h) * w * 3), provenance(p) {}

  uint8_t& at(int r, int c, int ch) { return pixels[(static_cast<size_t>(r) * width + c) * 3 + ch]; }
  uint8_t at(int r, int c, int ch) const { return pixels[(static_cast<size_t>(r) * width + c) * 3 + ch]; }

  friend bool operator==(const SkeletonImage&, const SkeletonImage&) = default;
};

/// Stream order used throughout: WB-position, WB-velocity, BP-position, BP-velocity.
inline constexpr int kStreams = 4;
using ImageQuad = std::array<SkeletonImage, kStreams>;

ImageProvenance stream_provenance(int stream);
const char* stream_name(int stream);

/// Per-component min-max projection to bytes: x->R, y->G, z->B. A flat
/// component maps to 0.
SkeletonImage minmax_to_rgb(const FeatureGrid& grid);

/// Catmull-Rom kernel (a = -0.5) weight at distance x.
double catmull_rom_weight(double x);

/// Separable Catmull-Rom resampling, clamped edges, half-pixel centres.
SkeletonImage cubic_resize(const SkeletonImage& image, int out_h, int out_w);

struct EncodeOptions {
  int height = 224;
  int width = 224;
  FeatureOptions features;
};

ImageQuad encode_sequence(const SkeletonSequence& seq, const SkeletonLayout& layout, const BoneLengthTable& table,
                          const EncodeOptions& options = {});

/// Top-left anchored crop.
SkeletonImage crop(const SkeletonImage& image, int top, int left, int height, int width);

// 8-bit RGB PNG, no alpha.
void export_png(const SkeletonImage& image, const std::filesystem::path& path);
SkeletonImage import_png(const std::filesystem::path& path);

// Raw tensor record: "F2CI", H:u16, W:u16, basis:u8, kind:u8, then H*W*3 bytes.
std::vector<uint8_t> serialize_image(const SkeletonImage& image);
void append_image(std::vector<uint8_t>& out, const SkeletonImage& image);
SkeletonImage deserialize_image(std::span<const uint8_t> bytes, size_t* consumed = nullptr);

std::string image_digest(const SkeletonImage& image);
std::string quad_digest(const ImageQuad& quad);

}  // namespace f2c
