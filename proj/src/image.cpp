#include "f2c/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "f2c/common.hpp"
#include "f2c/error.hpp"

namespace f2c {

ImageProvenance stream_provenance(int stream) {
  require(stream >= 0 && stream < kStreams, "stream index out of range");
  return {stream < 2 ? FeatureBasis::kWholeBody : FeatureBasis::kBodyPart,
          stream % 2 == 0 ? FeatureKind::kPosition : FeatureKind::kVelocity};
}

const char* stream_name(int stream) {
  static constexpr const char* kNames[kStreams] = {"wb_pos", "wb_vel", "bp_pos", "bp_vel"};
  require(stream >= 0 && stream < kStreams, "stream index out of range");
  return kNames[stream];
}

// ------------------------------------------------------------- min-max

SkeletonImage minmax_to_rgb(const FeatureGrid& grid) {
  SkeletonImage img(grid.rows, grid.cols, {grid.basis, grid.kind});
  for (int ch = 0; ch < 3; ++ch) {
    auto comp = [ch](const Vec3& v) { return ch == 0 ? v.x : ch == 1 ? v.y : v.z; };
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Vec3& v : grid.values) {
      const double c = comp(v);
      if (!std::isfinite(c)) fail(ErrorCode::kNumeric, "minmax_to_rgb: non-finite grid value");
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    const double range = hi - lo;
    for (size_t i = 0; i < grid.values.size(); ++i) {
      // std::lround rounds halves away from zero.
      img.pixels[i * 3 + ch] = range > 0.0 ? static_cast<uint8_t>(std::lround(255.0 * (comp(grid.values[i]) - lo) / range)) : 0;
    }
  }
  return img;
}

// ------------------------------------------------------------- resampling

double catmull_rom_weight(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> make_taps(int in, int out) {
  std::vector<Taps> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    for (int k = 0; k < 4; ++k) {
      taps[o].index[k] = std::clamp(static_cast<int>(base) - 1 + k, 0, in - 1);
      taps[o].weight[k] = catmull_rom_weight(frac - (k - 1));
    }
  }
  return taps;
}

}  // namespace

SkeletonImage cubic_resize(const SkeletonImage& image, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "cubic_resize: output dimensions must be positive");
  // A single row (the velocity grid of a 3-frame sequence) resamples fine
  // under edge clamping, so only empty input is rejected.
  require(image.height >= 1 && image.width >= 1, "cubic_resize: empty input image");
  const std::vector<Taps> htaps = make_taps(image.width, out_w);
  const std::vector<Taps> vtaps = make_taps(image.height, out_h);

  // Horizontal pass into a double buffer (in_h x out_w x 3), then vertical.
  std::vector<double> mid(static_cast<size_t>(image.height) * out_w * 3);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < out_w; ++c) {
      const Taps& t = htaps[c];
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += t.weight[k] * image.at(r, t.index[k], ch);
        mid[(static_cast<size_t>(r) * out_w + c) * 3 + ch] = acc;
      }
    }
  }
  SkeletonImage out(out_h, out_w, image.provenance);
  for (int r = 0; r < out_h; ++r) {
    const Taps& t = vtaps[r];
    for (int c = 0; c < out_w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += t.weight[k] * mid[(static_cast<size_t>(t.index[k]) * out_w + c) * 3 + ch];
        out.at(r, c, ch) = static_cast<uint8_t>(std::lround(std::clamp(acc, 0.0, 255.0)));
      }
    }
  }
  return out;
}

// ------------------------------------------------------------- encoding

ImageQuad encode_sequence(const SkeletonSequence& seq, const SkeletonLayout& layout, const BoneLengthTable& table,
                          const EncodeOptions& options) {
  const GridPair wb = build_wb_grid(seq, layout, table, options.features);
  const GridPair bp = build_bp_grid(seq, layout, table, options.features);
  const FeatureGrid* grids[kStreams] = {&wb.position, &wb.velocity, &bp.position, &bp.velocity};
  ImageQuad quad;
  for (int s = 0; s < kStreams; ++s) {
    quad[s] = cubic_resize(minmax_to_rgb(*grids[s]), options.height, options.width);
  }
  return quad;
}

SkeletonImage crop(const SkeletonImage& image, int top, int left, int height, int width) {
  require(top >= 0 && left >= 0 && height > 0 && width > 0 && top + height <= image.height &&
              left + width <= image.width,
          "crop: window outside image");
  SkeletonImage out(height, width, image.provenance);
  for (int r = 0; r < height; ++r) {
    const uint8_t* src = &image.pixels[(static_cast<size_t>(top + r) * image.width + left) * 3];
    std::memcpy(&out.pixels[static_cast<size_t>(r) * width * 3], src, static_cast<size_t>(width) * 3);
  }
  return out;
}

// ------------------------------------------------------------- PNG

void export_png(const SkeletonImage& image, const std::filesystem::path& path) {
  require(image.height > 0 && image.width > 0, "export_png: empty image");
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, path.string() + ": PNG encode failed: " + png.message);
  }
  std::vector<uint8_t> buffer(size);
  if (!png_image_write_to_memory(&png, buffer.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, path.string() + ": PNG encode failed: " + png.message);
  }
  buffer.resize(size);
  write_file_atomic(path, buffer);
}

SkeletonImage import_png(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    fail(ErrorCode::kFormat, path.string() + ": not a PNG file");
  }
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    fail(ErrorCode::kFormat, path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  SkeletonImage image(static_cast<int>(png.height), static_cast<int>(png.width));
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    fail(ErrorCode::kFormat, path.string() + ": " + png.message);
  }
  return image;
}

// ------------------------------------------------------------- raw records

namespace {
constexpr std::string_view kImageMagic = "F2CI";
}

void append_image(std::vector<uint8_t>& out, const SkeletonImage& image) {
  detail::ByteWriter w;
  w.magic(kImageMagic);
  w.u16(static_cast<uint16_t>(image.height));
  w.u16(static_cast<uint16_t>(image.width));
  w.u8(static_cast<uint8_t>(image.provenance.basis));
  w.u8(static_cast<uint8_t>(image.provenance.kind));
  out.insert(out.end(), w.buffer().begin(), w.buffer().end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
}

std::vector<uint8_t> serialize_image(const SkeletonImage& image) {
  std::vector<uint8_t> out;
  append_image(out, image);
  return out;
}

SkeletonImage deserialize_image(std::span<const uint8_t> bytes, size_t* consumed) {
  detail::ByteReader r(bytes, "image record");
  r.expect_magic(kImageMagic);
  const int h = r.u16();
  const int w = r.u16();
  const uint8_t basis = r.u8();
  const uint8_t kind = r.u8();
  if (basis > 1 || kind > 1) fail(ErrorCode::kFormat, "image record: bad provenance tags");
  SkeletonImage image(h, w, {static_cast<FeatureBasis>(basis), static_cast<FeatureKind>(kind)});
  r.bytes(image.pixels.data(), image.pixels.size());
  if (consumed != nullptr) *consumed = r.position();
  return image;
}

std::string image_digest(const SkeletonImage& image) { return sha256_hex(serialize_image(image)); }

std::string quad_digest(const ImageQuad& quad) {
  std::vector<uint8_t> all;
  for (const SkeletonImage& img : quad) append_image(all, img);
  return sha256_hex(all);
}

}  // namespace f2c
