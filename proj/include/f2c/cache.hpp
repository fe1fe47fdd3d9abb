#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "f2c/image.hpp"
#include "f2c/skeleton.hpp"

namespace f2c {

// Encoded image cache: a directory holding
//   images.f2ci   4 F2CI records per entry, stream order
//   index.tsv     one line per entry
//   bones.txt     bone-length table of the training fold
//   cache.cfg     key = value description (schema f2c-cache/1)
//   manifest.txt  run manifest
//   preview/      optional PNG quadruples

struct CacheEntry {
  std::string name;
  int label = 0;
  SequenceMeta meta;
  bool train = true;     // side of the protocol split
  bool swapped = false;  // subject order reversed (SBU pair swap)
  int source = 0;        // index of the source sequence; swapped twins share it
};

struct CacheInfo {
  std::string kind;      // ntu | sbu | synth
  int joints = 0;
  int classes = 0;
  std::string protocol;  // cs | cv | sbu-5fold | none
  int fold = 0;
  int image_h = 0;       // network input size
  int image_w = 0;
  int margin = 0;        // stored images are (image_h + margin) x (image_w + margin)
  int crops = 1;         // random crops per training entry
  bool pair_swap = false;
  std::string dataset_digest;
  std::string digest;    // over images.f2ci and index.tsv

  int stored_h() const { return image_h + margin; }
  int stored_w() const { return image_w + margin; }
};

struct EncodeConfig {
  std::string kind = "ntu";
  int classes = kNtuClasses;
  std::string protocol = "cs";
  int fold = 0;
  int image_h = 224;
  int image_w = 224;
  int margin = 0;
  int crops = 1;
  bool pair_swap = false;
  int preview = 0;
  FeatureOptions features;
  int threads = 0;

  /// Defaults of the published protocol per dataset kind: SBU gets a 26 pixel
  /// margin, 20 crops and the pair swap; everything else none of them.
  static EncodeConfig for_kind(const std::string& kind, int classes);
};

struct ImageCache {
  CacheInfo info;
  std::vector<CacheEntry> entries;
  std::vector<ImageQuad> images;  // parallel to entries
};

/// Sequence with its two subject slots exchanged.
SkeletonSequence swap_subjects(const SkeletonSequence& seq);

/// Encodes `seqs` into `out_dir`. The bone-length table comes from the
/// protocol's training side only.
CacheInfo encode_dataset(const std::vector<SkeletonSequence>& seqs, const SkeletonLayout& layout,
                         const EncodeConfig& config, const std::filesystem::path& out_dir);

ImageCache load_image_cache(const std::filesystem::path& dir);
CacheInfo read_cache_info(const std::filesystem::path& dir);

}  // namespace f2c
