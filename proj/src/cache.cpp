#include "f2c/cache.hpp"

#include <algorithm>
#include <sstream>

#include "f2c/common.hpp"
#include "f2c/error.hpp"

namespace fs = std::filesystem;

namespace f2c {

EncodeConfig EncodeConfig::for_kind(const std::string& kind, int classes) {
  EncodeConfig c;
  c.kind = kind;
  c.classes = classes;
  if (kind == "sbu") {
    c.protocol = "sbu-5fold";
    c.margin = 26;
    c.crops = 20;
    c.pair_swap = true;
  } else if (kind != "ntu" && kind != "synth") {
    fail(ErrorCode::kConfig, "unknown dataset kind '" + kind + "' (expected ntu, sbu or synth)");
  }
  return c;
}

SkeletonSequence swap_subjects(const SkeletonSequence& seq) {
  require(seq.subject_count() == 2, "swap_subjects: needs a two-subject sequence");
  SkeletonSequence out(seq.joint_count(), 2, seq.frame_count(), seq.label(), seq.meta());
  for (int t = 0; t < seq.frame_count(); ++t) {
    std::ranges::copy(seq.pose(t, 1), out.pose(t, 0).begin());
    std::ranges::copy(seq.pose(t, 0), out.pose(t, 1).begin());
  }
  return out;
}

namespace {

std::string format_index(const std::vector<CacheEntry>& entries) {
  std::ostringstream out;
  out << "#name\tlabel\tside\tswapped\tsource\tsetup\tcamera\tsubject\treplication\n";
  for (const CacheEntry& e : entries) {
    out << e.name << '\t' << e.label << '\t' << (e.train ? "train" : "test") << '\t' << (e.swapped ? 1 : 0) << '\t'
        << e.source << '\t' << e.meta.setup << '\t' << e.meta.camera << '\t' << e.meta.subject << '\t'
        << e.meta.replication << '\n';
  }
  return out.str();
}

std::vector<CacheEntry> parse_index(const std::string& text, const std::string& origin) {
  std::vector<CacheEntry> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    CacheEntry e;
    std::string side;
    int swapped = 0;
    if (!(ls >> e.name >> e.label >> side >> swapped >> e.source >> e.meta.setup >> e.meta.camera >> e.meta.subject >>
          e.meta.replication) ||
        (side != "train" && side != "test")) {
      fail(ErrorCode::kFormat, origin + ": line " + std::to_string(lineno) + ": malformed index row");
    }
    e.train = side == "train";
    e.swapped = swapped != 0;
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string info_text(const CacheInfo& info) {
  KeyValueConfig kv;
  kv.set("schema", "f2c-cache/1");
  kv.set("kind", info.kind);
  kv.set("joints", std::to_string(info.joints));
  kv.set("classes", std::to_string(info.classes));
  kv.set("protocol", info.protocol);
  kv.set("fold", std::to_string(info.fold));
  kv.set("image_h", std::to_string(info.image_h));
  kv.set("image_w", std::to_string(info.image_w));
  kv.set("margin", std::to_string(info.margin));
  kv.set("crops", std::to_string(info.crops));
  kv.set("pair_swap", info.pair_swap ? "1" : "0");
  kv.set("dataset_digest", info.dataset_digest);
  kv.set("digest", info.digest);
  return kv.canonical_text();
}

std::string cache_digest(std::span<const uint8_t> images, std::string_view index) {
  Sha256 h;
  h.update(images.data(), images.size());
  h.update(index.data(), index.size());
  return h.hex_digest();
}

}  // namespace

CacheInfo encode_dataset(const std::vector<SkeletonSequence>& seqs, const SkeletonLayout& layout,
                         const EncodeConfig& config, const fs::path& out_dir) {
  if (seqs.empty()) fail(ErrorCode::kConfig, "encode: dataset is empty");
  if (config.image_h < 1 || config.image_w < 1 || config.margin < 0 || config.crops < 1) {
    fail(ErrorCode::kConfig, "encode: image size, margin and crop count must be positive");
  }
  for (const SkeletonSequence& s : seqs) {
    if (s.joint_count() != layout.joints) {
      fail(ErrorCode::kConfig, "encode: " + s.name() + " has " + std::to_string(s.joint_count()) +
                                   " joints, layout '" + layout.name + "' has " + std::to_string(layout.joints));
    }
    if (s.label() < 0 || s.label() >= config.classes) {
      fail(ErrorCode::kConfig, "encode: " + s.name() + " has class " + std::to_string(s.label()) + " outside [0, " +
                                   std::to_string(config.classes) + ")");
    }
  }
  if (config.pair_swap && seqs.front().subject_count() != 2) {
    fail(ErrorCode::kConfig, "encode: pair_swap needs two-subject sequences");
  }

  std::vector<bool> is_train(seqs.size(), true);
  if (config.protocol != "none") {
    const DatasetSplit sp = split(seqs, parse_split_protocol(config.protocol), config.fold);
    for (size_t i : sp.test) is_train[i] = false;
  }
  std::vector<const SkeletonSequence*> train;
  for (size_t i = 0; i < seqs.size(); ++i) {
    if (is_train[i]) train.push_back(&seqs[i]);
  }
  if (train.empty()) fail(ErrorCode::kConfig, "encode: protocol '" + config.protocol + "' leaves no training sequences");
  const BoneLengthTable table = mean_bone_lengths(train, layout.topology);

  std::vector<CacheEntry> entries;
  for (size_t i = 0; i < seqs.size(); ++i) {
    const int variants = config.pair_swap ? 2 : 1;
    for (int v = 0; v < variants; ++v) {
      CacheEntry e;
      e.name = seqs[i].name() + (v == 1 ? "_swap" : "");
      e.label = seqs[i].label();
      e.meta = seqs[i].meta();
      e.train = is_train[i];
      e.swapped = v == 1;
      e.source = static_cast<int>(i);
      entries.push_back(std::move(e));
    }
  }

  EncodeOptions eo;
  eo.height = config.image_h + config.margin;
  eo.width = config.image_w + config.margin;
  eo.features = config.features;
  std::vector<ImageQuad> quads(entries.size());
  parallel_for(
      entries.size(),
      [&](size_t k) {
        const SkeletonSequence& src = seqs[static_cast<size_t>(entries[k].source)];
        quads[k] = entries[k].swapped ? encode_sequence(swap_subjects(src), layout, table, eo)
                                      : encode_sequence(src, layout, table, eo);
      },
      config.threads);

  std::vector<uint8_t> blob;
  for (const ImageQuad& q : quads) {
    for (const SkeletonImage& img : q) append_image(blob, img);
  }
  const std::string index = format_index(entries);

  CacheInfo info;
  info.kind = config.kind;
  info.joints = layout.joints;
  info.classes = config.classes;
  info.protocol = config.protocol;
  info.fold = config.fold;
  info.image_h = config.image_h;
  info.image_w = config.image_w;
  info.margin = config.margin;
  info.crops = config.crops;
  info.pair_swap = config.pair_swap;
  info.dataset_digest = dataset_digest(seqs);
  info.digest = cache_digest(blob, index);

  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "images.f2ci", blob);
  write_file_atomic(out_dir / "index.tsv", index);
  write_file_atomic(out_dir / "bones.txt", format_bone_table(table, layout.topology));
  write_file_atomic(out_dir / "cache.cfg", info_text(info));
  if (config.preview > 0) {
    fs::create_directories(out_dir / "preview");
    const size_t n = std::min(entries.size(), static_cast<size_t>(config.preview));
    for (size_t k = 0; k < n; ++k) {
      for (int s = 0; s < kStreams; ++s) {
        export_png(quads[k][s], out_dir / "preview" / (entries[k].name + "_" + stream_name(s) + ".png"));
      }
    }
  }
  return info;
}

CacheInfo read_cache_info(const fs::path& dir) {
  const fs::path path = dir / "cache.cfg";
  if (!fs::exists(path)) fail(ErrorCode::kIo, "no encoded cache at " + dir.string() + " (expected " + path.string() + ")");
  const KeyValueConfig kv = KeyValueConfig::load(path);
  kv.expect_schema("f2c-cache/1");
  CacheInfo info;
  info.kind = kv.get("kind");
  info.joints = static_cast<int>(kv.get_int("joints"));
  info.classes = static_cast<int>(kv.get_int("classes"));
  info.protocol = kv.get("protocol");
  info.fold = static_cast<int>(kv.get_int("fold"));
  info.image_h = static_cast<int>(kv.get_int("image_h"));
  info.image_w = static_cast<int>(kv.get_int("image_w"));
  info.margin = static_cast<int>(kv.get_int("margin"));
  info.crops = static_cast<int>(kv.get_int("crops"));
  info.pair_swap = kv.get_int("pair_swap") != 0;
  info.dataset_digest = kv.get("dataset_digest");
  info.digest = kv.get("digest");
  return info;
}

ImageCache load_image_cache(const fs::path& dir) {
  ImageCache cache;
  cache.info = read_cache_info(dir);
  const std::vector<uint8_t> blob = read_file(dir / "images.f2ci");
  const std::vector<uint8_t> index_bytes = read_file(dir / "index.tsv");
  const std::string index(index_bytes.begin(), index_bytes.end());
  if (cache_digest(blob, index) != cache.info.digest) {
    fail(ErrorCode::kFormat, dir.string() + ": cache digest mismatch (images.f2ci or index.tsv changed)");
  }
  cache.entries = parse_index(index, (dir / "index.tsv").string());
  cache.images.resize(cache.entries.size());
  std::span<const uint8_t> rest(blob);
  for (ImageQuad& q : cache.images) {
    for (int s = 0; s < kStreams; ++s) {
      size_t used = 0;
      q[s] = deserialize_image(rest, &used);
      rest = rest.subspan(used);
      if (q[s].height != cache.info.stored_h() || q[s].width != cache.info.stored_w() ||
          q[s].provenance != stream_provenance(s)) {
        fail(ErrorCode::kFormat, dir.string() + ": image record does not match cache.cfg");
      }
    }
  }
  if (!rest.empty()) fail(ErrorCode::kFormat, dir.string() + ": trailing bytes in images.f2ci");
  return cache;
}

}  // namespace f2c
