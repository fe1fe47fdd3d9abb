#include "f2c/skeleton.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <unordered_map>
#include <unordered_set>

#include "binary_io.hpp"
#include "f2c/common.hpp"
#include "f2c/error.hpp"

namespace f2c {

namespace fs = std::filesystem;

// ------------------------------------------------------------- sequence

SkeletonSequence::SkeletonSequence(int joint_count, int subject_count, int frame_count, int label,
                                   SequenceMeta meta)
    : joints_(joint_count), subjects_(subject_count), frames_(frame_count), label_(label), meta_(meta) {
  require(joint_count > 0 && subject_count >= 0 && subject_count <= kMaxSubjects && frame_count >= 0,
          "SkeletonSequence: invalid dimensions");
  data_.resize(static_cast<size_t>(joint_count) * subject_count * frame_count);
}

std::span<Joint3D> SkeletonSequence::pose(int frame, int subject) {
  const size_t off = (static_cast<size_t>(frame) * subjects_ + subject) * joints_;
  return {data_.data() + off, static_cast<size_t>(joints_)};
}

std::span<const Joint3D> SkeletonSequence::pose(int frame, int subject) const {
  const size_t off = (static_cast<size_t>(frame) * subjects_ + subject) * joints_;
  return {data_.data() + off, static_cast<size_t>(joints_)};
}

bool SkeletonSequence::present(int frame, int subject) const {
  if (subject >= subjects_) return false;
  for (const Joint3D& j : pose(frame, subject)) {
    if (j.x != 0.0f || j.y != 0.0f || j.z != 0.0f) return true;
  }
  return false;
}

std::string SkeletonSequence::name() const {
  char buf[64];
  if (joints_ == kSbuJoints) {
    std::snprintf(buf, sizeof buf, "s%02ds%02d_a%02d_r%03d", meta_.subject / 100, meta_.subject % 100, label_ + 1,
                  meta_.replication);
  } else {
    std::snprintf(buf, sizeof buf, "S%03dC%03dP%03dR%03dA%03d", meta_.setup, meta_.camera, meta_.subject,
                  meta_.replication, label_ + 1);
  }
  return buf;
}

void SkeletonSequence::validate() const {
  if (frames_ < 3) {
    fail(ErrorCode::kTooShort, "sequence has " + std::to_string(frames_) + " frames; at least 3 are required");
  }
  require(subjects_ <= kMaxSubjects, "sequence keeps more than two subjects");
  require(label_ >= 0, "negative label");
  for (const Joint3D& j : data_) {
    if (!std::isfinite(j.x) || !std::isfinite(j.y) || !std::isfinite(j.z)) {
      fail(ErrorCode::kNumeric, "non-finite joint coordinate");
    }
  }
}

// ------------------------------------------------------------- names

namespace {

int parse_field(std::string_view s, size_t pos, size_t len, std::string_view whole) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
  if (ec != std::errc{} || ptr != s.data() + pos + len) {
    fail(ErrorCode::kParse, "malformed NTU sample name '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

NtuFileId parse_ntu_name(std::string_view filename) {
  std::string_view base = filename;
  if (auto slash = base.find_last_of("/\\"); slash != std::string_view::npos) base.remove_prefix(slash + 1);
  if (auto dot = base.find('.'); dot != std::string_view::npos) base = base.substr(0, dot);
  if (base.size() != 20 || base[0] != 'S' || base[4] != 'C' || base[8] != 'P' || base[12] != 'R' ||
      base[16] != 'A') {
    fail(ErrorCode::kParse, "malformed NTU sample name '" + std::string(filename) + "'");
  }
  NtuFileId id;
  id.meta.setup = parse_field(base, 1, 3, filename);
  id.meta.camera = parse_field(base, 5, 3, filename);
  id.meta.subject = parse_field(base, 9, 3, filename);
  id.meta.replication = parse_field(base, 13, 3, filename);
  id.action = parse_field(base, 17, 3, filename);
  if (id.action < 1) fail(ErrorCode::kParse, "NTU action id must be >= 1 in '" + std::string(filename) + "'");
  return id;
}

int parse_sbu_pair(std::string_view set_name) {
  if (set_name.size() != 6 || set_name[0] != 's' || set_name[3] != 's') {
    fail(ErrorCode::kParse, "malformed SBU set name '" + std::string(set_name) + "'");
  }
  const int a = parse_field(set_name, 1, 2, set_name);
  const int b = parse_field(set_name, 4, 2, set_name);
  return a * 100 + b;
}

// ------------------------------------------------------------- NTU parser

namespace {

class LineCursor {
 public:
  explicit LineCursor(std::string_view text) : text_(text) {}

  /// Next line, or nullopt at end of input.
  std::optional<std::string_view> next() {
    if (pos_ >= text_.size()) return std::nullopt;
    size_t end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    std::string_view line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_;
    return line;
  }

  std::string_view require_line(const char* what) {
    auto line = next();
    if (!line) fail(ErrorCode::kParse, "line " + std::to_string(line_ + 1) + ": unexpected end of file, expected " + what);
    return *line;
  }

  size_t line_number() const { return line_; }

  bool only_whitespace_left() {
    for (size_t i = pos_; i < text_.size(); ++i) {
      if (!std::isspace(static_cast<unsigned char>(text_[i]))) return false;
    }
    return true;
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;
  size_t line_ = 0;
};

template <typename Fn>
size_t for_each_token(std::string_view line, Fn&& fn, bool commas = false) {
  size_t count = 0;
  size_t i = 0;
  auto is_sep = [&](char c) { return std::isspace(static_cast<unsigned char>(c)) || (commas && c == ','); };
  while (i < line.size()) {
    while (i < line.size() && is_sep(line[i])) ++i;
    if (i >= line.size()) break;
    size_t j = i;
    while (j < line.size() && !is_sep(line[j])) ++j;
    fn(count, line.substr(i, j - i));
    ++count;
    i = j;
  }
  return count;
}

[[noreturn]] void parse_error(size_t line, const std::string& what) {
  fail(ErrorCode::kParse, "line " + std::to_string(line) + ": " + what);
}

long long parse_int_line(LineCursor& cur, const char* what) {
  const std::string_view line = cur.require_line(what);
  std::string_view tok;
  const size_t n = for_each_token(line, [&](size_t, std::string_view t) { tok = t; });
  if (n != 1) parse_error(cur.line_number(), std::string("expected a single integer (") + what + ")");
  long long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || v < 0) {
    parse_error(cur.line_number(), std::string("non-numeric ") + what + " '" + std::string(tok) + "'");
  }
  return v;
}

double parse_double(std::string_view tok, size_t line) {
  double v = 0;
  // from_chars rejects a leading '+', which some exporters emit.
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    parse_error(line, "non-numeric field '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) parse_error(line, "non-finite value '" + std::string(tok) + "'");
  return v;
}

struct BodyTrack {
  std::string id;
  size_t first_seen = 0;
  std::map<int, std::vector<Joint3D>> poses;  // frame -> joints
  double energy = 0;
};

double pose_distance(std::span<const Joint3D> a, std::span<const Joint3D> b) {
  double sum = 0;
  for (size_t j = 0; j < a.size(); ++j) {
    const double dx = double(a[j].x) - b[j].x, dy = double(a[j].y) - b[j].y, dz = double(a[j].z) - b[j].z;
    sum += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return sum;
}

}  // namespace

SkeletonSequence parse_ntu_file(std::string_view text, const SequenceMeta& meta, int label) {
  LineCursor cur(text);
  const long long frames = parse_int_line(cur, "frame count");
  if (frames < 3) {
    fail(ErrorCode::kTooShort, "sequence declares " + std::to_string(frames) + " frames; at least 3 are required");
  }

  std::vector<BodyTrack> tracks;
  std::unordered_map<std::string, size_t> by_id;
  for (int t = 0; t < frames; ++t) {
    const long long bodies = parse_int_line(cur, "body count");
    for (long long b = 0; b < bodies; ++b) {
      const std::string_view info = cur.require_line("body info");
      std::string body_id;
      const size_t fields = for_each_token(info, [&](size_t i, std::string_view tok) {
        if (i == 0) {
          body_id = std::string(tok);
        } else {
          parse_double(tok, cur.line_number());
        }
      });
      if (fields != 10) {
        parse_error(cur.line_number(), "body info has " + std::to_string(fields) + " fields, expected 10");
      }
      const long long joints = parse_int_line(cur, "joint count");
      if (joints != kNtuJoints) {
        parse_error(cur.line_number(), "inconsistent joint count " + std::to_string(joints) + ", expected 25");
      }
      std::vector<Joint3D> pose(kNtuJoints);
      for (int j = 0; j < kNtuJoints; ++j) {
        const std::string_view jl = cur.require_line("joint record");
        double xyz[3] = {0, 0, 0};
        const size_t n = for_each_token(jl, [&](size_t i, std::string_view tok) {
          const double v = parse_double(tok, cur.line_number());
          if (i < 3) xyz[i] = v;
        });
        if (n != 12) parse_error(cur.line_number(), "joint record has " + std::to_string(n) + " fields, expected 12");
        pose[j] = {static_cast<float>(xyz[0]), static_cast<float>(xyz[1]), static_cast<float>(xyz[2])};
      }
      auto [it, inserted] = by_id.try_emplace(body_id, tracks.size());
      if (inserted) tracks.push_back({body_id, tracks.size(), {}, 0});
      BodyTrack& track = tracks[it->second];
      if (!track.poses.emplace(t, std::move(pose)).second) {
        parse_error(cur.line_number(), "body id " + body_id + " appears twice in frame " + std::to_string(t));
      }
    }
  }
  if (!cur.only_whitespace_left()) parse_error(cur.line_number() + 1, "trailing content after last frame");

  for (BodyTrack& track : tracks) {
    for (auto it = track.poses.begin(); it != track.poses.end(); ++it) {
      auto nx = std::next(it);
      if (nx != track.poses.end() && nx->first == it->first + 1) track.energy += pose_distance(nx->second, it->second);
    }
  }
  // Keep the two most active bodies; among them the earlier-seen body is subject 0.
  std::vector<size_t> rank(tracks.size());
  for (size_t i = 0; i < rank.size(); ++i) rank[i] = i;
  std::stable_sort(rank.begin(), rank.end(), [&](size_t a, size_t b) { return tracks[a].energy > tracks[b].energy; });
  rank.resize(std::min<size_t>(rank.size(), kMaxSubjects));
  std::sort(rank.begin(), rank.end());

  SkeletonSequence seq(kNtuJoints, static_cast<int>(rank.size()), static_cast<int>(frames), label, meta);
  for (size_t s = 0; s < rank.size(); ++s) {
    for (const auto& [t, pose] : tracks[rank[s]].poses) {
      std::copy(pose.begin(), pose.end(), seq.pose(t, static_cast<int>(s)).begin());
    }
  }
  return seq;
}

SkeletonSequence parse_sbu_file(std::string_view text, const SequenceMeta& meta, int label) {
  constexpr size_t kFields = 1 + kMaxSubjects * kSbuJoints * 3;
  LineCursor cur(text);
  std::vector<std::array<float, kFields - 1>> rows;
  while (auto line = cur.next()) {
    if (for_each_token(*line, [](size_t, std::string_view) {}, true) == 0) continue;
    std::array<float, kFields - 1> row{};
    const size_t n = for_each_token(
        *line,
        [&](size_t i, std::string_view tok) {
          const double v = parse_double(tok, cur.line_number());
          if (i >= 1 && i < kFields) row[i - 1] = static_cast<float>(v);
        },
        true);
    if (n != kFields) {
      fail(ErrorCode::kParse, "row " + std::to_string(cur.line_number()) + ": " + std::to_string(n) +
                                  " fields, expected 91 (frame index + 90 coordinates)");
    }
    rows.push_back(row);
  }
  if (rows.size() < 3) {
    fail(ErrorCode::kTooShort, "sequence has " + std::to_string(rows.size()) + " frames; at least 3 are required");
  }
  SkeletonSequence seq(kSbuJoints, kMaxSubjects, static_cast<int>(rows.size()), label, meta);
  for (size_t t = 0; t < rows.size(); ++t) {
    for (int s = 0; s < kMaxSubjects; ++s) {
      auto pose = seq.pose(static_cast<int>(t), s);
      for (int j = 0; j < kSbuJoints; ++j) {
        const size_t base = (static_cast<size_t>(s) * kSbuJoints + j) * 3;
        pose[j] = {rows[t][base], rows[t][base + 1], rows[t][base + 2]};
      }
    }
  }
  return seq;
}

// ------------------------------------------------------------- directories

namespace {

std::string read_text(const fs::path& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

template <typename Fn>
std::vector<SkeletonSequence> parse_all(const std::vector<fs::path>& files, Fn&& parse_one, int threads) {
  std::vector<SkeletonSequence> out(files.size());
  parallel_for(
      files.size(),
      [&](size_t i) {
        try {
          out[i] = parse_one(files[i]);
        } catch (const Error& e) {
          throw Error(e.code(), files[i].string() + ": " + e.what());
        }
      },
      threads);
  return out;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(ErrorCode::kIo, "not a readable directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<SkeletonSequence> load_ntu_dir(const fs::path& dir, int threads) {
  std::vector<fs::path> files;
  for (const fs::path& p : sorted_entries(dir, false)) {
    if (p.extension() == ".skeleton") files.push_back(p);
  }
  return parse_all(
      files,
      [](const fs::path& p) {
        const NtuFileId id = parse_ntu_name(p.filename().string());
        return parse_ntu_file(read_text(p), id.meta, id.action - 1);
      },
      threads);
}

std::vector<SkeletonSequence> load_sbu_dir(const fs::path& dir, int threads) {
  struct Item {
    fs::path file;
    SequenceMeta meta;
    int label;
  };
  std::vector<Item> items;
  for (const fs::path& set_dir : sorted_entries(dir, true)) {
    const int pair = parse_sbu_pair(set_dir.filename().string());
    for (const fs::path& action_dir : sorted_entries(set_dir, true)) {
      const int action = std::stoi(action_dir.filename().string());
      for (const fs::path& rep_dir : sorted_entries(action_dir, true)) {
        const fs::path file = rep_dir / "skeleton_pos.txt";
        if (!fs::exists(file)) continue;
        items.push_back({file, {0, 1, pair, std::stoi(rep_dir.filename().string())}, action - 1});
      }
    }
  }
  std::vector<fs::path> files;
  for (const Item& it : items) files.push_back(it.file);
  std::vector<SkeletonSequence> out(items.size());
  parallel_for(
      items.size(),
      [&](size_t i) {
        try {
          out[i] = parse_sbu_file(read_text(items[i].file), items[i].meta, items[i].label);
        } catch (const Error& e) {
          throw Error(e.code(), items[i].file.string() + ": " + e.what());
        }
      },
      threads);
  return out;
}

// ------------------------------------------------------------- binary cache

namespace {
constexpr std::string_view kSequenceMagic = "F2CS";
constexpr uint16_t kSequenceVersion = 1;
}  // namespace

std::vector<uint8_t> serialize_sequence(const SkeletonSequence& seq) {
  detail::ByteWriter w;
  w.magic(kSequenceMagic);
  w.u16(kSequenceVersion);
  w.u16(static_cast<uint16_t>(seq.joint_count()));
  w.u32(static_cast<uint32_t>(seq.frame_count()));
  w.u8(static_cast<uint8_t>(seq.subject_count()));
  w.u16(static_cast<uint16_t>(seq.label()));
  w.u16(static_cast<uint16_t>(seq.meta().setup));
  w.u16(static_cast<uint16_t>(seq.meta().camera));
  w.u16(static_cast<uint16_t>(seq.meta().subject));
  w.u16(static_cast<uint16_t>(seq.meta().replication));
  for (const Joint3D& j : seq.data()) {
    w.f32(j.x);
    w.f32(j.y);
    w.f32(j.z);
  }
  return w.take();
}

SkeletonSequence deserialize_sequence(std::span<const uint8_t> bytes) {
  detail::ByteReader r(bytes, "sequence cache");
  r.expect_magic(kSequenceMagic);
  const uint16_t version = r.u16();
  if (version != kSequenceVersion) fail(ErrorCode::kFormat, "sequence cache: unsupported version " + std::to_string(version));
  const int joints = r.u16();
  const auto frames = r.u32();
  const int subjects = r.u8();
  const int label = r.u16();
  SequenceMeta meta;
  meta.setup = r.u16();
  meta.camera = r.u16();
  meta.subject = r.u16();
  meta.replication = r.u16();
  if (joints == 0 || subjects > kMaxSubjects) fail(ErrorCode::kFormat, "sequence cache: invalid header");
  const size_t count = static_cast<size_t>(joints) * subjects * frames;
  if (r.remaining() != count * 12) fail(ErrorCode::kFormat, "sequence cache: payload size mismatch");
  SkeletonSequence seq(joints, subjects, static_cast<int>(frames), label, meta);
  for (Joint3D& j : seq.data()) {
    j.x = r.f32();
    j.y = r.f32();
    j.z = r.f32();
  }
  seq.validate();
  return seq;
}

void save_sequences(const std::vector<SkeletonSequence>& seqs, const fs::path& dir) {
  fs::create_directories(dir);
  for (const SkeletonSequence& s : seqs) write_file_atomic(dir / (s.name() + ".f2cs"), serialize_sequence(s));
}

std::vector<SkeletonSequence> load_sequence_cache(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const fs::path& p : sorted_entries(dir, false)) {
    if (p.extension() == ".f2cs") files.push_back(p);
  }
  return parse_all(files, [](const fs::path& p) { return deserialize_sequence(read_file(p)); }, 0);
}

std::string dataset_digest(const std::vector<SkeletonSequence>& seqs) {
  Sha256 h;
  for (const SkeletonSequence& s : seqs) {
    const std::vector<uint8_t> bytes = serialize_sequence(s);
    h.update(bytes.data(), bytes.size());
  }
  return h.hex_digest();
}

// ------------------------------------------------------------- blocklist

std::vector<std::string> load_blocklist(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<std::string> names;
  LineCursor cur(text);
  while (auto line = cur.next()) {
    std::string_view s = *line;
    if (auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    if (s.empty()) continue;
    if (s.ends_with(".skeleton")) s.remove_suffix(9);
    names.emplace_back(s);
  }
  return names;
}

std::vector<SkeletonSequence> filter_missing(std::vector<SkeletonSequence> seqs,
                                             const std::vector<std::string>& blocklist) {
  if (blocklist.empty()) return seqs;
  const std::unordered_set<std::string> blocked(blocklist.begin(), blocklist.end());
  std::erase_if(seqs, [&](const SkeletonSequence& s) { return blocked.count(s.name()) != 0; });
  return seqs;
}

// ------------------------------------------------------------- splits

namespace {

constexpr std::array<int, 20> kCsTrainSubjects = {1,  2,  4,  5,  8,  9,  13, 14, 15, 16,
                                                  17, 18, 19, 25, 27, 28, 31, 34, 35, 38};

constexpr std::array<std::array<int, 5>, 5> kSbuFolds = {{
    {102, 304, 502, 604, 0},
    {203, 207, 305, 503, 0},
    {103, 107, 701, 703, 0},
    {201, 206, 302, 306, 0},
    {402, 403, 406, 602, 603},
}};
constexpr std::array<size_t, 5> kSbuFoldSizes = {4, 4, 4, 4, 5};

}  // namespace

std::span<const int> ntu_cs_train_subjects() { return kCsTrainSubjects; }

std::span<const int> sbu_fold_pairs(int fold) {
  require(fold >= 0 && fold < 5, "SBU fold index must be in 0..4");
  return {kSbuFolds[fold].data(), kSbuFoldSizes[fold]};
}

SplitProtocol parse_split_protocol(std::string_view name) {
  if (name == "cs" || name == "CS") return SplitProtocol::kCrossSubject;
  if (name == "cv" || name == "CV") return SplitProtocol::kCrossView;
  if (name == "sbu-5fold" || name == "sbu") return SplitProtocol::kSbuFold;
  fail(ErrorCode::kConfig, "unknown split protocol '" + std::string(name) + "' (expected cs, cv or sbu-5fold)");
}

DatasetSplit split(const std::vector<SkeletonSequence>& seqs, SplitProtocol protocol, int fold) {
  DatasetSplit out;
  for (size_t i = 0; i < seqs.size(); ++i) {
    const SequenceMeta& m = seqs[i].meta();
    bool test = false;
    switch (protocol) {
      case SplitProtocol::kCrossSubject:
        if (m.subject <= 0) fail(ErrorCode::kConfig, "cross-subject split needs subject ids; " + seqs[i].name() + " has none");
        test = std::find(kCsTrainSubjects.begin(), kCsTrainSubjects.end(), m.subject) == kCsTrainSubjects.end();
        break;
      case SplitProtocol::kCrossView:
        if (m.camera < 1 || m.camera > 3) {
          fail(ErrorCode::kConfig, "cross-view split needs camera ids 1..3; " + seqs[i].name() + " has " +
                                       std::to_string(m.camera));
        }
        test = m.camera == 1;
        break;
      case SplitProtocol::kSbuFold: {
        if (fold < 0 || fold > 4) fail(ErrorCode::kConfig, "SBU fold index must be in 0..4");
        int owner = -1;
        for (int f = 0; f < 5 && owner < 0; ++f) {
          for (int p : sbu_fold_pairs(f)) {
            if (p == m.subject) owner = f;
          }
        }
        if (owner < 0) fail(ErrorCode::kConfig, "sequence " + seqs[i].name() + " has no SBU fold (pair code " +
                                                   std::to_string(m.subject) + ")");
        test = owner == fold;
        break;
      }
    }
    (test ? out.test : out.train).push_back(i);
  }
  return out;
}

// ------------------------------------------------------------- synthetic data

namespace {

struct V3 {
  double x, y, z;
};

struct LimbRig {
  int pivot;
  std::vector<int> joints;
  double amplitude;  // radians
};

struct RestSkeleton {
  std::vector<V3> joints;
  std::array<LimbRig, 4> limbs;  // left arm, right arm, left leg, right leg
};

const RestSkeleton& rest_skeleton(int joints) {
  static const RestSkeleton ntu{
      {{0, 0, 0},          {0, 0.30, 0},        {0, 0.55, 0},        {0, 0.70, 0},        {-0.18, 0.50, 0},
       {-0.20, 0.25, 0.02}, {-0.21, 0.02, 0.04}, {-0.21, -0.06, 0.05}, {0.18, 0.50, 0},     {0.20, 0.25, 0.02},
       {0.21, 0.02, 0.04},  {0.21, -0.06, 0.05}, {-0.09, -0.02, 0},  {-0.10, -0.45, 0.02}, {-0.10, -0.85, 0},
       {-0.10, -0.90, 0.10}, {0.09, -0.02, 0},   {0.10, -0.45, 0.02}, {0.10, -0.85, 0},    {0.10, -0.90, 0.10},
       {0, 0.50, 0},        {-0.21, -0.12, 0.05}, {-0.17, -0.05, 0.08}, {0.21, -0.12, 0.05}, {0.17, -0.05, 0.08}},
      {{{4, {5, 6, 7, 21, 22}, 0.9}, {8, {9, 10, 11, 23, 24}, 0.9}, {12, {13, 14, 15}, 0.5}, {16, {17, 18, 19}, 0.5}}}};
  static const RestSkeleton sbu{
      {{0, 0.70, 0},
       {0, 0.55, 0},
       {0, 0.25, 0},
       {-0.18, 0.50, 0},
       {-0.20, 0.25, 0.02},
       {-0.21, 0.0, 0.04},
       {0.18, 0.50, 0},
       {0.20, 0.25, 0.02},
       {0.21, 0.0, 0.04},
       {-0.09, -0.02, 0},
       {-0.10, -0.45, 0.02},
       {-0.10, -0.88, 0.03},
       {0.09, -0.02, 0},
       {0.10, -0.45, 0.02},
       {0.10, -0.88, 0.03}},
      {{{3, {4, 5}, 0.9}, {6, {7, 8}, 0.9}, {9, {10, 11}, 0.5}, {12, {13, 14}, 0.5}}}};
  return joints == kSbuJoints ? sbu : ntu;
}

constexpr double kPi = std::numbers::pi;

// Per-limb phase offsets; class c uses pattern c % 4.
constexpr std::array<std::array<double, 4>, 4> kPhasePatterns = {{
    {0, kPi, kPi, 0},
    {0, 0, 0, 0},
    {0, kPi / 2, kPi, 3 * kPi / 2},
    {0, kPi, 0, kPi},
}};

constexpr std::array<int, 21> kSbuPairs = {102, 103, 107, 201, 203, 206, 207, 302, 304, 305, 306,
                                           402, 403, 406, 502, 503, 602, 603, 604, 701, 703};

}  // namespace

std::vector<SkeletonSequence> synth_generate(const SynthOptions& o) {
  require(o.classes >= 2 && o.per_class >= 1 && o.frames >= 3, "synth_generate: need classes >= 2, per_class >= 1, T >= 3");
  require(o.joints == kNtuJoints || o.joints == kSbuJoints, "synth_generate: joints must be 25 or 15");
  const RestSkeleton& rest = rest_skeleton(o.joints);
  const int subjects = o.joints == kSbuJoints ? 2 : 1;

  std::vector<SkeletonSequence> out;
  out.reserve(static_cast<size_t>(o.classes) * o.per_class);
  for (int c = 0; c < o.classes; ++c) {
    for (int n = 0; n < o.per_class; ++n) {
      Rng rng(mix_seed(o.seed, static_cast<uint64_t>(c) * 1000003u + n));
      SequenceMeta meta;
      if (o.joints == kSbuJoints) {
        meta = {0, 1, kSbuPairs[n % kSbuPairs.size()], 1 + n / static_cast<int>(kSbuPairs.size())};
      } else {
        meta = {1, 1 + n % 3, 1 + (n / 3) % 40, 1 + n / 120};
      }
      SkeletonSequence seq(o.joints, subjects, o.frames, c, meta);
      const double cycles = 1.0 + c;
      const double phase0 = rng.uniform(0, 2 * kPi);
      for (int s = 0; s < subjects; ++s) {
        const double scale = rng.uniform(0.96, 1.04);
        const double yaw = rng.uniform(-0.2, 0.2) + (s == 1 ? kPi : 0.0);
        const V3 origin{rng.uniform(-0.5, 0.5) + (s == 1 ? 1.0 : 0.0), rng.uniform(0.0, 0.2), rng.uniform(2.5, 3.5)};
        const double subject_phase = s == 1 ? kPi / 3 : 0.0;
        for (int t = 0; t < o.frames; ++t) {
          std::vector<V3> p = rest.joints;
          for (size_t g = 0; g < 4; ++g) {
            const LimbRig& limb = rest.limbs[g];
            const double theta = limb.amplitude * std::sin(2 * kPi * cycles * t / o.frames + phase0 +
                                                           kPhasePatterns[c % 4][g] + subject_phase);
            const double ct = std::cos(theta), st = std::sin(theta);
            const V3 piv = rest.joints[limb.pivot];
            for (int j : limb.joints) {
              const double dy = p[j].y - piv.y, dz = p[j].z - piv.z;
              p[j].y = piv.y + dy * ct - dz * st;
              p[j].z = piv.z + dy * st + dz * ct;
            }
          }
          auto pose = seq.pose(t, s);
          const double cy = std::cos(yaw), sy = std::sin(yaw);
          for (int j = 0; j < o.joints; ++j) {
            const double x = p[j].x * scale, y = p[j].y * scale, z = p[j].z * scale;
            const double rx = cy * x + sy * z, rz = -sy * x + cy * z;
            pose[j] = {static_cast<float>(origin.x + rx + 0.002 * rng.normal()),
                       static_cast<float>(origin.y + y + 0.002 * rng.normal()),
                       static_cast<float>(origin.z + rz + 0.002 * rng.normal())};
          }
        }
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

double mean_joint_displacement(const SkeletonSequence& seq) {
  double sum = 0;
  size_t count = 0;
  for (int t = 0; t + 1 < seq.frame_count(); ++t) {
    sum += pose_distance(seq.pose(t + 1, 0), seq.pose(t, 0));
    count += static_cast<size_t>(seq.joint_count());
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace f2c
