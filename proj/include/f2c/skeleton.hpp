#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace f2c {

inline constexpr int kNtuJoints = 25;
inline constexpr int kSbuJoints = 15;
inline constexpr int kMaxSubjects = 2;
inline constexpr int kNtuClasses = 60;
inline constexpr int kSbuClasses = 8;

/// Camera-space joint position. Stored in single precision, which is also the
/// precision of the binary cache, so a cache round trip is lossless.
struct Joint3D {
  float x = 0, y = 0, z = 0;
  friend bool operator==(const Joint3D&, const Joint3D&) = default;
};

/// Filename-derived ids. For NTU these are the S/C/P/R fields; for SBU the
/// subject id holds the pair code (s01s02 -> 102) and the camera is 1.
struct SequenceMeta {
  int setup = 0;
  int camera = 0;
  int subject = 0;
  int replication = 0;
  friend bool operator==(const SequenceMeta&, const SequenceMeta&) = default;
};

/// Frames x subject slots x joints, dense. A subject slot whose joints are all
/// exactly zero is absent in that frame (zero-subject frames are kept so the
/// temporal length is preserved).
class SkeletonSequence {
 public:
  SkeletonSequence() = default;
  SkeletonSequence(int joint_count, int subject_count, int frame_count, int label, SequenceMeta meta);

  int joint_count() const { return joints_; }
  int subject_count() const { return subjects_; }
  int frame_count() const { return frames_; }
  int label() const { return label_; }
  const SequenceMeta& meta() const { return meta_; }

  std::span<Joint3D> pose(int frame, int subject);
  std::span<const Joint3D> pose(int frame, int subject) const;
  bool present(int frame, int subject) const;

  std::span<const Joint3D> data() const { return data_; }
  std::span<Joint3D> data() { return data_; }

  /// NTU "SsssCcccPpppRrrrAaaa" for 25-joint sequences, SBU
  /// "sAAsBB_aNN_rRRR" for 15-joint ones.
  std::string name() const;

  /// Throws unless every type invariant holds (T >= 3, finite, arity <= 2).
  void validate() const;

  friend bool operator==(const SkeletonSequence&, const SkeletonSequence&) = default;

 private:
  int joints_ = 0;
  int subjects_ = 0;
  int frames_ = 0;
  int label_ = 0;
  SequenceMeta meta_;
  std::vector<Joint3D> data_;
};

struct NtuFileId {
  SequenceMeta meta;
  int action = 0;  // 1-based as in the filename
};

/// Parses "S001C002P003R002A013" (an optional extension is ignored).
NtuFileId parse_ntu_name(std::string_view filename);

/// `label` is 0-based.
SkeletonSequence parse_ntu_file(std::string_view text, const SequenceMeta& meta, int label);
SkeletonSequence parse_sbu_file(std::string_view text, const SequenceMeta& meta, int label);

/// Pair code for an SBU set directory such as "s01s02" (-> 102).
int parse_sbu_pair(std::string_view set_name);

/// Loads every *.skeleton file of a directory (sorted by name).
std::vector<SkeletonSequence> load_ntu_dir(const std::filesystem::path& dir, int threads = 0);
/// Loads an SBU tree: <dir>/sAAsBB/NN/RRR/skeleton_pos.txt.
std::vector<SkeletonSequence> load_sbu_dir(const std::filesystem::path& dir, int threads = 0);

// Binary cache ("F2CS").
std::vector<uint8_t> serialize_sequence(const SkeletonSequence& seq);
SkeletonSequence deserialize_sequence(std::span<const uint8_t> bytes);
void save_sequences(const std::vector<SkeletonSequence>& seqs, const std::filesystem::path& dir);
std::vector<SkeletonSequence> load_sequence_cache(const std::filesystem::path& dir);
/// Digest over the serialized sequences in order.
std::string dataset_digest(const std::vector<SkeletonSequence>& seqs);

/// Blocklist file: one sample name per line; blank lines and '#' comments skipped.
std::vector<std::string> load_blocklist(const std::filesystem::path& path);
std::vector<SkeletonSequence> filter_missing(std::vector<SkeletonSequence> seqs,
                                             const std::vector<std::string>& blocklist);

enum class SplitProtocol { kCrossSubject, kCrossView, kSbuFold };

struct DatasetSplit {
  std::vector<size_t> train;
  std::vector<size_t> test;
};

/// NTU cross-subject training subjects.
std::span<const int> ntu_cs_train_subjects();
/// SBU published five folds as pair codes.
std::span<const int> sbu_fold_pairs(int fold);

SplitProtocol parse_split_protocol(std::string_view name);
DatasetSplit split(const std::vector<SkeletonSequence>& seqs, SplitProtocol protocol, int fold = 0);

struct SynthOptions {
  int classes = 8;
  int per_class = 8;
  int frames = 64;
  int joints = kNtuJoints;  // 25 (one subject) or 15 (two subjects)
  uint64_t seed = 1;
};

/// Seeded synthetic dataset; class c swings all four limbs with c + 1 cycles
/// per sequence under a class-specific phase pattern.
std::vector<SkeletonSequence> synth_generate(const SynthOptions& options);

/// Mean over frames and joints of |p(t+1) - p(t)| for subject 0.
double mean_joint_displacement(const SkeletonSequence& seq);

}  // namespace f2c
