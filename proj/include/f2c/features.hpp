#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "f2c/skeleton.hpp"

namespace f2c {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline Vec3 to_vec3(const Joint3D& j) { return {j.x, j.y, j.z}; }

/// Kinematic tree over the joints, rooted at the hip.
class BoneTopology {
 public:
  BoneTopology() = default;
  /// Edges are (parent, child), 0-based. Throws unless they form a spanning
  /// tree over `joints` rooted at `root`.
  BoneTopology(int joints, int root, std::vector<std::pair<int, int>> edges);

  int joint_count() const { return joints_; }
  int root() const { return root_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  /// Edges in breadth-first order from the root; parents precede children.
  const std::vector<size_t>& traversal() const { return traversal_; }
  /// Edge index that ends at `joint`, or -1 for the root.
  int parent_edge(int joint) const { return parent_edge_[joint]; }

 private:
  int joints_ = 0;
  int root_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<size_t> traversal_;
  std::vector<int> parent_edge_;
};

enum class BodyPart { kLeftArm = 0, kRightArm, kTorso, kLeftLeg, kRightLeg };
inline constexpr int kBodyParts = 5;

struct JointChain {
  std::array<std::vector<int>, kBodyParts> parts;

  /// Concatenation left arm, right arm, torso, left leg, right leg.
  std::vector<int> order() const;
  void validate(int joints) const;
};

struct ReferenceJointSet {
  int wb_ref = 0;
  std::array<int, 5> bp_refs{};  // head, left shoulder, right shoulder, left hip, right hip

  void validate(int joints) const;
};

/// Per-dataset joint layout, loaded from a versioned config file.
struct SkeletonLayout {
  std::string name;
  int joints = 0;
  BoneTopology topology;
  JointChain chain;
  ReferenceJointSet refs;

  static SkeletonLayout ntu();
  static SkeletonLayout sbu();
  static SkeletonLayout for_joints(int joints);
  static SkeletonLayout parse(std::string_view text, const std::string& origin = "<layout>");
  static SkeletonLayout load(const std::filesystem::path& path);
};

struct BoneLengthTable {
  std::vector<double> lengths;  // one per topology edge
};

enum class FeatureKind { kPosition = 0, kVelocity = 1 };
enum class FeatureBasis { kWholeBody = 0, kBodyPart = 1 };

/// rows = time, cols = joint slots; each cell a 3-vector.
struct FeatureGrid {
  int rows = 0;
  int cols = 0;
  FeatureKind kind = FeatureKind::kPosition;
  FeatureBasis basis = FeatureBasis::kWholeBody;
  std::vector<Vec3> values;

  FeatureGrid() = default;
  FeatureGrid(int rows, int cols, FeatureKind kind, FeatureBasis basis)
      : rows(rows), cols(cols), kind(kind), basis(basis), values(static_cast<size_t>(rows) * cols) {}

  Vec3& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
  const Vec3& at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
};

struct FeatureOptions {
  bool limb_normalize = true;
  /// Limb normalization for the body-part features as well.
  bool normalize_body_parts = true;
};

std::vector<Vec3> relative_positions(std::span<const Vec3> joints, int ref);

/// Central differences; (rows - 2) rows aligned to frames 1..T-2.
FeatureGrid velocities(const FeatureGrid& positions);

BoneLengthTable mean_bone_lengths(std::span<const SkeletonSequence* const> train, const BoneTopology& topology);
BoneLengthTable mean_bone_lengths(std::span<const SkeletonSequence> train, const BoneTopology& topology);

std::vector<Vec3> limb_normalize(std::span<const Vec3> joints, const BoneTopology& topology,
                                 const BoneLengthTable& table);

struct GridPair {
  FeatureGrid position;
  FeatureGrid velocity;
};

GridPair build_wb_grid(const SkeletonSequence& seq, const SkeletonLayout& layout, const BoneLengthTable& table,
                       const FeatureOptions& options = {});
GridPair build_bp_grid(const SkeletonSequence& seq, const SkeletonLayout& layout, const BoneLengthTable& table,
                       const FeatureOptions& options = {});

// Bone-length table text format: one "parent child length" line per edge.
std::string format_bone_table(const BoneLengthTable& table, const BoneTopology& topology);
BoneLengthTable parse_bone_table(std::string_view text, const BoneTopology& topology);

}  // namespace f2c
