#include "f2c/features.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <sstream>

#include "f2c/common.hpp"
#include "f2c/error.hpp"

namespace f2c {

// ------------------------------------------------------------- topology

BoneTopology::BoneTopology(int joints, int root, std::vector<std::pair<int, int>> edges)
    : joints_(joints), root_(root) {
  if (joints < 1 || root < 0 || root >= joints) fail(ErrorCode::kConfig, "bone topology: root out of range");
  if (static_cast<int>(edges.size()) != joints - 1) {
    fail(ErrorCode::kConfig, "bone topology: " + std::to_string(edges.size()) + " edges for " + std::to_string(joints) +
                                 " joints; a spanning tree needs " + std::to_string(joints - 1));
  }
  std::vector<std::vector<size_t>> incident(joints);
  for (size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    if (a < 0 || b < 0 || a >= joints || b >= joints || a == b) {
      fail(ErrorCode::kConfig, "bone topology: invalid edge " + std::to_string(a) + "-" + std::to_string(b));
    }
    incident[a].push_back(e);
    incident[b].push_back(e);
  }
  // Orient edges away from the root, breadth first.
  parent_edge_.assign(joints, -1);
  std::vector<bool> seen(joints, false);
  std::vector<bool> used(edges.size(), false);
  std::deque<int> queue{root};
  seen[root] = true;
  edges_.resize(edges.size());
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    for (size_t e : incident[j]) {
      if (used[e]) continue;
      used[e] = true;
      const int other = edges[e].first == j ? edges[e].second : edges[e].first;
      if (seen[other]) fail(ErrorCode::kConfig, "bone topology: edges contain a cycle");
      seen[other] = true;
      edges_[e] = {j, other};
      parent_edge_[other] = static_cast<int>(e);
      traversal_.push_back(e);
      queue.push_back(other);
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    fail(ErrorCode::kConfig, "bone topology: edges do not connect every joint");
  }
}

std::vector<int> JointChain::order() const {
  std::vector<int> out;
  for (const auto& part : parts) out.insert(out.end(), part.begin(), part.end());
  return out;
}

void JointChain::validate(int joints) const {
  std::vector<int> o = order();
  std::sort(o.begin(), o.end());
  bool ok = static_cast<int>(o.size()) == joints;
  for (int i = 0; ok && i < joints; ++i) ok = o[i] == i;
  if (!ok) fail(ErrorCode::kConfig, "joint chain is not a permutation of all " + std::to_string(joints) + " joints");
  for (const auto& part : parts) {
    if (part.empty()) fail(ErrorCode::kConfig, "joint chain has an empty body part");
  }
}

void ReferenceJointSet::validate(int joints) const {
  if (wb_ref < 0 || wb_ref >= joints) fail(ErrorCode::kConfig, "whole-body reference joint out of range");
  for (size_t i = 0; i < bp_refs.size(); ++i) {
    if (bp_refs[i] < 0 || bp_refs[i] >= joints) fail(ErrorCode::kConfig, "body-part reference joint out of range");
    for (size_t k = 0; k < i; ++k) {
      if (bp_refs[k] == bp_refs[i]) fail(ErrorCode::kConfig, "body-part reference joints must be distinct");
    }
  }
}

// ------------------------------------------------------------- layouts

namespace {

constexpr std::string_view kNtuLayoutText = R"(schema = f2c-layout/1
name = ntu
joints = 25
index_base = 1
root = 1
edges = 1 2, 2 21, 21 3, 3 4, 21 5, 5 6, 6 7, 7 8, 8 22, 7 23, 21 9, 9 10, 10 11, 11 12, 12 24, 11 25, 1 13, 13 14, 14 15, 15 16, 1 17, 17 18, 18 19, 19 20
left_arm = 5 6 7 8 22 23
right_arm = 9 10 11 12 24 25
torso = 4 3 21 2 1
left_leg = 13 14 15 16
right_leg = 17 18 19 20
wb_ref = 1
bp_refs = 4 5 9 13 17
)";

constexpr std::string_view kSbuLayoutText = R"(schema = f2c-layout/1
name = sbu
joints = 15
index_base = 1
root = 3
edges = 3 2, 2 1, 2 4, 4 5, 5 6, 2 7, 7 8, 8 9, 3 10, 10 11, 11 12, 3 13, 13 14, 14 15
left_arm = 4 5 6
right_arm = 7 8 9
torso = 1 2 3
left_leg = 10 11 12
right_leg = 13 14 15
wb_ref = 3
bp_refs = 1 4 7 10 13
)";

constexpr std::array<const char*, kBodyParts> kPartKeys = {"left_arm", "right_arm", "torso", "left_leg", "right_leg"};

}  // namespace

SkeletonLayout SkeletonLayout::parse(std::string_view text, const std::string& origin) {
  const KeyValueConfig cfg = KeyValueConfig::parse(text, origin);
  cfg.expect_schema("f2c-layout/1");
  SkeletonLayout layout;
  layout.name = cfg.get_or("name", "custom");
  layout.joints = static_cast<int>(cfg.get_int("joints"));
  const int base = static_cast<int>(cfg.get_int_or("index_base", 0));
  auto shift = [&](std::vector<int> v) {
    for (int& x : v) x -= base;
    return v;
  };
  const std::vector<int> flat = shift(cfg.get_ints("edges"));
  if (flat.size() % 2 != 0) fail(ErrorCode::kConfig, origin + ": 'edges' must list joint pairs");
  std::vector<std::pair<int, int>> edges;
  for (size_t i = 0; i < flat.size(); i += 2) edges.emplace_back(flat[i], flat[i + 1]);
  layout.topology = BoneTopology(layout.joints, static_cast<int>(cfg.get_int("root")) - base, std::move(edges));
  for (int p = 0; p < kBodyParts; ++p) layout.chain.parts[p] = shift(cfg.get_ints(kPartKeys[p]));
  layout.chain.validate(layout.joints);
  layout.refs.wb_ref = static_cast<int>(cfg.get_int("wb_ref")) - base;
  const std::vector<int> bp = shift(cfg.get_ints("bp_refs"));
  if (bp.size() != 5) fail(ErrorCode::kConfig, origin + ": 'bp_refs' needs exactly five joints");
  std::copy(bp.begin(), bp.end(), layout.refs.bp_refs.begin());
  layout.refs.validate(layout.joints);
  return layout;
}

SkeletonLayout SkeletonLayout::load(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path.string());
}

SkeletonLayout SkeletonLayout::ntu() {
  static const SkeletonLayout layout = parse(kNtuLayoutText, "builtin:ntu");
  return layout;
}

SkeletonLayout SkeletonLayout::sbu() {
  static const SkeletonLayout layout = parse(kSbuLayoutText, "builtin:sbu");
  return layout;
}

SkeletonLayout SkeletonLayout::for_joints(int joints) {
  if (joints == kNtuJoints) return ntu();
  if (joints == kSbuJoints) return sbu();
  fail(ErrorCode::kConfig, "no built-in joint layout for " + std::to_string(joints) + " joints");
}

// ------------------------------------------------------------- primitives

std::vector<Vec3> relative_positions(std::span<const Vec3> joints, int ref) {
  require(ref >= 0 && static_cast<size_t>(ref) < joints.size(), "relative_positions: reference joint out of range");
  const Vec3 origin = joints[ref];
  std::vector<Vec3> out(joints.size());
  for (size_t i = 0; i < joints.size(); ++i) out[i] = joints[i] - origin;
  return out;
}

FeatureGrid velocities(const FeatureGrid& positions) {
  require(positions.rows >= 3, "velocities: need at least 3 frames");
  FeatureGrid v(positions.rows - 2, positions.cols, FeatureKind::kVelocity, positions.basis);
  for (int t = 1; t + 1 < positions.rows; ++t) {
    for (int c = 0; c < positions.cols; ++c) v.at(t - 1, c) = positions.at(t + 1, c) - positions.at(t - 1, c);
  }
  return v;
}

namespace {

std::vector<Vec3> load_pose(const SkeletonSequence& seq, int t, int s) {
  std::vector<Vec3> out;
  out.reserve(seq.joint_count());
  for (const Joint3D& j : seq.pose(t, s)) out.push_back(to_vec3(j));
  return out;
}

}  // namespace

BoneLengthTable mean_bone_lengths(std::span<const SkeletonSequence* const> train, const BoneTopology& topology) {
  require(!train.empty(), "mean_bone_lengths: empty training set");
  const auto& edges = topology.edges();
  std::vector<double> sum(edges.size(), 0.0);
  size_t poses = 0;
  for (const SkeletonSequence* seq : train) {
    require(seq->joint_count() == topology.joint_count(), "mean_bone_lengths: joint count mismatch");
    for (int t = 0; t < seq->frame_count(); ++t) {
      for (int s = 0; s < seq->subject_count(); ++s) {
        if (!seq->present(t, s)) continue;
        const auto pose = seq->pose(t, s);
        for (size_t e = 0; e < edges.size(); ++e) {
          sum[e] += (to_vec3(pose[edges[e].second]) - to_vec3(pose[edges[e].first])).norm();
        }
        ++poses;
      }
    }
  }
  BoneLengthTable table;
  table.lengths.resize(edges.size());
  for (size_t e = 0; e < edges.size(); ++e) {
    table.lengths[e] = poses == 0 ? 0.0 : sum[e] / static_cast<double>(poses);
    if (!(table.lengths[e] > 0.0)) {
      fail(ErrorCode::kNumeric, "mean bone length of edge " + std::to_string(edges[e].first) + "-" +
                                    std::to_string(edges[e].second) + " is zero");
    }
  }
  return table;
}

BoneLengthTable mean_bone_lengths(std::span<const SkeletonSequence> train, const BoneTopology& topology) {
  std::vector<const SkeletonSequence*> ptrs;
  for (const SkeletonSequence& s : train) ptrs.push_back(&s);
  return mean_bone_lengths(std::span<const SkeletonSequence* const>(ptrs), topology);
}

namespace {

/// Limb-normalized joints relative to the root (root at the origin). Depends
/// only on bone vectors, so it is exactly invariant to input translation.
std::vector<Vec3> normalized_offsets(std::span<const Vec3> joints, const BoneTopology& topology,
                                     const BoneLengthTable& table) {
  require(static_cast<int>(joints.size()) == topology.joint_count(), "limb_normalize: joint count mismatch");
  require(table.lengths.size() == topology.edges().size(), "limb_normalize: table does not match topology");
  std::vector<Vec3> out(joints.size());
  for (size_t e : topology.traversal()) {
    const auto [parent, child] = topology.edges()[e];
    const Vec3 bone = joints[child] - joints[parent];
    const double len = bone.norm();
    const Vec3 unit = len > 0.0 ? bone * (1.0 / len) : Vec3{};
    out[child] = out[parent] + unit * table.lengths[e];
  }
  return out;
}

}  // namespace

std::vector<Vec3> limb_normalize(std::span<const Vec3> joints, const BoneTopology& topology,
                                 const BoneLengthTable& table) {
  std::vector<Vec3> out = normalized_offsets(joints, topology, table);
  const Vec3 root = joints[topology.root()];
  for (Vec3& p : out) p = p + root;
  out[topology.root()] = root;
  return out;
}

// ------------------------------------------------------------- grids

namespace {

/// Per-subject joints for frame t, limb-normalized into root-relative
/// coordinates when requested; empty when the subject is absent.
std::vector<std::vector<Vec3>> prepare_poses(const SkeletonSequence& seq, int t, const SkeletonLayout& layout,
                                             const BoneLengthTable& table, bool normalize) {
  std::vector<std::vector<Vec3>> out(kMaxSubjects);
  for (int s = 0; s < seq.subject_count(); ++s) {
    if (!seq.present(t, s)) continue;
    std::vector<Vec3> pose = load_pose(seq, t, s);
    out[s] = normalize ? normalized_offsets(pose, layout.topology, table) : std::move(pose);
  }
  return out;
}

void check_inputs(const SkeletonSequence& seq, const SkeletonLayout& layout) {
  seq.validate();
  require(seq.joint_count() == layout.joints, "feature grid: sequence joint count does not match layout");
}

}  // namespace

GridPair build_wb_grid(const SkeletonSequence& seq, const SkeletonLayout& layout, const BoneLengthTable& table,
                       const FeatureOptions& options) {
  check_inputs(seq, layout);
  const int J = layout.joints;
  const std::vector<int> order = layout.chain.order();
  FeatureGrid pos(seq.frame_count(), kMaxSubjects * J, FeatureKind::kPosition, FeatureBasis::kWholeBody);
  for (int t = 0; t < seq.frame_count(); ++t) {
    const auto poses = prepare_poses(seq, t, layout, table, options.limb_normalize);
    for (int s = 0; s < kMaxSubjects; ++s) {
      if (poses[s].empty()) continue;
      const std::vector<Vec3> rel = relative_positions(poses[s], layout.refs.wb_ref);
      for (int k = 0; k < J; ++k) pos.at(t, s * J + k) = rel[order[k]];
    }
  }
  FeatureGrid vel = velocities(pos);
  return {std::move(pos), std::move(vel)};
}

GridPair build_bp_grid(const SkeletonSequence& seq, const SkeletonLayout& layout, const BoneLengthTable& table,
                       const FeatureOptions& options) {
  check_inputs(seq, layout);
  const int J = layout.joints;
  const int block = kMaxSubjects * J;
  const std::vector<int> order = layout.chain.order();
  const bool normalize = options.limb_normalize && options.normalize_body_parts;
  FeatureGrid pos(seq.frame_count(), 5 * block, FeatureKind::kPosition, FeatureBasis::kBodyPart);
  for (int t = 0; t < seq.frame_count(); ++t) {
    const auto poses = prepare_poses(seq, t, layout, table, normalize);
    for (int r = 0; r < 5; ++r) {
      for (int s = 0; s < kMaxSubjects; ++s) {
        if (poses[s].empty()) continue;
        const std::vector<Vec3> rel = relative_positions(poses[s], layout.refs.bp_refs[r]);
        for (int k = 0; k < J; ++k) pos.at(t, r * block + s * J + k) = rel[order[k]];
      }
    }
  }
  FeatureGrid vel = velocities(pos);
  return {std::move(pos), std::move(vel)};
}

// ------------------------------------------------------------- table I/O

std::string format_bone_table(const BoneLengthTable& table, const BoneTopology& topology) {
  std::string out = "# parent child mean_length (0-based joints)\n";
  char buf[96];
  for (size_t e = 0; e < table.lengths.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%d %d %.17g\n", topology.edges()[e].first, topology.edges()[e].second,
                  table.lengths[e]);
    out += buf;
  }
  return out;
}

BoneLengthTable parse_bone_table(std::string_view text, const BoneTopology& topology) {
  BoneLengthTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t e = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int a = 0, b = 0;
    double len = 0;
    if (!(ls >> a >> b >> len)) fail(ErrorCode::kFormat, "bone table: malformed line '" + line + "'");
    if (e >= topology.edges().size() || topology.edges()[e] != std::make_pair(a, b) || !(len > 0)) {
      fail(ErrorCode::kFormat, "bone table does not match the joint layout");
    }
    table.lengths.push_back(len);
    ++e;
  }
  if (e != topology.edges().size()) fail(ErrorCode::kFormat, "bone table does not match the joint layout");
  return table;
}

}  // namespace f2c
