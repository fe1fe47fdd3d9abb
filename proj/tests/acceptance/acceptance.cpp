// Acceptance harness: one PASS/FAIL/SKIP line per criterion, exit 1 on any FAIL.
// `f2c_acceptance --write-golden` regenerates the committed encoding digest.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "f2c/cache.hpp"
#include "f2c/common.hpp"
#include "f2c/error.hpp"
#include "f2c/features.hpp"
#include "f2c/image.hpp"
#include "f2c/network.hpp"
#include "f2c/skeleton.hpp"
#include "f2c/train.hpp"
#include "helpers.hpp"

using namespace f2c;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  enum class Status { kPass, kFail, kSkip } status = Status::kFail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Status::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Status::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::Status::kSkip, std::move(d)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string run_cli(const std::string& args, int* code) {
  const std::string cmd = std::string("\"") + F2C_CLI_PATH + "\" " + args + " 2>&1";
  std::string out;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (p == nullptr) {
    *code = -1;
    return out;
  }
  std::array<char, 4096> buf;
  size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
  const int status = ::pclose(p);
  *code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

// ------------------------------------------------------------------ ledger

Outcome shape_ledger_check() {
  const auto start = Clock::now();
  int code = 0;
  const std::string out = run_cli("inspect", &code);
  const double elapsed = seconds_since(start);
  if (code != 0) return fail("inspect exited with " + std::to_string(code));
  const std::vector<std::string> expected = {
      "ledger\tstep=partition\tslices=35\tchannels=3\theight=32\twidth=44",
      "ledger\tstep=fuse-1\tslices=24\tchannels=3\theight=64\twidth=88",
      "ledger\tstep=fuse-2\tslices=10\tchannels=64\theight=32\twidth=44",
      "ledger\tstep=fuse-3\tslices=4\tchannels=128\theight=16\twidth=22",
      "ledger\tstep=output\tslices=4\tper_slice=5120\tstream=20480\thead_input=81920",
  };
  for (const std::string& row : expected) {
    if (out.find(row + "\n") == std::string::npos) return fail("missing row: " + row);
  }
  if (elapsed >= 1.0) return fail("inspect took " + fmt("%.3f", elapsed) + " s");
  return pass("35x32x44, 24x64x88, 10x32x44, 4x16x22, 4x5120 in " + fmt("%.3f", elapsed) + " s");
}

// ------------------------------------------------------------------ gradient

Outcome gradient_oracle_check() {
  const auto start = Clock::now();
  const ArchConfig arch = ArchConfig::preset("mini", 4);
  F2CNet<double> net(arch);
  net.init(11);
  Rng rng(29);
  // Zero biases over all-zero regions put ReLU inputs exactly on the kink;
  // move the check point off it.
  for (const ParamTensor& t : net.tensors()) {
    if (t.fan_in != 0) continue;
    for (size_t i = 0; i < t.size(); ++i) net.params()[t.offset + i] = rng.uniform(-0.05, 0.05);
  }
  F2CNet<double>::Inputs inputs;
  for (auto& t : inputs) {
    t = Tensor<double>(3, arch.image_h, arch.image_w);
    for (double& v : t.data) v = rng.uniform();
  }
  const int label = 2;
  auto loss = [&] {
    const std::vector<double> logits = net.forward(inputs);
    std::vector<double> g(logits.size());
    return softmax_cross_entropy<double>(logits, label, g);
  };

  F2CNet<double>::Cache cache;
  const std::vector<double> logits = net.forward(inputs, &cache);
  std::vector<double> dlogits(logits.size());
  softmax_cross_entropy<double>(logits, label, dlogits);
  std::vector<double> grad(net.param_count(), 0.0);
  net.backward(cache, dlogits, grad);

  // Small enough not to straddle ReLU or pooling switches; roundoff stays
  // near 1e-10, well under the absolute floor.
  const double h = 1e-6;
  auto params = net.params();
  size_t bad = 0;
  double worst = 0;
  std::string first_bad;
  for (size_t k = 0; k < params.size(); ++k) {
    const double keep = params[k];
    params[k] = keep + h;
    const double up = loss();
    params[k] = keep - h;
    const double down = loss();
    params[k] = keep;
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(numeric - grad[k]);
    const double allowed = 1e-7 + 1e-4 * std::max(std::abs(numeric), std::abs(grad[k]));
    worst = std::max(worst, err / allowed);
    if (err > allowed && bad++ == 0) first_bad = "param " + std::to_string(k);
  }
  const double elapsed = seconds_since(start);
  const std::string summary = std::to_string(params.size()) + " params (m=" + std::to_string(arch.segments) +
                              "), worst error/tolerance " + fmt("%.3g", worst) + ", " + fmt("%.1f", elapsed) + " s";
  if (bad > 0) return fail(std::to_string(bad) + " mismatches, first " + first_bad + "; " + summary);
  if (elapsed >= 120) return fail("too slow; " + summary);
  return pass(summary);
}

// ------------------------------------------------------------------ overfit

Outcome overfit_check() {
  const auto start = Clock::now();
  SynthOptions so;
  so.classes = 8;
  so.per_class = 8;
  so.seed = 1;
  const auto seqs = synth_generate(so);
  test::TempDir dir("acc_overfit");
  EncodeConfig ec = EncodeConfig::for_kind("synth", 8);
  const ArchConfig arch = ArchConfig::preset("mini", 8);
  ec.protocol = "none";
  ec.image_h = arch.image_h;
  ec.image_w = arch.image_w;
  encode_dataset(seqs, SkeletonLayout::for_joints(so.joints), ec, dir.path());
  const ImageCache cache = load_image_cache(dir.path());

  std::ostringstream detail;
  int reached = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    F2CNet<float> net(arch);
    net.init(seed);
    TrainConfig tc;
    tc.base_lr = 1e-3;
    tc.gamma = 0.95;
    tc.epochs = 50;
    tc.batch_size = 2;
    tc.val_fraction = 0;
    tc.seed = seed;
    tc.single_precision = true;
    int epochs = 0;
    double acc = 0;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
      epochs = r.epoch + 1;
      acc = r.train_acc;
      return r.train_acc < 0.95;
    };
    train(net, cache, tc, {}, hooks);
    const bool ok = acc >= 0.95;
    reached += ok;
    detail << " seed" << seed << "=" << (ok ? "" : "miss:") << fmt("%.3f", acc) << "@" << epochs;
  }
  const double elapsed = seconds_since(start);
  const std::string summary =
      std::to_string(reached) + "/5 seeds reached 95%;" + detail.str() + "; " + fmt("%.0f", elapsed) + " s";
  return reached >= 4 ? pass(summary) : fail(summary);
}

// ------------------------------------------------------------------ geometry

// Multiples of 2^-10 in [-2, 2]; sums of two such values stay exact in float.
float dyadic(Rng& rng) { return static_cast<float>(static_cast<int>(rng.below(4097)) - 2048) / 1024.0f; }

double angle(const Vec3& a, const Vec3& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Outcome geometry_check() {
  const SkeletonLayout layout = SkeletonLayout::ntu();
  const BoneTopology& topo = layout.topology;
  Rng rng(2024);
  double worst_len = 0, worst_angle = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> pose(topo.joint_count());
    for (Vec3& p : pose) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1, 4)};
    BoneLengthTable table;
    for (size_t e = 0; e < topo.edges().size(); ++e) table.lengths.push_back(rng.uniform(0.02, 0.6));
    const auto out = limb_normalize(pose, topo, table);
    std::vector<Vec3> before, after;
    for (size_t e = 0; e < topo.edges().size(); ++e) {
      const auto [a, b] = topo.edges()[e];
      before.push_back(pose[b] - pose[a]);
      after.push_back(out[b] - out[a]);
      worst_len = std::max(worst_len, std::abs(after.back().norm() - table.lengths[e]));
    }
    for (size_t i = 0; i < before.size(); ++i) {
      for (size_t j = i + 1; j < before.size(); ++j) {
        const double a0 = angle(before[i], before[j]);
        const double a1 = angle(after[i], after[j]);
        worst_angle = std::max(worst_angle, std::abs(a1 - a0) / std::max(a0, 1e-3));
      }
    }
  }
  if (worst_len > 1e-9) return fail("bone length error " + fmt("%.3g", worst_len));
  if (worst_angle > 1e-6) return fail("relative angle error " + fmt("%.3g", worst_angle));

  // Translation: exactly representable shifts leave every grid cell unchanged.
  SynthOptions so;
  so.classes = 2;
  so.per_class = 1;
  so.frames = 20;
  const std::vector<SkeletonSequence> base_set = synth_generate(so);
  SkeletonSequence seq = base_set[0];
  for (Joint3D& j : seq.data()) {
    if (j.x != 0 || j.y != 0 || j.z != 0) j = {dyadic(rng), dyadic(rng), dyadic(rng) + 3.0f};
  }
  const std::vector<SkeletonSequence> train{seq};
  const BoneLengthTable table = mean_bone_lengths(std::span<const SkeletonSequence>(train), topo);
  int translations = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto shifted = seq;
    const Joint3D d{dyadic(rng), dyadic(rng), dyadic(rng)};
    for (Joint3D& j : shifted.data()) j = {j.x + d.x, j.y + d.y, j.z + d.z};
    for (bool normalize : {true, false}) {
      FeatureOptions fo;
      fo.limb_normalize = normalize;
      const auto a = build_wb_grid(seq, layout, table, fo);
      const auto b = build_wb_grid(shifted, layout, table, fo);
      const auto c = build_bp_grid(seq, layout, table, fo);
      const auto e = build_bp_grid(shifted, layout, table, fo);
      if (a.position.values != b.position.values || a.velocity.values != b.velocity.values ||
          c.position.values != e.position.values || c.velocity.values != e.velocity.values) {
        return fail("grid changed under translation trial " + std::to_string(trial));
      }
      ++translations;
    }
  }

  // Constant motion: a held pose, and the same pose drifting at a constant
  // (exactly representable) velocity, both have zero velocity features.
  auto held = seq;
  auto drifting = seq;
  for (int t = 0; t < seq.frame_count(); ++t) {
    for (int j = 0; j < seq.joint_count(); ++j) {
      const Joint3D p = seq.pose(0, 0)[j];
      held.pose(t, 0)[j] = p;
      drifting.pose(t, 0)[j] = {p.x + 0.125f * t, p.y - 0.0625f * t, p.z + 0.03125f * t};
    }
  }
  for (const auto* s : {&held, &drifting}) {
    const auto wb = build_wb_grid(*s, layout, table);
    const auto bp = build_bp_grid(*s, layout, table);
    for (const auto* g : {&wb.velocity, &bp.velocity}) {
      for (const Vec3& v : g->values) {
        if (v.x != 0 || v.y != 0 || v.z != 0) return fail("non-zero velocity under constant motion");
      }
    }
  }
  const FeatureGrid raw_vel = velocities([&] {
    FeatureGrid g(6, 1, FeatureKind::kPosition, FeatureBasis::kWholeBody);
    for (int t = 0; t < 6; ++t) g.at(t, 0) = {0.75, -1.5, 2.25};
    return g;
  }());
  for (const Vec3& v : raw_vel.values) {
    if (v.x != 0 || v.y != 0 || v.z != 0) return fail("non-zero velocity of a constant trajectory");
  }
  return pass("100 skeletons: bone length error " + fmt("%.2g", worst_len) + ", relative angle error " +
              fmt("%.2g", worst_angle) + "; " + std::to_string(translations) +
              " translated grid pairs identical; constant motion velocity 0");
}

// ------------------------------------------------------------------ encoding

std::string fixture_digest() {
  const fs::path path = fs::path(F2C_TEST_DATA) / "ntu" / "S001C002P003R002A013.skeleton";
  const NtuFileId id = parse_ntu_name(path.filename().string());
  const auto bytes = read_file(path);
  const SkeletonSequence seq =
      parse_ntu_file(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), id.meta,
                     id.action - 1);
  const SkeletonLayout layout = SkeletonLayout::ntu();
  const std::vector<SkeletonSequence> train{seq};
  const BoneLengthTable table = mean_bone_lengths(std::span<const SkeletonSequence>(train), layout.topology);
  EncodeOptions eo;
  eo.height = 224;
  eo.width = 224;
  return quad_digest(encode_sequence(seq, layout, table, eo));
}

fs::path golden_path() { return fs::path(F2C_TEST_DATA) / "golden" / "ntu_fixture_quad.sha256"; }

Outcome encoding_check() {
  FeatureGrid g(3, 4, FeatureKind::kPosition, FeatureBasis::kWholeBody);
  Rng rng(5);
  for (Vec3& v : g.values) v = {rng.uniform(-3, 3), rng.uniform(0, 1), rng.uniform(-1e3, 1e3)};
  const SkeletonImage img = minmax_to_rgb(g);
  for (int ch = 0; ch < 3; ++ch) {
    int lo = 255, hi = 0;
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        lo = std::min<int>(lo, img.at(r, c, ch));
        hi = std::max<int>(hi, img.at(r, c, ch));
      }
    }
    if (lo != 0 || hi != 255) return fail("channel " + std::to_string(ch) + " spans " + std::to_string(lo) + ".." +
                                          std::to_string(hi));
  }

  SkeletonImage noise(37, 53);
  for (uint8_t& p : noise.pixels) p = static_cast<uint8_t>(rng.below(256));
  if (cubic_resize(noise, 37, 53).pixels != noise.pixels) return fail("resize at equal dims is not the identity");

  const std::string first = fixture_digest();
  if (fixture_digest() != first) return fail("fixture encode differs between runs");
  std::string golden;
  try {
    const auto bytes = read_file(golden_path());
    golden.assign(bytes.begin(), bytes.end());
  } catch (const Error& e) {
    return fail(std::string("golden digest unreadable: ") + e.what());
  }
  while (!golden.empty() && std::isspace(static_cast<unsigned char>(golden.back()))) golden.pop_back();
  if (golden != first) return fail("fixture digest " + first + " != golden " + golden);
  return pass("extremes 0/255 per channel, identity resize, fixture digest " + first.substr(0, 16) + " matches golden");
}

// ------------------------------------------------------------------ metrics

Outcome metrics_check() {
  // Hand-built 3-class confusion (rows truth, columns predicted):
  //   [4 1 0]
  //   [2 3 1]
  //   [0 0 5]
  // precision: 4/6, 3/4, 5/6   recall: 4/5, 3/6, 5/5   accuracy 12/16
  const std::array<std::array<int, 3>, 3> counts{{{4, 1, 0}, {2, 3, 1}, {0, 0, 5}}};
  ConfusionMatrix m(3);
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) {
      for (int k = 0; k < counts[t][p]; ++k) m.add(t, p);
    }
  }
  const std::array<double, 3> precision{4.0 / 6.0, 3.0 / 4.0, 5.0 / 6.0};
  const std::array<double, 3> recall{4.0 / 5.0, 3.0 / 6.0, 5.0 / 5.0};
  for (int c = 0; c < 3; ++c) {
    if (m.precision(c) != precision[c]) return fail("precision of class " + std::to_string(c));
    if (m.recall(c) != recall[c]) return fail("recall of class " + std::to_string(c));
  }
  if (m.accuracy() != 0.75) return fail("accuracy " + fmt("%.17g", m.accuracy()));

  const EvalReport report{"test", m};
  const std::string text = format_report(report);
  const EvalReport back = parse_report(text);
  if (back.split != "test" || !(back.confusion == m)) return fail("report did not round-trip");
  if (format_report(back) != text) return fail("re-formatted report differs");
  std::string tampered = text;
  tampered.replace(tampered.find("accuracy=0.75"), 13, "accuracy=0.76");
  if (test::error_code_of([&] { parse_report(tampered); }) != static_cast<int>(ErrorCode::kParse)) {
    return fail("tampered report accepted");
  }
  return pass("precision 4/6 3/4 5/6, recall 4/5 3/6 5/5, accuracy 0.75, report round-trips");
}

// ------------------------------------------------------------------ SBU count

Outcome sbu_count_check() {
  // 282 two-subject sequences: 36 per class minus 6.
  SynthOptions so;
  so.classes = kSbuClasses;
  so.per_class = 36;
  so.frames = 12;
  so.joints = kSbuJoints;
  auto seqs = synth_generate(so);
  seqs.resize(282);
  test::TempDir dir("acc_sbu");
  save_sequences(seqs, dir / "seqs");

  int code = 0;
  const std::string out =
      run_cli("encode --dataset " + (dir / "seqs").string() + " --kind cache --arch mini --out " +
                  (dir / "cache").string(),
              &code);
  if (code != 0) return fail("encode exited with " + std::to_string(code) + ": " + out);
  const ImageCache cache = load_image_cache(dir / "cache");
  const CacheInfo& info = cache.info;
  const size_t samples = cache.entries.size() * static_cast<size_t>(info.crops);

  // Training side of the default fold, expanded by the trainer itself.
  size_t train_entries = 0;
  for (const CacheEntry& e : cache.entries) train_entries += e.train;
  const size_t expanded = expand_samples(cache, SampleSet::kTrain, {}, 1).size();

  const auto manifest_bytes = read_file(dir / "cache" / "manifest.txt");
  const std::string manifest(manifest_bytes.begin(), manifest_bytes.end());
  const size_t note = manifest.find("pair_swap = on (");

  std::string summary = "282 sequences x " + std::string(info.pair_swap ? "2" : "1") + " orders x " +
                        std::to_string(info.crops) + " crops = " + std::to_string(samples) + "; fold " +
                        std::to_string(info.fold) + " training samples " + std::to_string(expanded);
  if (samples != 11280) return fail(summary);
  if (expanded != train_entries * static_cast<size_t>(info.crops)) return fail("trainer expansion; " + summary);
  if (note == std::string::npos) return fail("manifest lacks the pair_swap note; " + summary);
  return pass(summary + "; pair_swap documented in manifest");
}

// ------------------------------------------------------------------ SBU smoke

Outcome sbu_smoke_check() {
  const char* dir = std::getenv("SBU_DIR");
  if (dir == nullptr || *dir == '\0') return skip("set SBU_DIR to the SBU Kinect interaction directory to run");
  const auto start = Clock::now();
  const auto seqs = load_sbu_dir(dir);
  test::TempDir work("acc_sbu_smoke");
  EncodeConfig ec = EncodeConfig::for_kind("sbu", kSbuClasses);
  ec.fold = 0;
  encode_dataset(seqs, SkeletonLayout::sbu(), ec, work / "cache");
  const ImageCache cache = load_image_cache(work / "cache");
  F2CNet<float> net(ArchConfig::preset("default", kSbuClasses));
  net.init(1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.single_precision = true;
  const TrainResult r = train(net, cache, tc, work / "run");
  std::ostringstream d;
  bool finite = true;
  for (const EpochRecord& e : r.history) {
    finite = finite && std::isfinite(e.train_loss);
    d << " e" << e.epoch << " loss=" << fmt("%.4f", e.train_loss) << " val=" << fmt("%.3f", e.val_acc);
  }
  const double last_val = r.history.empty() ? 0.0 : r.history.back().val_acc;
  const std::string summary = std::to_string(seqs.size()) + " sequences;" + d.str() + "; " +
                              fmt("%.0f", seconds_since(start)) + " s";
  if (r.history.size() != 3 || !finite) return fail("diverged;" + summary);
  if (!(last_val > 0.125)) return fail("validation at or below chance;" + summary);
  return pass(summary);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && std::string(argv[1]) == "--write-golden") {
    fs::create_directories(golden_path().parent_path());
    write_file_atomic(golden_path(), fixture_digest() + "\n");
    std::cout << "wrote " << golden_path().string() << "\n";
    return 0;
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"shape-ledger", shape_ledger_check},     {"gradient-oracle", gradient_oracle_check},
      {"overfit", overfit_check},               {"geometry-invariants", geometry_check},
      {"encoding-invariants", encoding_check},  {"metrics-report", metrics_check},
      {"sbu-augmentation-count", sbu_count_check}, {"sbu-smoke-train", sbu_smoke_check},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Outcome::Status::kPass ? "PASS" : o.status == Outcome::Status::kSkip ? "SKIP" : "FAIL";
    failures += o.status == Outcome::Status::kFail;
    std::cout << tag << " " << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
