#include <fstream>

#include "doctest.h"
#include "f2c/common.hpp"
#include "f2c/skeleton.hpp"
#include "helpers.hpp"

using namespace f2c;

namespace {

std::string slurp(const std::filesystem::path& p) {
  const auto bytes = read_file(p);
  return std::string(bytes.begin(), bytes.end());
}

std::string ntu_frame(int bodies, const char* id_prefix = "7205759403793110") {
  std::string s = std::to_string(bodies) + "\n";
  for (int b = 0; b < bodies; ++b) {
    s += std::string(id_prefix) + std::to_string(b + 1) + " 0 1 1 1 1 0 0.01 -0.02 2\n25\n";
    for (int j = 0; j < 25; ++j) s += "0.1 0.2 3.0 1 2 3 4 0.1 0.2 0.3 0.9 2\n";
  }
  return s;
}

}  // namespace

TEST_CASE("ntu sample names") {
  const NtuFileId id = parse_ntu_name("S001C002P003R002A013.skeleton");
  CHECK(id.meta == SequenceMeta{1, 2, 3, 2});
  CHECK(id.action == 13);
  CHECK(parse_ntu_name("/x/y/S017C003P040R002A060").action == 60);
  CHECK(test::error_code_of([] { parse_ntu_name("S001C002P003R002"); }) == int(ErrorCode::kParse));
  CHECK(test::error_code_of([] { parse_ntu_name("S001C002PxxxR002A013"); }) == int(ErrorCode::kParse));
  CHECK(test::error_code_of([] { parse_ntu_name("S001C002P003R002A000"); }) == int(ErrorCode::kParse));
  CHECK(parse_sbu_pair("s01s02") == 102);
  CHECK(parse_sbu_pair("s07s03") == 703);
  CHECK(test::error_code_of([] { parse_sbu_pair("s1s2"); }) == int(ErrorCode::kParse));
}

TEST_CASE("ntu fixture keeps the two most active bodies") {
  const auto seq = parse_ntu_file(slurp(test::data_path("ntu/S001C001P001R001A001.skeleton")), {1, 1, 1, 1}, 0);
  CHECK(seq.frame_count() == 40);
  CHECK(seq.subject_count() == 2);
  CHECK(seq.joint_count() == 25);
  CHECK(seq.pose(0, 0)[0] == Joint3D{0.0f, -0.12f, 3.0f});
  // Second body is only tracked in frames 5..29; elsewhere the slot is all zero.
  CHECK_FALSE(seq.present(4, 1));
  CHECK(seq.present(5, 1));
  CHECK(seq.present(29, 1));
  CHECK_FALSE(seq.present(30, 1));
  CHECK(seq.pose(5, 1)[0].x > 0.9f);
  for (int t = 0; t < 40; ++t) CHECK(seq.present(t, 0));
  CHECK_NOTHROW(seq.validate());
  CHECK(seq.name() == "S001C001P001R001A001");
}

TEST_CASE("ntu parser errors") {
  const std::string good = "3\n" + ntu_frame(1) + ntu_frame(0) + ntu_frame(1);
  CHECK_NOTHROW(parse_ntu_file(good, {}, 0));
  CHECK(parse_ntu_file(good, {}, 0).present(1, 0) == false);

  CHECK(test::error_code_of([] { parse_ntu_file("2\n" + ntu_frame(1) + ntu_frame(1), {}, 0); }) ==
        int(ErrorCode::kTooShort));
  CHECK(test::error_code_of([&] { parse_ntu_file(good.substr(0, good.size() - 40), {}, 0); }) ==
        int(ErrorCode::kParse));
  CHECK(test::error_code_of([&] { parse_ntu_file(good + "junk\n", {}, 0); }) == int(ErrorCode::kParse));

  std::string bad_joints = good;
  bad_joints.replace(bad_joints.find("\n25\n"), 4, "\n24\n");
  CHECK(test::error_message_of([&] { parse_ntu_file(bad_joints, {}, 0); }).find("joint count") != std::string::npos);

  std::string nan = good;
  nan.replace(nan.find("0.1 0.2 3.0"), 3, "nan");
  CHECK(test::error_code_of([&] { parse_ntu_file(nan, {}, 0); }) == int(ErrorCode::kParse));

  std::string word = good;
  word.replace(word.find("0.1 0.2 3.0"), 3, "abc");
  CHECK(test::error_message_of([&] { parse_ntu_file(word, {}, 0); }).find("non-numeric") != std::string::npos);
}

TEST_CASE("sbu parser") {
  const auto seq = parse_sbu_file(slurp(test::data_path("sbu/s01s02/01/001/skeleton_pos.txt")), {0, 1, 102, 1}, 0);
  CHECK(seq.frame_count() == 19);
  CHECK(seq.subject_count() == 2);
  CHECK(seq.joint_count() == 15);
  CHECK(seq.pose(0, 0)[0] == Joint3D{0.3f, 0.21f, 2.5f});
  CHECK(seq.name() == "s01s02_a01_r001");

  CHECK(test::error_code_of([] { parse_sbu_file("1,2,3\n", {}, 0); }) == int(ErrorCode::kParse));
  std::string row = "1";
  for (int i = 0; i < 90; ++i) row += ",0.5";
  CHECK(test::error_code_of([&] { parse_sbu_file(row + "\n" + row + "\n", {}, 0); }) == int(ErrorCode::kTooShort));
  CHECK_NOTHROW(parse_sbu_file(row + "\n\n" + row + "\r\n" + row, {}, 0));
}

TEST_CASE("directory loaders") {
  const auto ntu = load_ntu_dir(test::data_path("ntu"), 2);
  REQUIRE(ntu.size() == 2);
  CHECK(ntu[1].label() == 12);
  CHECK(ntu[1].meta() == SequenceMeta{1, 2, 3, 2});
  CHECK(ntu[1].subject_count() == 2);

  const auto sbu = load_sbu_dir(test::data_path("sbu"));
  REQUIRE(sbu.size() == 3);
  CHECK(sbu[0].meta().subject == 102);
  CHECK(sbu[1].label() == 2);
  CHECK(sbu[1].meta().replication == 2);
  CHECK(sbu[2].meta().subject == 203);
  CHECK(sbu[2].label() == 7);

  CHECK(test::error_code_of([] { load_ntu_dir(test::data_path("nope")); }) == int(ErrorCode::kIo));

  test::TempDir dir("badntu");
  write_file_atomic(dir / "S001C001P001R001A001.skeleton", std::string_view("1\n0\n"));
  const std::string msg = test::error_message_of([&] { load_ntu_dir(dir.path()); });
  CHECK(msg.find("S001C001P001R001A001.skeleton") != std::string::npos);
}

TEST_CASE("sequence cache round trip is lossless") {
  const auto seqs = load_ntu_dir(test::data_path("ntu"));
  test::TempDir dir("seqcache");
  save_sequences(seqs, dir.path());
  const auto back = load_sequence_cache(dir.path());
  REQUIRE(back.size() == seqs.size());
  for (size_t i = 0; i < seqs.size(); ++i) CHECK(back[i] == seqs[i]);
  CHECK(dataset_digest(back) == dataset_digest(seqs));

  auto bytes = serialize_sequence(seqs[0]);
  bytes.pop_back();
  CHECK(test::error_code_of([&] { deserialize_sequence(bytes); }) == int(ErrorCode::kFormat));
  bytes = serialize_sequence(seqs[0]);
  bytes[0] = 'X';
  CHECK(test::error_code_of([&] { deserialize_sequence(bytes); }) == int(ErrorCode::kFormat));
}

TEST_CASE("blocklist filtering") {
  test::TempDir dir("block");
  write_file_atomic(dir / "missing.txt",
                    std::string_view("# header\n\nS001C002P003R002A013.skeleton  # trailing\n  S009C001P001R001A001\n"));
  const auto names = load_blocklist(dir / "missing.txt");
  CHECK(names == std::vector<std::string>{"S001C002P003R002A013", "S009C001P001R001A001"});
  const auto kept = filter_missing(load_ntu_dir(test::data_path("ntu")), names);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].name() == "S001C001P001R001A001");
}

TEST_CASE("shipped missing-skeleton list parses") {
  CHECK_NOTHROW(load_blocklist(std::filesystem::path(F2C_LAYOUT_DIR) / "ntu_missing_skeletons.txt"));
}

TEST_CASE("split protocols") {
  std::vector<SkeletonSequence> seqs;
  for (int subject : {1, 3, 38, 40}) {
    for (int camera : {1, 2, 3}) seqs.emplace_back(25, 1, 3, 0, SequenceMeta{1, camera, subject, 1});
  }
  const auto cs = split(seqs, SplitProtocol::kCrossSubject);
  CHECK(cs.train.size() == 6);
  CHECK(cs.test.size() == 6);
  for (size_t i : cs.test) CHECK((seqs[i].meta().subject == 3 || seqs[i].meta().subject == 40));
  const auto cv = split(seqs, SplitProtocol::kCrossView);
  CHECK(cv.test.size() == 4);
  for (size_t i : cv.test) CHECK(seqs[i].meta().camera == 1);

  CHECK(ntu_cs_train_subjects().size() == 20);
  size_t pairs = 0;
  for (int f = 0; f < 5; ++f) pairs += sbu_fold_pairs(f).size();
  CHECK(pairs == 21);

  std::vector<SkeletonSequence> sbu;
  for (int pair : {102, 203, 103, 201, 402}) sbu.emplace_back(15, 2, 3, 0, SequenceMeta{0, 1, pair, 1});
  for (int f = 0; f < 5; ++f) {
    const auto s = split(sbu, SplitProtocol::kSbuFold, f);
    CHECK(s.test == std::vector<size_t>{size_t(f)});
  }
  sbu.emplace_back(15, 2, 3, 0, SequenceMeta{0, 1, 999, 1});
  CHECK(test::error_code_of([&] { split(sbu, SplitProtocol::kSbuFold, 0); }) == int(ErrorCode::kConfig));
  CHECK(test::error_code_of([] { parse_split_protocol("xview"); }) == int(ErrorCode::kConfig));
}

TEST_CASE("synthetic generator") {
  SynthOptions o;
  o.classes = 4;
  o.per_class = 3;
  o.frames = 20;
  const auto a = synth_generate(o);
  const auto b = synth_generate(o);
  REQUIRE(a.size() == 12);
  CHECK(a == b);
  CHECK(a[5].label() == 1);
  for (const auto& s : a) CHECK_NOTHROW(s.validate());
  o.seed = 2;
  CHECK(synth_generate(o)[0] != a[0]);
  CHECK(mean_joint_displacement(a[0]) > 0.0);

  o.joints = 15;
  const auto two = synth_generate(o);
  CHECK(two[0].subject_count() == 2);
  CHECK(split(two, SplitProtocol::kSbuFold, 0).train.size() + split(two, SplitProtocol::kSbuFold, 0).test.size() == 12);
}

TEST_CASE("blocklist filtering at corpus scale") {
  // 60 actions x 948 sample ids = 56,880 names; drop a 302-name list.
  std::vector<SkeletonSequence> seqs;
  seqs.reserve(56880);
  for (int a = 0; a < 60; ++a) {
    for (int k = 0; k < 948; ++k) seqs.emplace_back(25, 0, 3, a, SequenceMeta{1 + k / 120, 1 + k % 3, 1 + (k / 3) % 40, 1});
  }
  std::vector<std::string> block;
  for (int i = 0; i < 302; ++i) block.push_back(seqs[size_t(i) * 188].name());
  block.push_back("S999C001P001R001A001");  // not in the corpus
  const auto kept = filter_missing(std::move(seqs), block);
  CHECK(kept.size() == 56578);
}
