#include <atomic>
#include <set>

#include "doctest.h"
#include "f2c/common.hpp"
#include "f2c/error.hpp"
#include "helpers.hpp"

using namespace f2c;

TEST_CASE("rng is deterministic and in range") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    differs |= x != c.uniform();
  }
  CHECK(differs);
  std::set<uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const uint64_t v = a.below(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("rng normal has unit moments") {
  Rng r(3);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  Sha256 h;
  h.update("a", 1);
  h.update("bc", 2);
  CHECK(h.hex_digest() == sha256_hex(std::string_view("abc")));
}

TEST_CASE("key value config") {
  const auto cfg = KeyValueConfig::parse("schema = s/1\n# comment\nb = 2 # tail\na=x y\nlist = 1, 2,3\n");
  CHECK(cfg.get("a") == "x y");
  CHECK(cfg.get_int("b") == 2);
  CHECK(cfg.get_ints("list") == std::vector<int>{1, 2, 3});
  CHECK(cfg.get_or("missing", "d") == "d");
  CHECK(cfg.get_double_or("b", 0.0) == 2.0);
  CHECK(cfg.canonical_text() == "a = x y\nb = 2\nlist = 1, 2,3\nschema = s/1\n");
  CHECK_NOTHROW(cfg.expect_schema("s/1"));
  CHECK(test::error_code_of([&] { cfg.expect_schema("s/2"); }) == int(ErrorCode::kConfig));
  CHECK(test::error_code_of([&] { cfg.get("missing"); }) == int(ErrorCode::kConfig));
  CHECK(test::error_code_of([] { KeyValueConfig::parse("novalue\n"); }) == int(ErrorCode::kConfig));
  CHECK(test::error_code_of([&] { KeyValueConfig::parse("n = 1x").get_int("n"); }) == int(ErrorCode::kConfig));
}

TEST_CASE("parallel_for visits each index once and rethrows") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](size_t i) { hits[i]++; }, 4);
  for (auto& h : hits) CHECK(h.load() == 1);

  CHECK_THROWS_AS(parallel_for(100, [](size_t i) { if (i == 37) fail(ErrorCode::kNumeric, "boom"); }, 4), Error);

  std::atomic<int> inner{0};
  parallel_for(8, [&](size_t) { parallel_for(8, [&](size_t) { inner++; }, 4); }, 4);
  CHECK(inner.load() == 64);
}

TEST_CASE("atomic file write and manifest") {
  test::TempDir dir("common");
  write_file_atomic(dir / "sub/a.txt", std::string_view("hello"));
  const auto bytes = read_file(dir / "sub/a.txt");
  CHECK(std::string(bytes.begin(), bytes.end()) == "hello");
  CHECK_FALSE(std::filesystem::exists(dir / "sub/a.txt.tmp"));
  CHECK(test::error_code_of([&] { read_file(dir / "nope"); }) == int(ErrorCode::kIo));

  RunManifest m("unit");
  m.set("seed", "7");
  m.set("seed", "8");
  m.write(dir / "manifest.txt");
  const auto kv = KeyValueConfig::load(dir / "manifest.txt");
  CHECK(kv.get("command") == "unit");
  CHECK(kv.get("seed") == "8");
  CHECK(kv.has("started"));
  CHECK(kv.has("finished"));
  CHECK(kv.get("code_version") == std::string(code_version()));
}

TEST_CASE("error code names") {
  CHECK(error_code_name(ErrorCode::kParse) == "E_PARSE");
  CHECK(error_code_name(ErrorCode::kTooShort) == "E_TOO_SHORT");
  CHECK(error_code_name(ErrorCode::kContract) == "E_CONTRACT");
}
