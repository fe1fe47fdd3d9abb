#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Result run(const std::string& args) {
  const std::string cmd = std::string("\"") + F2C_CLI_PATH + "\" " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf;
  size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string value_of(const std::string& text, const std::string& key) {
  const size_t p = text.find(key + "=");
  if (p == std::string::npos) return "";
  const size_t a = p + key.size() + 1;
  return text.substr(a, text.find('\n', a) - a);
}

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag)
      : path(fs::temp_directory_path() / ("f2c_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

}  // namespace

TEST_CASE("inspect prints the ledger and parameter table") {
  const Result r = run("inspect --arch default --classes 60");
  CHECK(r.code == 0);
  CHECK(r.out.find("ledger\tstep=output\tslices=4\tper_slice=5120\tstream=20480\thead_input=81920") !=
        std::string::npos);
  CHECK(r.out.find("params\ttotal=") != std::string::npos);
  const Result mini = run("inspect --arch mini --classes 4");
  CHECK(mini.out.find("head_input=16") != std::string::npos);
}

TEST_CASE("invalid configurations fail with a named error") {
  Scratch dir("cfg");
  std::ofstream(dir / "m3.cfg") << "schema = f2c-config/1\narch.segments = 3\narch.image_h = 96\n";
  const Result r = run("--config " + (dir / "m3.cfg") + " inspect");
  CHECK(r.code == 4);
  CHECK(r.out.find("error: E_CONFIG:") != std::string::npos);
  CHECK(r.out.find("fusion chain") != std::string::npos);

  const Result bad = run("inspect --bogus");
  CHECK(bad.code == 1);
  CHECK(bad.out.find("error: E_ARGUMENT") != std::string::npos);
  CHECK(run("").code == 1);
  CHECK(run("eval --checkpoint x --cache y --split dev").code == 1);
}

TEST_CASE("missing cache is reported with its expected path") {
  Scratch dir("missing");
  const Result r = run("train --cache " + (dir / "nope") + " --out " + (dir / "run") + " --arch mini");
  CHECK(r.code == 5);
  CHECK(r.out.find("error: E_IO:") != std::string::npos);
  CHECK(r.out.find("cache.cfg") != std::string::npos);
}

TEST_CASE("synth, encode, train and eval end to end") {
  Scratch dir("e2e");
  const Result s = run("--seed 3 synth --out " + (dir / "data") + " --classes 3 --per-class 6 --frames 24");
  REQUIRE(s.code == 0);
  CHECK(value_of(s.out, "sequences") == "18");
  CHECK(fs::exists(dir / "data/manifest.txt"));

  const std::string enc_args = "encode --dataset " + (dir / "data") + " --kind cache --arch mini --protocol cv --preview 2 --out ";
  const Result e1 = run(enc_args + (dir / "cache"));
  REQUIRE(e1.code == 0);
  CHECK(value_of(e1.out, "entries") == "18");
  size_t pngs = 0;
  for (const auto& f : fs::directory_iterator(dir / "cache/preview")) pngs += f.path().extension() == ".png";
  CHECK(pngs == 8);
  // Encoding twice gives the same cache digest.
  const Result e2 = run(enc_args + (dir / "cache2"));
  CHECK(value_of(e2.out, "cache_digest") == value_of(e1.out, "cache_digest"));
  CHECK(value_of(e1.out, "cache_digest").size() == 64);

  const Result t = run("--seed 5 --threads 2 train --cache " + (dir / "cache") + " --out " + (dir / "run") +
                       " --arch mini --epochs 2 --batch 4 --lr 0.002");
  REQUIRE(t.code == 0);
  CHECK(value_of(t.out, "epochs_run") == "2");
  CHECK(fs::exists(dir / "run/best.f2cp"));
  std::ifstream manifest(dir / "run/manifest.txt");
  const std::string mtext((std::istreambuf_iterator<char>(manifest)), {});
  CHECK(mtext.find("seed = 5") != std::string::npos);
  CHECK(mtext.find("cache_digest = " + value_of(e1.out, "cache_digest")) != std::string::npos);

  const Result ev = run("--seed 5 eval --checkpoint " + (dir / "run/best.f2cp") + " --cache " + (dir / "cache") +
                        " --split test --out " + (dir / "eval"));
  REQUIRE(ev.code == 0);
  CHECK(ev.out.find("report\tsplit=test\tclasses=3\tsamples=6") != std::string::npos);
  CHECK(fs::exists(dir / "eval/report.txt"));
  CHECK(fs::exists(dir / "eval/manifest.txt"));

  const Result f32 = run("--precision f32 eval --checkpoint " + (dir / "run/best.f2cp") + " --cache " + (dir / "cache"));
  CHECK(f32.code == 0);
}

TEST_CASE("encode from raw fixtures with a blocklist") {
  Scratch dir("raw");
  std::ofstream(dir / "block.txt") << "S001C002P003R002A013\n";
  const Result r = run("encode --dataset " F2C_SOURCE_DIR "/tests/data/ntu --kind ntu --arch mini --protocol none"
                       " --blocklist " + (dir / "block.txt") + " --out " + (dir / "cache"));
  CHECK(r.code == 0);
  CHECK(value_of(r.out, "blocklist_removed") == "1");
  CHECK(value_of(r.out, "entries") == "1");

  const Result sbu = run("encode --dataset " F2C_SOURCE_DIR "/tests/data/sbu --kind sbu --arch mini --protocol none"
                         " --out " + (dir / "sbu"));
  CHECK(sbu.code == 0);
  CHECK(value_of(sbu.out, "entries") == "6");
  CHECK(value_of(sbu.out, "image") == "58x78");
  const Result off = run("encode --dataset " F2C_SOURCE_DIR "/tests/data/sbu --kind sbu --arch mini --protocol none"
                         " --pair-swap off --margin 0 --out " + (dir / "sbu_off"));
  CHECK(value_of(off.out, "entries") == "3");
  CHECK(value_of(off.out, "image") == "32x52");
}
