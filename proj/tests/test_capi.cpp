#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "doctest.h"
#include "f2c/f2c.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path path;
  explicit Scratch(const std::string& tag)
      : path(fs::temp_directory_path() / ("f2c_capi_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  f2c_string_free(s);
  return out;
}

std::string value_of(const std::string& text, const std::string& key) {
  const size_t p = text.find(key + "=");
  if (p == std::string::npos) return "";
  const size_t a = p + key.size() + 1;
  return text.substr(a, text.find('\n', a) - a);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(f2c_status_name(F2C_OK)) == "OK");
  CHECK(std::string(f2c_status_name(F2C_E_CONFIG)) == "E_CONFIG");
  CHECK(std::string(f2c_status_name(static_cast<f2c_status>(42))) == "E_UNKNOWN");
  CHECK(std::strlen(f2c_version()) > 0);

  f2c_dataset* ds = nullptr;
  CHECK(f2c_dataset_load("/definitely/not/here", "ntu", &ds) == F2C_E_IO);
  CHECK(ds == nullptr);
  CHECK(std::string(f2c_last_error()).find("/definitely/not/here") != std::string::npos);
  CHECK(f2c_dataset_load(nullptr, "ntu", &ds) == F2C_E_ARGUMENT);
  CHECK(f2c_dataset_synth(1, 1, 10, 25, 1, &ds) == F2C_E_ARGUMENT);
  f2c_dataset_free(nullptr);
  f2c_arch_free(nullptr);
  f2c_cache_free(nullptr);
  f2c_model_free(nullptr);
  CHECK(f2c_dataset_size(nullptr) == 0);
}

TEST_CASE("architecture handles") {
  f2c_arch* arch = nullptr;
  REQUIRE(f2c_arch_create("default", nullptr, 60, &arch) == F2C_OK);
  CHECK(take([&] {
          char* t = nullptr;
          f2c_arch_ledger(arch, &t);
          return t;
        }())
            .find("head_input=81920") != std::string::npos);
  const std::string table = take([&] {
    char* t = nullptr;
    f2c_arch_param_table(arch, &t);
    return t;
  }());
  CHECK(table.find("params\ttotal=" + std::to_string(f2c_arch_param_count(arch))) != std::string::npos);
  f2c_arch_free(arch);

  Scratch dir("arch");
  std::ofstream(dir / "bad.cfg") << "schema = f2c-config/1\narch.segments = 3\narch.image_h = 96\n";
  CHECK(f2c_arch_create(nullptr, (dir / "bad.cfg").c_str(), 60, &arch) == F2C_E_CONFIG);
  CHECK(std::string(f2c_last_error()).find("fusion chain") != std::string::npos);
  std::ofstream(dir / "wrong.cfg") << "schema = other/1\n";
  CHECK(f2c_arch_create(nullptr, (dir / "wrong.cfg").c_str(), 60, &arch) == F2C_E_CONFIG);
  CHECK(f2c_arch_create("gigantic", nullptr, 60, &arch) == F2C_E_CONFIG);
}

TEST_CASE("dataset loading, filtering and splits") {
  f2c_dataset* ds = nullptr;
  REQUIRE(f2c_dataset_load(F2C_TEST_DATA "/ntu", "ntu", &ds) == F2C_OK);
  CHECK(f2c_dataset_size(ds) == 2);
  const std::string info = take([&] {
    char* t = nullptr;
    f2c_dataset_info(ds, &t);
    return t;
  }());
  CHECK(value_of(info, "kind") == "ntu");
  CHECK(value_of(info, "classes") == "60");
  CHECK(value_of(info, "frames") == "52");
  size_t train = 0, test = 0;
  CHECK(f2c_dataset_split(ds, "cv", 0, &train, &test) == F2C_OK);
  CHECK(train == 1);
  CHECK(test == 1);
  CHECK(f2c_dataset_split(ds, "sideways", 0, &train, &test) == F2C_E_CONFIG);

  Scratch dir("ds");
  std::ofstream(dir / "block.txt") << "# none\nS001C002P003R002A013\n";
  size_t removed = 0;
  CHECK(f2c_dataset_filter_blocklist(ds, (dir / "block.txt").c_str(), &removed) == F2C_OK);
  CHECK(removed == 1);
  CHECK(f2c_dataset_size(ds) == 1);

  const std::string digest = take([&] {
    char* t = nullptr;
    f2c_dataset_digest(ds, &t);
    return t;
  }());
  REQUIRE(f2c_dataset_save(ds, (dir / "saved").c_str()) == F2C_OK);
  f2c_dataset* back = nullptr;
  REQUIRE(f2c_dataset_load((dir / "saved").c_str(), "cache", &back) == F2C_OK);
  CHECK(take([&] {
          char* t = nullptr;
          f2c_dataset_digest(back, &t);
          return t;
        }()) == digest);
  f2c_dataset_free(back);
  f2c_dataset_free(ds);

  REQUIRE(f2c_dataset_load(F2C_TEST_DATA "/sbu", "sbu", &ds) == F2C_OK);
  CHECK(f2c_dataset_size(ds) == 3);
  CHECK(f2c_dataset_split(ds, "sbu-5fold", 0, &train, &test) == F2C_OK);
  CHECK(test == 2);
  f2c_dataset_free(ds);
}

TEST_CASE("encode, train, predict and evaluate through the C interface") {
  f2c_set_threads(2);
  Scratch dir("pipeline");
  f2c_dataset* ds = nullptr;
  REQUIRE(f2c_dataset_synth(3, 6, 24, 25, 4, &ds) == F2C_OK);
  f2c_arch* arch = nullptr;
  REQUIRE(f2c_arch_create("mini", nullptr, 3, &arch) == F2C_OK);

  char* summary = nullptr;
  REQUIRE(f2c_encode(ds, arch, "protocol=cv; preview=1", (dir / "cache").c_str(), &summary) == F2C_OK);
  const std::string enc = take(summary);
  CHECK(value_of(enc, "entries") == "18");
  CHECK(value_of(enc, "image") == "32x52");
  CHECK(f2c_encode(ds, arch, "colour=red", (dir / "x").c_str(), nullptr) == F2C_E_CONFIG);
  CHECK(std::string(f2c_last_error()).find("colour") != std::string::npos);

  f2c_cache* cache = nullptr;
  REQUIRE(f2c_cache_open((dir / "cache").c_str(), &cache) == F2C_OK);
  CHECK(f2c_cache_size(cache) == 18);
  CHECK(f2c_cache_classes(cache) == 3);
  const std::string manifest = slurp(dir / "cache/manifest.txt");
  CHECK(manifest.find("dataset_digest = ") != std::string::npos);
  CHECK(manifest.find("pair_swap = off") != std::string::npos);

  REQUIRE(f2c_train(cache, arch, nullptr, "train.epochs=2;train.batch_size=4;train.seed=3", (dir / "run").c_str(),
                    &summary) == F2C_OK);
  const std::string tr = take(summary);
  CHECK(value_of(tr, "epochs_run") == "2");
  CHECK(fs::exists(dir / "run/metrics.tsv"));
  CHECK(slurp(dir / "run/manifest.txt").find("seed = 3") != std::string::npos);
  CHECK(f2c_train(cache, arch, nullptr, "train.epochs=0", (dir / "bad").c_str(), nullptr) == F2C_E_CONFIG);

  f2c_model* model = nullptr;
  REQUIRE(f2c_model_load((dir / "run/best.f2cp").c_str(), "f64", &model) == F2C_OK);
  CHECK(f2c_model_param_count(model) == f2c_arch_param_count(arch));
  double probs[3] = {0, 0, 0};
  int pred = -1;
  REQUIRE(f2c_model_predict(model, cache, 0, probs, 3, &pred) == F2C_OK);
  CHECK(probs[0] + probs[1] + probs[2] == doctest::Approx(1.0));
  CHECK(pred >= 0);
  CHECK(pred < 3);
  CHECK(f2c_model_predict(model, cache, 0, probs, 2, &pred) == F2C_E_ARGUMENT);
  CHECK(f2c_model_predict(model, cache, 99, probs, 3, &pred) == F2C_E_ARGUMENT);

  char* report = nullptr;
  double acc = -1;
  REQUIRE(f2c_evaluate(model, cache, "test", 3, (dir / "run").c_str(), &report, &acc) == F2C_OK);
  const std::string text = take(report);
  CHECK(text.find("report\tsplit=test\tclasses=3\tsamples=6") != std::string::npos);
  double parsed = -1;
  CHECK(f2c_report_parse(text.c_str(), &parsed) == F2C_OK);
  CHECK(parsed == acc);
  CHECK(f2c_report_parse("garbage", &parsed) == F2C_E_PARSE);
  CHECK(f2c_evaluate(model, cache, "dev", 3, nullptr, nullptr, nullptr) == F2C_E_ARGUMENT);

  REQUIRE(f2c_model_save(model, (dir / "copy.f2cp").c_str()) == F2C_OK);
  CHECK(slurp(dir / "copy.f2cp") == slurp(dir / "run/best.f2cp"));
  f2c_model_free(model);
  CHECK(f2c_model_load((dir / "run/best.f2cp").c_str(), "f16", &model) == F2C_E_ARGUMENT);

  f2c_arch* other = nullptr;
  REQUIRE(f2c_arch_create("mini", nullptr, 5, &other) == F2C_OK);
  CHECK(f2c_train(cache, other, nullptr, "train.epochs=1", (dir / "bad").c_str(), nullptr) == F2C_E_CONFIG);
  f2c_arch_free(other);

  f2c_cache_free(cache);
  CHECK(f2c_cache_open((dir / "nothing").c_str(), &cache) == F2C_E_IO);
  f2c_arch_free(arch);
  f2c_dataset_free(ds);
}
