#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace f2c {

/// Seeded generator with platform-independent real/int draws.
/// std::uniform_*_distribution is implementation-defined, so draws are mapped
/// by hand to keep datasets and initializations identical across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes several values into one seed (splitmix64 finalizer).
uint64_t mix_seed(uint64_t a, uint64_t b);

// SHA-256 hex digests.
std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(std::string_view text);

class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, size_t size);
  std::string hex_digest();

 private:
  void* ctx_;
};

/// Flat "key = value" text with '#' comments. Keys are kept sorted so the
/// canonical text (and its digest) does not depend on file ordering.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  double get_double_or(const std::string& key, double fallback) const;
  std::vector<int> get_ints(const std::string& key) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Fails with a config error unless `schema` equals `expected`.
  void expect_schema(std::string_view expected) const;
  std::string canonical_text() const;

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

/// Runs fn(i) for i in [0, n). Each index is independent; results must not
/// depend on scheduling. threads <= 1 runs inline.
void parallel_for(size_t n, const std::function<void(size_t)>& fn, int threads = 0);

/// Default worker count used when callers pass 0.
int default_threads();
void set_default_threads(int threads);

/// Write-temp-then-rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<uint8_t> read_file(const std::filesystem::path& path);

std::string_view code_version() noexcept;

/// key = value record written next to every artifact a command produces.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set(const std::string& key, const std::string& value);
  /// Stamps the finish time and writes atomically.
  void write(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

}  // namespace f2c
