#include "f2c/f2c.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <set>
#include <sstream>
#include <string>
#include <variant>

#include "f2c/cache.hpp"
#include "f2c/common.hpp"
#include "f2c/error.hpp"
#include "f2c/features.hpp"
#include "f2c/network.hpp"
#include "f2c/skeleton.hpp"
#include "f2c/train.hpp"

namespace fs = std::filesystem;
using namespace f2c;

struct f2c_dataset {
  std::string kind;  // ntu | sbu | synth
  int classes = 0;
  std::vector<SkeletonSequence> seqs;
};

struct f2c_arch {
  ArchConfig config;
};

struct f2c_cache {
  fs::path dir;
  ImageCache cache;
};

struct f2c_model {
  std::variant<F2CNet<double>, F2CNet<float>> net;
};

namespace {

thread_local std::string t_last_error;

f2c_status to_status(ErrorCode code) { return static_cast<f2c_status>(static_cast<int>(code)); }

template <typename Fn>
f2c_status guarded(Fn&& fn) {
  try {
    fn();
    t_last_error.clear();
    return F2C_OK;
  } catch (const Error& e) {
    t_last_error = e.what();
    return to_status(e.code());
  } catch (const fs::filesystem_error& e) {
    t_last_error = e.what();
    return F2C_E_IO;
  } catch (const std::bad_alloc&) {
    t_last_error = "out of memory";
    return F2C_E_INTERNAL;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return F2C_E_INTERNAL;
  } catch (...) {
    t_last_error = "unknown exception";
    return F2C_E_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void give(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Parses "k=v;k=v" or one pair per line, rejecting keys not in `allowed`.
KeyValueConfig parse_options(const char* text, const std::set<std::string>& allowed) {
  KeyValueConfig kv;
  if (text == nullptr) return kv;
  std::string s(text);
  for (char& c : s) {
    if (c == ';') c = '\n';
  }
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kConfig, "option '" + line + "' is not key=value");
    const std::string key = trim(line.substr(0, eq));
    if (allowed.count(key) == 0) fail(ErrorCode::kConfig, "unknown option '" + key + "'");
    kv.set(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

int default_classes(const std::string& kind, int joints) {
  if (kind == "sbu" || joints == kSbuJoints) return kSbuClasses;
  return kNtuClasses;
}

std::string dataset_info_text(const f2c_dataset& ds) {
  long long frames = 0;
  for (const SkeletonSequence& s : ds.seqs) frames += s.frame_count();
  std::ostringstream out;
  out << "kind=" << ds.kind << "\nclasses=" << ds.classes
      << "\njoints=" << (ds.seqs.empty() ? 0 : ds.seqs.front().joint_count()) << "\nsequences=" << ds.seqs.size()
      << "\nframes=" << frames << "\ndigest=" << dataset_digest(ds.seqs) << "\n";
  return out.str();
}

std::string kv_line(const std::string& k, const std::string& v) { return k + "=" + v + "\n"; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

extern "C" {

const char* f2c_version(void) {
  static const std::string v(code_version());
  return v.c_str();
}

const char* f2c_status_name(f2c_status status) {
  if (status == F2C_OK) return "OK";
  if (status < F2C_E_ARGUMENT || status > F2C_E_INTERNAL) return "E_UNKNOWN";
  return error_code_name(static_cast<ErrorCode>(status)).data();
}

const char* f2c_last_error(void) { return t_last_error.c_str(); }

void f2c_string_free(char* s) { std::free(s); }

void f2c_set_threads(int threads) { set_default_threads(threads); }

// ---------------------------------------------------------------- datasets

f2c_status f2c_dataset_load(const char* path, const char* kind, f2c_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(kind, "kind");
    need(out, "out");
    *out = nullptr;
    const std::string k(kind);
    if (!fs::is_directory(path)) fail(ErrorCode::kIo, std::string("dataset directory not found: ") + path);
    auto ds = std::make_unique<f2c_dataset>();
    if (k == "ntu") {
      ds->kind = "ntu";
      ds->seqs = load_ntu_dir(path);
    } else if (k == "sbu") {
      ds->kind = "sbu";
      ds->seqs = load_sbu_dir(path);
    } else if (k == "cache") {
      ds->seqs = load_sequence_cache(path);
      const fs::path cfg = fs::path(path) / "dataset.cfg";
      if (fs::exists(cfg)) {
        const KeyValueConfig kv = KeyValueConfig::load(cfg);
        kv.expect_schema("f2c-dataset/1");
        ds->kind = kv.get("kind");
        ds->classes = static_cast<int>(kv.get_int("classes"));
      }
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown dataset kind '" + k + "' (expected ntu, sbu or cache)");
    }
    if (ds->seqs.empty()) fail(ErrorCode::kIo, std::string("no sequences found under ") + path);
    const int joints = ds->seqs.front().joint_count();
    if (ds->kind.empty()) ds->kind = joints == kSbuJoints ? "sbu" : "ntu";
    if (ds->classes == 0) ds->classes = default_classes(ds->kind, joints);
    *out = ds.release();
  });
}

f2c_status f2c_dataset_synth(int classes, int per_class, int frames, int joints, uint64_t seed, f2c_dataset** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    if (classes < 2 || per_class < 1 || frames < 3 || (joints != kNtuJoints && joints != kSbuJoints)) {
      fail(ErrorCode::kInvalidArgument, "synth: need classes >= 2, per_class >= 1, frames >= 3, joints 25 or 15");
    }
    SynthOptions o;
    o.classes = classes;
    o.per_class = per_class;
    o.frames = frames;
    o.joints = joints;
    o.seed = seed;
    auto ds = std::make_unique<f2c_dataset>();
    ds->kind = "synth";
    ds->classes = classes;
    ds->seqs = synth_generate(o);
    *out = ds.release();
  });
}

f2c_status f2c_dataset_filter_blocklist(f2c_dataset* ds, const char* path, size_t* removed) {
  return guarded([&] {
    need(ds, "dataset");
    need(path, "path");
    const size_t before = ds->seqs.size();
    ds->seqs = filter_missing(std::move(ds->seqs), load_blocklist(path));
    if (removed != nullptr) *removed = before - ds->seqs.size();
  });
}

f2c_status f2c_dataset_save(const f2c_dataset* ds, const char* dir) {
  return guarded([&] {
    need(ds, "dataset");
    need(dir, "dir");
    save_sequences(ds->seqs, dir);
    write_file_atomic(fs::path(dir) / "dataset.cfg", "schema = f2c-dataset/1\nkind = " + ds->kind +
                                                         "\nclasses = " + std::to_string(ds->classes) + "\n");
    RunManifest m("synth");
    m.set("dataset_digest", dataset_digest(ds->seqs));
    m.set("sequences", std::to_string(ds->seqs.size()));
    m.write(fs::path(dir) / "manifest.txt");
  });
}

size_t f2c_dataset_size(const f2c_dataset* ds) { return ds == nullptr ? 0 : ds->seqs.size(); }

f2c_status f2c_dataset_info(const f2c_dataset* ds, char** text) {
  return guarded([&] {
    need(ds, "dataset");
    need(text, "text");
    give(text, dataset_info_text(*ds));
  });
}

f2c_status f2c_dataset_digest(const f2c_dataset* ds, char** hex) {
  return guarded([&] {
    need(ds, "dataset");
    need(hex, "hex");
    give(hex, dataset_digest(ds->seqs));
  });
}

f2c_status f2c_dataset_split(const f2c_dataset* ds, const char* protocol, int fold, size_t* train, size_t* test) {
  return guarded([&] {
    need(ds, "dataset");
    need(protocol, "protocol");
    const DatasetSplit sp = split(ds->seqs, parse_split_protocol(protocol), fold);
    if (train != nullptr) *train = sp.train.size();
    if (test != nullptr) *test = sp.test.size();
  });
}

void f2c_dataset_free(f2c_dataset* ds) { delete ds; }

// ---------------------------------------------------------------- architectures

f2c_status f2c_arch_create(const char* preset, const char* config_path, int classes, f2c_arch** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    KeyValueConfig cfg;
    if (config_path != nullptr) {
      cfg = KeyValueConfig::load(config_path);
      cfg.expect_schema("f2c-config/1");
    }
    if (preset != nullptr) cfg.set("arch", preset);
    auto a = std::make_unique<f2c_arch>();
    a->config = ArchConfig::from_config(cfg, classes);
    a->config.validate();
    *out = a.release();
  });
}

f2c_status f2c_arch_ledger(const f2c_arch* arch, char** text) {
  return guarded([&] {
    need(arch, "arch");
    need(text, "text");
    give(text, format_ledger(arch->config));
  });
}

f2c_status f2c_arch_param_table(const f2c_arch* arch, char** text) {
  return guarded([&] {
    need(arch, "arch");
    need(text, "text");
    give(text, format_param_table(arch->config));
  });
}

uint64_t f2c_arch_param_count(const f2c_arch* arch) { return arch == nullptr ? 0 : param_count(arch->config); }

void f2c_arch_free(f2c_arch* arch) { delete arch; }

// ---------------------------------------------------------------- encoding

f2c_status f2c_encode(const f2c_dataset* ds, const f2c_arch* arch, const char* options, const char* out_dir,
                      char** summary) {
  return guarded([&] {
    need(ds, "dataset");
    need(arch, "arch");
    need(out_dir, "out_dir");
    if (ds->seqs.empty()) fail(ErrorCode::kConfig, "encode: dataset is empty");
    const KeyValueConfig o =
        parse_options(options, {"protocol", "fold", "margin", "crops", "pair_swap", "preview", "limb_normalize"});
    const int joints = ds->seqs.front().joint_count();
    EncodeConfig ec = EncodeConfig::for_kind(joints == kSbuJoints ? "sbu" : "ntu", ds->classes);
    ec.kind = ds->kind;
    ec.image_h = arch->config.image_h;
    ec.image_w = arch->config.image_w;
    ec.protocol = o.get_or("protocol", ec.protocol);
    ec.fold = static_cast<int>(o.get_int_or("fold", ec.fold));
    ec.margin = static_cast<int>(o.get_int_or("margin", ec.margin));
    ec.crops = static_cast<int>(o.get_int_or("crops", ec.crops));
    ec.pair_swap = o.get_int_or("pair_swap", ec.pair_swap ? 1 : 0) != 0;
    ec.preview = static_cast<int>(o.get_int_or("preview", 0));
    const bool limb = o.get_int_or("limb_normalize", 1) != 0;
    ec.features.limb_normalize = limb;
    ec.features.normalize_body_parts = limb;

    const SkeletonLayout layout = SkeletonLayout::for_joints(joints);
    const CacheInfo info = encode_dataset(ds->seqs, layout, ec, out_dir);

    RunManifest m("encode");
    m.set("dataset_kind", ds->kind);
    m.set("dataset_digest", info.dataset_digest);
    m.set("config_digest", sha256_hex(KeyValueConfig::load(fs::path(out_dir) / "cache.cfg").canonical_text()));
    m.set("arch_digest", arch->config.digest());
    m.set("cache_digest", info.digest);
    m.set("protocol", info.protocol);
    m.set("fold", std::to_string(info.fold));
    m.set("pair_swap", info.pair_swap ? "on (each two-subject sequence is also encoded with subject roles exchanged)"
                                      : "off");
    m.set("crops", std::to_string(info.crops));
    m.set("margin", std::to_string(info.margin));
    m.set("preview", std::to_string(ec.preview));
    m.write(fs::path(out_dir) / "manifest.txt");

    std::string s = kv_line("entries", std::to_string(ds->seqs.size() * (info.pair_swap ? 2 : 1)));
    s += kv_line("image", std::to_string(info.stored_h()) + "x" + std::to_string(info.stored_w()));
    s += kv_line("protocol", info.protocol);
    s += kv_line("cache_digest", info.digest);
    give(summary, s);
  });
}

f2c_status f2c_cache_open(const char* dir, f2c_cache** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    auto c = std::make_unique<f2c_cache>();
    c->dir = dir;
    c->cache = load_image_cache(dir);
    *out = c.release();
  });
}

size_t f2c_cache_size(const f2c_cache* cache) { return cache == nullptr ? 0 : cache->cache.entries.size(); }

int f2c_cache_classes(const f2c_cache* cache) { return cache == nullptr ? 0 : cache->cache.info.classes; }

f2c_status f2c_cache_info(const f2c_cache* cache, char** text) {
  return guarded([&] {
    need(cache, "cache");
    need(text, "text");
    const std::vector<uint8_t> bytes = read_file(cache->dir / "cache.cfg");
    give(text, std::string(bytes.begin(), bytes.end()));
  });
}

void f2c_cache_free(f2c_cache* cache) { delete cache; }

// ---------------------------------------------------------------- training

f2c_status f2c_train(const f2c_cache* cache, const f2c_arch* arch, const char* config_path, const char* overrides,
                     const char* out_dir, char** summary) {
  return guarded([&] {
    need(cache, "cache");
    need(arch, "arch");
    need(out_dir, "out_dir");
    KeyValueConfig cfg;
    if (config_path != nullptr) {
      cfg = KeyValueConfig::load(config_path);
      cfg.expect_schema("f2c-config/1");
    }
    const KeyValueConfig o = parse_options(overrides, {"train.lr", "train.gamma", "train.epochs", "train.batch_size",
                                                       "train.seed", "train.val_fraction", "train.precision"});
    for (const auto& [k, v] : o.entries()) cfg.set(k, v);
    TrainConfig tc = TrainConfig::from_config(cfg);
    tc.threads = default_threads();
    tc.validate();

    TrainResult result;
    auto run = [&](auto& net) {
      net.init(tc.seed);
      result = train(net, cache->cache, tc, out_dir);
    };
    if (tc.single_precision) {
      F2CNet<float> net(arch->config);
      run(net);
    } else {
      F2CNet<double> net(arch->config);
      run(net);
    }

    RunManifest m("train");
    m.set("config_digest", sha256_hex(arch->config.canonical_text() + tc.canonical_text()));
    m.set("arch_digest", arch->config.digest());
    m.set("dataset_digest", cache->cache.info.dataset_digest);
    m.set("cache_digest", cache->cache.info.digest);
    m.set("seed", std::to_string(tc.seed));
    m.set("precision", tc.single_precision ? "f32" : "f64");
    m.set("best_epoch", std::to_string(result.best_epoch));
    m.set("epochs_run", std::to_string(result.history.size()));
    m.set("pair_swap", cache->cache.info.pair_swap ? "on" : "off");
    m.write(fs::path(out_dir) / "manifest.txt");

    const EpochRecord& last = result.history.back();
    std::string s = kv_line("epochs_run", std::to_string(result.history.size()));
    s += kv_line("best_epoch", std::to_string(result.best_epoch));
    s += kv_line("best_val_acc", fmt(result.best_val_acc));
    s += kv_line("final_train_loss", fmt(last.train_loss));
    s += kv_line("final_train_acc", fmt(last.train_acc));
    s += kv_line("checkpoint", result.best_checkpoint.string());
    give(summary, s);
  });
}

f2c_status f2c_model_load(const char* path, const char* precision, f2c_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    const std::string p = precision == nullptr ? "f64" : precision;
    if (p == "f64") {
      *out = new f2c_model{load_checkpoint<double>(path)};
    } else if (p == "f32") {
      *out = new f2c_model{load_checkpoint<float>(path)};
    } else {
      fail(ErrorCode::kInvalidArgument, "precision must be f32 or f64");
    }
  });
}

f2c_status f2c_model_save(const f2c_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    std::visit([&](const auto& net) { save_checkpoint(net, path); }, model->net);
  });
}

uint64_t f2c_model_param_count(const f2c_model* model) {
  if (model == nullptr) return 0;
  return std::visit([](const auto& net) { return static_cast<uint64_t>(net.param_count()); }, model->net);
}

f2c_status f2c_model_predict(const f2c_model* model, const f2c_cache* cache, size_t entry, double* probs,
                             size_t n_probs, int* predicted) {
  return guarded([&] {
    need(model, "model");
    need(cache, "cache");
    if (entry >= cache->cache.entries.size()) fail(ErrorCode::kInvalidArgument, "entry index out of range");
    const int margin = cache->cache.info.margin;
    const SampleRef ref{entry, {margin / 2, margin / 2}};
    std::visit(
        [&](const auto& net) {
          using Real = typename std::decay_t<decltype(net)>::real_type;
          const auto p = net.predict_proba(make_inputs<Real>(cache->cache, ref));
          if (probs != nullptr) {
            if (n_probs < p.size()) fail(ErrorCode::kInvalidArgument, "probability buffer smaller than class count");
            for (size_t i = 0; i < p.size(); ++i) probs[i] = static_cast<double>(p[i]);
          }
          if (predicted != nullptr) {
            *predicted = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
          }
        },
        model->net);
  });
}

void f2c_model_free(f2c_model* model) { delete model; }

f2c_status f2c_evaluate(const f2c_model* model, const f2c_cache* cache, const char* split, uint64_t seed,
                        const char* out_dir, char** report, double* accuracy) {
  return guarded([&] {
    need(model, "model");
    need(cache, "cache");
    need(split, "split");
    const SampleSet set = parse_sample_set(split);
    const std::vector<int> validation = validation_sources(cache->cache, TrainConfig{}.val_fraction, seed);
    const EvalReport r = std::visit(
        [&](const auto& net) { return evaluate(net, cache->cache, set, default_threads(), validation); }, model->net);
    const std::string text = format_report(r);
    if (out_dir != nullptr) {
      write_file_atomic(fs::path(out_dir) / "report.txt", text);
      RunManifest m("eval");
      m.set("dataset_digest", cache->cache.info.dataset_digest);
      m.set("cache_digest", cache->cache.info.digest);
      m.set("config_digest", std::visit([](const auto& net) { return net.arch().digest(); }, model->net));
      m.set("seed", std::to_string(seed));
      m.set("split", split);
      m.set("report_digest", sha256_hex(text));
      m.write(fs::path(out_dir) / "manifest.txt");
    }
    if (accuracy != nullptr) *accuracy = r.confusion.accuracy();
    give(report, text);
  });
}

f2c_status f2c_report_parse(const char* text, double* accuracy) {
  return guarded([&] {
    need(text, "text");
    const EvalReport r = parse_report(text);
    if (accuracy != nullptr) *accuracy = r.confusion.accuracy();
  });
}

}  // extern "C"
