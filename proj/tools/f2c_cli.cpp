// f2c-cli: encode / train / eval / inspect / synth over the C API.

#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "f2c/f2c.h"

namespace {

struct Failure {
  f2c_status status;
  std::string message;
};

void check(f2c_status st) {
  if (st != F2C_OK) throw Failure{st, f2c_last_error()};
}

// Owns a C string returned by the library.
struct Text {
  char* p = nullptr;
  ~Text() { f2c_string_free(p); }
  const char* c_str() const { return p ? p : ""; }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};

using Dataset = Handle<f2c_dataset, f2c_dataset_free>;
using Arch = Handle<f2c_arch, f2c_arch_free>;
using Cache = Handle<f2c_cache, f2c_cache_free>;
using Model = Handle<f2c_model, f2c_model_free>;

struct Globals {
  std::optional<unsigned long long> seed;
  std::string config;
  int threads = 0;
  std::string precision;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void add_option(std::string& opts, const std::string& key, const std::string& value) {
  opts += key + "=" + value + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"F2C skeleton action recognition: encode skeleton sequences as images, train and evaluate."};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for synthetic data, splits and initialization");
  app.add_option("--config", g.config, "Config file (schema f2c-config/1; arch.* and train.* keys)");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--precision", g.precision, "Arithmetic for train/eval")->check(CLI::IsMember({"f32", "f64"}));
  app.fallthrough();

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Print the shape ledger and parameter table of an architecture");
  std::string inspect_arch;
  int inspect_classes = 60;
  inspect->add_option("--arch", inspect_arch, "Preset: default or mini");
  inspect->add_option("--classes", inspect_classes, "Class count for the head")->check(CLI::PositiveNumber);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic skeleton dataset");
  std::string synth_out;
  int synth_classes = 8, synth_per_class = 8, synth_frames = 64, synth_joints = 25;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--classes", synth_classes, "Number of classes");
  synth->add_option("--per-class", synth_per_class, "Sequences per class");
  synth->add_option("--frames", synth_frames, "Frames per sequence");
  synth->add_option("--joints", synth_joints, "25 (one subject) or 15 (two subjects)");

  // encode
  auto* encode = app.add_subcommand("encode", "Encode a dataset into the image cache used for training");
  std::string enc_dataset, enc_kind = "ntu", enc_out, enc_protocol, enc_arch, enc_blocklist, enc_pair_swap;
  std::optional<int> enc_fold, enc_margin, enc_crops;
  int enc_preview = 0;
  bool enc_no_limb = false;
  encode->add_option("--dataset", enc_dataset, "Dataset directory")->required();
  encode->add_option("--kind", enc_kind, "ntu, sbu or cache (a directory written by synth)")
      ->check(CLI::IsMember({"ntu", "sbu", "cache"}));
  encode->add_option("--out", enc_out, "Output cache directory")->required();
  encode->add_option("--protocol", enc_protocol, "cs, cv, sbu-5fold or none");
  encode->add_option("--fold", enc_fold, "SBU fold index (0-4)");
  encode->add_option("--arch", enc_arch, "Architecture preset that fixes the image size");
  encode->add_option("--blocklist", enc_blocklist, "File of sample names to drop");
  encode->add_option("--preview", enc_preview, "Write PNG quadruples for the first N entries");
  encode->add_option("--margin", enc_margin, "Extra pixels per side for crop augmentation");
  encode->add_option("--crops", enc_crops, "Random crops per training entry");
  encode->add_option("--pair-swap", enc_pair_swap, "Also encode two-subject sequences with roles exchanged")
      ->check(CLI::IsMember({"on", "off"}));
  encode->add_flag("--no-limb-normalize", enc_no_limb, "Keep raw bone lengths");

  // train
  auto* train = app.add_subcommand("train", "Train on an encoded cache");
  std::string tr_cache, tr_out, tr_arch;
  std::optional<int> tr_epochs, tr_batch;
  std::optional<double> tr_lr, tr_gamma, tr_val;
  train->add_option("--cache", tr_cache, "Encoded cache directory")->required();
  train->add_option("--out", tr_out, "Run directory")->required();
  train->add_option("--arch", tr_arch, "Preset: default or mini");
  train->add_option("--epochs", tr_epochs, "Epochs");
  train->add_option("--batch", tr_batch, "Batch size");
  train->add_option("--lr", tr_lr, "Base learning rate");
  train->add_option("--gamma", tr_gamma, "Per-epoch learning-rate decay");
  train->add_option("--val-fraction", tr_val, "Share of training sequences held out for validation");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and print a per-class report");
  std::string ev_ckpt, ev_cache, ev_split = "test", ev_out;
  eval->add_option("--checkpoint", ev_ckpt, "Checkpoint (.f2cp)")->required();
  eval->add_option("--cache", ev_cache, "Encoded cache directory")->required();
  eval->add_option("--split", ev_split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval->add_option("--out", ev_out, "Directory for report.txt and manifest.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s: %s\n", f2c_status_name(F2C_E_ARGUMENT), e.what());
    return F2C_E_ARGUMENT;
  }

  try {
    f2c_set_threads(g.threads);
    const char* config = opt(g.config);

    if (*inspect) {
      Arch arch;
      check(f2c_arch_create(opt(inspect_arch), config, inspect_classes, &arch.p));
      Text ledger, table;
      check(f2c_arch_ledger(arch.p, &ledger.p));
      check(f2c_arch_param_table(arch.p, &table.p));
      std::printf("%s\n%s", ledger.c_str(), table.c_str());
    } else if (*synth) {
      Dataset ds;
      check(f2c_dataset_synth(synth_classes, synth_per_class, synth_frames, synth_joints, g.seed.value_or(1), &ds.p));
      check(f2c_dataset_save(ds.p, synth_out.c_str()));
      Text info;
      check(f2c_dataset_info(ds.p, &info.p));
      std::printf("%s", info.c_str());
    } else if (*encode) {
      Dataset ds;
      check(f2c_dataset_load(enc_dataset.c_str(), enc_kind.c_str(), &ds.p));
      if (!enc_blocklist.empty()) {
        size_t removed = 0;
        check(f2c_dataset_filter_blocklist(ds.p, enc_blocklist.c_str(), &removed));
        std::printf("blocklist_removed=%zu\n", removed);
      }
      Arch arch;
      check(f2c_arch_create(opt(enc_arch), config, 2, &arch.p));
      std::string opts;
      if (!enc_protocol.empty()) add_option(opts, "protocol", enc_protocol);
      if (enc_fold) add_option(opts, "fold", std::to_string(*enc_fold));
      if (enc_margin) add_option(opts, "margin", std::to_string(*enc_margin));
      if (enc_crops) add_option(opts, "crops", std::to_string(*enc_crops));
      if (!enc_pair_swap.empty()) add_option(opts, "pair_swap", enc_pair_swap == "on" ? "1" : "0");
      if (enc_no_limb) add_option(opts, "limb_normalize", "0");
      add_option(opts, "preview", std::to_string(enc_preview));
      Text summary;
      check(f2c_encode(ds.p, arch.p, opts.c_str(), enc_out.c_str(), &summary.p));
      std::printf("%s", summary.c_str());
    } else if (*train) {
      Cache cache;
      check(f2c_cache_open(tr_cache.c_str(), &cache.p));
      Arch arch;
      check(f2c_arch_create(opt(tr_arch), config, f2c_cache_classes(cache.p), &arch.p));
      std::string over;
      if (g.seed) add_option(over, "train.seed", std::to_string(*g.seed));
      if (!g.precision.empty()) add_option(over, "train.precision", g.precision);
      if (tr_epochs) add_option(over, "train.epochs", std::to_string(*tr_epochs));
      if (tr_batch) add_option(over, "train.batch_size", std::to_string(*tr_batch));
      if (tr_lr) add_option(over, "train.lr", num(*tr_lr));
      if (tr_gamma) add_option(over, "train.gamma", num(*tr_gamma));
      if (tr_val) add_option(over, "train.val_fraction", num(*tr_val));
      Text summary;
      check(f2c_train(cache.p, arch.p, config, over.c_str(), tr_out.c_str(), &summary.p));
      std::printf("%s", summary.c_str());
    } else if (*eval) {
      Model model;
      check(f2c_model_load(ev_ckpt.c_str(), opt(g.precision), &model.p));
      Cache cache;
      check(f2c_cache_open(ev_cache.c_str(), &cache.p));
      Text report;
      double acc = 0;
      check(f2c_evaluate(model.p, cache.p, ev_split.c_str(), g.seed.value_or(1), opt(ev_out), &report.p, &acc));
      std::printf("%s", report.c_str());
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s: %s\n", f2c_status_name(f.status), f.message.c_str());
    return static_cast<int>(f.status);
  }
  return 0;
}
