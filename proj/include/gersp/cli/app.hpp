// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <CLI11.hpp>
#include <json.hpp>
#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "gersp/data/synthetic.hpp"
#include "gersp/eval/eval.hpp"
#include "gersp/trainer/trainer.hpp"

namespace gersp::cli {

namespace detail {

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " unparsable: " + e.what());
  }
}

inline std::uint32_t crc32_of_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read back file: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size())));
}

// order-sensitive fold of per-file CRCs
inline std::uint32_t crc32_combine_ordered(std::uint32_t acc, std::uint32_t next) {
  unsigned char bytes[4] = {static_cast<unsigned char>(next & 0xff),
                            static_cast<unsigned char>((next >> 8) & 0xff),
                            static_cast<unsigned char>((next >> 16) & 0xff),
                            static_cast<unsigned char>((next >> 24) & 0xff)};
  return static_cast<std::uint32_t>(crc32(acc, bytes, 4));
}

struct GenDataOptions {
  std::string out_dir;
  std::uint64_t seed = 0;
  int k_classes = 10;
  std::size_t n_natural = 2000;
  std::size_t n_rs = 2000;
  std::size_t n_rs_labeled = 1000;
  std::size_t image_size = 32;
};

inline int run_gen_data(const GenDataOptions& opt) {
  namespace fs = std::filesystem;
  SyntheticCorpusSpec spec;
  spec.seed = opt.seed;
  spec.k_classes = opt.k_classes;
  spec.n_natural = opt.n_natural;
  spec.n_rs = opt.n_rs;
  spec.image_size = opt.image_size;
  spec.validate();

  const SyntheticCorpus corpus = generate_synthetic_corpus(spec);
  const LabeledDataset rs_labeled = generate_rs_labeled(spec, opt.n_rs_labeled);

  const fs::path root(opt.out_dir);
  fs::create_directories(root / "natural");
  fs::create_directories(root / "rs");
  fs::create_directories(root / "rs-labeled");

  std::vector<std::size_t> per_class_counter(static_cast<std::size_t>(opt.k_classes), 0);
  std::uint32_t natural_crc = 0;
  for (std::size_t i = 0; i < corpus.natural.size(); ++i) {
    const int cls = corpus.natural.labels[i];
    const fs::path dir = root / "natural" / corpus.natural.class_names[static_cast<std::size_t>(cls)];
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", per_class_counter[static_cast<std::size_t>(cls)]++);
    const std::string path = (dir / name).string();
    write_png(path, corpus.natural.images[i]);
    natural_crc = crc32_combine_ordered(natural_crc, crc32_of_file(path));
  }
  std::uint32_t rs_crc = 0;
  for (std::size_t i = 0; i < corpus.rs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    const std::string path = (root / "rs" / name).string();
    write_png(path, corpus.rs.images[i]);
    rs_crc = crc32_combine_ordered(rs_crc, crc32_of_file(path));
  }
  std::fill(per_class_counter.begin(), per_class_counter.end(), 0);
  std::uint32_t rsl_crc = 0;
  for (std::size_t i = 0; i < rs_labeled.size(); ++i) {
    const int cls = rs_labeled.labels[i];
    const fs::path dir = root / "rs-labeled" / rs_labeled.class_names[static_cast<std::size_t>(cls)];
    fs::create_directories(dir);
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", per_class_counter[static_cast<std::size_t>(cls)]++);
    const std::string path = (dir / name).string();
    write_png(path, rs_labeled.images[i]);
    rsl_crc = crc32_combine_ordered(rsl_crc, crc32_of_file(path));
  }

  nlohmann::json manifest{
      {"format", "gersp-corpus-v1"},
      {"spec",
       {{"seed", spec.seed},
        {"k_classes", spec.k_classes},
        {"n_natural", spec.n_natural},
        {"n_rs", spec.n_rs},
        {"n_rs_labeled", opt.n_rs_labeled},
        {"image_size", spec.image_size}}},
      {"checksums",
       {{"natural", natural_crc}, {"rs", rs_crc}, {"rs-labeled", rsl_crc}}}};
  std::ofstream mf(root / "corpus.json");
  if (!mf) throw IoError("cannot write corpus manifest under: " + opt.out_dir);
  mf << manifest.dump(2) << "\n";
  std::cout << "wrote corpus to " << opt.out_dir << " (" << corpus.natural.size()
            << " natural, " << corpus.rs.size() << " rs, " << rs_labeled.size()
            << " rs-labeled)\n";
  return 0;
}

struct PretrainOptions {
  std::string config_path;
  std::string natural_dir;
  std::string rs_dir;
  std::string out_path;
  std::string metrics_path;
  std::string dump_config_path;
  std::string preset;
  CLI::App* sub = nullptr;

  double alpha = 1.0, tau = 0.07, ema_m = 0.996;
  std::uint64_t seed = 0;
  std::size_t queue_capacity = 0, batch_size = 0, epochs = 0;
  double lr_min = 0.01, lr_max = 0.10;
  std::size_t t_max = 20;
  double momentum = 0.9, weight_decay = 5e-5;
  int n_classes = 10;
  std::size_t input_size = 0;
  std::size_t bn_groups = 0;
  bool per_iteration_lr = false;
  std::string teacher_bn_stats;
};

inline TrainingConfig effective_pretrain_config(const PretrainOptions& opt) {
  TrainingConfig cfg = TrainingConfig::desk(opt.n_classes);
  if (!opt.preset.empty()) {
    if (opt.preset == "desk")
      cfg = TrainingConfig::desk(opt.n_classes);
    else if (opt.preset == "full")
      cfg = TrainingConfig::full(opt.n_classes);
    else
      throw ConfigError("unknown preset '" + opt.preset + "' (expected desk or full)");
  }
  if (!opt.config_path.empty()) load_json_file(opt.config_path).get_to(cfg);

  const CLI::App* sub = opt.sub;
  auto passed = [&](const std::string& flag) { return sub && sub->count(flag) > 0; };
  if (passed("--seed")) cfg.seed = opt.seed;
  if (passed("--alpha")) cfg.alpha = opt.alpha;
  if (passed("--tau")) cfg.tau = opt.tau;
  if (passed("--ema-m")) cfg.ema_m = opt.ema_m;
  if (passed("--queue-capacity")) cfg.queue_capacity = opt.queue_capacity;
  if (passed("--batch-size")) cfg.batch_size = opt.batch_size;
  if (passed("--epochs")) cfg.epochs = opt.epochs;
  if (passed("--lr-min")) cfg.cosine.lr_min = opt.lr_min;
  if (passed("--lr-max")) cfg.cosine.lr_max = opt.lr_max;
  if (passed("--t-max")) cfg.cosine.t_max = opt.t_max;
  if (passed("--momentum")) cfg.momentum = opt.momentum;
  if (passed("--weight-decay")) cfg.weight_decay = opt.weight_decay;
  if (passed("--n-classes")) cfg.encoder.n_classes = opt.n_classes;
  if (passed("--input-size")) {
    cfg.encoder.input_size = opt.input_size;
    cfg.augment.out_size = opt.input_size;
  }
  if (passed("--bn-groups")) cfg.encoder.bn_groups = opt.bn_groups;
  if (passed("--per-iteration-lr")) cfg.per_iteration_lr = opt.per_iteration_lr;
  if (passed("--teacher-bn-stats")) {
    if (opt.teacher_bn_stats == "copy")
      cfg.teacher_bn_stats = TeacherBnStats::copy;
    else if (opt.teacher_bn_stats == "ema")
      cfg.teacher_bn_stats = TeacherBnStats::ema;
    else
      throw ConfigError("--teacher-bn-stats must be copy or ema");
  }
  return cfg;
}

inline int run_pretrain(const PretrainOptions& opt) {
  TrainingConfig cfg = effective_pretrain_config(opt);

  if (!opt.dump_config_path.empty()) {
    const nlohmann::json j = cfg;
    if (opt.dump_config_path == "-") {
      std::cout << j.dump(2) << "\n";
    } else {
      std::ofstream out(opt.dump_config_path);
      if (!out) throw IoError("cannot write config dump: " + opt.dump_config_path);
      out << j.dump(2) << "\n";
    }
    return 0;
  }

  if (opt.natural_dir.empty() || opt.rs_dir.empty() || opt.out_path.empty())
    throw ConfigError("pretrain requires --natural, --rs, and --out");
  const LabeledDataset labeled = load_labeled_dataset(opt.natural_dir);
  const UnlabeledDataset unlabeled = load_unlabeled_dataset(opt.rs_dir);
  cfg.encoder.n_classes = labeled.n_classes();
  cfg.validate();

  const std::string metrics =
      opt.metrics_path.empty() ? opt.out_path + ".metrics.jsonl" : opt.metrics_path;
  const Checkpoint ckpt = pretrain<float>(cfg, labeled, unlabeled, opt.out_path, metrics);
  std::cout << "checkpoint written to " << opt.out_path << " (" << ckpt.tensors.size()
            << " tensors, crc 0x" << std::hex << ckpt.crc << std::dec << ")\n"
            << "metrics log: " << metrics << "\n";
  return 0;
}

struct EvalOptions {
  std::string checkpoint_path;
  std::string data_dir;
  std::string report_path;
  std::string config_path;
  bool random_init = false;
  bool full_protocol = false;
  std::string preset = "desk";
  CLI::App* sub = nullptr;

  std::size_t trials = 5, epochs = 0, batch_size = 64, resize = 0, pool_grid = 2;
  double train_fraction = 0.2, flip_p = 0.5, base_lr = 0.01;
  std::uint64_t seed = 0;
};

inline void protocol_from_json(const nlohmann::json& j, EvalProtocol& p) {
  p.train_fraction = j.value("train_fraction", p.train_fraction);
  p.trials = j.value("trials", p.trials);
  p.epochs = j.value("epochs", p.epochs);
  if (j.contains("schedule")) j.at("schedule").get_to(p.schedule);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.flip_p = j.value("flip_p", p.flip_p);
  p.resize = j.value("resize", p.resize);
  p.momentum = j.value("momentum", p.momentum);
  p.weight_decay = j.value("weight_decay", p.weight_decay);
  p.stage_pool_grid = j.value("stage_pool_grid", p.stage_pool_grid);
  if (j.contains("normalize")) j.at("normalize").get_to(p.normalize);
  p.seed = j.value("seed", p.seed);
}

inline int run_eval(EvalMode mode, const EvalOptions& opt) {
  if (opt.data_dir.empty()) throw ConfigError("evaluation requires --data");
  const LabeledDataset dataset = load_labeled_dataset(opt.data_dir);

  Backbone<float> backbone;
  ChannelStats stats;
  std::size_t default_resize = 224;
  if (!opt.checkpoint_path.empty()) {
    auto [bundle, cfg] = load_checkpoint<float>(opt.checkpoint_path);
    backbone = bundle.student_backbone;
    stats = cfg.normalize;
    default_resize = cfg.encoder.input_size;
  } else if (opt.random_init) {
    EncoderSpec spec = opt.preset == "full" ? EncoderSpec::full(dataset.n_classes())
                                            : EncoderSpec::desk(dataset.n_classes());
    backbone = init_encoder<float>(spec, opt.seed).student_backbone;
    default_resize = spec.input_size;
  } else {
    throw ConfigError("provide --checkpoint or --random-init");
  }

  EvalProtocol protocol = opt.full_protocol ? EvalProtocol{} : EvalProtocol::desk();
  protocol.mode = mode;
  protocol.resize = default_resize;
  protocol.normalize = stats;
  if (!opt.config_path.empty()) protocol_from_json(load_json_file(opt.config_path), protocol);

  const CLI::App* sub = opt.sub;
  auto passed = [&](const std::string& flag) {
    const CLI::Option* o = sub ? sub->get_option_no_throw(flag) : nullptr;
    return o && o->count() > 0;
  };
  if (passed("--trials")) protocol.trials = opt.trials;
  if (passed("--epochs")) protocol.epochs = opt.epochs;
  if (passed("--batch-size")) protocol.batch_size = opt.batch_size;
  if (passed("--resize")) protocol.resize = opt.resize;
  if (passed("--pool-grid")) protocol.stage_pool_grid = opt.pool_grid;
  if (passed("--train-fraction")) protocol.train_fraction = opt.train_fraction;
  if (passed("--flip-p")) protocol.flip_p = opt.flip_p;
  if (passed("--base-lr")) protocol.schedule.base_lr = opt.base_lr;
  if (passed("--seed")) protocol.seed = opt.seed;

  EvalReport report;
  switch (mode) {
    case EvalMode::finetune:
      report = finetune_classifier(backbone, dataset, protocol);
      break;
    case EvalMode::probe:
      report = linear_probe(backbone, dataset, protocol);
      break;
    case EvalMode::stage_probe:
      report = stagewise_probe(backbone, dataset, protocol);
      break;
  }

  const nlohmann::json j = report.to_json();
  std::cout << j.dump(2) << "\n";
  if (!opt.report_path.empty()) {
    std::ofstream out(opt.report_path);
    if (!out) throw IoError("cannot write report: " + opt.report_path);
    out << j.dump(2) << "\n";
  }
  return 0;
}

inline int run_inspect(const std::string& path) {
  const Checkpoint meta = read_checkpoint_meta(path);  // throws on CRC mismatch
  std::cout << "checkpoint: " << path << "\n"
            << "format_version: " << meta.format_version << "\n"
            << "crc32: 0x" << std::hex << meta.crc << std::dec << " (verified)\n"
            << "tensors (" << meta.tensors.size() << "):\n";
  for (const auto& t : meta.tensors) {
    std::cout << "  " << t.name << "  " << Tensor<float>::shape_string(t.shape) << "  "
              << t.dtype << "  offset=" << t.offset << " bytes=" << t.length << "\n";
  }
  const nlohmann::json cfg = meta.config;
  std::cout << "config: " << cfg.dump() << "\n"
            << "metadata: " << meta.metadata.dump() << "\n";
  return 0;
}

}  // namespace detail

/// Entry point shared by the binary and the tests.
/// Exit codes: 0 success, 1 usage error, 2 runtime error.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"gersp: dual-branch pre-training (supervised natural-image branch + "
               "momentum-contrastive overhead-image branch) with evaluation harnesses"};
  app.require_subcommand(1);

  detail::GenDataOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dual corpus");
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "corpus seed");
  gen_cmd->add_option("--k-classes", gen.k_classes, "class / scene-type count");
  gen_cmd->add_option("--n-natural", gen.n_natural, "labeled natural image count");
  gen_cmd->add_option("--n-rs", gen.n_rs, "unlabeled overhead image count");
  gen_cmd->add_option("--n-rs-labeled", gen.n_rs_labeled, "labeled overhead image count");
  gen_cmd->add_option("--image-size", gen.image_size, "square image size in pixels");

  detail::PretrainOptions pre;
  CLI::App* pre_cmd = app.add_subcommand("pretrain", "run dual-branch pre-training");
  pre.sub = pre_cmd;
  pre_cmd->add_option("--config", pre.config_path, "JSON config file");
  pre_cmd->add_option("--natural", pre.natural_dir, "labeled natural image directory");
  pre_cmd->add_option("--rs", pre.rs_dir, "unlabeled overhead image directory");
  pre_cmd->add_option("--out", pre.out_path, "output checkpoint path");
  pre_cmd->add_option("--metrics", pre.metrics_path, "metrics JSONL path");
  pre_cmd->add_option("--dump-config", pre.dump_config_path,
                      "write the effective config (path or '-') and exit");
  pre_cmd->add_option("--preset", pre.preset, "encoder preset: desk | full");
  pre_cmd->add_option("--seed", pre.seed, "run seed");
  pre_cmd->add_option("--alpha", pre.alpha, "supervised-branch weight");
  pre_cmd->add_option("--tau", pre.tau, "contrastive temperature");
  pre_cmd->add_option("--ema-m", pre.ema_m, "teacher momentum coefficient");
  pre_cmd->add_option("--queue-capacity", pre.queue_capacity, "negative queue capacity");
  pre_cmd->add_option("--batch-size", pre.batch_size, "per-branch batch size");
  pre_cmd->add_option("--epochs", pre.epochs, "training epochs");
  pre_cmd->add_option("--lr-min", pre.lr_min, "cosine schedule minimum lr");
  pre_cmd->add_option("--lr-max", pre.lr_max, "cosine schedule maximum lr");
  pre_cmd->add_option("--t-max", pre.t_max, "cosine restart period in epochs");
  pre_cmd->add_option("--momentum", pre.momentum, "SGD momentum");
  pre_cmd->add_option("--weight-decay", pre.weight_decay, "SGD weight decay");
  pre_cmd->add_option("--n-classes", pre.n_classes, "classifier width (overridden by data)");
  pre_cmd->add_option("--input-size", pre.input_size, "encoder input size");
  pre_cmd->add_option("--bn-groups", pre.bn_groups, "shuffling-BN group count");
  pre_cmd->add_flag("--per-iteration-lr", pre.per_iteration_lr,
                    "interpolate the cosine schedule per iteration");
  pre_cmd->add_option("--teacher-bn-stats", pre.teacher_bn_stats,
                      "teacher BN running stats: copy | ema");

  auto add_eval_cmd = [&](const std::string& name, const std::string& desc,
                          detail::EvalOptions& opt) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    opt.sub = cmd;
    cmd->add_option("--checkpoint", opt.checkpoint_path, "pre-trained checkpoint");
    cmd->add_flag("--random-init", opt.random_init, "use a randomly initialized encoder");
    cmd->add_option("--preset", opt.preset, "encoder preset for --random-init");
    cmd->add_option("--data", opt.data_dir, "labeled dataset directory");
    cmd->add_option("--report", opt.report_path, "write the JSON report here");
    cmd->add_option("--config", opt.config_path, "JSON protocol file");
    cmd->add_flag("--full-protocol", opt.full_protocol,
                  "100-epoch schedule with milestones 30/60/90");
    cmd->add_option("--trials", opt.trials, "number of trials");
    cmd->add_option("--epochs", opt.epochs, "epochs per trial");
    cmd->add_option("--batch-size", opt.batch_size, "batch size");
    cmd->add_option("--resize", opt.resize, "input resize");
    cmd->add_option("--train-fraction", opt.train_fraction, "train split fraction");
    cmd->add_option("--flip-p", opt.flip_p, "train-time horizontal flip probability");
    cmd->add_option("--base-lr", opt.base_lr, "step schedule base lr");
    cmd->add_option("--seed", opt.seed, "evaluation seed");
    if (name == "stage-probe")
      cmd->add_option("--pool-grid", opt.pool_grid, "per-stage pooling grid");
    return cmd;
  };

  detail::EvalOptions ft_opt, probe_opt, stage_opt;
  CLI::App* ft_cmd = add_eval_cmd("finetune", "fine-tune the full encoder", ft_opt);
  CLI::App* probe_cmd = add_eval_cmd("probe", "frozen-encoder linear probe", probe_opt);
  CLI::App* stage_cmd = add_eval_cmd("stage-probe", "per-stage frozen probes", stage_opt);

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "print a checkpoint manifest");
  inspect_cmd->add_option("path", inspect_path, "checkpoint path")->required();

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen_cmd->parsed()) return detail::run_gen_data(gen);
    if (pre_cmd->parsed()) return detail::run_pretrain(pre);
    if (ft_cmd->parsed()) return detail::run_eval(EvalMode::finetune, ft_opt);
    if (probe_cmd->parsed()) return detail::run_eval(EvalMode::probe, probe_opt);
    if (stage_cmd->parsed()) return detail::run_eval(EvalMode::stage_probe, stage_opt);
    if (inspect_cmd->parsed()) return detail::run_inspect(inspect_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace gersp::cli
