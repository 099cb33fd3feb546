// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "gersp/data/synthetic.hpp"
#include "gersp/trainer/trainer.hpp"
#include "oracles.hpp"

using namespace gersp;
namespace fs = std::filesystem;

namespace {

TrainingConfig small_config(int n_classes, std::uint64_t seed) {
  TrainingConfig cfg;
  cfg.encoder.stage_widths = {4, 8};
  cfg.encoder.blocks_per_stage = {1, 1};
  cfg.encoder.block = BlockKind::basic;
  cfg.encoder.stem = StemKind::conv3;
  cfg.encoder.stem_stride = 1;
  cfg.encoder.input_size = 16;
  cfg.encoder.proj_hidden_dim = 16;
  cfg.encoder.proj_out_dim = 8;
  cfg.encoder.n_classes = n_classes;
  cfg.encoder.bn_groups = 2;
  cfg.augment.out_size = 16;
  cfg.queue_capacity = 64;
  cfg.batch_size = 8;
  cfg.epochs = 1;
  cfg.seed = seed;
  return cfg;
}

SyntheticCorpus small_corpus(std::uint64_t seed, std::size_t n = 64) {
  SyntheticCorpusSpec spec;
  spec.n_natural = n;
  spec.n_rs = n;
  spec.k_classes = 4;
  spec.image_size = 16;
  spec.seed = seed;
  return generate_synthetic_corpus(spec);
}

template <typename Real>
std::uint64_t params_hash(std::vector<ParamRef<Real>> params) {
  std::uint64_t h = 0;
  for (const auto& p : params) h = oracles::combine_hash(h, oracles::tensor_hash(*p.value));
  return h;
}

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove(path);
  }
  ~TempFile() { fs::remove(path); }
};

}  // namespace

TEST_CASE("train_step advances counters and fills the queue by B per step") {
  const auto corpus = small_corpus(1);
  const TrainingConfig cfg = small_config(4, 1);
  auto state = init_train_state<float>(cfg);
  DualBatchSampler<float> sampler(cfg.seed, corpus.natural.size(), corpus.rs.size());

  for (int step = 1; step <= 3; ++step) {
    const auto batch =
        sampler.next(corpus.natural, corpus.rs, cfg.augment, cfg.normalize, cfg.batch_size);
    const auto loss = train_step(state, batch, 0.05);
    REQUIRE(std::isfinite(double(loss.l_total)));
    REQUIRE(state.iteration == static_cast<std::uint64_t>(step));
    REQUIRE(state.queue.filled() == static_cast<std::size_t>(step) * cfg.batch_size);
  }
}

TEST_CASE("alpha=0 reduces the total to the contrastive loss and zeroes predictor grads") {
  const auto corpus = small_corpus(2);
  TrainingConfig cfg = small_config(4, 2);
  cfg.alpha = 0.0;
  auto state = init_train_state<float>(cfg);
  DualBatchSampler<float> sampler(cfg.seed, corpus.natural.size(), corpus.rs.size());
  const auto batch =
      sampler.next(corpus.natural, corpus.rs, cfg.augment, cfg.normalize, cfg.batch_size);
  const auto loss = train_step(state, batch, 0.05);
  REQUIRE(loss.l_total == loss.l_ct);

  std::vector<ParamRef<float>> params;
  state.bundle.student_predictor.collect_params("predictor", params);
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.grad->numel(); ++i) REQUIRE((*p.grad)[i] == 0.0f);
}

TEST_CASE("gradient routing: each loss feeds only its own head") {
  const auto corpus = small_corpus(3);
  const TrainingConfig cfg = small_config(4, 3);
  auto state = init_train_state<float>(cfg);
  DualBatchSampler<float> sampler(cfg.seed, corpus.natural.size(), corpus.rs.size());
  const auto batch =
      sampler.next(corpus.natural, corpus.rs, cfg.augment, cfg.normalize, cfg.batch_size);
  auto& bundle = state.bundle;

  auto grad_norm = [](std::vector<ParamRef<float>> params) {
    double s = 0;
    for (const auto& p : params)
      for (std::size_t i = 0; i < p.grad->numel(); ++i)
        s += double((*p.grad)[i]) * double((*p.grad)[i]);
    return std::sqrt(s);
  };
  auto projector_params = [&] {
    std::vector<ParamRef<float>> out;
    bundle.student_projector.collect_params("projector", out);
    return out;
  };
  auto predictor_params = [&] {
    std::vector<ParamRef<float>> out;
    bundle.student_predictor.collect_params("predictor", out);
    return out;
  };
  auto backbone_params = [&] {
    std::vector<ParamRef<float>> out;
    bundle.student_backbone.collect_params("backbone", out);
    return out;
  };

  RngStream step_rng = state.shuffle_rng.fork(0x1ULL);
  const auto z_k = bundle.teacher_projector.forward(
      shuffled_forward(bundle.teacher_backbone, batch.rs_view_k, cfg.encoder.bn_groups,
                       step_rng, BnMode::group_stats),
      nullptr);
  // an empty queue makes the contrastive loss constant (one-way softmax), so
  // seed some negatives before checking gradient flow
  state.queue.push(z_k);

  // contrastive-only backward: projector and backbone receive gradient,
  // predictor does not
  bundle.zero_grads();
  {
    typename Backbone<float>::Cache cq;
    typename Projector<float>::Cache cp;
    auto pooled_q = bundle.student_backbone.forward_pooled(batch.rs_view_q, BnMode::train, &cq);
    auto z_q = bundle.student_projector.forward(pooled_q, &cp);
    auto dz = info_nce_backward(z_q, z_k, state.queue, float(cfg.tau), 1.0f);
    auto dpooled = bundle.student_projector.backward(dz, cp);
    bundle.student_backbone.backward_from_pooled(dpooled, cq);
  }
  REQUIRE(grad_norm(projector_params()) > 0.0);
  REQUIRE(grad_norm(backbone_params()) > 0.0);
  REQUIRE(grad_norm(predictor_params()) == 0.0);

  // supervised-only backward: predictor and backbone receive gradient,
  // projector does not
  bundle.zero_grads();
  {
    typename Backbone<float>::Cache cn;
    typename Linear<float>::Cache cl;
    auto pooled_n =
        bundle.student_backbone.forward_pooled(batch.natural_images, BnMode::train, &cn);
    auto logits = bundle.student_predictor.forward(pooled_n, &cl);
    auto dlogits = cross_entropy_backward(logits, batch.natural_labels, 1.0f);
    auto dpooled = bundle.student_predictor.backward(dlogits, cl);
    bundle.student_backbone.backward_from_pooled(dpooled, cn);
  }
  REQUIRE(grad_norm(predictor_params()) > 0.0);
  REQUIRE(grad_norm(backbone_params()) > 0.0);
  REQUIRE(grad_norm(projector_params()) == 0.0);
}

TEST_CASE("optimizer never touches the teacher") {
  const auto corpus = small_corpus(4);
  TrainingConfig cfg = small_config(4, 4);
  cfg.ema_m = 1.0;  // EMA freezes the teacher, isolating the optimizer's effect
  auto state = init_train_state<float>(cfg);
  DualBatchSampler<float> sampler(cfg.seed, corpus.natural.size(), corpus.rs.size());
  const auto batch =
      sampler.next(corpus.natural, corpus.rs, cfg.augment, cfg.normalize, cfg.batch_size);

  const std::uint64_t teacher_before = params_hash(state.bundle.teacher_params());
  const std::uint64_t student_before = params_hash(state.bundle.student_params());
  train_step(state, batch, 0.05);
  REQUIRE(params_hash(state.bundle.teacher_params()) == teacher_before);
  REQUIRE(params_hash(state.bundle.student_params()) != student_before);

  // and the EMA alone is what moves it
  ema_update(state.bundle.teacher_params(), state.bundle.student_ema_params(), 0.5f);
  REQUIRE(params_hash(state.bundle.teacher_params()) != teacher_before);
}

TEST_CASE("frozen student: the teacher gap decays by exactly m per step") {
  const auto corpus = small_corpus(5);
  const TrainingConfig cfg = small_config(4, 5);
  auto state = init_train_state<float>(cfg);
  DualBatchSampler<float> sampler(cfg.seed, corpus.natural.size(), corpus.rs.size());
  const auto batch =
      sampler.next(corpus.natural, corpus.rs, cfg.augment, cfg.normalize, cfg.batch_size);

  // open a gap by perturbing the teacher
  for (auto& p : state.bundle.teacher_params())
    for (std::size_t i = 0; i < p.value->numel(); ++i) (*p.value)[i] += 0.01f;

  auto gap = [&] {
    double s = 0;
    auto tp = state.bundle.teacher_params();
    auto sp = state.bundle.student_ema_params();
    for (std::size_t i = 0; i < tp.size(); ++i)
      for (std::size_t j = 0; j < tp[i].value->numel(); ++j) {
        const double d = double((*tp[i].value)[j]) - double((*sp[i].value)[j]);
        s += d * d;
      }
    return std::sqrt(s);
  };

  const double before = gap();
  train_step(state, batch, 0.0);  // lr 0 freezes the student
  const double after = gap();
  REQUIRE(after / before == Catch::Approx(cfg.ema_m).epsilon(1e-5));
}

TEST_CASE("non-finite activations abort the step with a diagnostic") {
  const TrainingConfig cfg = small_config(4, 6);
  auto state = init_train_state<float>(cfg);
  DualBatch<float> batch;
  batch.natural_images = Tensor<float>({8, 3, 16, 16});
  batch.rs_view_q = Tensor<float>({8, 3, 16, 16});
  batch.rs_view_k = Tensor<float>({8, 3, 16, 16});
  batch.natural_labels.assign(8, 0);
  batch.rs_view_q[0] = std::numeric_limits<float>::quiet_NaN();
  REQUIRE_THROWS_AS(train_step(state, batch, 0.05), NumericError);
}

TEST_CASE("pretrain writes the metric log and checkpoint; lr follows the schedule") {
  const auto corpus = small_corpus(7);
  TrainingConfig cfg = small_config(4, 7);
  cfg.epochs = 3;
  cfg.cosine.t_max = 2;  // exercise a restart
  TempFile ckpt("gersp_test_pretrain.ckpt");
  TempFile metrics("gersp_test_pretrain.jsonl");

  const Checkpoint meta =
      pretrain<float>(cfg, corpus.natural, corpus.rs, ckpt.path.string(), metrics.path.string());
  REQUIRE(fs::exists(ckpt.path));

  const std::size_t steps = corpus.rs.size() / cfg.batch_size;
  std::ifstream in(metrics.path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const std::size_t epoch = j.at("epoch").get<std::size_t>();
    REQUIRE(j.at("lr").get<double>() ==
            Catch::Approx(cosine_restart_lr(epoch % cfg.cosine.t_max, cfg.cosine)));
    REQUIRE(j.contains("l_ct"));
    REQUIRE(j.contains("l_ce"));
    REQUIRE(j.contains("l_total"));
    ++lines;
  }
  REQUIRE(lines == steps * cfg.epochs);
  REQUIRE(meta.metadata.at("iterations").get<std::size_t>() == lines);
  REQUIRE(meta.metadata.at("queue_persisted").get<bool>() == false);
}

TEST_CASE("pretrain is bit-reproducible for a fixed seed") {
  const auto corpus = small_corpus(8, 32);
  TrainingConfig cfg = small_config(4, 8);
  cfg.epochs = 2;
  TempFile a("gersp_repro_a.ckpt"), b("gersp_repro_b.ckpt");
  const Checkpoint ca = pretrain<float>(cfg, corpus.natural, corpus.rs, a.path.string());
  const Checkpoint cb = pretrain<float>(cfg, corpus.natural, corpus.rs, b.path.string());
  REQUIRE(ca.crc == cb.crc);
  REQUIRE(ca.metadata.at("final_l_total").get<double>() ==
          cb.metadata.at("final_l_total").get<double>());

  cfg.seed = 9;
  TempFile c("gersp_repro_c.ckpt");
  const Checkpoint cc = pretrain<float>(cfg, corpus.natural, corpus.rs, c.path.string());
  REQUIRE(cc.crc != ca.crc);
}

TEST_CASE("checkpoint round trip restores every tensor bitwise") {
  const TrainingConfig cfg = small_config(4, 10);
  auto state = init_train_state<float>(cfg);
  TempFile file("gersp_roundtrip.ckpt");
  save_checkpoint(state.bundle, cfg, {{"note", "test"}}, file.path.string());

  auto [loaded, loaded_cfg] = load_checkpoint<float>(file.path.string());
  auto orig = state.bundle.student_params();
  auto back = loaded.student_params();
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    REQUIRE(orig[i].name == back[i].name);
    REQUIRE(*orig[i].value == *back[i].value);
  }
  REQUIRE(loaded_cfg.batch_size == cfg.batch_size);
  REQUIRE(loaded_cfg.encoder.stage_widths == cfg.encoder.stage_widths);
}

TEST_CASE("single-byte corruption is caught by the CRC") {
  const TrainingConfig cfg = small_config(4, 11);
  auto state = init_train_state<float>(cfg);
  TempFile file("gersp_corrupt.ckpt");
  save_checkpoint(state.bundle, cfg, {}, file.path.string());

  std::fstream f(file.path, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(200, std::ios::beg);
  char byte;
  f.seekg(200, std::ios::beg);
  f.read(&byte, 1);
  byte = static_cast<char>(byte ^ 0x01);
  f.seekp(200, std::ios::beg);
  f.write(&byte, 1);
  f.close();

  try {
    read_checkpoint_meta(file.path.string());
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    REQUIRE(e.code() == CheckpointError::Code::checksum_mismatch);
  }
}

TEST_CASE("loading into an incompatible geometry names the first bad tensor") {
  const TrainingConfig cfg = small_config(4, 12);
  auto state = init_train_state<float>(cfg);
  TempFile file("gersp_mismatch.ckpt");
  save_checkpoint(state.bundle, cfg, {}, file.path.string());

  auto other = init_encoder<float>(EncoderSpec::desk(4), 0);
  try {
    load_checkpoint_into(other, file.path.string());
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    REQUIRE(e.code() == CheckpointError::Code::shape_mismatch);
    REQUIRE(std::string(e.what()).find("backbone/stem/conv/W") != std::string::npos);
  }
}

TEST_CASE("truncated checkpoint and bad magic raise distinct codes") {
  const TrainingConfig cfg = small_config(4, 13);
  auto state = init_train_state<float>(cfg);
  TempFile file("gersp_trunc.ckpt");
  save_checkpoint(state.bundle, cfg, {}, file.path.string());

  // truncate
  {
    std::ifstream in(file.path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), 10);
  }
  try {
    read_checkpoint_meta(file.path.string());
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    REQUIRE(e.code() == CheckpointError::Code::truncated);
  }

  // wrong magic
  {
    std::ofstream out(file.path, std::ios::binary | std::ios::trunc);
    const std::string junk = "NOTACKPT0000000000000000";
    out.write(junk.data(), static_cast<std::streamsize>(junk.size()));
  }
  try {
    read_checkpoint_meta(file.path.string());
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    REQUIRE(e.code() == CheckpointError::Code::bad_magic);
  }
}
