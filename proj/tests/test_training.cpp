#include "support.hpp"

#include "pona/training.hpp"

#include <doctest.h>

using namespace pona;
using namespace pona::testing;

namespace fs = std::filesystem;

namespace {

// Small enough for unit-test speed on the 32x16 synthetic images.
ExperimentConfig small_run() {
  ExperimentConfig cfg;
  cfg.generator.base_channels = 2;
  cfg.generator.num_blocks = 2;
  cfg.generator.image_size = {32, 16};
  cfg.generator.attention_reduction = 4;
  cfg.discriminator.base_channels = 2;
  cfg.discriminator.attention_reduction = 2;
  cfg.training.batch_size = 3;
  cfg.training.iterations = 6;
  cfg.training.checkpoint_interval = 3;
  cfg.training.extractor_channels = 3;
  cfg.training.seed = 11;
  return cfg;
}

const std::vector<LoadedPair>& toy_pairs() {
  static const std::vector<LoadedPair> pairs = [] {
    const std::string dir = scratch_dir("training_data");
    write_synthetic_dataset(make_synthetic_dataset({}), dir);
    return load_images(load_pairs(dir + "/train_pairs.csv", dir + "/annotations.txt"), {32, 16}, false);
  }();
  return pairs;
}

Batch<float> first_batch(const ExperimentConfig& cfg) {
  return assemble_batch<float>(toy_pairs(), batch_for_step(16, cfg.training.batch_size, cfg.training.seed, 0),
                               cfg.training.sigma);
}

}  // namespace

TEST_CASE("checkpoint containers round-trip byte for byte") {
  Checkpoint c;
  c.scalar_bytes = 8;
  c.config_text = "a = 1\n";
  c.step = 42;
  c.counters["x"] = -7;
  c.put<double>("w", random_matrix(3, 2, 1));
  c.put<double>("empty", Eigen::MatrixXd(0, 4));
  const std::string bytes = c.serialize();
  const Checkpoint back = Checkpoint::parse(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.step == 42);
  CHECK(back.counter("x") == -7);
  CHECK(back.array("w") == c.array("w"));
  CHECK(back.array("empty").cols() == 4);
}

TEST_CASE("corrupt checkpoints are rejected") {
  Checkpoint c;
  c.put<float>("w", Eigen::MatrixXf::Ones(2, 2));
  const std::string bytes = c.serialize();
  CHECK_THROWS_AS(Checkpoint::parse("NOTACKPT" + bytes.substr(8)), CheckpointError);
  CHECK_THROWS_AS(Checkpoint::parse(bytes + "x"), CheckpointError);
  CHECK_THROWS_AS(Checkpoint::parse(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  Eigen::MatrixXf wrong(3, 2);
  CHECK_THROWS_AS(c.get("w", wrong), CheckpointError);
  CHECK_THROWS_AS(c.array("missing"), CheckpointError);
}

TEST_CASE("the reference configuration lands in the 20-40M parameter band") {
  const ParameterCounts counts = count_parameters(ExperimentConfig{});
  CHECK(counts.total() >= 20'000'000);
  CHECK(counts.total() <= 40'000'000);
  ExperimentConfig more;
  more.generator.num_blocks = 4;
  CHECK(count_parameters(more).total() > counts.total());
}

TEST_CASE("identical seeds give identical loss traces") {
  const ExperimentConfig cfg = small_run();
  Trainer<float> a(cfg), b(cfg);
  for (Index s = 0; s < 3; ++s) {
    const auto batch = assemble_batch<float>(toy_pairs(), batch_for_step(16, 3, cfg.training.seed, s), 6.0);
    CHECK(a.train_step(batch) == b.train_step(batch));
  }
  ExperimentConfig other = cfg;
  other.training.seed = 12;
  Trainer<float> c(other);
  CHECK_FALSE(Trainer<float>(cfg).train_step(first_batch(cfg)) == c.train_step(first_batch(cfg)));
}

TEST_CASE("a step reports each weighted term and their sum") {
  const ExperimentConfig cfg = small_run();
  Trainer<float> t(cfg);
  const LossReport r = t.train_step(first_batch(cfg));
  CHECK(r.step == 1);
  CHECK(t.step() == 1);
  CHECK(r.d_loss > 0);
  CHECK(r.full == doctest::Approx(5 * r.g_adv + 10 * r.l1 + 10 * r.percep).epsilon(1e-5));
}

TEST_CASE("zero adversarial and perceptual weights leave only the l1 gradient") {
  ExperimentConfig cfg = small_run();
  Generator<double> g(cfg.generator, 3);
  Discriminator<double> da(cfg.discriminator, kAppearanceInputChannels, 4);
  Discriminator<double> dp(cfg.discriminator, kPoseInputChannels, 5);
  const RandomConvExtractor<double> extractor(0x5eed, 3);
  const Batch<double> batch = assemble_batch<double>(toy_pairs(), {0, 5}, 6.0);
  auto generator_grads = [&](bool only_l1) {
    Tape<double> tape(true);
    Var<double> cond = tape.constant(batch.condition_image);
    Var<double> target = tape.constant(batch.target_image);
    Var<double> fake = g.forward(cond, tape.constant(batch.pose_pair));
    Var<double> l1 = l1_loss(fake, target);
    Var<double> loss = l1;
    if (only_l1) {
      loss = full_loss(l1, l1, l1, LossWeights{0, 10, 0});
    } else {
      Var<double> adv = generator_adversarial_loss(score_appearance(da, cond, fake),
                                                   score_pose(dp, fake, tape.constant(batch.target_pose)));
      loss = full_loss(adv, l1, perceptual_loss(fake, target, extractor), LossWeights{0, 10, 0});
    }
    g.store().zero_grad();
    tape.backward(loss);
    std::vector<Eigen::MatrixXd> grads;
    for (const auto& p : g.store().parameters()) grads.push_back(p.grad);
    return grads;
  };
  const auto gated = generator_grads(false);
  const auto reference = generator_grads(true);
  REQUIRE(gated.size() == reference.size());
  for (std::size_t i = 0; i < gated.size(); ++i) CHECK(gated[i] == reference[i]);
}

TEST_CASE("a non-finite loss stops training and names the term and step") {
  const ExperimentConfig cfg = small_run();
  Trainer<float> t(cfg);
  t.train_step(first_batch(cfg));
  for (auto& p : t.generator().store().parameters())
    if (p.name.find("decoder") != std::string::npos) p.value.setConstant(std::numeric_limits<float>::quiet_NaN());
  CHECK_THROWS_WITH_AS(t.train_step(first_batch(cfg)), doctest::Contains("at step 2"), TrainingError);
  try {
    t.train_step(first_batch(cfg));
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("non-finite d_loss") != std::string::npos);
  }
}

TEST_CASE("trainer state survives a checkpoint round trip exactly") {
  const ExperimentConfig cfg = small_run();
  Trainer<float> t(cfg);
  t.train_step(first_batch(cfg));
  const Checkpoint c = t.to_checkpoint();
  CHECK(c.counter("adam_g.steps") == 1);
  CHECK(c.has("generator/block0.cross_attention.gamma"));
  CHECK(c.has("adam_d/m/pose_discriminator/head.weight"));
  const std::string bytes = c.serialize();
  auto restored = Trainer<float>::from_checkpoint(Checkpoint::parse(bytes));
  CHECK(restored->to_checkpoint().serialize() == bytes);
  CHECK(restored->train_step(first_batch(cfg)) == t.train_step(first_batch(cfg)));

  Trainer<double> wide(cfg);
  CHECK_THROWS_AS(wide.restore(c), CheckpointError);
  ExperimentConfig changed = cfg;
  changed.training.seed = 1;
  Trainer<float> mismatched(changed);
  CHECK_THROWS_AS(mismatched.restore(c), CheckpointError);
}

TEST_CASE("train writes one log row per step and periodic checkpoints") {
  const ExperimentConfig cfg = small_run();
  const std::string dir = scratch_dir("train_full");
  Trainer<float> t(cfg);
  const TrainArtifacts art = train(t, toy_pairs(), dir);
  CHECK(art.reports.size() == 6);
  CHECK(read_loss_log(art.loss_log) == art.reports);
  CHECK(fs::exists(dir + "/checkpoints/" + checkpoint_name(3)));
  CHECK(fs::exists(dir + "/checkpoints/" + checkpoint_name(6)));
  CHECK(fs::exists(dir + "/checkpoints/final.ckpt"));
  CHECK(checkpoint_name(3) == "step_00000003.ckpt");
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted trace") {
  const ExperimentConfig cfg = small_run();
  const std::string full_dir = scratch_dir("resume_full");
  Trainer<float> full(cfg);
  train(full, toy_pairs(), full_dir);

  const std::string dir = scratch_dir("resume_split");
  ExperimentConfig half = cfg;
  half.training.iterations = 3;
  Trainer<float> first(half);
  train(first, toy_pairs(), dir);
  Checkpoint c = Checkpoint::load(dir + "/checkpoints/" + checkpoint_name(3));
  c.config_text = serialize_config(cfg);  // continue under the full iteration budget
  auto resumed = Trainer<float>::from_checkpoint(c);
  train(*resumed, toy_pairs(), dir);

  CHECK(read_bytes(dir + "/loss_log.jsonl") == read_bytes(full_dir + "/loss_log.jsonl"));
  CHECK(read_bytes(dir + "/checkpoints/final.ckpt") == read_bytes(full_dir + "/checkpoints/final.ckpt"));
}
