// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "support.hpp"

#include "pona/evaluation.hpp"
#include "pona/training.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

using namespace pona;
using namespace pona::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

// 1. compute_attention_map + apply_attention against the brute-force double loop.
Outcome attention_oracle() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Index h = 1 + Index(rng() % 4), w = 1 + Index(rng() % 4);  // N <= 16
    const Index gc = 1 + Index(rng() % 8), c = 1 + Index(rng() % 8), r = 1 + Index(rng() % 3);
    ParameterStore<double> store(rng());
    const auto p = AttentionParams<double>::create(store, "a", gc, c, r, 0.7);
    p.gamma->value(0, 0) = std::uniform_real_distribution<double>(-2, 2)(rng);
    const auto guide = FeatureCode<double>::from(random_tensor(Shape{1, gc, h, w}, rng()), CodeRole::pose);
    const auto code = FeatureCode<double>::from(random_tensor(Shape{1, c, h, w}, rng()), CodeRole::image);
    const auto map = compute_attention_map(guide, p);
    const auto out = apply_attention(code, map, p);
    const auto ref = naive_attention(guide.data, code.data, p.key->value, p.query->value, p.value->value,
                                     p.output->value, p.gamma->value(0, 0));
    worst = std::max({worst, (map.data - ref.map).cwiseAbs().maxCoeff(), (out.data - ref.out).cwiseAbs().maxCoeff()});
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 1.0, fmt("200 random cases, max |diff| %.3g, %.3f s", worst, secs)};
}

// 2. Row-stochasticity over many random maps.
Outcome attention_rows() {
  double worst_sum = 0, min_entry = 1;
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index h = 1 + Index(rng() % 6), w = 1 + Index(rng() % 6), gc = 1 + Index(rng() % 8);
    ParameterStore<double> store(rng());
    const double scale = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    const auto p = AttentionParams<double>::create(store, "a", gc, 4, 1 + Index(rng() % 3), scale);
    const auto guide = FeatureCode<double>::from(random_tensor(Shape{1, gc, h, w}, rng(), -3, 3), CodeRole::pose);
    const auto map = compute_attention_map(guide, p);
    worst_sum = std::max(worst_sum, (map.data.rowwise().sum().array() - 1.0).abs().maxCoeff());
    min_entry = std::min(min_entry, map.data.minCoeff());
  }
  return {worst_sum <= 1e-5 && min_entry >= 0, fmt("1000 maps, max |row sum - 1| %.3g, min entry %.3g", worst_sum, min_entry)};
}

// 3. Fresh blocks of the reference generator reproduce their convolutional pathway.
Outcome gate_at_init() {
  const GeneratorConfig cfg;
  Generator<float> g(cfg, 3);
  Tape<float> tape(false);
  Generator<float>::Trace trace;
  const auto image = random_tensor<float>(Shape{1, 3, cfg.image_size.height, cfg.image_size.width}, 4);
  const auto pose = random_tensor<float>(Shape{1, 2 * kNumJoints, cfg.image_size.height, cfg.image_size.width}, 5, 0, 1);
  g.forward(tape.constant(image), tape.constant(pose), &trace);
  double worst = 0;
  for (const auto& b : trace.blocks)
    worst = std::max(worst, double((b.image_code->value.data - b.convolved_image->value.data).cwiseAbs().maxCoeff()));
  return {worst < 1e-6 && trace.blocks.size() == std::size_t(cfg.num_blocks),
          fmt("%.0f blocks at 128x64, max |diff| %.3g", double(trace.blocks.size()), worst)};
}

// 4. full_loss generator gradients against central differences.
Outcome gradient_check() {
  const auto t0 = Clock::now();
  const ExperimentConfig cfg = tiny_config();
  Generator<double> g(cfg.generator, 6);
  // Open the gates so attention parameters carry gradient.
  for (Index t = 0; t < cfg.generator.num_blocks; ++t) {
    g.block(t).cross_attention()->gamma->value(0, 0) = 0.3;
    g.block(t).fusion_attention()->gamma->value(0, 0) = -0.2;
  }
  Discriminator<double> da(cfg.discriminator, kAppearanceInputChannels, 7);
  Discriminator<double> dp(cfg.discriminator, kPoseInputChannels, 8);
  const RandomConvExtractor<double> extractor(0x5eed, cfg.training.extractor_channels);
  const LossWeights weights{5, 10, 10};
  const Shape img{2, 3, 8, 8};
  const auto cond = random_tensor(img, 9), target = random_tensor(img, 10);
  const auto pair = random_tensor(Shape{2, 2 * kNumJoints, 8, 8}, 11, 0, 1);
  const auto tpose = random_tensor(Shape{2, kNumJoints, 8, 8}, 12, 0, 1);

  auto loss = [&](bool backward) {
    Tape<double> tape(backward);
    Var<double> c = tape.constant(cond), t = tape.constant(target);
    Var<double> fake = g.forward(c, tape.constant(pair));
    Var<double> adv = generator_adversarial_loss(score_appearance(da, c, fake), score_pose(dp, fake, tape.constant(tpose)));
    Var<double> full = full_loss(adv, l1_loss(fake, t), perceptual_loss(fake, t, extractor), weights);
    if (backward) {
      g.store().zero_grad();
      tape.backward(full);
    }
    return full->value.data(0, 0);
  };
  const double f0 = loss(true);
  const double h = 1e-6;
  // Central differences carry roundoff of about eps * |f| / h; below the gradient size at
  // which that noise alone reaches the tolerance, agreement is judged in absolute terms.
  const double noise = 2 * std::numeric_limits<double>::epsilon() * std::abs(f0) / h;
  const double floor = noise / 1e-4;
  double worst = 0;
  Index checked = 0, below_floor = 0;
  std::string worst_name;
  for (auto& p : g.store().parameters()) {
    const Eigen::MatrixXd analytic = p.grad;
    for (Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value(i);
      p.value(i) = keep + h;
      const double up = loss(false);
      p.value(i) = keep - h;
      const double down = loss(false);
      p.value(i) = keep;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max(std::abs(numeric), std::abs(analytic(i)));
      below_floor += scale < floor ? 1 : 0;
      const double rel = std::abs(numeric - analytic(i)) / std::max(scale, floor);
      if (rel > worst) {
        worst = rel;
        worst_name = p.name;
      }
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 120,
          fmt("%.0f generator parameters, max relative error %.3g, %.1f s", double(checked), worst, secs) +
              " (worst in " + worst_name + ")" +
              fmt(", %.0f gradients under the %.2g noise floor", double(below_floor), floor)};
}

struct ToyRun {
  double initial_l1 = 0, final_l1 = 0;        // mean L1 of generated vs target over the training set
  double first_step_l1 = 0, last_step_l1 = 0;  // batch L1 reported by the first and last steps
  double max_gamma = 0;
  double ssim = 0;
  double seconds = 0;
};

double set_l1(Generator<float>& g, const std::vector<LoadedPair>& pairs, double sigma) {
  const auto out = generate_all(g, pairs, sigma);
  double total = 0;
  for (std::size_t i = 0; i < out.size(); ++i) total += l1_loss(out[i], to_tensor<double>(pairs[i].target));
  return total / double(out.size());
}

ToyRun run_toy(ExperimentConfig cfg, const std::vector<LoadedPair>& pairs, const std::string& out) {
  ToyRun r;
  Trainer<float> trainer(cfg);
  r.initial_l1 = set_l1(trainer.generator(), pairs, cfg.training.sigma);
  const auto t0 = Clock::now();
  const auto art = train(trainer, pairs, out);
  r.seconds = seconds_since(t0);
  r.first_step_l1 = art.reports.front().l1;
  r.last_step_l1 = art.reports.back().l1;
  r.final_l1 = set_l1(trainer.generator(), pairs, cfg.training.sigma);
  for (Index t = 0; t < cfg.generator.num_blocks; ++t) {
    const auto& b = trainer.generator().block(t);
    if (b.cross_attention()) r.max_gamma = std::max(r.max_gamma, double(std::abs(b.cross_attention()->gamma->value(0, 0))));
    if (b.fusion_attention()) r.max_gamma = std::max(r.max_gamma, double(std::abs(b.fusion_attention()->gamma->value(0, 0))));
  }
  EvaluationBackends be{make_classifier("projection"), make_pose_estimator("marker"), kDefaultIsSplits};
  r.ssim = *evaluate_model(trainer.generator(), pairs, cfg.training.sigma, be).row("SSIM").value;
  return r;
}

struct ToyData {
  std::string dir;
  std::vector<LoadedPair> train, test;
};

const ToyData& toy_data() {
  static const ToyData d = [] {
    ToyData t;
    t.dir = scratch_dir("acceptance_data");
    write_synthetic_dataset(make_synthetic_dataset({}), t.dir);
    t.train = load_images(load_pairs(t.dir + "/train_pairs.csv", t.dir + "/annotations.txt"), {32, 16}, false);
    t.test = load_images(load_pairs(t.dir + "/test_pairs.csv", t.dir + "/annotations.txt"), {32, 16}, false);
    return t;
  }();
  return d;
}

const std::vector<std::uint64_t> kAblationSeeds = {0, 1, 2};

std::map<std::string, ToyRun>& toy_runs() {
  static std::map<std::string, ToyRun> runs;
  return runs;
}

const ToyRun& toy_run(FusionPlace fusion, std::uint64_t seed) {
  const std::string key = to_string(fusion) + "/" + std::to_string(seed);
  auto it = toy_runs().find(key);
  if (it != toy_runs().end()) return it->second;
  ExperimentConfig cfg = toy_config();
  cfg.generator.fusion = fusion;
  cfg.training.seed = seed;
  const std::string out = scratch_dir("acceptance_" + to_string(fusion) + "_" + std::to_string(seed));
  return toy_runs()[key] = run_toy(cfg, toy_data().train, out);
}

// 5. Toy descent on the 16-pair synthetic set.
Outcome toy_descent() {
  const ToyRun& r = toy_run(FusionPlace::head, 0);
  const double ratio = r.final_l1 / r.initial_l1;
  return {ratio <= 0.5 && r.max_gamma > 1e-3 && r.seconds < 300,
          fmt("set L1 %.4f -> %.4f (ratio %.3f), max |gamma| %.3g", r.initial_l1, r.final_l1, ratio, r.max_gamma) +
              fmt(", step L1 %.4f -> %.4f, %.1f s", r.first_step_l1, r.last_step_l1, r.seconds)};
}

// 6. Head fusion versus no fusion, matched seeds.
Outcome ablation_direction() {
  double head = 0, none = 0;
  std::string per_seed;
  for (std::uint64_t s : kAblationSeeds) {
    const double h = toy_run(FusionPlace::head, s).ssim, n = toy_run(FusionPlace::none, s).ssim;
    head += h / double(kAblationSeeds.size());
    none += n / double(kAblationSeeds.size());
    per_seed += fmt(" [seed %.0f: %.4f vs %.4f]", double(s), h, n);
  }
  return {head >= none, fmt("mean toy SSIM head %.4f vs none %.4f over 3 seeds;", head, none) + per_seed};
}

// 7. Parameter accounting.
Outcome parameter_counts() {
  ExperimentConfig cfg;
  cfg.generator.num_blocks = 2;
  const Index two = count_parameters(cfg).total();
  cfg.generator.num_blocks = 3;
  const Index three = count_parameters(cfg).total();
  Generator<float> g(cfg.generator, 0, ParameterStore<float>::Allocation::shape_only);
  const Index block = g.block_parameter_count(2);
  const ParameterCounts d = count_parameters(ExperimentConfig{});
  const bool ok = three - two == block && d.total() >= 20'000'000 && d.total() <= 40'000'000;
  return {ok, fmt("count(3) - count(2) = %.0f, one block = %.0f, default total %.0f", double(three - two), double(block),
                  double(d.total())) +
                  fmt(" (G %.0f, D_A %.0f, D_P %.0f)", double(d.generator), double(d.appearance_discriminator),
                      double(d.pose_discriminator))};
}

// 8. Metric fixtures.
Outcome metric_fixtures() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  const ImageTensor x = random_tensor(Shape{1, 3, 24, 16}, 13), y = random_tensor(Shape{1, 3, 24, 16}, 14);
  expect(std::abs(ssim(x, x) - 1.0) < 1e-12, "ssim(x,x)");
  expect(mask_ssim(x, y, MaskImage::Ones(24, 16)) == ssim(x, y), "full-mask mask_ssim");
  ImageTensor shifted = x;
  shifted.data.array() += 0.2;  // a tenth of the peak
  expect(std::abs(psnr(x, shifted).decibels() - 20.0) <= 1e-9, "uniform-error psnr");
  std::vector<Eigen::VectorXd> flat(20, Eigen::VectorXd::Constant(10, 0.1));
  expect(std::abs(inception_score_from_posteriors(flat, 1).mean - 1.0) <= 1e-9, "constant-classifier IS");
  const Index labels = 7;
  std::vector<Eigen::VectorXd> hot;
  for (Index i = 0; i < labels; ++i) hot.push_back(Eigen::VectorXd::Unit(labels, i));
  expect(std::abs(inception_score_from_posteriors(hot, 1).mean - double(labels)) <= 1e-6, "one-hot IS");
  const KeypointSet kps = toy_data().train[0].record.target_keypoints;
  expect(pckh(kps, kps) == 1.0, "pckh identity");
  std::string detail = "6 fixtures";
  for (const auto& f : failures) detail += "; failed " + f;
  return {failures.empty(), detail};
}

// 9. Real-data row on the held-out synthetic pairs.
Outcome real_data() {
  EvaluationBackends be{make_classifier("projection"), make_pose_estimator("marker"), kDefaultIsSplits};
  const MetricReport r = evaluate_real_data(toy_data().test, be);
  const double s = *r.row("SSIM").value;
  const std::optional<double> p = r.row("PCKh").value;
  char sbuf[16], pbuf[16];
  std::snprintf(sbuf, sizeof(sbuf), "%.3f", s);
  std::snprintf(pbuf, sizeof(pbuf), "%.2f", p.value_or(0));
  const bool ok = std::string(sbuf) == "1.000" && p && std::string(pbuf) == "1.00";
  return {ok, std::string("SSIM ") + sbuf + ", PCKh " + pbuf + ", PSNR " + r.row("PSNR").value_text() + " over " +
                  std::to_string(r.pairs) + " test pairs"};
}

// 10. Determinism of training logs and checkpoint serialization.
Outcome reproducibility() {
  ExperimentConfig cfg = toy_config();
  cfg.training.iterations = 20;
  cfg.training.checkpoint_interval = 10;
  std::string logs[2], finals[2];
  for (int i = 0; i < 2; ++i) {
    const std::string dir = scratch_dir("acceptance_repro_" + std::to_string(i));
    Trainer<float> t(cfg);
    train(t, toy_data().train, dir);
    logs[i] = read_bytes(dir + "/" + kLossLogName);
    finals[i] = read_bytes(dir + "/checkpoints/" + kFinalCheckpointName);
  }
  const std::string dir = scratch_dir("acceptance_roundtrip");
  auto loaded = Trainer<float>::from_checkpoint(Checkpoint::parse(finals[0]));
  loaded->to_checkpoint().save(dir + "/resaved.ckpt");
  const bool same_logs = !logs[0].empty() && logs[0] == logs[1];
  const bool same_ckpt = finals[0] == finals[1];
  const bool round_trip = read_bytes(dir + "/resaved.ckpt") == finals[0];
  return {same_logs && same_ckpt && round_trip,
          std::string("loss logs ") + (same_logs ? "identical" : "differ") + ", final checkpoints " +
              (same_ckpt ? "identical" : "differ") + ", save-load-save " + (round_trip ? "byte-identical" : "differs") +
              fmt(" (%.0f bytes)", double(finals[0].size()))};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"attention matches brute force", attention_oracle},
      {"attention rows are distributions", attention_rows},
      {"gates at init reproduce conv pathway", gate_at_init},
      {"full-loss gradients match finite differences", gradient_check},
      {"toy training halves L1 and moves a gate", toy_descent},
      {"head fusion SSIM >= no fusion", ablation_direction},
      {"parameter accounting", parameter_counts},
      {"metric fixtures", metric_fixtures},
      {"real-data evaluation", real_data},
      {"fixed-seed reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
