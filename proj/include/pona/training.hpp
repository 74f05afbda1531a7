#ifndef PONA_TRAINING_HPP
#define PONA_TRAINING_HPP

#include "pona/checkpoint.hpp"
#include "pona/config.hpp"
#include "pona/data_pipeline.hpp"
#include "pona/discriminator.hpp"
#include "pona/generator.hpp"
#include "pona/losses.hpp"
#include "pona/optimizer.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pona {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossReport {
  Index step = 0;  // 1-based index of the completed step
  double d_loss = 0;
  double g_adv = 0;
  double l1 = 0;
  double percep = 0;
  double full = 0;

  nlohmann::json to_json() const {
    return {{"step", step}, {"d_loss", d_loss}, {"g_adv", g_adv}, {"l1", l1}, {"percep", percep}, {"full", full}};
  }
  static LossReport from_json(const nlohmann::json& j) {
    return {j.at("step").get<Index>(),  j.at("d_loss").get<double>(), j.at("g_adv").get<double>(),
            j.at("l1").get<double>(),   j.at("percep").get<double>(), j.at("full").get<double>()};
  }
  bool operator==(const LossReport&) const = default;
};

struct ParameterCounts {
  Index generator = 0;
  Index appearance_discriminator = 0;
  Index pose_discriminator = 0;
  Index total() const { return generator + appearance_discriminator + pose_discriminator; }
};

/// Exact counts from a shape-only build; nothing is allocated.
inline ParameterCounts count_parameters(const ExperimentConfig& cfg) {
  using Alloc = ParameterStore<float>::Allocation;
  Generator<float> g(cfg.generator, 0, Alloc::shape_only);
  Discriminator<float> da(cfg.discriminator, kAppearanceInputChannels, 0, Alloc::shape_only);
  Discriminator<float> dp(cfg.discriminator, kPoseInputChannels, 0, Alloc::shape_only);
  return {g.store().parameter_count(), da.store().parameter_count(), dp.store().parameter_count()};
}

template <typename Scalar>
std::unique_ptr<FeatureExtractor<Scalar>> make_extractor(const TrainingConfig& t) {
  if (t.extractor == ExtractorKind::identity) return std::make_unique<IdentityExtractor<Scalar>>();
  return std::make_unique<RandomConvExtractor<Scalar>>(0x5eed, t.extractor_channels);
}

/// Generator, both discriminators, their optimizers and the step counter.
template <typename Scalar>
class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& cfg)
      : cfg_((cfg.validate(), cfg)),
        generator_(cfg.generator, cfg.training.seed),
        appearance_(cfg.discriminator, kAppearanceInputChannels, cfg.training.seed + 1),
        pose_(cfg.discriminator, kPoseInputChannels, cfg.training.seed + 2),
        extractor_(make_extractor<Scalar>(cfg.training)),
        adam_g_({&generator_.store()}, adam_options(cfg.training)),
        adam_d_({&appearance_.store(), &pose_.store()}, adam_options(cfg.training)) {}

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const ExperimentConfig& config() const { return cfg_; }
  Generator<Scalar>& generator() { return generator_; }
  Discriminator<Scalar>& appearance_discriminator() { return appearance_; }
  Discriminator<Scalar>& pose_discriminator() { return pose_; }
  const FeatureExtractor<Scalar>& extractor() const { return *extractor_; }
  Index step() const { return step_; }

  /// One discriminator update on real/generated pairs, then one generator update.
  LossReport train_step(const Batch<Scalar>& batch) {
    if (batch.size() < 1) throw ValidationError("train_step needs a nonempty batch");
    const Index next = step_ + 1;
    ModeGuard<Scalar> g_mode(generator_.store(), true);

    Tape<Scalar> gtape(true);
    Var<Scalar> cond = gtape.constant(batch.condition_image);
    Var<Scalar> target = gtape.constant(batch.target_image);
    Var<Scalar> target_pose = gtape.constant(batch.target_pose);
    Var<Scalar> fake = generator_.forward(cond, gtape.constant(batch.pose_pair));

    LossReport report;
    report.step = next;
    {
      Tape<Scalar> dtape(true);
      Var<Scalar> c = dtape.constant(batch.condition_image);
      Var<Scalar> t = dtape.constant(batch.target_image);
      Var<Scalar> p = dtape.constant(batch.target_pose);
      Var<Scalar> f = dtape.constant(fake->value);
      Var<Scalar> d_loss = discriminator_loss(score_appearance(appearance_, c, t), score_pose(pose_, t, p),
                                              score_appearance(appearance_, c, f), score_pose(pose_, f, p));
      report.d_loss = require_finite(d_loss, "d_loss", next);
      appearance_.store().zero_grad();
      pose_.store().zero_grad();
      dtape.backward(d_loss);
      adam_d_.step();
    }

    Var<Scalar> adv = generator_adversarial_loss(score_appearance(appearance_, cond, fake),
                                                 score_pose(pose_, fake, target_pose));
    Var<Scalar> l1 = l1_loss(fake, target);
    Var<Scalar> percep = perceptual_loss(fake, target, *extractor_);
    Var<Scalar> full = full_loss(adv, l1, percep, cfg_.training.weights);
    report.g_adv = require_finite(adv, "g_adv", next);
    report.l1 = require_finite(l1, "l1", next);
    report.percep = require_finite(percep, "percep", next);
    report.full = require_finite(full, "full", next);
    generator_.store().zero_grad();
    gtape.backward(full);
    adam_g_.step();
    step_ = next;
    return report;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.scalar_bytes = sizeof(Scalar);
    c.config_text = serialize_config(cfg_);
    c.step = step_;
    c.counters["adam_g.steps"] = adam_g_.steps();
    c.counters["adam_d.steps"] = adam_d_.steps();
    put_store(c, "generator/", generator_.store());
    put_store(c, "appearance_discriminator/", appearance_.store());
    put_store(c, "pose_discriminator/", pose_.store());
    put_moments(c, "adam_g/", adam_g_, {"generator/"});
    put_moments(c, "adam_d/", adam_d_, {"appearance_discriminator/", "pose_discriminator/"});
    return c;
  }

  /// Restores state from a checkpoint whose config echo matches this trainer's config.
  void restore(const Checkpoint& c) {
    if (c.scalar_bytes != sizeof(Scalar))
      throw CheckpointError("checkpoint holds " + std::to_string(c.scalar_bytes) + "-byte scalars, trainer uses " +
                            std::to_string(sizeof(Scalar)));
    if (c.config_text != serialize_config(cfg_)) throw CheckpointError("checkpoint config does not match trainer");
    get_store(c, "generator/", generator_.store());
    get_store(c, "appearance_discriminator/", appearance_.store());
    get_store(c, "pose_discriminator/", pose_.store());
    get_moments(c, "adam_g/", adam_g_, {"generator/"});
    get_moments(c, "adam_d/", adam_d_, {"appearance_discriminator/", "pose_discriminator/"});
    adam_g_.set_steps(c.counter("adam_g.steps"));
    adam_d_.set_steps(c.counter("adam_d.steps"));
    step_ = c.step;
  }

  static std::unique_ptr<Trainer> from_checkpoint(const Checkpoint& c) {
    auto t = std::make_unique<Trainer>(parse_config(c.config_text, ExperimentConfig{}, "checkpoint config"));
    t->restore(c);
    return t;
  }

 private:
  static AdamOptions adam_options(const TrainingConfig& t) { return {t.learning_rate, t.beta1, t.beta2, 1e-8}; }

  static double require_finite(Var<Scalar> v, const char* term, Index step) {
    const double x = double(v->value.data(0, 0));
    if (!std::isfinite(x))
      throw TrainingError("non-finite " + std::string(term) + " (" + std::to_string(x) + ") at step " +
                          std::to_string(step));
    return x;
  }

  static void put_store(Checkpoint& c, const std::string& prefix, const ParameterStore<Scalar>& s) {
    for (const auto& p : s.parameters()) c.put<Scalar>(prefix + p.name, p.value);
    for (const auto& b : s.buffers()) c.put<Scalar>(prefix + "buffer/" + b.name, b.value);
  }

  static void get_store(const Checkpoint& c, const std::string& prefix, ParameterStore<Scalar>& s) {
    for (auto& p : s.parameters()) c.get(prefix + p.name, p.value);
    for (auto& b : s.buffers()) c.get(prefix + "buffer/" + b.name, b.value);
  }

  // Moment arrays are named after the owning store prefix and parameter name.
  static std::vector<std::string> moment_names(const Adam<Scalar>& adam, const std::vector<std::string>& prefixes,
                                               const std::vector<const ParameterStore<Scalar>*>& stores) {
    std::vector<std::string> names;
    for (std::size_t s = 0; s < stores.size(); ++s)
      for (const auto& p : stores[s]->parameters()) names.push_back(prefixes[s] + p.name);
    if (names.size() != adam.parameters().size()) throw std::logic_error("optimizer/store mismatch");
    return names;
  }

  std::vector<const ParameterStore<Scalar>*> stores_for(const std::vector<std::string>& prefixes) const {
    if (prefixes.size() == 1) return {&generator_.store()};
    return {&appearance_.store(), &pose_.store()};
  }

  void put_moments(Checkpoint& c, const std::string& tag, const Adam<Scalar>& adam,
                   const std::vector<std::string>& prefixes) const {
    const auto names = moment_names(adam, prefixes, stores_for(prefixes));
    for (std::size_t i = 0; i < names.size(); ++i) c.put<Scalar>(tag + "m/" + names[i], adam.first_moments()[i]);
    for (std::size_t i = 0; i < names.size(); ++i) c.put<Scalar>(tag + "v/" + names[i], adam.second_moments()[i]);
  }

  void get_moments(const Checkpoint& c, const std::string& tag, Adam<Scalar>& adam,
                   const std::vector<std::string>& prefixes) const {
    const auto names = moment_names(adam, prefixes, stores_for(prefixes));
    for (std::size_t i = 0; i < names.size(); ++i) c.get(tag + "m/" + names[i], adam.first_moments()[i]);
    for (std::size_t i = 0; i < names.size(); ++i) c.get(tag + "v/" + names[i], adam.second_moments()[i]);
  }

  ExperimentConfig cfg_;
  Generator<Scalar> generator_;
  Discriminator<Scalar> appearance_;
  Discriminator<Scalar> pose_;
  std::unique_ptr<FeatureExtractor<Scalar>> extractor_;
  Adam<Scalar> adam_g_;
  Adam<Scalar> adam_d_;
  Index step_ = 0;
};

inline std::string checkpoint_name(Index step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%08lld.ckpt", static_cast<long long>(step));
  return buf;
}

inline constexpr const char* kLossLogName = "loss_log.jsonl";
inline constexpr const char* kFinalCheckpointName = "final.ckpt";

struct TrainArtifacts {
  std::vector<LossReport> reports;
  std::vector<std::string> checkpoints;
  std::string loss_log;
};

/// Runs the trainer from its current step up to config.training.iterations. Every step
/// appends one loss-log row; checkpoints land every checkpoint_interval steps plus a final one.
template <typename Scalar>
TrainArtifacts train(Trainer<Scalar>& trainer, const std::vector<LoadedPair>& data, const std::string& out_dir,
                     const std::function<void(const LossReport&)>& on_step = {}) {
  namespace fs = std::filesystem;
  const TrainingConfig& t = trainer.config().training;
  if (data.empty()) throw ValidationError("training set is empty");
  TrainArtifacts out;
  const fs::path root(out_dir);
  fs::create_directories(root / "checkpoints");
  out.loss_log = (root / kLossLogName).string();
  std::ofstream log(out.loss_log, trainer.step() > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw TrainingError("cannot open loss log " + out.loss_log + " at step " + std::to_string(trainer.step()));
  const Index n = static_cast<Index>(data.size());
  auto save = [&](const std::string& path) {
    try {
      trainer.to_checkpoint().save(path);
    } catch (const std::exception& e) {
      throw TrainingError(std::string(e.what()) + " at step " + std::to_string(trainer.step()));
    }
    out.checkpoints.push_back(path);
  };
  while (trainer.step() < t.iterations) {
    const auto indices = batch_for_step(n, t.batch_size, t.seed, trainer.step());
    const LossReport r = trainer.train_step(assemble_batch<Scalar>(data, indices, t.sigma));
    log << r.to_json().dump() << '\n';
    log.flush();
    if (!log) throw TrainingError("failed writing loss log at step " + std::to_string(r.step));
    out.reports.push_back(r);
    if (on_step) on_step(r);
    if (r.step % t.checkpoint_interval == 0) save((root / "checkpoints" / checkpoint_name(r.step)).string());
  }
  save((root / "checkpoints" / kFinalCheckpointName).string());
  return out;
}

inline std::vector<LossReport> read_loss_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TrainingError("cannot open loss log " + path);
  std::vector<LossReport> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(LossReport::from_json(nlohmann::json::parse(line)));
  return rows;
}

}  // namespace pona

#endif  // PONA_TRAINING_HPP
