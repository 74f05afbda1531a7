// pona: synthetic data, training, generation, pose sweeps, evaluation and ablations.

#include "pona/evaluation.hpp"
#include "pona/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace pona;
using Scalar = float;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool dry_run = false;
  std::string out;
  std::string classifier = "projection";
  std::string pose_estimator = "marker";
};

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = load_config(o.config_path, cfg);
  for (const auto& s : o.overrides) {
    try {
      apply_override(cfg, s);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("--set: ") + e.what());
    }
  }
  if (o.seed) cfg.training.seed = *o.seed;
  cfg.validate();
  return cfg;
}

std::string out_dir(const CommonOptions& o, const std::string& fallback) {
  if (!o.out.empty()) return o.out;
  const char* root = std::getenv("PONA_OUT_ROOT");
  return (fs::path(root && *root ? root : "runs") / fallback).string();
}

nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : config_keys()) j[k] = get_config_value(cfg, k);
  return j;
}

nlohmann::json counts_json(const ParameterCounts& c) {
  return {{"generator", c.generator},
          {"appearance_discriminator", c.appearance_discriminator},
          {"pose_discriminator", c.pose_discriminator},
          {"total", c.total()}};
}

void write_manifest(const std::string& dir, const nlohmann::json& manifest) {
  const std::string path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(path);
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write manifest " + path);
}

std::vector<LoadedPair> load_split(const std::string& data_dir, const std::string& split, const ExperimentConfig& cfg) {
  const fs::path root(data_dir);
  const auto records =
      load_pairs((root / (split + "_pairs.csv")).string(), (root / "annotations.txt").string());
  return load_images(records, cfg.generator.image_size, cfg.data.resize);
}

EvaluationBackends backends_for(const CommonOptions& o, Index splits) {
  return {make_classifier(o.classifier), make_pose_estimator(o.pose_estimator), splits};
}

std::unique_ptr<Trainer<Scalar>> load_trainer(const std::string& checkpoint) {
  return Trainer<Scalar>::from_checkpoint(Checkpoint::load(checkpoint));
}

/// The condition pose: the record whose path names the condition image, else the only record.
KeypointSet condition_pose(const std::string& keypoint_file, const std::string& condition_image, ImageSize size) {
  const auto records = read_keypoint_file(keypoint_file);
  const std::string name = fs::path(condition_image).filename().string();
  for (const auto& r : records)
    if (fs::path(r.image_path).filename().string() == name) return KeypointSet(r.joints, size);
  if (records.size() == 1) return KeypointSet(records.front().joints, size);
  throw ValidationError(keypoint_file + ": no record for " + name);
}

std::vector<KeypointSet> target_poses(const std::string& keypoint_file, ImageSize size) {
  std::vector<KeypointSet> poses;
  const auto records = read_keypoint_file(keypoint_file);
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      poses.emplace_back(records[i].joints, size);
    } catch (const ValidationError& e) {
      throw ValidationError(keypoint_file + ": record " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return poses;
}

RgbImage load_condition(const std::string& path, ImageSize size, bool resize) {
  RgbImage img = read_ppm(path);
  if (img.size() == size) return img;
  if (!resize) throw ValidationError(path + ": image size does not match the model (enable data.resize)");
  return resize_bilinear(img, size);
}

std::vector<RgbImage> generate_series(Trainer<Scalar>& t, const RgbImage& condition, const KeypointSet& cpose,
                                      const std::vector<KeypointSet>& targets) {
  const double sigma = t.config().training.sigma;
  const auto cond = to_tensor<Scalar>(condition);
  const auto ch = encode_pose<Scalar>(cpose, sigma);
  std::vector<RgbImage> out;
  for (const auto& tp : targets) out.push_back(to_rgb(t.generator().generate(cond, ch, encode_pose<Scalar>(tp, sigma))));
  return out;
}

int cmd_synth(const CommonOptions& o, const SyntheticSpec& base) {
  SyntheticSpec spec = base;
  if (o.seed) spec.seed = *o.seed;
  const std::string dir = out_dir(o, "synthetic");
  const auto data = make_synthetic_dataset(spec);
  write_synthetic_dataset(data, dir);
  std::cout << "wrote " << data.train_pairs.size() << " training and " << data.test_pairs.size()
            << " test pairs to " << dir << "\n";
  return 0;
}

struct TrainResult {
  std::string dir;
  std::string final_checkpoint;
  ParameterCounts counts;
};

TrainResult run_training(const ExperimentConfig& cfg, const std::string& data_dir, const std::string& dir,
                         const std::string& resume, bool quiet) {
  fs::create_directories(dir);
  const std::string started = timestamp();
  const auto data = load_split(data_dir, "train", cfg);
  std::unique_ptr<Trainer<Scalar>> trainer;
  if (resume.empty()) {
    trainer = std::make_unique<Trainer<Scalar>>(cfg);
  } else {
    trainer = load_trainer(resume);
    if (serialize_config(trainer->config()) != serialize_config(cfg))
      throw ValidationError("--resume: checkpoint config differs from the requested config");
  }
  const Index report_every = std::max<Index>(1, cfg.training.iterations / 10);
  const auto artifacts = train(*trainer, data, dir, [&](const LossReport& r) {
    if (!quiet && (r.step % report_every == 0 || r.step == cfg.training.iterations))
      std::cout << r.to_json().dump() << "\n";
  });
  TrainResult result{dir, artifacts.checkpoints.back(), count_parameters(cfg)};
  nlohmann::json manifest = {{"command", "train"},
                             {"config", config_json(cfg)},
                             {"seed", cfg.training.seed},
                             {"data_dir", data_dir},
                             {"parameters", counts_json(result.counts)},
                             {"artifacts",
                              {{"loss_log", artifacts.loss_log},
                               {"checkpoints", artifacts.checkpoints},
                               {"final_checkpoint", result.final_checkpoint}}},
                             {"started_at", started},
                             {"finished_at", timestamp()}};
  if (!resume.empty()) manifest["resumed_from"] = resume;
  write_manifest(dir, manifest);
  return result;
}

int cmd_train(const CommonOptions& o, const std::string& data_dir, const std::string& resume) {
  const ExperimentConfig cfg = resolve_config(o);
  const ParameterCounts counts = count_parameters(cfg);
  if (o.dry_run) {
    std::cout << "config ok\n"
              << "generator parameters: " << counts.generator << "\n"
              << "appearance discriminator parameters: " << counts.appearance_discriminator << "\n"
              << "pose discriminator parameters: " << counts.pose_discriminator << "\n"
              << "total parameters: " << counts.total() << "\n";
    return 0;
  }
  if (data_dir.empty()) throw ValidationError("--data is required unless --dry-run is given");
  const auto r = run_training(cfg, data_dir, out_dir(o, "train-seed" + std::to_string(cfg.training.seed)), resume,
                              false);
  std::cout << "final checkpoint: " << r.final_checkpoint << "\n";
  return 0;
}

int cmd_generate(const std::string& checkpoint, const std::string& condition, const std::string& condition_kps,
                 const std::string& target_kps, const std::string& out_path) {
  auto t = load_trainer(checkpoint);
  const ImageSize size = t->config().generator.image_size;
  const RgbImage cond = load_condition(condition, size, t->config().data.resize);
  const auto targets = target_poses(target_kps, size);
  if (targets.empty()) throw ValidationError(target_kps + ": no target poses");
  const auto images = generate_series(*t, cond, condition_pose(condition_kps, condition, size), targets);
  if (images.size() == 1) {
    write_ppm(out_path, images.front());
    std::cout << "wrote " << out_path << "\n";
    return 0;
  }
  const fs::path p(out_path);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "_%03zu", i);
    const fs::path file = p.parent_path() / (p.stem().string() + suffix + p.extension().string());
    write_ppm(file.string(), images[i]);
  }
  std::cout << "wrote " << images.size() << " images next to " << out_path << "\n";
  return 0;
}

int cmd_pose_sweep(const std::string& checkpoint, const std::string& condition, const std::string& condition_kps,
                   const std::string& pose_list, const std::string& out_path) {
  auto t = load_trainer(checkpoint);
  const ImageSize size = t->config().generator.image_size;
  const RgbImage cond = load_condition(condition, size, t->config().data.resize);
  const auto targets = target_poses(pose_list, size);
  if (targets.empty()) throw ValidationError(pose_list + ": pose list is empty");
  const auto images = generate_series(*t, cond, condition_pose(condition_kps, condition, size), targets);
  RgbImage grid(size.height, size.width * Index(1 + images.size()));
  auto blit = [&](const RgbImage& img, Index slot) {
    for (Index y = 0; y < size.height; ++y)
      for (Index x = 0; x < size.width; ++x)
        for (Index c = 0; c < 3; ++c) grid.at(y, slot * size.width + x, c) = img.at(y, x, c);
  };
  blit(cond, 0);
  for (std::size_t i = 0; i < images.size(); ++i) blit(images[i], Index(i + 1));
  write_ppm(out_path, grid);
  std::cout << "wrote " << out_path << " (" << grid.height << "x" << grid.width << ")\n";
  return 0;
}

std::string report_text(const MetricReport& r) { return r.records() + "\n" + r.table(); }

int cmd_evaluate(const CommonOptions& o, const std::string& checkpoint, const std::string& pairs,
                 const std::string& annotations, const std::string& report_path, bool real_data, Index splits) {
  auto t = load_trainer(checkpoint);
  const ExperimentConfig& cfg = t->config();
  const auto data = load_images(load_pairs(pairs, annotations), cfg.generator.image_size, cfg.data.resize);
  const auto backends = backends_for(o, splits);
  const MetricReport report = real_data ? evaluate_real_data(data, backends)
                                        : evaluate_model(t->generator(), data, cfg.training.sigma, backends);
  std::cout << report.table();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report_text(report);
    if (!out) throw IoError("cannot write report " + report_path);
  }
  return 0;
}

int cmd_ablate(const CommonOptions& o, const std::string& matrix, const std::string& data_dir,
               const std::string& eval_split, Index splits) {
  ExperimentConfig base = resolve_config(o);
  auto variants = load_ablation_matrix(matrix, base);
  if (variants.empty()) throw ValidationError(matrix + ": no [variant] sections");
  const std::string dir = out_dir(o, "ablation");
  fs::create_directories(dir);
  const auto backends = backends_for(o, splits);
  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream table;
  table << "| variant | blocks | fusion | self-attn | cross-modal | params | SSIM | IS | mask-SSIM | mask-IS | PSNR | PCKh |\n"
        << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (auto& v : variants) {
    if (o.seed) v.config.training.seed = *o.seed;
    std::cout << "== " << v.name << "\n";
    const auto r = run_training(v.config, data_dir, (fs::path(dir) / v.name).string(), "", true);
    auto t = load_trainer(r.final_checkpoint);
    const auto data = load_split(data_dir, eval_split, v.config);
    const MetricReport report = evaluate_model(t->generator(), data, v.config.training.sigma, backends);
    std::ofstream((fs::path(dir) / v.name / "report.txt").string()) << report_text(report);
    const GeneratorConfig& g = v.config.generator;
    const bool reference = is_reference_architecture(g);
    table << "| " << v.name << (reference ? " *" : "") << " | " << g.num_blocks << " | " << to_string(g.fusion)
          << " | " << (g.use_self_attention ? "yes" : "no") << " | " << (g.use_cross_modal ? "yes" : "no") << " | "
          << r.counts.total();
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& row : report.rows) {
      table << " | " << row.value_text();
      metrics[row.metric] = row.value_text();
    }
    table << " |\n";
    rows.push_back({{"variant", v.name},
                    {"reference", reference},
                    {"num_blocks", g.num_blocks},
                    {"fusion", to_string(g.fusion)},
                    {"use_self_attention", g.use_self_attention},
                    {"use_cross_modal", g.use_cross_modal},
                    {"parameters", r.counts.total()},
                    {"metrics", metrics}});
  }
  table << "\n* reference architecture (head fusion, all attention components)\n";
  std::ofstream((fs::path(dir) / "ablation.md").string()) << table.str();
  std::ofstream((fs::path(dir) / "ablation.json").string()) << rows.dump(2) << '\n';
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-guided non-local attention person image generation"};
  app.require_subcommand(1);
  CommonOptions o;
  auto add_common = [&](CLI::App* sub, bool config_flags) {
    sub->add_option("--out", o.out, "Output directory (default: $PONA_OUT_ROOT/<run>)");
    sub->add_option("--seed", o.seed, "Seed override");
    if (config_flags) {
      sub->add_option("--config", o.config_path, "Key-value configuration file")->check(CLI::ExistingFile);
      sub->add_option("--set", o.overrides, "Override one field: key=value (repeatable)");
    }
  };
  auto add_backends = [&](CLI::App* sub) {
    sub->add_option("--backend-classifier", o.classifier, "Classifier backend for IS: projection|uniform");
    sub->add_option("--backend-pose-estimator", o.pose_estimator, "Pose estimator backend for PCKh: marker");
  };

  SyntheticSpec spec;
  auto* synth = app.add_subcommand("synth", "Render a synthetic stick-figure dataset");
  add_common(synth, false);
  synth->add_option("--identities", spec.num_identities, "Training identities");
  synth->add_option("--poses", spec.poses_per_identity, "Poses per identity");
  synth->add_option("--test-identities", spec.test_identities, "Held-out identities");
  synth->add_option("--height", spec.image_size.height, "Image height");
  synth->add_option("--width", spec.image_size.width, "Image width");

  std::string data_dir, resume;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, true);
  train_cmd->add_option("--data", data_dir, "Dataset directory (train_pairs.csv, annotations.txt)");
  train_cmd->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_flag("--dry-run", o.dry_run, "Validate the config and print parameter counts");

  std::string checkpoint, condition, condition_kps, target_kps, out_path;
  auto* gen = app.add_subcommand("generate", "Generate images for target poses");
  gen->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  gen->add_option("--condition", condition, "Condition image (P6)")->required()->check(CLI::ExistingFile);
  gen->add_option("--condition-keypoints", condition_kps, "Keypoint file holding the condition pose")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--keypoints", target_kps, "Target keypoint records")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Output image; several poses give an indexed series")->required();

  std::string pose_list;
  auto* sweep = app.add_subcommand("pose-sweep", "Render one condition image in many poses as a grid");
  sweep->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  sweep->add_option("--condition", condition)->required()->check(CLI::ExistingFile);
  sweep->add_option("--condition-keypoints", condition_kps)->required()->check(CLI::ExistingFile);
  sweep->add_option("--poses", pose_list, "Target keypoint records")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_path, "Grid image")->required();

  std::string pairs, annotations, report_path;
  bool real_data = false;
  Index splits = kDefaultIsSplits;
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a pair list");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--pairs", pairs)->required()->check(CLI::ExistingFile);
  eval->add_option("--annotations", annotations)->required()->check(CLI::ExistingFile);
  eval->add_option("--report", report_path, "Report file");
  eval->add_flag("--real-data", real_data, "Score the target images against themselves");
  eval->add_option("--splits", splits, "Inception-score splits (capped so each split holds 4 images)");
  add_backends(eval);

  std::string matrix, eval_split = "train";
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate every variant of a config matrix");
  add_common(ablate, true);
  ablate->add_option("--matrix", matrix)->required()->check(CLI::ExistingFile);
  ablate->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--eval-split", eval_split, "Pair list to score: train|test")
      ->check(CLI::IsMember({"train", "test"}));
  ablate->add_option("--splits", splits, "Inception-score splits (capped so each split holds 4 images)");
  add_backends(ablate);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(o, spec);
    if (*train_cmd) return cmd_train(o, data_dir, resume);
    if (*gen) return cmd_generate(checkpoint, condition, condition_kps, target_kps, out_path);
    if (*sweep) return cmd_pose_sweep(checkpoint, condition, condition_kps, pose_list, out_path);
    if (*eval) return cmd_evaluate(o, checkpoint, pairs, annotations, report_path, real_data, splits);
    if (*ablate) return cmd_ablate(o, matrix, data_dir, eval_split, splits);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
