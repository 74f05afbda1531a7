#ifndef PONA_CONFIG_HPP
#define PONA_CONFIG_HPP

// Declarative run configuration. Files hold `section.field = value` lines with `#` comments;
// every generator, discriminator and training field is addressable by key.

#include "pona/discriminator.hpp"
#include "pona/generator.hpp"
#include "pona/losses.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pona {

enum class ExtractorKind { random_conv, identity };

struct TrainingConfig {
  Index iterations = 90000;
  Index batch_size = 8;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights = LossWeights::market();
  std::uint64_t seed = 0;
  Index checkpoint_interval = 1000;
  double sigma = kDefaultSigma;
  ExtractorKind extractor = ExtractorKind::random_conv;
  Index extractor_channels = 8;

  void validate() const;
};

struct DataConfig {
  bool resize = false;  // bilinear resize to the generator image size; off means sizes must match
};

struct ExperimentConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainingConfig training;
  DataConfig data;

  void validate() const;
};

/// Every addressable key, sorted.
std::vector<std::string> config_keys();

/// Sets one field from its textual value; errors name the key.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

/// Applies a `key=value` override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

/// Parses config text on top of `base`; errors carry the source name and line number.
ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base = {},
                              const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path, const ExperimentConfig& base = {});

/// Canonical text: every key, sorted, values printed so that parsing reproduces them exactly.
std::string serialize_config(const ExperimentConfig& cfg);

struct AblationVariant {
  std::string name;
  ExperimentConfig config;
};

/// A matrix file: shared `key = value` lines, then `[variant]` sections of overrides.
std::vector<AblationVariant> parse_ablation_matrix(const std::string& text, const ExperimentConfig& base = {},
                                                   const std::string& source = "<matrix>");
std::vector<AblationVariant> load_ablation_matrix(const std::string& path, const ExperimentConfig& base = {});

/// True for the reference architecture: head fusion, self-attention and cross-modal attention on.
bool is_reference_architecture(const GeneratorConfig& g);

std::string to_string(FusionPlace f);
std::string to_string(NormKind n);

}  // namespace pona

#endif  // PONA_CONFIG_HPP
