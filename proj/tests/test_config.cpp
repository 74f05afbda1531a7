#include "support.hpp"

#include "pona/config.hpp"

#include <doctest.h>

using namespace pona;
using namespace pona::testing;

TEST_CASE("defaults describe the reference architecture") {
  const ExperimentConfig cfg;
  CHECK(is_reference_architecture(cfg.generator));
  CHECK(cfg.training.weights.adversarial == 5.0);
  CHECK(cfg.training.weights.l1 == 10.0);
  CHECK(cfg.training.weights.perceptual == 10.0);
  CHECK(cfg.training.learning_rate == 2e-4);
  CHECK(cfg.training.beta1 == 0.5);
  CHECK(cfg.training.beta2 == 0.999);
  CHECK(cfg.discriminator.leaky_slope == 0.2);
  CHECK(cfg.generator.num_blocks == 3);
}

TEST_CASE("every key round-trips through get and set") {
  ExperimentConfig cfg;
  for (const auto& key : config_keys()) {
    ExperimentConfig copy;
    set_config_value(copy, key, get_config_value(cfg, key));
    CHECK(get_config_value(copy, key) == get_config_value(cfg, key));
  }
}

TEST_CASE("serialized configs parse back to identical text") {
  ExperimentConfig cfg;
  apply_override(cfg, "training.learning_rate=0.000123456789");
  apply_override(cfg, "generator.fusion = tail");
  apply_override(cfg, "discriminator.leaky_slope=0.15");
  apply_override(cfg, "training.seed=18446744073709551615");
  const std::string text = serialize_config(cfg);
  const ExperimentConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(back.training.learning_rate == 0.000123456789);
  CHECK(back.generator.fusion == FusionPlace::tail);
  CHECK(back.training.seed == 18446744073709551615ULL);
  CHECK(text.find("leaky_slope = 0.15\n") != std::string::npos);
}

TEST_CASE("config files layer over a base and ignore comments") {
  ExperimentConfig base;
  base.training.batch_size = 3;
  const auto cfg = parse_config("# comment\n\ngenerator.num_blocks = 2  # trailing\ntraining.sigma=4.5\n", base);
  CHECK(cfg.generator.num_blocks == 2);
  CHECK(cfg.training.sigma == 4.5);
  CHECK(cfg.training.batch_size == 3);
}

TEST_CASE("config errors carry the source, line and key") {
  CHECK_THROWS_WITH_AS(parse_config("training.seed = 1\ntraining.batch_size = many\n", {}, "run.cfg"),
                       doctest::Contains("run.cfg:2: training.batch_size"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config("generator.colour = red\n", {}, "run.cfg"),
                       doctest::Contains("generator.colour: unknown configuration key"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config("generator.fusion = sideways\n"), doctest::Contains("head"), ValidationError);
  CHECK_THROWS_AS(parse_config("generator.num_blocks\n"), ValidationError);
  ExperimentConfig cfg;
  cfg.training.batch_size = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("training.batch_size"), ValidationError);
}

TEST_CASE("ablation matrices apply shared settings then per-variant overrides") {
  const auto variants = parse_ablation_matrix(
      "generator.base_channels = 4\n[head]\n[none]\ngenerator.fusion = none\n[blocks_2]\ngenerator.num_blocks = 2\n");
  REQUIRE(variants.size() == 3);
  CHECK(variants[0].name == "head");
  CHECK(is_reference_architecture(variants[0].config.generator));
  CHECK(variants[1].config.generator.fusion == FusionPlace::none);
  CHECK_FALSE(is_reference_architecture(variants[1].config.generator));
  CHECK(variants[2].config.generator.num_blocks == 2);
  for (const auto& v : variants) CHECK(v.config.generator.base_channels == 4);
  CHECK_THROWS_WITH_AS(parse_ablation_matrix("[a]\n[a]\n"), doctest::Contains("duplicate variant"), ValidationError);
}

TEST_CASE("the shipped configs parse") {
  const ExperimentConfig toy = toy_config();
  CHECK(toy.generator.image_size == ImageSize{32, 16});
  const auto matrix = load_ablation_matrix(std::string(PONA_SOURCE_DIR) + "/configs/ablation_toy.cfg");
  CHECK(matrix.size() >= 4);
  CHECK(std::any_of(matrix.begin(), matrix.end(),
                    [](const AblationVariant& v) { return is_reference_architecture(v.config.generator); }));
}
