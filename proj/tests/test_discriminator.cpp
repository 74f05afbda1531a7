#include "support.hpp"

#include "pona/discriminator.hpp"
#include "pona/losses.hpp"
#include "pona/optimizer.hpp"

#include <doctest.h>

using namespace pona;
using namespace pona::testing;

namespace {

DiscriminatorConfig small_discriminator() {
  DiscriminatorConfig d;
  d.base_channels = 4;
  d.attention_reduction = 2;
  return d;
}

}  // namespace

TEST_CASE("discriminator scores lie strictly inside (0, 1), one per sample") {
  Discriminator<double> d(small_discriminator(), kAppearanceInputChannels, 1);
  Tape<double> tape(false);
  Var<double> s = score_appearance(d, tape.constant(random_tensor(Shape{3, 3, 8, 8}, 2)),
                                   tape.constant(random_tensor(Shape{3, 3, 8, 8}, 3)));
  REQUIRE(s->shape() == Shape{3, 1, 1, 1});
  CHECK(s->value.data.minCoeff() > 0.0);
  CHECK(s->value.data.maxCoeff() < 1.0);
}

TEST_CASE("pose discriminator takes an image plus joint heatmaps") {
  Discriminator<double> d(small_discriminator(), kPoseInputChannels, 4);
  CHECK(kPoseInputChannels == 21);
  Tape<double> tape(false);
  CHECK_NOTHROW(score_pose(d, tape.constant(random_tensor(Shape{1, 3, 8, 8}, 5)),
                           tape.constant(random_tensor(Shape{1, kNumJoints, 8, 8}, 6, 0, 1))));
  CHECK_THROWS_AS(score_pose(d, tape.constant(random_tensor(Shape{1, 3, 8, 8}, 5)),
                             tape.constant(random_tensor(Shape{1, kNumJoints, 4, 8}, 6))),
                  ShapeError);
  CHECK_THROWS_AS(d(tape.constant(random_tensor(Shape{1, 6, 8, 8}, 7))), ShapeError);
}

TEST_CASE("discriminator config validation names the field") {
  DiscriminatorConfig d = small_discriminator();
  d.leaky_slope = 1.5;
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("discriminator.leaky_slope"), ValidationError);
  d = small_discriminator();
  d.attention_after = 9;
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("discriminator.attention_after"), ValidationError);
}

TEST_CASE("self-attention can be disabled in the discriminator") {
  DiscriminatorConfig cfg = small_discriminator();
  Discriminator<float> with(cfg, 6, 0, ParameterStore<float>::Allocation::shape_only);
  cfg.attention_after = 0;
  Discriminator<float> without(cfg, 6, 0, ParameterStore<float>::Allocation::shape_only);
  CHECK(with.store().parameter_count() > without.store().parameter_count());
}

TEST_CASE("a few discriminator updates separate real pairs from fake pairs") {
  Discriminator<double> da(small_discriminator(), kAppearanceInputChannels, 8);
  Discriminator<double> dp(small_discriminator(), kPoseInputChannels, 9);
  Adam<double> adam({&da.store(), &dp.store()}, AdamOptions{1e-3, 0.5, 0.999, 1e-8});
  // Real candidates equal the condition image; fakes are unrelated noise.
  const auto cond = random_tensor(Shape{2, 3, 8, 8}, 10);
  const auto fake = random_tensor(Shape{2, 3, 8, 8}, 11);
  const auto pose = random_tensor(Shape{2, kNumJoints, 8, 8}, 12, 0, 1);
  auto run = [&](bool update) {
    Tape<double> tape(update);
    Var<double> c = tape.constant(cond), f = tape.constant(fake), p = tape.constant(pose);
    Var<double> ra = score_appearance(da, c, c), rp = score_pose(dp, c, p);
    Var<double> fa = score_appearance(da, c, f), fp = score_pose(dp, f, p);
    Var<double> loss = discriminator_loss(ra, rp, fa, fp);
    if (update) {
      da.store().zero_grad();
      dp.store().zero_grad();
      tape.backward(loss);
      adam.step();
    }
    return std::make_tuple(double(loss->value.data(0, 0)), ra->value.data.mean(), fa->value.data.mean());
  };
  const double initial = std::get<0>(run(false));
  for (int i = 0; i < 30; ++i) run(true);
  const auto [loss, real_score, fake_score] = run(false);
  CHECK(loss < initial);
  CHECK(real_score > fake_score);
}
