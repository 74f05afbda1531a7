#include "pona/losses.hpp"

namespace pona {

namespace {

double mean_neg_log(const std::vector<double>& scores, bool complement) {
  if (scores.empty()) throw std::invalid_argument("adversarial loss needs at least one score");
  double total = 0;
  for (double s : scores) {
    const double c = std::clamp(s, kLogClamp, 1.0 - kLogClamp);
    total -= std::log(complement ? 1.0 - c : c);
  }
  return total / double(scores.size());
}

}  // namespace

AdversarialLosses adversarial_losses(const ScoreBatch& real, const ScoreBatch& fake) {
  AdversarialLosses out;
  out.discriminator = mean_neg_log(real.appearance, false) + mean_neg_log(real.pose, false) +
                      mean_neg_log(fake.appearance, true) + mean_neg_log(fake.pose, true);
  out.generator = mean_neg_log(fake.appearance, false) + mean_neg_log(fake.pose, false);
  return out;
}

}  // namespace pona
