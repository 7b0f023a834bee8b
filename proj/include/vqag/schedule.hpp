#pragma once

// Weight of the attention term over training and the combined loss.

#include <cmath>
#include <numbers>
#include <optional>

#include "vqag/error.hpp"

namespace vqag {

class Schedule {
 public:
  enum class Mode { CosineDecay, Fixed };

  static Schedule cosine(long long t_max) { return Schedule(Mode::CosineDecay, t_max, 0.0); }
  static Schedule fixed(double value, long long t_max = 1) { return Schedule(Mode::Fixed, t_max, value); }

  Mode mode() const { return mode_; }
  long long t_max() const { return t_max_; }
  double fixed_value() const { return value_; }

  struct Value {
    double alpha;
    bool past_end;  // t > t_max; cosine decay clamped to 0
  };

  Value evaluate(long long t) const {
    if (t < 0) throw InputError("schedule step must be non-negative");
    if (mode_ == Mode::Fixed) return {value_, t > t_max_};
    if (t > t_max_) return {0.0, true};
    const double ratio = static_cast<double>(t) / static_cast<double>(t_max_);
    return {0.5 * (1.0 + std::cos(std::numbers::pi * ratio)), false};
  }

  double alpha(long long t) const { return evaluate(t).alpha; }

 private:
  Schedule(Mode mode, long long t_max, double value) : mode_(mode), t_max_(t_max), value_(value) {
    if (t_max < 1) throw InputError("t_max must be at least 1");
    if (mode == Mode::Fixed && !(value >= 0.0 && value <= 1.0)) {
      throw InputError("fixed alpha must lie in [0, 1]");
    }
  }

  Mode mode_;
  long long t_max_;
  double value_;
};

struct LossBreakdown {
  double ce = 0.0;
  double kl = 0.0;
  double alpha = 0.0;
  double total = 0.0;
};

// ce + alpha(t) * kl; without a KL term (no grounding label) alpha is 0.
inline LossBreakdown total_loss(double ce, std::optional<double> kl, const Schedule& s, long long t) {
  if (std::isnan(ce) || (kl && std::isnan(*kl))) throw NumericError("total_loss: NaN input");
  LossBreakdown out;
  out.ce = ce;
  if (!kl) {
    out.total = ce;
    return out;
  }
  out.kl = *kl;
  out.alpha = s.alpha(t);
  out.total = ce + out.alpha * out.kl;
  return out;
}

}  // namespace vqag
