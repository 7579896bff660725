#include "semsplat/adam.hpp"

#include <cmath>

#include "semsplat/error.hpp"

namespace semsplat {

void Adam::step(std::span<double> params, std::span<const double> grads) {
  require(params.size() == first_.size() && grads.size() == first_.size(), ErrorCode::kShapeError,
          "adam parameter block size mismatch");
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    first_[i] = b1 * first_[i] + (1.0 - b1) * g;
    second_[i] = b2 * second_[i] + (1.0 - b2) * g * g;
    const double m_hat = first_[i] / correction1;
    const double v_hat = second_[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

}  // namespace semsplat
