#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace semsplat {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Dense Adam with bias correction over one flat parameter block.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamConfig config)
      : config_(config), first_(size, 0.0), second_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grads);

  std::int64_t steps() const noexcept { return steps_; }
  std::size_t size() const noexcept { return first_.size(); }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::vector<double> first_;
  std::vector<double> second_;
  std::int64_t steps_ = 0;
};

}  // namespace semsplat
