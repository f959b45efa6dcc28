#pragma once

#include <vector>

namespace crcm {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Plain Adam with bias correction. State grows lazily to the parameter count.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const AdamConfig& config) : cfg_(config) {}

  void step(std::vector<double>& params, const std::vector<double>& grad);
  void reset();

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace crcm
