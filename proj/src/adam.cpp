#include "crcm/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace crcm {

void AdamOptimizer::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) {
    throw std::invalid_argument("adam: parameter/gradient size mismatch");
  }
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double correction1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double correction2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    params[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

void AdamOptimizer::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

}  // namespace crcm
