#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "matrix.hpp"

namespace csna {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Classic L2: added to the gradient before the moment updates.
  double weight_decay = 0.0;
};

/// Adam with bias correction. Moment buffers self-initialise to zeros on the
/// first step and must see the same parameter list (and shapes) thereafter.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::span<Matrix<T>* const> params, std::span<const Matrix<T>> grads) {
    require(params.size() == grads.size(), ErrorKind::Dimension, "adam: params/grads count mismatch");
    if (m_.empty()) {
      for (const Matrix<T>* p : params) {
        m_.emplace_back(p->rows, p->cols);
        v_.emplace_back(p->rows, p->cols);
      }
    }
    require(m_.size() == params.size(), ErrorKind::Dimension, "adam: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix<T>& p = *params[k];
      const Matrix<T>& g = grads[k];
      require(p.same_shape(g) && p.same_shape(m_[k]), ErrorKind::Dimension, "adam: shape mismatch");
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g.data[i]) + config_.weight_decay * static_cast<double>(p.data[i]);
        const double m = config_.beta1 * static_cast<double>(m_[k].data[i]) + (1.0 - config_.beta1) * gi;
        const double v = config_.beta2 * static_cast<double>(v_[k].data[i]) + (1.0 - config_.beta2) * gi * gi;
        m_[k].data[i] = static_cast<T>(m);
        v_[k].data[i] = static_cast<T>(v);
        const double update = config_.lr * (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
        p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) - update);
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Matrix<T>>& first_moments() const { return m_; }
  const std::vector<Matrix<T>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace csna
