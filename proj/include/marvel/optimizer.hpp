#pragma once

#include <map>
#include <string>

#include "marvel/params.hpp"

namespace marvel {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// AdamW with decoupled weight decay. Only trainable groups with a populated
// gradient are touched; frozen parameters never move.
template <typename S>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  void step(ParamStore<S>& ps) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& e : ps.entries()) {
      if (!ps.trainable(e) || e.grad.size() == 0) continue;
      if (!e.grad.allFinite())
        throw NumericError("optimizer: non-finite gradient in parameter " + e.name +
                           " at step " + std::to_string(t_));
      auto& [m, v] = state_[e.name];
      if (m.size() == 0) {
        m = MatX<S>::Zero(e.value.rows(), e.value.cols());
        v = MatX<S>::Zero(e.value.rows(), e.value.cols());
      }
      S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
      m = b1 * m + (S(1) - b1) * e.grad;
      v = (b2 * v.array() + (S(1) - b2) * e.grad.array().square()).matrix();
      MatX<S> m_hat = m / static_cast<S>(bc1);
      MatX<S> v_hat = v / static_cast<S>(bc2);
      e.value.array() -= static_cast<S>(cfg_.lr) *
                         (m_hat.array() / (v_hat.array().sqrt() + static_cast<S>(cfg_.eps)) +
                          static_cast<S>(cfg_.weight_decay) * e.value.array());
    }
  }

  int64_t steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, std::pair<MatX<S>, MatX<S>>> state_;
};

}  // namespace marvel
