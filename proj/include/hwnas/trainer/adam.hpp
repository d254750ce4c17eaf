#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hwnas/autodiff/tensor.hpp"
#include "hwnas/netgraph/serialize.hpp"

namespace hwnas {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer over a fixed list of tensors. Gradients are read
/// from each tensor's grad buffer; a tensor without one counts as zero.
template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr >= 0)) throw std::invalid_argument("adam: learning rate must be non-negative");
    for (auto* p : params_) {
      m_.emplace_back(p->size(), T{0});
      v_.emplace_back(p->size(), T{0});
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T lr = static_cast<T>(cfg_.lr), eps = static_cast<T>(cfg_.eps);
    const T ic1 = static_cast<T>(1.0 / c1), ic2 = static_cast<T>(1.0 / c2);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      const T* grad = p.has_grad() ? p.grad().data() : nullptr;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const T g = grad ? grad[i] : T{0};
        m[i] = b1 * m[i] + (T{1} - b1) * g;
        v[i] = b2 * v[i] + (T{1} - b2) * g * g;
        p[i] -= lr * (m[i] * ic1) / (std::sqrt(v[i] * ic2) + eps);
      }
    }
  }

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  json state_to_json() const {
    json moments = json::array();
    for (std::size_t k = 0; k < params_.size(); ++k)
      moments.push_back({{"m", base64::encode_values(m_[k])}, {"v", base64::encode_values(v_[k])}});
    return json{{"lr", cfg_.lr},     {"beta1", cfg_.beta1}, {"beta2", cfg_.beta2},
                {"eps", cfg_.eps},   {"t", t_},             {"moments", std::move(moments)}};
  }

  void load_state(const json& j) {
    const auto& moments = j.at("moments");
    if (moments.size() != params_.size()) throw std::invalid_argument("adam state: parameter count mismatch");
    std::vector<std::vector<T>> m, v;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      m.push_back(base64::decode_values<T>(moments[k].at("m").get<std::string>()));
      v.push_back(base64::decode_values<T>(moments[k].at("v").get<std::string>()));
      if (m.back().size() != params_[k]->size() || v.back().size() != params_[k]->size()) {
        throw std::invalid_argument("adam state: moment size mismatch");
      }
    }
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = j.at("t").get<std::size_t>();
  }

 private:
  std::vector<Tensor<T>*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace hwnas
