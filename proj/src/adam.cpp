#include "ignn/adam.hpp"

#include <cmath>

namespace ignn::num {

void Adam::step(ParameterStore& store) {
  std::string missing;
  for (const auto& [name, t] : store.entries()) {
    if (!t.has_grad()) {
      if (!missing.empty()) missing += ", ";
      missing += name;
    }
  }
  if (!missing.empty())
    throw Error(Errc::invalid_argument, "adam step: no gradient for: " + missing);

  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (const auto& [name, t] : store.entries()) {
    auto& m = m_[name];
    auto& v = v_[name];
    const size_t n = t.data().size();
    if (m.empty()) m.assign(n, 0.0);
    if (v.empty()) v.assign(n, 0.0);
    Tensor handle = t;  // shared node; handles are cheap aliases
    auto w = handle.mutable_data();
    const auto g = t.grad();
    for (size_t i = 0; i < n; ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  store.clear_grads();
}

}  // namespace ignn::num
