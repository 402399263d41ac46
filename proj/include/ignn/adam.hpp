#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ignn/param_store.hpp"

namespace ignn::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. First/second moment buffers are keyed by
// parameter name; step() refuses to run unless every parameter has a
// populated gradient, then consumes (clears) the gradients.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return step_count_; }

  void step(ParameterStore& store);

 private:
  AdamConfig cfg_;
  int64_t step_count_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

}  // namespace ignn::num
