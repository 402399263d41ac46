#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ignn/tensor.hpp"

namespace ignn::num {

// Named trainable tensors. std::map keeps iteration order sorted by name so
// every pass over the parameters (init, optimizer, serialization) is
// deterministic.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  size_t count() const { return params_.size(); }
  int64_t scalar_count() const;
  void clear_grads();

  const std::map<std::string, Tensor>& entries() const { return params_; }

  std::map<std::string, std::vector<double>> snapshot_values() const;
  void restore_values(const std::map<std::string, std::vector<double>>& values);

  // side data carried along with the parameters in checkpoints
  std::map<std::string, std::vector<double>> extras;  // e.g. per-target mean/std
  std::map<std::string, std::string> text_extras;     // e.g. resolved config JSON

 private:
  std::map<std::string, Tensor> params_;
};

struct LoadedCheckpoint {
  uint64_t config_hash = 0;
  std::map<std::string, Tensor> params;
  std::map<std::string, std::vector<double>> extras;
  std::map<std::string, std::string> text_extras;
};

void save_checkpoint(const std::string& path, const ParameterStore& store, uint64_t config_hash);
LoadedCheckpoint load_checkpoint(const std::string& path);
// Strict: the checkpoint must carry exactly the store's parameter names and shapes.
void restore_from_checkpoint(ParameterStore& store, const LoadedCheckpoint& ck);

}  // namespace ignn::num
