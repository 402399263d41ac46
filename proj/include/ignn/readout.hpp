#pragma once

#include <vector>

#include "ignn/model_config.hpp"
#include "ignn/param_store.hpp"
#include "ignn/tensor.hpp"

namespace ignn::model {

using num::ParameterStore;
using num::Tape;
using num::Tensor;

// Per-graph sum of node states: [n, d] -> [num_graphs, d].
Tensor sum_readout(Tape& t, const Tensor& h, std::span<const int32_t> node_graph,
                   int64_t num_graphs);

struct Set2SetTrace {
  std::vector<std::vector<double>> attention;  // per step, one weight per node
};

// T processing steps of an LSTM controller with dot-product attention over
// each graph's nodes; returns [num_graphs, 2d] = concat(query, attended sum).
Tensor set2set_readout(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                       const Tensor& h, std::span<const int32_t> node_graph, int64_t num_graphs,
                       Set2SetTrace* trace = nullptr);

// Two-layer MLP from readout width (or node state width) to target arity.
Tensor output_head(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                   const Tensor& r);

}  // namespace ignn::model
