#pragma once

#include "ignn/graph.hpp"
#include "ignn/infomax.hpp"
#include "ignn/model_config.hpp"
#include "ignn/param_store.hpp"
#include "ignn/propagation.hpp"
#include "ignn/readout.hpp"

namespace ignn::model {

// Create every parameter tensor (zero-filled) the config calls for.
void build_params(ParameterStore& params, const ModelConfig& cfg);

// Xavier-uniform weights, zero biases. Each parameter draws from its own
// stream keyed by name, so adding or removing unrelated parameters never
// shifts another parameter's initialization.
void init_params(ParameterStore& params, const ModelConfig& cfg, uint64_t seed);

struct ForwardResult {
  Tensor prediction;       // [num_graphs, arity] for graph tasks, [num_nodes, arity] for node tasks
  Tensor edge_transforms;  // [m, d*d] (mpnn/ignn only)
};

ForwardResult model_forward(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                            const graph::GraphBatch& b, Set2SetTrace* trace = nullptr);

}  // namespace ignn::model
