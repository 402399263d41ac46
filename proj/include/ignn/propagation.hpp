#pragma once

#include <vector>

#include "ignn/graph.hpp"
#include "ignn/model_config.hpp"
#include "ignn/param_store.hpp"
#include "ignn/tensor.hpp"

namespace ignn::model {

using graph::GraphBatch;
using num::ParameterStore;
using num::Tape;
using num::Tensor;

// Stack of linear layers named  <prefix>.layer<k>.weight / .bias  with
// `hidden_act` between layers and a linear final layer.
Tensor mlp_forward(Tape& t, const ParameterStore& params, const std::string& prefix,
                   size_t num_linear_layers, const Tensor& x, Activation hidden_act);

// h0 = x * W_in + b_in, or x itself in identity mode.
Tensor input_embed(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                   const Tensor& x);

// h'_v = act( sum_{w in N_v} (1/c_vw) h_w W1 + h_v W0 ),  c_vw = sqrt(deg(v) deg(w)),
// in-degrees clamped to >= 1.
Tensor gcn_step(Tape& t, const GraphBatch& b, const Tensor& h, const Tensor& w0,
                const Tensor& w1, Activation act);

// h'_v = act( sum_r sum_{w in N_v^r} (1/c_vwr) h_w W_r + h_v W0 ),  c_vwr = |N_v^r| >= 1.
Tensor rgcn_step(Tape& t, const GraphBatch& b, const Tensor& h, const Tensor& w0,
                 const std::vector<Tensor>& rel_weights, Activation act);

// Shared edge network f: per-edge transform matrices, flattened [m, d*d].
Tensor edge_network_forward(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                            const Tensor& edge_features);

// m_v = act( sum_{w in N_v} f(e_vw) h_w + W0 h_v )  with edge_w3 = f(e) as [m, d, d].
Tensor mpnn_message(Tape& t, const GraphBatch& b, const Tensor& h, const Tensor& edge_w3,
                    const Tensor& w0, Activation act);

// z = sigm(m Wz + h Uz + bz); r = sigm(m Wr + h Ur + br);
// hcand = tanh(m Wh + (r*h) Uh + bh); h' = (1-z)*h + z*hcand.
Tensor gru_update(Tape& t, const ParameterStore& params, const Tensor& h_prev, const Tensor& m);

struct PropagateResult {
  Tensor h;                // [n, d] final node states
  Tensor edge_transforms;  // [m, d*d] from the single f evaluation (mpnn/ignn only)
};

PropagateResult propagate(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                          const GraphBatch& b);

}  // namespace ignn::model
