#include "ignn/readout.hpp"

#include "ignn/propagation.hpp"

namespace ignn::model {

Tensor sum_readout(Tape& t, const Tensor& h, std::span<const int32_t> node_graph,
                   int64_t num_graphs) {
  return num::scatter_add_rows(t, h, node_graph, num_graphs);
}

Tensor set2set_readout(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                       const Tensor& h, std::span<const int32_t> node_graph, int64_t num_graphs,
                       Set2SetTrace* trace) {
  const int64_t d = h.dim(1);
  // controller state starts at zero; query q and cell c are [G, d]
  Tensor q = Tensor::zeros({num_graphs, d});
  Tensor c = Tensor::zeros({num_graphs, d});
  Tensor q_star = Tensor::zeros({num_graphs, 2 * d});
  if (trace) trace->attention.clear();

  auto gate = [&](const char* w, const char* u, const char* b) {
    return num::add_bias(t,
                         num::add(t, num::matmul(t, q_star, params.at(w)),
                                  num::matmul(t, q, params.at(u))),
                         params.at(b));
  };

  for (int64_t step = 0; step < cfg.set2set_steps; ++step) {
    // LSTM controller: i = sigm(q* Wi + q Ui + bi), f, o alike; u = tanh(q* Wc + q Uc + bc)
    Tensor i = num::sigmoid(t, gate("s2s.wi", "s2s.ui", "s2s.bi"));
    Tensor f = num::sigmoid(t, gate("s2s.wf", "s2s.uf", "s2s.bf"));
    Tensor o = num::sigmoid(t, gate("s2s.wo", "s2s.uo", "s2s.bo"));
    Tensor u = num::tanh(t, gate("s2s.wc", "s2s.uc", "s2s.bc"));
    // c' = f*c + i*u;  q' = o*tanh(c')
    c = num::add(t, num::mul(t, f, c), num::mul(t, i, u));
    q = num::mul(t, o, num::tanh(t, c));

    // dot-product attention of each node against its graph's query
    Tensor q_per_node = num::gather_rows(t, q, node_graph);
    Tensor logits = num::row_dot(t, h, q_per_node);
    Tensor a = num::segment_softmax(t, logits, node_graph, num_graphs);
    if (trace)
      trace->attention.emplace_back(a.data().begin(), a.data().end());
    Tensor weighted = num::scale_rows(t, h, a);
    Tensor r = num::scatter_add_rows(t, weighted, node_graph, num_graphs);
    q_star = num::concat_cols(t, q, r);
  }
  return q_star;
}

Tensor output_head(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                   const Tensor& r) {
  return mlp_forward(t, params, "head", 2, r, cfg.activation);
}

}  // namespace ignn::model
