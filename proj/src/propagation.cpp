#include "ignn/propagation.hpp"

#include <cmath>

namespace ignn::model {

namespace {

Tensor apply_act(Tape& t, const Tensor& x, Activation act) {
  return act == Activation::relu ? num::relu(t, x) : x;
}

}  // namespace

Tensor mlp_forward(Tape& t, const ParameterStore& params, const std::string& prefix,
                   size_t num_linear_layers, const Tensor& x, Activation hidden_act) {
  Tensor h = x;
  for (size_t k = 0; k < num_linear_layers; ++k) {
    const std::string base = prefix + ".layer" + std::to_string(k);
    h = num::add_bias(t, num::matmul(t, h, params.at(base + ".weight")),
                      params.at(base + ".bias"));
    if (k + 1 < num_linear_layers) h = apply_act(t, h, hidden_act);
  }
  return h;
}

Tensor input_embed(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                   const Tensor& x) {
  if (cfg.identity_embed) return x;
  return num::add_bias(t, num::matmul(t, x, params.at("embed.weight")), params.at("embed.bias"));
}

namespace {

// In-degree per node, clamped to >= 1 so isolated nodes normalize by 1.
std::vector<double> clamped_in_degrees(const GraphBatch& b) {
  std::vector<double> deg(static_cast<size_t>(b.num_nodes), 0.0);
  for (int32_t v : b.edge_dst) deg[static_cast<size_t>(v)] += 1.0;
  for (auto& d : deg) d = std::max(d, 1.0);
  return deg;
}

}  // namespace

Tensor gcn_step(Tape& t, const GraphBatch& b, const Tensor& h, const Tensor& w0,
                const Tensor& w1, Activation act) {
  const auto deg = clamped_in_degrees(b);
  std::vector<double> coeff(static_cast<size_t>(b.num_edges));
  for (int64_t e = 0; e < b.num_edges; ++e)
    coeff[static_cast<size_t>(e)] =
        1.0 / std::sqrt(deg[static_cast<size_t>(b.edge_src[static_cast<size_t>(e)])] *
                        deg[static_cast<size_t>(b.edge_dst[static_cast<size_t>(e)])]);
  Tensor hw1 = num::matmul(t, h, w1);
  Tensor msgs = num::gather_rows(t, hw1, b.edge_src);
  msgs = num::scale_rows(t, msgs, Tensor::from({b.num_edges}, std::move(coeff)));
  Tensor agg = num::scatter_add_rows(t, msgs, b.edge_dst, b.num_nodes);
  Tensor self = num::matmul(t, h, w0);
  return apply_act(t, num::add(t, agg, self), act);
}

Tensor rgcn_step(Tape& t, const GraphBatch& b, const Tensor& h, const Tensor& w0,
                 const std::vector<Tensor>& rel_weights, Activation act) {
  const int64_t num_rel = static_cast<int64_t>(rel_weights.size());
  for (int64_t e = 0; e < b.num_edges; ++e) {
    const int32_t r = b.relation_ids[static_cast<size_t>(e)];
    if (r < 0 || r >= num_rel)
      throw Error(Errc::invalid_argument,
                       "rgcn_step: relation id " + std::to_string(r) + " at edge " +
                           std::to_string(e) + " out of range [0, " + std::to_string(num_rel) +
                           ")");
  }
  // c_vwr = number of incoming relation-r edges at v, clamped to >= 1
  std::vector<double> counts(static_cast<size_t>(b.num_nodes * num_rel), 0.0);
  for (int64_t e = 0; e < b.num_edges; ++e)
    counts[static_cast<size_t>(b.edge_dst[static_cast<size_t>(e)]) * num_rel +
           b.relation_ids[static_cast<size_t>(e)]] += 1.0;

  Tensor self = num::matmul(t, h, w0);
  Tensor agg;
  for (int64_t r = 0; r < num_rel; ++r) {
    std::vector<int32_t> src, dst;
    std::vector<double> coeff;
    for (int64_t e = 0; e < b.num_edges; ++e) {
      if (b.relation_ids[static_cast<size_t>(e)] != r) continue;
      src.push_back(b.edge_src[static_cast<size_t>(e)]);
      dst.push_back(b.edge_dst[static_cast<size_t>(e)]);
      coeff.push_back(
          1.0 / std::max(counts[static_cast<size_t>(b.edge_dst[static_cast<size_t>(e)]) *
                                    num_rel +
                                r],
                         1.0));
    }
    if (src.empty()) continue;
    const int64_t rel_edges = static_cast<int64_t>(coeff.size());
    Tensor hwr = num::matmul(t, h, rel_weights[static_cast<size_t>(r)]);
    Tensor msgs = num::gather_rows(t, hwr, src);
    msgs = num::scale_rows(t, msgs, Tensor::from({rel_edges}, std::move(coeff)));
    Tensor part = num::scatter_add_rows(t, msgs, dst, b.num_nodes);
    agg = agg.defined() ? num::add(t, agg, part) : part;
  }
  Tensor pre = agg.defined() ? num::add(t, agg, self) : self;
  return apply_act(t, pre, act);
}

Tensor edge_network_forward(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                            const Tensor& edge_features) {
  return mlp_forward(t, params, "edge_net", cfg.edge_net_hidden.size() + 1, edge_features,
                     cfg.activation);
}

Tensor mpnn_message(Tape& t, const GraphBatch& b, const Tensor& h, const Tensor& edge_w3,
                    const Tensor& w0, Activation act) {
  Tensor h_src = num::gather_rows(t, h, b.edge_src);
  Tensor msgs = num::bmv(t, edge_w3, h_src);
  Tensor agg = num::scatter_add_rows(t, msgs, b.edge_dst, b.num_nodes);
  Tensor self = num::matmul(t, h, w0);
  return apply_act(t, num::add(t, agg, self), act);
}

Tensor gru_update(Tape& t, const ParameterStore& params, const Tensor& h_prev, const Tensor& m) {
  const Tensor& wz = params.at("gru.wz");
  const Tensor& uz = params.at("gru.uz");
  const Tensor& wr = params.at("gru.wr");
  const Tensor& ur = params.at("gru.ur");
  const Tensor& wh = params.at("gru.wh");
  const Tensor& uh = params.at("gru.uh");
  // z = sigm(m Wz + h Uz + bz)
  Tensor z = num::sigmoid(
      t, num::add_bias(t, num::add(t, num::matmul(t, m, wz), num::matmul(t, h_prev, uz)),
                       params.at("gru.bz")));
  // r = sigm(m Wr + h Ur + br)
  Tensor r = num::sigmoid(
      t, num::add_bias(t, num::add(t, num::matmul(t, m, wr), num::matmul(t, h_prev, ur)),
                       params.at("gru.br")));
  // hcand = tanh(m Wh + (r*h) Uh + bh)
  Tensor hcand = num::tanh(
      t, num::add_bias(
             t, num::add(t, num::matmul(t, m, wh), num::matmul(t, num::mul(t, r, h_prev), uh)),
             params.at("gru.bh")));
  // h' = (1-z)*h + z*hcand
  Tensor ones = Tensor::full(z.shape(), 1.0);
  return num::add(t, num::mul(t, num::sub(t, ones, z), h_prev), num::mul(t, z, hcand));
}

PropagateResult propagate(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                          const GraphBatch& b) {
  const int64_t d = cfg.hidden_dim;
  Tensor h = input_embed(t, cfg, params, b.node_features);
  PropagateResult out;
  Tensor edge_w3;
  if (cfg.uses_edge_network()) {
    // one f evaluation per batch; every layer and the reconstruction loss reuse it
    out.edge_transforms = edge_network_forward(t, cfg, params, b.edge_features);
    edge_w3 = num::reshape(t, out.edge_transforms, {b.num_edges, d, d});
  }
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    const std::string ls = std::to_string(l);
    switch (cfg.scheme) {
      case Scheme::gcn:
        h = gcn_step(t, b, h, params.at("gcn.layer" + ls + ".w0"),
                     params.at("gcn.layer" + ls + ".w1"), cfg.activation);
        break;
      case Scheme::rgcn: {
        std::vector<Tensor> rel;
        rel.reserve(static_cast<size_t>(cfg.num_relations));
        for (int64_t r = 0; r < cfg.num_relations; ++r)
          rel.push_back(params.at("rgcn.layer" + ls + ".rel" + std::to_string(r)));
        h = rgcn_step(t, b, h, params.at("rgcn.layer" + ls + ".w0"), rel, cfg.activation);
        break;
      }
      case Scheme::mpnn:
      case Scheme::ignn: {
        Tensor m =
            mpnn_message(t, b, h, edge_w3, params.at("mpnn.layer" + ls + ".w0"), cfg.activation);
        h = gru_update(t, params, h, m);
        break;
      }
    }
    for (double v : h.data())
      if (!std::isfinite(v))
        throw Error(Errc::nonfinite,
                         "propagate: non-finite node state after layer " + ls);
  }
  out.h = h;
  return out;
}

}  // namespace ignn::model
