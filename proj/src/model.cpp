#include "ignn/model.hpp"

#include <cmath>

#include "ignn/rng.hpp"

namespace ignn::model {

namespace {

void add_mlp(ParameterStore& p, const std::string& prefix, int64_t in,
             const std::vector<int64_t>& hidden, int64_t out) {
  std::vector<int64_t> widths;
  widths.push_back(in);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  for (size_t k = 0; k + 1 < widths.size(); ++k) {
    const std::string base = prefix + ".layer" + std::to_string(k);
    p.add(base + ".weight", Tensor::zeros({widths[k], widths[k + 1]}));
    p.add(base + ".bias", Tensor::zeros({widths[k + 1]}));
  }
}

void add_gru(ParameterStore& p, int64_t d) {
  for (const char* g : {"z", "r", "h"}) {
    p.add(std::string("gru.w") + g, Tensor::zeros({d, d}));
    p.add(std::string("gru.u") + g, Tensor::zeros({d, d}));
    p.add(std::string("gru.b") + g, Tensor::zeros({d}));
  }
}

void add_set2set(ParameterStore& p, int64_t d) {
  for (const char* g : {"i", "f", "o", "c"}) {
    p.add(std::string("s2s.w") + g, Tensor::zeros({2 * d, d}));
    p.add(std::string("s2s.u") + g, Tensor::zeros({d, d}));
    p.add(std::string("s2s.b") + g, Tensor::zeros({d}));
  }
}

}  // namespace

void build_params(ParameterStore& params, const ModelConfig& raw) {
  raw.validate();
  const ModelConfig cfg = raw.resolved();
  const int64_t d = cfg.hidden_dim;

  if (!cfg.identity_embed) {
    params.add("embed.weight", Tensor::zeros({cfg.input_dim, d}));
    params.add("embed.bias", Tensor::zeros({d}));
  }
  switch (cfg.scheme) {
    case Scheme::gcn:
      for (int64_t l = 0; l < cfg.num_layers; ++l) {
        params.add("gcn.layer" + std::to_string(l) + ".w0", Tensor::zeros({d, d}));
        params.add("gcn.layer" + std::to_string(l) + ".w1", Tensor::zeros({d, d}));
      }
      break;
    case Scheme::rgcn:
      for (int64_t l = 0; l < cfg.num_layers; ++l) {
        params.add("rgcn.layer" + std::to_string(l) + ".w0", Tensor::zeros({d, d}));
        for (int64_t r = 0; r < cfg.num_relations; ++r)
          params.add("rgcn.layer" + std::to_string(l) + ".rel" + std::to_string(r),
                     Tensor::zeros({d, d}));
      }
      break;
    case Scheme::mpnn:
    case Scheme::ignn:
      for (int64_t l = 0; l < cfg.num_layers; ++l)
        params.add("mpnn.layer" + std::to_string(l) + ".w0", Tensor::zeros({d, d}));
      add_gru(params, d);
      add_mlp(params, "edge_net", cfg.edge_dim, cfg.edge_net_hidden, d * d);
      break;
  }
  if (cfg.has_decoder()) add_mlp(params, "decoder", d * d, cfg.decoder_hidden, cfg.edge_dim);

  if (cfg.task == TaskKind::graph) {
    if (cfg.readout == ReadoutKind::set2set) add_set2set(params, d);
    add_mlp(params, "head", cfg.readout_width(), {cfg.head_hidden}, cfg.target_arity);
  } else {
    add_mlp(params, "head", d, {cfg.head_hidden}, cfg.target_arity);
  }
}

void init_params(ParameterStore& params, const ModelConfig& cfg, uint64_t seed) {
  (void)cfg;
  const SplitRng master = SplitRng(seed).split("init");
  for (const auto& [name, t] : params.entries()) {
    if (t.ndim() != 2) continue;  // biases stay zero
    SplitRng stream = master.split(name);
    const double fan_in = static_cast<double>(t.dim(0));
    const double fan_out = static_cast<double>(t.dim(1));
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor handle = t;
    for (auto& v : handle.mutable_data()) v = stream.uniform(-a, a);
  }
}

ForwardResult model_forward(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                            const graph::GraphBatch& b, Set2SetTrace* trace) {
  ForwardResult out;
  PropagateResult pr = propagate(t, cfg, params, b);
  out.edge_transforms = pr.edge_transforms;
  if (cfg.task == TaskKind::graph) {
    Tensor r = cfg.readout == ReadoutKind::set2set
                   ? set2set_readout(t, cfg, params, pr.h, b.node_graph, b.num_graphs, trace)
                   : sum_readout(t, pr.h, b.node_graph, b.num_graphs);
    out.prediction = output_head(t, cfg, params, r);
  } else {
    out.prediction = output_head(t, cfg, params, pr.h);
  }
  return out;
}

}  // namespace ignn::model
