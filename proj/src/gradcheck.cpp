#include "ignn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ignn/graph.hpp"
#include "ignn/infomax.hpp"
#include "ignn/model.hpp"
#include "ignn/objectives.hpp"
#include "ignn/propagation.hpp"
#include "ignn/readout.hpp"
#include "ignn/rng.hpp"

namespace ignn::check {

using graph::Graph;
using graph::GraphBatch;
using model::Activation;
using model::ModelConfig;
using num::ParameterStore;
using num::Shape;
using num::Tape;
using num::Tensor;

double relative_gradient_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-2});
  return std::abs(analytic - numeric) / denom;
}

double max_param_gradcheck(const std::function<Tensor(Tape&)>& loss_fn,
                           ParameterStore& params, double h) {
  params.clear_grads();
  {
    Tape tape;
    Tensor loss = loss_fn(tape);
    tape.backward(loss);
  }
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, t] : params.entries()) {
    if (!t.has_grad())
      throw Error(Errc::invalid_argument,
                       "gradcheck: parameter '" + name + "' received no gradient");
    analytic[name].assign(t.grad().begin(), t.grad().end());
  }
  const auto eval = [&loss_fn]() {
    Tape tape;
    tape.set_recording(false);
    return loss_fn(tape).item();
  };
  double worst = 0.0;
  for (const auto& [name, t] : params.entries()) {
    Tensor handle = t;  // shares the node; gives mutable access
    auto vals = handle.mutable_data();
    const auto& a = analytic[name];
    for (size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = eval();
      vals[i] = orig - h;
      const double fm = eval();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      worst = std::max(worst, relative_gradient_error(a[i], numeric));
    }
  }
  params.clear_grads();
  return worst;
}

namespace {

Tensor rand_tensor(const SplitRng& r, Shape shape, double lo = -1.0, double hi = 1.0) {
  SplitRng rng = r;
  std::vector<double> v(static_cast<size_t>(num::shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Bidirectional ring plus one chord so nodes differ in degree.
Graph ring_graph(const SplitRng& r, int64_t n, int64_t d_x, int64_t d_e, int64_t num_relations,
                 int64_t arity, bool node_task) {
  SplitRng rng = r;
  Graph g;
  g.num_nodes = n;
  g.node_features = rand_tensor(rng.split("x"), {n, d_x});
  for (int32_t v = 0; v < n; ++v) {
    const int32_t w = static_cast<int32_t>((v + 1) % n);
    g.edges.emplace_back(v, w);
    g.edges.emplace_back(w, v);
  }
  if (n >= 4) {
    g.edges.emplace_back(0, 2);
    g.edges.emplace_back(2, 0);
  }
  const int64_t m = g.num_edges();
  g.edge_features = rand_tensor(rng.split("e"), {m, d_e});
  SplitRng rel_rng = rng.split("rel");
  for (int64_t i = 0; i < m; ++i)
    g.relation_ids.push_back(static_cast<int32_t>(rel_rng.below(static_cast<uint64_t>(num_relations))));
  if (node_task) {
    g.node_labels = rand_tensor(rng.split("y"), {n, arity});
  } else {
    SplitRng lab_rng = rng.split("y");
    for (int64_t t = 0; t < arity; ++t) g.graph_label.push_back(lab_rng.uniform(-1.0, 1.0));
  }
  return g;
}

GraphBatch small_batch(const SplitRng& r, int64_t d_x, int64_t d_e, int64_t num_relations,
                       int64_t arity, bool node_task) {
  std::vector<Graph> gs;
  gs.push_back(ring_graph(r.split(uint64_t{0}), 4, d_x, d_e, num_relations, arity, node_task));
  gs.push_back(ring_graph(r.split(uint64_t{1}), 3, d_x, d_e, num_relations, arity, node_task));
  return graph::batch_graphs(gs);
}

struct Case {
  std::string name;
  // builds the fixture for one seed and returns (max error, coords checked)
  std::function<std::pair<double, int64_t>(uint64_t)> run;
};

std::pair<double, int64_t> finish(ParameterStore& params,
                                  const std::function<Tensor(Tape&)>& loss_fn) {
  const double err = max_param_gradcheck(loss_fn, params);
  return {err, params.scalar_count()};
}

// Fill every parameter with nonzero draws. The model's own init keeps biases
// at zero, which lets ReLU chains produce exact zeros and park preactivations
// on the kink where one-sided differences are meaningless.
void randomize_all(ParameterStore& params, const SplitRng& r) {
  for (const auto& [name, t] : params.entries()) {
    SplitRng rng = r.split(name);
    Tensor handle = t;
    for (auto& v : handle.mutable_data()) v = rng.uniform(-0.5, 0.5);
  }
}

std::pair<double, int64_t> case_input_embed(uint64_t seed) {
  const SplitRng r(seed);
  ModelConfig cfg;
  cfg.scheme = model::Scheme::mpnn;
  cfg.input_dim = 3;
  cfg.hidden_dim = 4;
  ParameterStore params;
  params.add("embed.weight", rand_tensor(r.split("w"), {3, 4}, -0.7, 0.7));
  params.add("embed.bias", rand_tensor(r.split("b"), {4}, -0.3, 0.3));
  const Tensor x = rand_tensor(r.split("x"), {5, 3});
  return finish(params, [cfg, &params, x](Tape& t) {
    return num::squared_l2(t, model::input_embed(t, cfg, params, x));
  });
}

std::pair<double, int64_t> case_gcn_step(uint64_t seed) {
  const SplitRng r(seed);
  const int64_t d = 4;
  const GraphBatch b = small_batch(r.split("g"), 3, 2, 1, 1, false);
  ParameterStore params;
  params.add("h", rand_tensor(r.split("h"), {b.num_nodes, d}));
  params.add("w0", rand_tensor(r.split("w0"), {d, d}, -0.6, 0.6));
  params.add("w1", rand_tensor(r.split("w1"), {d, d}, -0.6, 0.6));
  return finish(params, [&params, &b](Tape& t) {
    return num::squared_l2(t, model::gcn_step(t, b, params.at("h"), params.at("w0"),
                                              params.at("w1"), Activation::relu));
  });
}

std::pair<double, int64_t> case_rgcn_step(uint64_t seed) {
  const SplitRng r(seed);
  const int64_t d = 4;
  const int64_t num_rel = 3;
  const GraphBatch b = small_batch(r.split("g"), 3, 2, num_rel, 1, false);
  ParameterStore params;
  params.add("h", rand_tensor(r.split("h"), {b.num_nodes, d}));
  params.add("w0", rand_tensor(r.split("w0"), {d, d}, -0.6, 0.6));
  for (int64_t k = 0; k < num_rel; ++k)
    params.add("rel" + std::to_string(k),
               rand_tensor(r.split("rel").split(static_cast<uint64_t>(k)), {d, d}, -0.6, 0.6));
  return finish(params, [&params, &b, num_rel](Tape& t) {
    std::vector<Tensor> rel;
    for (int64_t k = 0; k < num_rel; ++k) rel.push_back(params.at("rel" + std::to_string(k)));
    return num::squared_l2(
        t, model::rgcn_step(t, b, params.at("h"), params.at("w0"), rel, Activation::relu));
  });
}

std::pair<double, int64_t> case_edge_network(uint64_t seed) {
  const SplitRng r(seed);
  ModelConfig cfg;
  cfg.scheme = model::Scheme::mpnn;
  cfg.input_dim = 3;
  cfg.edge_dim = 3;
  cfg.hidden_dim = 3;
  cfg.edge_net_hidden = {5};
  ParameterStore params;
  params.add("edge_net.layer0.weight", rand_tensor(r.split("w0"), {3, 5}, -0.7, 0.7));
  params.add("edge_net.layer0.bias", rand_tensor(r.split("b0"), {5}, -0.3, 0.3));
  params.add("edge_net.layer1.weight", rand_tensor(r.split("w1"), {5, 9}, -0.7, 0.7));
  params.add("edge_net.layer1.bias", rand_tensor(r.split("b1"), {9}, -0.3, 0.3));
  const Tensor e = rand_tensor(r.split("e"), {6, 3});
  return finish(params, [cfg, &params, e](Tape& t) {
    return num::squared_l2(t, model::edge_network_forward(t, cfg, params, e));
  });
}

std::pair<double, int64_t> case_mpnn_message(uint64_t seed) {
  const SplitRng r(seed);
  const int64_t d = 4;
  const GraphBatch b = small_batch(r.split("g"), 3, 2, 1, 1, false);
  ParameterStore params;
  params.add("h", rand_tensor(r.split("h"), {b.num_nodes, d}));
  params.add("w0", rand_tensor(r.split("w0"), {d, d}, -0.6, 0.6));
  params.add("edge_w", rand_tensor(r.split("ew"), {b.num_edges, d, d}, -0.5, 0.5));
  return finish(params, [&params, &b](Tape& t) {
    return num::squared_l2(t, model::mpnn_message(t, b, params.at("h"), params.at("edge_w"),
                                                  params.at("w0"), Activation::relu));
  });
}

std::pair<double, int64_t> case_gru_update(uint64_t seed) {
  const SplitRng r(seed);
  const int64_t d = 4;
  ParameterStore params;
  for (const char* n : {"wz", "uz", "wr", "ur", "wh", "uh"})
    params.add(std::string("gru.") + n, rand_tensor(r.split(n), {d, d}, -0.7, 0.7));
  for (const char* n : {"bz", "br", "bh"})
    params.add(std::string("gru.") + n, rand_tensor(r.split(n), {d}, -0.3, 0.3));
  params.add("h_prev", rand_tensor(r.split("h"), {6, d}));
  params.add("m", rand_tensor(r.split("m"), {6, d}));
  return finish(params, [&params](Tape& t) {
    return num::squared_l2(t, model::gru_update(t, params, params.at("h_prev"), params.at("m")));
  });
}

std::pair<double, int64_t> case_set2set(uint64_t seed) {
  const SplitRng r(seed);
  const int64_t d = 3;
  ModelConfig cfg;
  cfg.scheme = model::Scheme::mpnn;
  cfg.input_dim = 3;
  cfg.edge_dim = 2;
  cfg.hidden_dim = d;
  cfg.set2set_steps = 2;
  const GraphBatch b = small_batch(r.split("g"), 3, 2, 1, 1, false);
  ParameterStore params;
  for (const char* n : {"wi", "wf", "wo", "wc"})
    params.add(std::string("s2s.") + n, rand_tensor(r.split(n), {2 * d, d}, -0.7, 0.7));
  for (const char* n : {"ui", "uf", "uo", "uc"})
    params.add(std::string("s2s.") + n, rand_tensor(r.split(n), {d, d}, -0.7, 0.7));
  for (const char* n : {"bi", "bf", "bo", "bc"})
    params.add(std::string("s2s.") + n, rand_tensor(r.split(n), {d}, -0.3, 0.3));
  params.add("h", rand_tensor(r.split("h"), {b.num_nodes, d}));
  return finish(params, [cfg, &params, &b](Tape& t) {
    return num::squared_l2(t, model::set2set_readout(t, cfg, params, params.at("h"),
                                                     b.node_graph, b.num_graphs));
  });
}

std::pair<double, int64_t> case_output_head(uint64_t seed) {
  const SplitRng r(seed);
  ModelConfig cfg;
  cfg.scheme = model::Scheme::mpnn;
  cfg.input_dim = 3;
  cfg.edge_dim = 2;
  cfg.hidden_dim = 3;
  cfg.target_arity = 2;
  cfg.head_hidden = 5;
  ParameterStore params;
  params.add("head.layer0.weight", rand_tensor(r.split("w0"), {6, 5}, -0.7, 0.7));
  params.add("head.layer0.bias", rand_tensor(r.split("b0"), {5}, -0.3, 0.3));
  params.add("head.layer1.weight", rand_tensor(r.split("w1"), {5, 2}, -0.7, 0.7));
  params.add("head.layer1.bias", rand_tensor(r.split("b1"), {2}, -0.3, 0.3));
  params.add("r", rand_tensor(r.split("r"), {2, 6}));
  return finish(params, [cfg, &params](Tape& t) {
    return num::squared_l2(t, model::output_head(t, cfg, params, params.at("r")));
  });
}

std::pair<double, int64_t> case_li_loss(uint64_t seed) {
  const SplitRng r(seed);
  ModelConfig cfg;
  cfg.scheme = model::Scheme::ignn;
  cfg.input_dim = 3;
  cfg.edge_dim = 3;
  cfg.hidden_dim = 3;
  cfg.decoder_hidden = {4};
  ParameterStore params;
  params.add("decoder.layer0.weight", rand_tensor(r.split("w0"), {9, 4}, -0.7, 0.7));
  params.add("decoder.layer0.bias", rand_tensor(r.split("b0"), {4}, -0.3, 0.3));
  params.add("decoder.layer1.weight", rand_tensor(r.split("w1"), {4, 3}, -0.7, 0.7));
  params.add("decoder.layer1.bias", rand_tensor(r.split("b1"), {3}, -0.3, 0.3));
  params.add("w_flat", rand_tensor(r.split("wf"), {6, 9}));
  const Tensor e = rand_tensor(r.split("e"), {6, 3});
  return finish(params, [cfg, &params, e](Tape& t) {
    // negate so the loss is the positive reconstruction term times lambda
    return num::scalar_mul(
        t, model::li_loss(t, cfg, params, params.at("w_flat"), e, 0.7).mean_li, -1.0);
  });
}

ModelConfig full_ignn_config() {
  ModelConfig cfg;
  cfg.scheme = model::Scheme::ignn;
  cfg.input_dim = 3;
  cfg.edge_dim = 3;
  cfg.hidden_dim = 4;
  cfg.num_layers = 2;
  cfg.edge_net_hidden = {5};
  cfg.decoder_hidden = {4};
  cfg.set2set_steps = 2;
  cfg.readout = model::ReadoutKind::set2set;
  cfg.task = model::TaskKind::graph;
  cfg.target_arity = 2;
  cfg.head_hidden = 4;
  return cfg.resolved();
}

std::pair<double, int64_t> case_graph_objective(uint64_t seed) {
  const SplitRng r(seed);
  const ModelConfig cfg = full_ignn_config();
  const GraphBatch b = small_batch(r.split("g"), cfg.input_dim, cfg.edge_dim, 1,
                                   cfg.target_arity, false);
  ParameterStore params;
  model::build_params(params, cfg);
  randomize_all(params, r.split("theta"));
  return finish(params, [cfg, &params, &b](Tape& t) {
    auto fwd = model::model_forward(t, cfg, params, b);
    auto li = model::li_loss(t, cfg, params, fwd.edge_transforms, b.edge_features, 0.7);
    return model::graph_objective(t, model::L0Kind::mse, fwd.prediction, b.graph_labels, &li, b)
        .total;
  });
}

std::pair<double, int64_t> case_node_objective(uint64_t seed) {
  const SplitRng r(seed);
  ModelConfig cfg;
  cfg.scheme = model::Scheme::gcn;
  cfg.input_dim = 3;
  cfg.hidden_dim = 4;
  cfg.num_layers = 2;
  cfg.task = model::TaskKind::node;
  cfg.target_arity = 1;
  cfg.head_hidden = 4;
  cfg = cfg.resolved();
  const GraphBatch b = small_batch(r.split("g"), cfg.input_dim, 2, 1, cfg.target_arity, true);
  ParameterStore params;
  model::build_params(params, cfg);
  randomize_all(params, r.split("theta"));
  return finish(params, [cfg, &params, &b](Tape& t) {
    auto fwd = model::model_forward(t, cfg, params, b);
    return model::node_objective(t, model::L0Kind::mse, fwd.prediction, b.node_labels, nullptr, b)
        .total;
  });
}

}  // namespace

GradSuiteResult run_gradient_suite(uint64_t base_seed, int num_seeds) {
  if (num_seeds < 1)
    throw Error(Errc::invalid_argument, "gradient suite needs at least one seed");
  const std::vector<Case> cases = {
      {"input_embed", case_input_embed},
      {"gcn_step", case_gcn_step},
      {"rgcn_step", case_rgcn_step},
      {"edge_network_forward", case_edge_network},
      {"mpnn_message", case_mpnn_message},
      {"gru_update", case_gru_update},
      {"set2set_readout", case_set2set},
      {"output_head", case_output_head},
      {"li_loss", case_li_loss},
      {"graph_objective", case_graph_objective},
      {"node_objective", case_node_objective},
  };
  GradSuiteResult out;
  out.pass = true;
  for (const auto& c : cases) {
    GradCaseResult res;
    res.name = c.name;
    for (int s = 0; s < num_seeds; ++s) {
      auto [err, coords] = c.run(base_seed + static_cast<uint64_t>(s));
      res.max_error = std::max(res.max_error, err);
      res.coords = coords;
    }
    res.pass = res.max_error <= kGradTolerance;
    out.pass = out.pass && res.pass;
    out.cases.push_back(std::move(res));
  }
  return out;
}

}  // namespace ignn::check
