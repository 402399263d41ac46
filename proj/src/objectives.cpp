#include "ignn/objectives.hpp"

#include <cmath>

namespace ignn::model {

std::string to_string(L0Kind k) {
  switch (k) {
    case L0Kind::mse: return "mse";
    case L0Kind::mae: return "mae";
    case L0Kind::ce: return "ce";
  }
  return "?";
}

L0Kind l0_from_string(const std::string& s) {
  if (s == "mse") return L0Kind::mse;
  if (s == "mae") return L0Kind::mae;
  if (s == "ce") return L0Kind::ce;
  throw Error(Errc::invalid_argument, "unknown l0 loss '" + s + "'");
}

Tensor l0_loss(Tape& t, L0Kind kind, const Tensor& pred, const Tensor& target) {
  switch (kind) {
    case L0Kind::mse: return num::mse_loss(t, pred, target);
    case L0Kind::mae: return num::mae_loss(t, pred, target);
    case L0Kind::ce: {
      // class labels arrive as a single integer-valued column
      Tensor classes = target;
      if (target.ndim() == 2) {
        if (target.dim(1) != 1)
          throw Error(Errc::invalid_argument, "ce targets must be a single class column");
        classes = num::reshape(t, target, {target.dim(0)});
      }
      return num::ce_loss(t, pred, classes);
    }
  }
  throw Error(Errc::invalid_argument, "unknown l0 kind");
}

namespace {

ObjectiveResult combined_objective(Tape& t, L0Kind kind, const Tensor& pred,
                                   const Tensor& target, const LiResult* li,
                                   const graph::GraphBatch& b) {
  ObjectiveResult out;
  Tensor l0 = l0_loss(t, kind, pred, target);
  out.total = li ? num::sub(t, l0, li->mean_li) : l0;
  out.breakdown.l0 = l0.item();
  out.breakdown.mean_li = li ? li->mean_li.item() : 0.0;
  out.breakdown.total = out.total.item();
  out.breakdown.recon_mse = li ? li->recon_mse.item() : 0.0;
  out.breakdown.num_graphs = b.num_graphs;
  out.breakdown.num_nodes = b.num_nodes;
  out.breakdown.num_edges = b.num_edges;
  return out;
}

}  // namespace

ObjectiveResult graph_objective(Tape& t, L0Kind kind, const Tensor& pred, const Tensor& target,
                                const LiResult* li, const graph::GraphBatch& b) {
  if (pred.ndim() != 2 || pred.dim(0) != b.num_graphs)
    throw Error(Errc::invalid_argument, "graph_objective: expected one prediction row per graph");
  return combined_objective(t, kind, pred, target, li, b);
}

ObjectiveResult node_objective(Tape& t, L0Kind kind, const Tensor& pred, const Tensor& target,
                               const LiResult* li, const graph::GraphBatch& b) {
  if (pred.ndim() != 2 || pred.dim(0) != b.num_nodes)
    throw Error(Errc::invalid_argument, "node_objective: expected one prediction row per node");
  return combined_objective(t, kind, pred, target, li, b);
}

MetricsReport compute_metrics(const std::vector<std::vector<double>>& pred,
                              const std::vector<std::vector<double>>& truth,
                              const TargetStats& stats) {
  if (pred.size() != truth.size() || pred.empty())
    throw Error(Errc::invalid_argument, "compute_metrics: prediction/truth size mismatch");
  const size_t n = pred.size();
  const size_t arity = pred[0].size();
  if (stats.mean.size() != arity || stats.stddev.size() != arity)
    throw Error(Errc::invalid_argument, "compute_metrics: stats arity mismatch");
  for (size_t i = 0; i < n; ++i)
    if (pred[i].size() != arity || truth[i].size() != arity)
      throw Error(Errc::invalid_argument, "compute_metrics: ragged rows");

  MetricsReport rep;
  rep.mae.assign(arity, 0.0);
  rep.pearson.assign(arity, std::nullopt);
  for (size_t tgt = 0; tgt < arity; ++tgt) {
    double abs_sum = 0.0, px = 0.0, py = 0.0;
    for (size_t i = 0; i < n; ++i) {
      abs_sum += std::fabs(pred[i][tgt] - truth[i][tgt]);
      px += pred[i][tgt];
      py += truth[i][tgt];
    }
    rep.mae[tgt] = abs_sum / static_cast<double>(n);
    px /= static_cast<double>(n);
    py /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double dx = pred[i][tgt] - px;
      const double dy = truth[i][tgt] - py;
      sxy += dx * dy;
      sxx += dx * dx;
      syy += dy * dy;
    }
    if (sxx > 0.0 && syy > 0.0) rep.pearson[tgt] = sxy / std::sqrt(sxx * syy);
  }
  double mae_sum = 0.0, nmae_sum = 0.0;
  for (size_t tgt = 0; tgt < arity; ++tgt) {
    mae_sum += rep.mae[tgt];
    nmae_sum += rep.mae[tgt] / stats.stddev[tgt];
  }
  rep.mae_mean = mae_sum / static_cast<double>(arity);
  rep.nmae = nmae_sum / static_cast<double>(arity);
  return rep;
}

}  // namespace ignn::model
