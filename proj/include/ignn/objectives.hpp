#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ignn/graph.hpp"
#include "ignn/infomax.hpp"
#include "ignn/tensor.hpp"

namespace ignn::model {

enum class L0Kind { mse, mae, ce };
std::string to_string(L0Kind k);
L0Kind l0_from_string(const std::string& s);

Tensor l0_loss(Tape& t, L0Kind kind, const Tensor& pred, const Tensor& target);

struct LossBreakdown {
  double l0 = 0.0;
  double mean_li = 0.0;
  double total = 0.0;
  double recon_mse = 0.0;
  int64_t num_graphs = 0;
  int64_t num_nodes = 0;
  int64_t num_edges = 0;
};

struct ObjectiveResult {
  Tensor total;  // scalar on the tape: l0 - mean_li
  LossBreakdown breakdown;
};

// total = mean-over-graphs L0 minus mean-over-all-batch-edges L_I.
ObjectiveResult graph_objective(Tape& t, L0Kind kind, const Tensor& pred, const Tensor& target,
                                const LiResult* li, const graph::GraphBatch& b);

// total = mean-over-nodes L0 minus mean-over-edges L_I.
ObjectiveResult node_objective(Tape& t, L0Kind kind, const Tensor& pred, const Tensor& target,
                               const LiResult* li, const graph::GraphBatch& b);

struct TargetStats {
  std::vector<double> mean;    // per target
  std::vector<double> stddev;  // per target, clamped away from zero
};

struct MetricsReport {
  std::vector<double> mae;                      // per target, original units
  double mae_mean = 0.0;
  double nmae = 0.0;                            // mean over targets of mae / stddev
  std::vector<std::optional<double>> pearson;   // per target; nullopt when variance is zero
};

// pred/truth: one row per example, original units.
MetricsReport compute_metrics(const std::vector<std::vector<double>>& pred,
                              const std::vector<std::vector<double>>& truth,
                              const TargetStats& stats);

}  // namespace ignn::model
