#pragma once

#include <cstdint>
#include <vector>

#include "ignn/model_config.hpp"
#include "ignn/param_store.hpp"
#include "ignn/tensor.hpp"

namespace ignn::model {

using num::ParameterStore;
using num::Tape;
using num::Tensor;

// Decoder g: flattened transform [m, d*d] -> edge-feature estimate [m, d_e].
Tensor decoder_forward(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                       const Tensor& w_flat);

struct LiResult {
  Tensor mean_li;    // scalar: -lambda * recon_mse
  Tensor recon_mse;  // scalar: mean over edges of |e - g(f(e))|^2
  std::vector<double> per_edge_sq_err;
};

// The auxiliary term on the exact per-edge transforms the propagation used.
LiResult li_loss(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                 const Tensor& edge_transforms, const Tensor& edge_features, double lambda);

// ---- exact-enumeration oracle on discrete toys ----

// K edge symbols with probabilities p; a deterministic table e -> matrix id;
// and a conditional table q(e | matrix id). All distributions discrete.
struct DiscreteToy {
  std::vector<double> p;                      // [K]
  std::vector<int> f_table;                   // [K] -> matrix id in [0, num_ids)
  std::vector<std::vector<double>> q_table;   // [num_ids][K], rows sum to 1
};

void validate_toy(const DiscreteToy& toy);

double entropy_nats(const std::vector<double>& p);  // 0*log(0) = 0

// I(e;W) = H(e) - H(e|W) by enumeration.
double exact_mutual_information(const DiscreteToy& toy);
// Same quantity summed over the joint grid; independent second entry.
double exact_mutual_information_joint(const DiscreteToy& toy);

struct BoundReport {
  double lhs = 0.0;  // I(e;W)
  double rhs = 0.0;  // H(e) + E[log q(e | f(e))]
  double gap = 0.0;  // lhs - rhs
  bool rhs_infinite = false;  // q put zero mass on a support point
};

BoundReport variational_bound_check(const DiscreteToy& toy);

// Enumerated p(e|W); rows for zero-probability ids are uniform.
std::vector<std::vector<double>> true_posterior(const DiscreteToy& toy);

// Random valid toy with K in [2, 8]; strictly positive p and q entries.
DiscreteToy random_toy(uint64_t seed);

}  // namespace ignn::model
