#include "ignn/infomax.hpp"

#include <cmath>
#include <limits>

#include "ignn/propagation.hpp"
#include "ignn/rng.hpp"

namespace ignn::model {

Tensor decoder_forward(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                       const Tensor& w_flat) {
  return mlp_forward(t, params, "decoder", cfg.decoder_hidden.size() + 1, w_flat,
                     cfg.activation);
}

LiResult li_loss(Tape& t, const ModelConfig& cfg, const ParameterStore& params,
                 const Tensor& edge_transforms, const Tensor& edge_features, double lambda) {
  if (lambda < 0.0)
    throw Error(Errc::invalid_argument, "li_loss: lambda must be nonnegative");
  LiResult out;
  const int64_t m = edge_features.defined() ? edge_features.dim(0) : 0;
  if (m == 0) {
    out.recon_mse = Tensor::scalar(0.0);
    out.mean_li = Tensor::scalar(0.0);
    return out;
  }
  Tensor w_in = cfg.li_detach_f ? num::detach(edge_transforms) : edge_transforms;
  Tensor ehat = decoder_forward(t, cfg, params, w_in);
  Tensor diff = num::sub(t, ehat, edge_features);
  Tensor sq = num::squared_l2(t, diff);
  out.recon_mse = num::scalar_mul(t, sq, 1.0 / static_cast<double>(m));
  // -0.0 when lambda == 0: the decoder still sits on the tape and receives
  // exact-zero gradients, so the optimizer's missing-gradient check holds.
  out.mean_li = num::scalar_mul(t, out.recon_mse, -lambda);
  const int64_t d_e = edge_features.dim(1);
  out.per_edge_sq_err.resize(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < d_e; ++j) {
      const double v = diff.data()[static_cast<size_t>(i * d_e + j)];
      s += v * v;
    }
    out.per_edge_sq_err[static_cast<size_t>(i)] = s;
  }
  return out;
}

// ---- discrete oracle ----

void validate_toy(const DiscreteToy& toy) {
  auto fail = [](const std::string& msg) {
    throw Error(Errc::invalid_argument, "discrete toy: " + msg);
  };
  const size_t k = toy.p.size();
  if (k == 0) fail("empty alphabet");
  if (toy.f_table.size() != k) fail("f_table size mismatch");
  double sum = 0.0;
  for (double v : toy.p) {
    if (!(v >= 0.0)) fail("negative probability in p");
    sum += v;
  }
  if (std::fabs(sum - 1.0) > 1e-9) fail("p does not sum to 1");
  const size_t num_ids = toy.q_table.size();
  if (num_ids == 0) fail("empty q_table");
  for (int id : toy.f_table)
    if (id < 0 || static_cast<size_t>(id) >= num_ids) fail("f_table id out of range");
  for (size_t w = 0; w < num_ids; ++w) {
    if (toy.q_table[w].size() != k) fail("q_table row width mismatch");
    double rs = 0.0;
    for (double v : toy.q_table[w]) {
      if (!(v >= 0.0)) fail("negative probability in q_table");
      rs += v;
    }
    if (std::fabs(rs - 1.0) > 1e-9) fail("q_table row does not sum to 1");
  }
}

double entropy_nats(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

namespace {

std::vector<double> marginal_w(const DiscreteToy& toy) {
  std::vector<double> pw(toy.q_table.size(), 0.0);
  for (size_t i = 0; i < toy.p.size(); ++i)
    pw[static_cast<size_t>(toy.f_table[i])] += toy.p[i];
  return pw;
}

}  // namespace

double exact_mutual_information(const DiscreteToy& toy) {
  validate_toy(toy);
  const auto pw = marginal_w(toy);
  // H(e|W) = sum_w p(w) H(e | W=w), with p(e_i | w) = p_i / p(w) on f(i) = w
  double h_cond = 0.0;
  for (size_t w = 0; w < pw.size(); ++w) {
    if (pw[w] <= 0.0) continue;
    double h_w = 0.0;
    for (size_t i = 0; i < toy.p.size(); ++i) {
      if (static_cast<size_t>(toy.f_table[i]) != w || toy.p[i] <= 0.0) continue;
      const double cond = toy.p[i] / pw[w];
      h_w -= cond * std::log(cond);
    }
    h_cond += pw[w] * h_w;
  }
  return entropy_nats(toy.p) - h_cond;
}

double exact_mutual_information_joint(const DiscreteToy& toy) {
  validate_toy(toy);
  const auto pw = marginal_w(toy);
  // sum over the joint grid of p(e,w) log( p(e,w) / (p(e) p(w)) )
  double mi = 0.0;
  for (size_t w = 0; w < pw.size(); ++w) {
    for (size_t i = 0; i < toy.p.size(); ++i) {
      const double joint = static_cast<size_t>(toy.f_table[i]) == w ? toy.p[i] : 0.0;
      if (joint <= 0.0) continue;
      mi += joint * std::log(joint / (toy.p[i] * pw[w]));
    }
  }
  return mi;
}

BoundReport variational_bound_check(const DiscreteToy& toy) {
  validate_toy(toy);
  BoundReport rep;
  rep.lhs = exact_mutual_information(toy);
  double elogq = 0.0;
  for (size_t i = 0; i < toy.p.size(); ++i) {
    if (toy.p[i] <= 0.0) continue;
    const double q = toy.q_table[static_cast<size_t>(toy.f_table[i])][i];
    if (q <= 0.0) {
      rep.rhs_infinite = true;
      rep.rhs = -std::numeric_limits<double>::infinity();
      rep.gap = std::numeric_limits<double>::infinity();
      return rep;
    }
    elogq += toy.p[i] * std::log(q);
  }
  rep.rhs = entropy_nats(toy.p) + elogq;
  rep.gap = rep.lhs - rep.rhs;
  return rep;
}

std::vector<std::vector<double>> true_posterior(const DiscreteToy& toy) {
  validate_toy(toy);
  const auto pw = marginal_w(toy);
  const size_t k = toy.p.size();
  std::vector<std::vector<double>> post(pw.size(), std::vector<double>(k, 0.0));
  for (size_t w = 0; w < pw.size(); ++w) {
    if (pw[w] > 0.0) {
      for (size_t i = 0; i < k; ++i)
        if (static_cast<size_t>(toy.f_table[i]) == w) post[w][i] = toy.p[i] / pw[w];
    } else {
      for (size_t i = 0; i < k; ++i) post[w][i] = 1.0 / static_cast<double>(k);
    }
  }
  return post;
}

DiscreteToy random_toy(uint64_t seed) {
  SplitRng rng(seed);
  DiscreteToy toy;
  const size_t k = 2 + static_cast<size_t>(rng.below(7));  // 2..8 symbols
  toy.p.resize(k);
  double sum = 0.0;
  for (auto& v : toy.p) {
    v = rng.uniform(0.05, 1.0);
    sum += v;
  }
  for (auto& v : toy.p) v /= sum;
  const size_t num_ids = 1 + static_cast<size_t>(rng.below(static_cast<uint64_t>(k)));
  toy.f_table.resize(k);
  for (auto& id : toy.f_table) id = static_cast<int>(rng.below(static_cast<uint64_t>(num_ids)));
  toy.q_table.assign(num_ids, std::vector<double>(k));
  for (auto& row : toy.q_table) {
    double rs = 0.0;
    for (auto& v : row) {
      v = rng.uniform(0.05, 1.0);
      rs += v;
    }
    for (auto& v : row) v /= rs;
  }
  return toy;
}

}  // namespace ignn::model
