#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ignn/graph.hpp"
#include "ignn/model.hpp"
#include "ignn/readout.hpp"
#include "test_util.hpp"

using namespace ignn;
using model::ModelConfig;
using num::ParameterStore;
using ignn::SplitRng;
using num::Tape;
using num::Tensor;

namespace {

// Reference set2set: explicit per-graph loops over the LSTM controller,
// dot-product attention, and weighted pooling.
std::vector<double> set2set_ref(const ModelConfig& cfg, const ParameterStore& params,
                                const Tensor& h, const std::vector<int32_t>& node_graph,
                                int64_t num_graphs) {
  const auto d = static_cast<size_t>(h.dim(1));
  const auto n = static_cast<size_t>(h.dim(0));
  const auto g_count = static_cast<size_t>(num_graphs);
  auto sigm = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto w = [&](const char* name) { return params.at(name); };

  std::vector<std::vector<double>> q(g_count, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> c(g_count, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> q_star(g_count, std::vector<double>(2 * d, 0.0));

  for (int64_t step = 0; step < cfg.set2set_steps; ++step) {
    for (size_t g = 0; g < g_count; ++g) {
      auto gate = [&](const char* wn, const char* un, const char* bn, size_t j) {
        double acc = params.at(bn).data()[j];
        for (size_t k = 0; k < 2 * d; ++k)
          acc += q_star[g][k] * w(wn).at({static_cast<int64_t>(k), static_cast<int64_t>(j)});
        for (size_t k = 0; k < d; ++k)
          acc += q[g][k] * w(un).at({static_cast<int64_t>(k), static_cast<int64_t>(j)});
        return acc;
      };
      std::vector<double> nq(d), nc(d);
      for (size_t j = 0; j < d; ++j) {
        const double i_g = sigm(gate("s2s.wi", "s2s.ui", "s2s.bi", j));
        const double f_g = sigm(gate("s2s.wf", "s2s.uf", "s2s.bf", j));
        const double o_g = sigm(gate("s2s.wo", "s2s.uo", "s2s.bo", j));
        const double u_g = std::tanh(gate("s2s.wc", "s2s.uc", "s2s.bc", j));
        nc[j] = f_g * c[g][j] + i_g * u_g;
        nq[j] = o_g * std::tanh(nc[j]);
      }
      q[g] = nq;
      c[g] = nc;
    }
    // attention: softmax over each graph's nodes of <h_v, q_g>
    std::vector<double> logits(n);
    for (size_t v = 0; v < n; ++v) {
      const auto g = static_cast<size_t>(node_graph[v]);
      double acc = 0.0;
      for (size_t j = 0; j < d; ++j) acc += h.at({static_cast<int64_t>(v), static_cast<int64_t>(j)}) * q[g][j];
      logits[v] = acc;
    }
    std::vector<double> zmax(g_count, -1e300), zsum(g_count, 0.0);
    for (size_t v = 0; v < n; ++v)
      zmax[static_cast<size_t>(node_graph[v])] =
          std::max(zmax[static_cast<size_t>(node_graph[v])], logits[v]);
    std::vector<double> a(n);
    for (size_t v = 0; v < n; ++v) {
      a[v] = std::exp(logits[v] - zmax[static_cast<size_t>(node_graph[v])]);
      zsum[static_cast<size_t>(node_graph[v])] += a[v];
    }
    for (size_t v = 0; v < n; ++v) a[v] /= zsum[static_cast<size_t>(node_graph[v])];
    std::vector<std::vector<double>> r(g_count, std::vector<double>(d, 0.0));
    for (size_t v = 0; v < n; ++v)
      for (size_t j = 0; j < d; ++j)
        r[static_cast<size_t>(node_graph[v])][j] +=
            a[v] * h.at({static_cast<int64_t>(v), static_cast<int64_t>(j)});
    for (size_t g = 0; g < g_count; ++g) {
      for (size_t j = 0; j < d; ++j) {
        q_star[g][j] = q[g][j];
        q_star[g][d + j] = r[g][j];
      }
    }
  }
  std::vector<double> flat;
  for (const auto& row : q_star) flat.insert(flat.end(), row.begin(), row.end());
  return flat;
}

ParameterStore set2set_params(const SplitRng& r, int64_t d) {
  ParameterStore params;
  for (const char* name : {"wi", "wf", "wo", "wc"})
    params.add(std::string("s2s.") + name,
               testutil::rand_tensor(r.split(name), {2 * d, d}));
  for (const char* name : {"ui", "uf", "uo", "uc"})
    params.add(std::string("s2s.") + name, testutil::rand_tensor(r.split(name), {d, d}));
  for (const char* name : {"bi", "bf", "bo", "bc"})
    params.add(std::string("s2s.") + name, testutil::rand_tensor(r.split(name), {d}));
  return params;
}

}  // namespace

TEST_CASE("sum readout pools rows per graph") {
  Tape t;
  Tensor h = Tensor::from({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  const std::vector<int32_t> node_graph = {0, 0, 1, 1};
  Tensor r = model::sum_readout(t, h, node_graph, 2);
  CHECK(r.at({0, 0}) == 4.0);
  CHECK(r.at({0, 1}) == 6.0);
  CHECK(r.at({1, 0}) == 12.0);
  CHECK(r.at({1, 1}) == 14.0);
}

TEST_CASE("sum readout is permutation invariant") {
  SplitRng rng(41);
  Tensor h = testutil::rand_tensor(rng.split("h"), {6, 3});
  const std::vector<int32_t> node_graph = {0, 0, 0, 1, 1, 1};
  Tape t;
  Tensor r1 = model::sum_readout(t, h, node_graph, 2);

  // permute rows within each graph
  const std::vector<int32_t> order = {2, 0, 1, 5, 3, 4};
  std::vector<double> hp(static_cast<size_t>(h.numel()));
  for (size_t v = 0; v < order.size(); ++v)
    for (int64_t j = 0; j < 3; ++j)
      hp[v * 3 + static_cast<size_t>(j)] = h.at({order[v], j});
  Tensor h2 = Tensor::from({6, 3}, std::move(hp));
  Tensor r2 = model::sum_readout(t, h2, node_graph, 2);
  CHECK(testutil::max_abs_diff(r1.data(), r2.data()) < 1e-9);
}

TEST_CASE("set2set matches the reference transcription") {
  SplitRng rng(42);
  const int64_t d = 3;
  ModelConfig cfg;
  cfg.hidden_dim = d;
  cfg.set2set_steps = 3;
  ParameterStore params = set2set_params(rng.split("p"), d);
  Tensor h = testutil::rand_tensor(rng.split("h"), {7, d});
  const std::vector<int32_t> node_graph = {0, 0, 0, 0, 1, 1, 1};

  Tape t;
  Tensor out = model::set2set_readout(t, cfg, params, h, node_graph, 2, nullptr);
  REQUIRE(out.dim(0) == 2);
  REQUIRE(out.dim(1) == 2 * d);
  const auto ref = set2set_ref(cfg, params, h, node_graph, 2);
  CHECK(testutil::max_abs_diff(out.data(), ref) <= 1e-12);
}

TEST_CASE("set2set attention rows are simplex weights") {
  SplitRng rng(43);
  const int64_t d = 4;
  ModelConfig cfg;
  cfg.hidden_dim = d;
  cfg.set2set_steps = 2;
  ParameterStore params = set2set_params(rng.split("p"), d);
  Tensor h = testutil::rand_tensor(rng.split("h"), {5, d});
  const std::vector<int32_t> node_graph = {0, 0, 0, 1, 1};

  Tape t;
  model::Set2SetTrace trace;
  model::set2set_readout(t, cfg, params, h, node_graph, 2, &trace);
  REQUIRE(trace.attention.size() == 2);
  for (const auto& a : trace.attention) {
    REQUIRE(a.size() == 5);
    double s0 = a[0] + a[1] + a[2];
    double s1 = a[3] + a[4];
    CHECK(s0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s1 == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : a) CHECK(v >= 0.0);
  }
}

TEST_CASE("set2set is permutation invariant within graphs") {
  SplitRng rng(44);
  const int64_t d = 3;
  ModelConfig cfg;
  cfg.hidden_dim = d;
  cfg.set2set_steps = 3;
  ParameterStore params = set2set_params(rng.split("p"), d);
  Tensor h = testutil::rand_tensor(rng.split("h"), {6, d});
  const std::vector<int32_t> node_graph = {0, 0, 0, 1, 1, 1};

  Tape t;
  Tensor r1 = model::set2set_readout(t, cfg, params, h, node_graph, 2, nullptr);
  const std::vector<int32_t> order = {1, 2, 0, 4, 5, 3};
  std::vector<double> hp(static_cast<size_t>(h.numel()));
  for (size_t v = 0; v < order.size(); ++v)
    for (int64_t j = 0; j < d; ++j)
      hp[v * static_cast<size_t>(d) + static_cast<size_t>(j)] = h.at({order[v], j});
  Tensor h2 = Tensor::from({6, d}, std::move(hp));
  Tensor r2 = model::set2set_readout(t, cfg, params, h2, node_graph, 2, nullptr);
  CHECK(testutil::max_abs_diff(r1.data(), r2.data()) < 1e-9);
}

TEST_CASE("output head applies the two-layer mlp") {
  SplitRng rng(45);
  ModelConfig cfg;
  cfg.hidden_dim = 4;
  cfg.head_hidden = 5;
  cfg.target_arity = 2;
  ParameterStore params;
  params.add("head.layer0.weight", testutil::rand_tensor(rng.split("w0"), {4, 5}));
  params.add("head.layer0.bias", testutil::rand_tensor(rng.split("b0"), {5}));
  params.add("head.layer1.weight", testutil::rand_tensor(rng.split("w1"), {5, 2}));
  params.add("head.layer1.bias", testutil::rand_tensor(rng.split("b1"), {2}));
  Tensor r = testutil::rand_tensor(rng.split("r"), {3, 4});
  Tape t;
  Tensor y = model::output_head(t, cfg, params, r);
  Tensor y2 = model::mlp_forward(t, params, "head", 2, r, cfg.activation);
  REQUIRE(y.dim(0) == 3);
  REQUIRE(y.dim(1) == 2);
  CHECK(testutil::max_abs_diff(y.data(), y2.data()) == 0.0);
}
