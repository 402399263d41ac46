#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ignn/error.hpp"
#include "ignn/graph.hpp"
#include "ignn/model.hpp"
#include "ignn/propagation.hpp"
#include "test_util.hpp"

using namespace ignn;
using graph::GraphBatch;
using model::Activation;
using model::ModelConfig;
using model::Scheme;
using num::ParameterStore;
using ignn::SplitRng;
using num::Tape;
using num::Tensor;

namespace {

// Plain double-vector matrix helpers used by the reference formulas.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(static_cast<size_t>(t.dim(0)), std::vector<double>(static_cast<size_t>(t.dim(1))));
  for (int64_t i = 0; i < t.dim(0); ++i)
    for (int64_t j = 0; j < t.dim(1); ++j)
      m[static_cast<size_t>(i)][static_cast<size_t>(j)] = t.at({i, j});
  return m;
}

Mat matmul_ref(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t k = 0; k < b.size(); ++k)
      for (size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

double max_diff(const Tensor& t, const Mat& m) {
  double worst = 0.0;
  for (int64_t i = 0; i < t.dim(0); ++i)
    for (int64_t j = 0; j < t.dim(1); ++j)
      worst = std::max(worst, std::abs(t.at({i, j}) -
                                       m[static_cast<size_t>(i)][static_cast<size_t>(j)]));
  return worst;
}

GraphBatch make_batch(const SplitRng& r, int64_t n, int64_t num_rel) {
  const std::vector<graph::Graph> gs = {testutil::ring_graph(r, n, 3, num_rel)};
  return graph::batch_graphs(gs);
}

}  // namespace

TEST_CASE("mlp_forward matches a hand loop") {
  SplitRng rng(31);
  ParameterStore params;
  params.add("f.layer0.weight", testutil::rand_tensor(rng.split("w0"), {3, 4}));
  params.add("f.layer0.bias", testutil::rand_tensor(rng.split("b0"), {4}));
  params.add("f.layer1.weight", testutil::rand_tensor(rng.split("w1"), {4, 2}));
  params.add("f.layer1.bias", testutil::rand_tensor(rng.split("b1"), {2}));
  Tensor x = testutil::rand_tensor(rng.split("x"), {5, 3});

  Tape t;
  Tensor y = model::mlp_forward(t, params, "f", 2, x, Activation::relu);

  Mat h = matmul_ref(to_mat(x), to_mat(params.at("f.layer0.weight")));
  for (auto& row : h)
    for (size_t j = 0; j < row.size(); ++j)
      row[j] = std::max(0.0, row[j] + params.at("f.layer0.bias").data()[j]);
  Mat out = matmul_ref(h, to_mat(params.at("f.layer1.weight")));
  for (auto& row : out)
    for (size_t j = 0; j < row.size(); ++j) row[j] += params.at("f.layer1.bias").data()[j];

  CHECK(max_diff(y, out) <= 1e-12);
}

TEST_CASE("input embed honors the identity flag") {
  SplitRng rng(32);
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden_dim = 4;
  cfg.identity_embed = true;
  ParameterStore params;
  Tensor x = testutil::rand_tensor(rng.split("x"), {3, 4});
  Tape t;
  Tensor h = model::input_embed(t, cfg, params, x);
  CHECK(testutil::max_abs_diff(h.data(), x.data()) == 0.0);
}

TEST_CASE("gcn step equals the dense normalized formula") {
  SplitRng rng(33);
  GraphBatch b = make_batch(rng.split("g"), 5, 2);
  const int64_t n = b.num_nodes, d = 4;
  Tensor h = testutil::rand_tensor(rng.split("h"), {n, d});
  Tensor w0 = testutil::rand_tensor(rng.split("w0"), {d, d});
  Tensor w1 = testutil::rand_tensor(rng.split("w1"), {d, d});

  Tape t;
  Tensor y = model::gcn_step(t, b, h, w0, w1, Activation::relu);

  // dense A_hat with symmetric in-degree normalization, degrees clamped to 1
  std::vector<double> deg(static_cast<size_t>(n), 0.0);
  for (int32_t v : b.edge_dst) deg[static_cast<size_t>(v)] += 1.0;
  for (auto& x : deg) x = std::max(x, 1.0);
  Mat a_hat(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
  for (size_t e = 0; e < b.edge_src.size(); ++e) {
    const auto s = static_cast<size_t>(b.edge_src[e]);
    const auto dd = static_cast<size_t>(b.edge_dst[e]);
    a_hat[dd][s] += 1.0 / std::sqrt(deg[s] * deg[dd]);
  }
  Mat ref = matmul_ref(a_hat, matmul_ref(to_mat(h), to_mat(w1)));
  Mat self = matmul_ref(to_mat(h), to_mat(w0));
  for (size_t i = 0; i < ref.size(); ++i)
    for (size_t j = 0; j < ref[0].size(); ++j)
      ref[i][j] = std::max(0.0, ref[i][j] + self[i][j]);

  CHECK(max_diff(y, ref) <= 1e-12);
}

TEST_CASE("rgcn step with one relation equals the dense formula") {
  SplitRng rng(34);
  GraphBatch b = make_batch(rng.split("g"), 5, 1);
  std::fill(b.relation_ids.begin(), b.relation_ids.end(), 0);
  const int64_t n = b.num_nodes, d = 3;
  Tensor h = testutil::rand_tensor(rng.split("h"), {n, d});
  Tensor w0 = testutil::rand_tensor(rng.split("w0"), {d, d});
  Tensor wr = testutil::rand_tensor(rng.split("wr"), {d, d});

  Tape t;
  Tensor y = model::rgcn_step(t, b, h, w0, {wr}, Activation::relu);

  // single relation: per-destination count normalization, then W_r transform
  std::vector<double> cnt(static_cast<size_t>(n), 0.0);
  for (int32_t v : b.edge_dst) cnt[static_cast<size_t>(v)] += 1.0;
  Mat norm_adj(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
  for (size_t e = 0; e < b.edge_src.size(); ++e)
    norm_adj[static_cast<size_t>(b.edge_dst[e])][static_cast<size_t>(b.edge_src[e])] +=
        1.0 / std::max(cnt[static_cast<size_t>(b.edge_dst[e])], 1.0);
  Mat ref = matmul_ref(norm_adj, matmul_ref(to_mat(h), to_mat(wr)));
  Mat self = matmul_ref(to_mat(h), to_mat(w0));
  for (size_t i = 0; i < ref.size(); ++i)
    for (size_t j = 0; j < ref[0].size(); ++j)
      ref[i][j] = std::max(0.0, ref[i][j] + self[i][j]);

  CHECK(max_diff(y, ref) <= 1e-12);
}

TEST_CASE("rgcn step normalizes per relation") {
  // two incoming edges at node 0 with different relations: each is its own
  // count-1 bucket, so both messages arrive unscaled
  GraphBatch b;
  b.num_graphs = 1;
  b.num_nodes = 3;
  b.num_edges = 2;
  b.node_features = Tensor::from({3, 1}, {1, 2, 3});
  b.edge_src = {1, 2};
  b.edge_dst = {0, 0};
  b.edge_features = Tensor::from({2, 2}, {1, 0, 0, 1});
  b.relation_ids = {0, 1};
  b.node_graph = {0, 0, 0};
  b.node_offset = {0, 3};
  b.edge_graph = {0, 0};

  Tensor h = Tensor::from({3, 1}, {1, 2, 3});
  Tensor w0 = Tensor::from({1, 1}, {0.0});
  Tensor r0 = Tensor::from({1, 1}, {1.0});
  Tensor r1 = Tensor::from({1, 1}, {10.0});
  Tape t;
  Tensor y = model::rgcn_step(t, b, h, w0, {r0, r1}, Activation::identity);
  CHECK(y.at({0, 0}) == doctest::Approx(2.0 * 1.0 + 3.0 * 10.0));

  // same relation on both edges: count 2 halves each contribution
  b.relation_ids = {0, 0};
  Tape t2;
  Tensor y2 = model::rgcn_step(t2, b, h, w0, {r0, r1}, Activation::identity);
  CHECK(y2.at({0, 0}) == doctest::Approx((2.0 + 3.0) / 2.0));

  b.relation_ids = {0, 5};  // out of range
  Tape t3;
  CHECK_THROWS_AS(model::rgcn_step(t3, b, h, w0, {r0, r1}, Activation::identity), Error);
}

TEST_CASE("mpnn message equals a per-edge loop") {
  SplitRng rng(35);
  GraphBatch b = make_batch(rng.split("g"), 6, 3);
  const int64_t n = b.num_nodes, d = 4, m = b.num_edges;
  Tensor h = testutil::rand_tensor(rng.split("h"), {n, d});
  Tensor w3 = testutil::rand_tensor(rng.split("w3"), {m, d, d});
  Tensor w0 = testutil::rand_tensor(rng.split("w0"), {d, d});

  Tape t;
  Tensor y = model::mpnn_message(t, b, h, w3, w0, Activation::identity);

  Mat ref = matmul_ref(to_mat(h), to_mat(w0));
  for (int64_t e = 0; e < m; ++e) {
    const auto s = static_cast<size_t>(b.edge_src[static_cast<size_t>(e)]);
    const auto dd = static_cast<size_t>(b.edge_dst[static_cast<size_t>(e)]);
    for (int64_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (int64_t j = 0; j < d; ++j)
        acc += w3.at({e, i, j}) * h.at({static_cast<int64_t>(s), j});
      ref[dd][static_cast<size_t>(i)] += acc;
    }
  }
  CHECK(max_diff(y, ref) <= 1e-12);
}

TEST_CASE("gru update follows the gate equations") {
  SplitRng rng(36);
  const int64_t n = 5, d = 3;
  ParameterStore params;
  for (const char* name : {"wz", "uz", "wr", "ur", "wh", "uh"})
    params.add(std::string("gru.") + name, testutil::rand_tensor(rng.split(name), {d, d}));
  for (const char* name : {"bz", "br", "bh"})
    params.add(std::string("gru.") + name, testutil::rand_tensor(rng.split(name), {d}));
  Tensor hp = testutil::rand_tensor(rng.split("h"), {n, d});
  Tensor m = testutil::rand_tensor(rng.split("m"), {n, d});

  Tape t;
  Tensor y = model::gru_update(t, params, hp, m);

  auto sigm = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Mat mz = matmul_ref(to_mat(m), to_mat(params.at("gru.wz")));
  Mat hz = matmul_ref(to_mat(hp), to_mat(params.at("gru.uz")));
  Mat mr = matmul_ref(to_mat(m), to_mat(params.at("gru.wr")));
  Mat hr = matmul_ref(to_mat(hp), to_mat(params.at("gru.ur")));
  Mat mh = matmul_ref(to_mat(m), to_mat(params.at("gru.wh")));
  Mat ref(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(d)));
  for (size_t i = 0; i < static_cast<size_t>(n); ++i) {
    std::vector<double> r(static_cast<size_t>(d));
    for (size_t j = 0; j < static_cast<size_t>(d); ++j)
      r[j] = sigm(mr[i][j] + hr[i][j] + params.at("gru.br").data()[j]);
    // (r*h) U_h
    std::vector<double> rh(static_cast<size_t>(d), 0.0);
    for (size_t k = 0; k < static_cast<size_t>(d); ++k)
      for (size_t j = 0; j < static_cast<size_t>(d); ++j)
        rh[j] += r[k] * hp.at({static_cast<int64_t>(i), static_cast<int64_t>(k)}) *
                 params.at("gru.uh").at({static_cast<int64_t>(k), static_cast<int64_t>(j)});
    for (size_t j = 0; j < static_cast<size_t>(d); ++j) {
      const double z = sigm(mz[i][j] + hz[i][j] + params.at("gru.bz").data()[j]);
      const double cand = std::tanh(mh[i][j] + rh[j] + params.at("gru.bh").data()[j]);
      const double hprev = hp.at({static_cast<int64_t>(i), static_cast<int64_t>(j)});
      ref[i][j] = (1.0 - z) * hprev + z * cand;
    }
  }
  CHECK(max_diff(y, ref) <= 1e-12);
}

TEST_CASE("propagate composes message passing with a shared edge network") {
  SplitRng rng(37);
  ModelConfig cfg;
  cfg.scheme = Scheme::mpnn;
  cfg.input_dim = 3;
  cfg.edge_dim = 4;
  cfg.hidden_dim = 4;
  cfg.num_layers = 2;
  cfg.edge_net_hidden = {6};
  ParameterStore params;
  model::build_params(params, cfg);
  model::init_params(params, cfg, 99);
  testutil::randomize_params(params, rng.split("theta"));

  GraphBatch b = make_batch(rng.split("g"), 5, 3);
  Tape t;
  model::PropagateResult res = model::propagate(t, cfg, params, b);
  REQUIRE(res.h.dim(0) == b.num_nodes);
  REQUIRE(res.h.dim(1) == 4);
  REQUIRE(res.edge_transforms.dim(0) == b.num_edges);
  REQUIRE(res.edge_transforms.dim(1) == 16);

  // replay the same composition by hand: one edge-network evaluation shared
  // by both layers, message + gru per layer
  Tape t2;
  Tensor h = model::input_embed(t2, cfg, params, b.node_features);
  Tensor ew = model::edge_network_forward(t2, cfg, params, b.edge_features);
  CHECK(testutil::max_abs_diff(ew.data(), res.edge_transforms.data()) == 0.0);
  Tensor w3 = num::reshape(t2, ew, {b.num_edges, 4, 4});
  for (int l = 0; l < 2; ++l) {
    Tensor msg = model::mpnn_message(t2, b, h, w3,
                                     params.at("mpnn.layer" + std::to_string(l) + ".w0"),
                                     cfg.activation);
    h = model::gru_update(t2, params, h, msg);
  }
  CHECK(testutil::max_abs_diff(h.data(), res.h.data()) == 0.0);
}

TEST_CASE("propagate rejects nonfinite states") {
  SplitRng rng(38);
  ModelConfig cfg;
  cfg.scheme = Scheme::gcn;
  cfg.input_dim = 3;
  cfg.hidden_dim = 4;
  cfg.num_layers = 3;
  ParameterStore params;
  model::build_params(params, cfg);
  for (const auto& [name, tensor] : params.entries())
    for (auto& v : params.at(name).mutable_data()) v = 1e200;

  GraphBatch b = make_batch(rng.split("g"), 5, 2);
  Tape t;
  t.check_finite = false;  // exercise the propagate-side guard, not the tape scan
  try {
    model::propagate(t, cfg, params, b);
    FAIL("expected nonfinite error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::nonfinite);
  }
}

TEST_CASE("gcn scheme builds no gru or edge-network parameters") {
  ModelConfig cfg;
  cfg.scheme = Scheme::gcn;
  cfg.input_dim = 3;
  cfg.hidden_dim = 4;
  cfg.num_layers = 2;
  ParameterStore params;
  model::build_params(params, cfg);
  for (const auto& [name, tensor] : params.entries()) {
    CHECK(name.find("gru.") == std::string::npos);
    CHECK(name.find("edge_net.") == std::string::npos);
    CHECK(name.find("decoder.") == std::string::npos);
  }
}
