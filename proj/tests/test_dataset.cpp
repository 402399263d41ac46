#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>
#include <vector>

#include "ignn/dataset.hpp"
#include "ignn/error.hpp"
#include "test_util.hpp"

using namespace ignn;
using data::Dataset;
using data::SyntheticSpec;

TEST_CASE("generator produces valid, deterministic graphs") {
  SyntheticSpec spec;
  spec.seed = 123;
  Dataset ds = data::generate_synthetic(spec, 30);
  CHECK(ds.header.count == 30);
  CHECK(ds.header.d_x == 5);
  CHECK(ds.header.d_e == 5);  // 4 relation columns + distance
  CHECK(ds.header.num_relations == 4);
  CHECK(ds.header.task == "graph");
  CHECK(ds.header.target_arity == 1);
  REQUIRE(ds.graphs.size() == 30);
  for (const auto& g : ds.graphs) {
    CHECK_NOTHROW(graph::require_valid(g));
    CHECK(g.num_nodes >= 5);
    CHECK(g.num_nodes <= 9);
    CHECK(g.num_edges() % 2 == 0);  // directed pairs
    REQUIRE(g.graph_label.size() == 1);
    // every directed edge has its reverse with matching features
    for (int64_t e = 0; e < g.num_edges(); ++e) {
      const auto [s, d] = g.edges[static_cast<size_t>(e)];
      bool found = false;
      for (int64_t e2 = 0; e2 < g.num_edges(); ++e2)
        if (g.edges[static_cast<size_t>(e2)] == std::pair<int32_t, int32_t>{d, s} &&
            g.relation_ids[static_cast<size_t>(e2)] == g.relation_ids[static_cast<size_t>(e)])
          found = true;
      CHECK(found);
    }
  }

  Dataset again = data::generate_synthetic(spec, 30);
  for (size_t i = 0; i < 30; ++i) {
    CHECK(testutil::max_abs_diff(again.graphs[i].node_features.data(),
                                 ds.graphs[i].node_features.data()) == 0.0);
    CHECK(again.graphs[i].edges == ds.graphs[i].edges);
    CHECK(again.graphs[i].graph_label == ds.graphs[i].graph_label);
  }
}

TEST_CASE("noise-free labels equal the closed-form target") {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.noise_std = 0.0;
  Dataset ds = data::generate_synthetic(spec, 20);
  for (const auto& g : ds.graphs) {
    const auto want = data::oracle_predict(g, ds.header);
    REQUIRE(want.size() == 1);
    CHECK(std::abs(g.graph_label[0] - want[0]) <= 1e-12);
  }

  SyntheticSpec noisy = spec;
  noisy.noise_std = 0.5;
  Dataset nds = data::generate_synthetic(noisy, 20);
  bool any_moved = false;
  for (const auto& g : nds.graphs)
    any_moved |= std::abs(g.graph_label[0] - data::oracle_predict(g, nds.header)[0]) > 1e-9;
  CHECK(any_moved);
}

TEST_CASE("complete mode connects all pairs with a virtual relation") {
  SyntheticSpec spec;
  spec.seed = 9;
  spec.complete_graph = true;
  Dataset ds = data::generate_synthetic(spec, 10);
  CHECK(ds.header.edge_mode == "complete");
  CHECK(ds.header.num_relations == 5);  // 4 bond relations + no-bond
  CHECK(ds.header.d_e == 6);
  for (const auto& g : ds.graphs) {
    CHECK(g.num_edges() == g.num_nodes * (g.num_nodes - 1));
    bool saw_virtual = false;
    for (int32_t r : g.relation_ids) saw_virtual |= (r == 4);
    CHECK(saw_virtual);
  }
}

TEST_CASE("node-target mode labels every node") {
  SyntheticSpec spec;
  spec.seed = 4;
  spec.node_targets = true;
  Dataset ds = data::generate_synthetic(spec, 8);
  CHECK(ds.header.task == "node");
  for (const auto& g : ds.graphs) {
    REQUIRE(g.node_labels.defined());
    CHECK(g.node_labels.dim(0) == g.num_nodes);
    CHECK(g.node_labels.dim(1) == 1);
    CHECK(g.graph_label.empty());
  }
}

TEST_CASE("binary round-trip preserves every field") {
  testutil::ScratchDir dir("ignn_dataset_roundtrip");
  SyntheticSpec spec;
  spec.seed = 77;
  spec.noise_std = 0.25;
  Dataset ds = data::generate_synthetic(spec, 25);
  ds.header.provenance = "unit-test fixture";
  const std::string path = dir.file("data.bin");
  data::save_dataset(path, ds);
  Dataset back = data::load_dataset(path);

  CHECK(back.header.d_x == ds.header.d_x);
  CHECK(back.header.d_e == ds.header.d_e);
  CHECK(back.header.num_relations == ds.header.num_relations);
  CHECK(back.header.target_arity == ds.header.target_arity);
  CHECK(back.header.task == ds.header.task);
  CHECK(back.header.count == ds.header.count);
  CHECK(back.header.provenance == ds.header.provenance);
  CHECK(back.header.edge_mode == ds.header.edge_mode);
  CHECK(back.header.formula_id == ds.header.formula_id);
  CHECK(back.header.target_mean == ds.header.target_mean);
  CHECK(back.header.target_std == ds.header.target_std);
  REQUIRE(back.graphs.size() == ds.graphs.size());
  for (size_t i = 0; i < ds.graphs.size(); ++i) {
    const auto& a = ds.graphs[i];
    const auto& b = back.graphs[i];
    CHECK(a.num_nodes == b.num_nodes);
    CHECK(testutil::max_abs_diff(a.node_features.data(), b.node_features.data()) == 0.0);
    CHECK(a.graph_label == b.graph_label);
    CHECK(a.relation_ids.size() == b.relation_ids.size());
    // loader may reorder the two directions of a pair; compare as multisets
    std::multiset<std::tuple<int32_t, int32_t, int32_t>> ae, be;
    for (size_t e = 0; e < a.edges.size(); ++e)
      ae.insert({a.edges[e].first, a.edges[e].second, a.relation_ids[e]});
    for (size_t e = 0; e < b.edges.size(); ++e)
      be.insert({b.edges[e].first, b.edges[e].second, b.relation_ids[e]});
    CHECK(ae == be);
  }

  // saving the loaded copy reproduces the file byte-for-byte
  const std::string path2 = dir.file("data2.bin");
  data::save_dataset(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
}

TEST_CASE("loader reports io and format errors") {
  testutil::ScratchDir dir("ignn_dataset_errors");
  try {
    data::load_dataset(dir.file("missing.bin"));
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
  }

  const std::string garbled = dir.file("garbled.bin");
  {
    std::ofstream out(garbled, std::ios::binary);
    out << "this is not a dataset";
  }
  CHECK_THROWS_AS(data::load_dataset(garbled), Error);
}

TEST_CASE("text export writes a readable file") {
  testutil::ScratchDir dir("ignn_dataset_text");
  SyntheticSpec spec;
  spec.seed = 2;
  Dataset ds = data::generate_synthetic(spec, 3);
  const std::string path = dir.file("data.txt");
  data::save_dataset_text(path, ds);
  CHECK(std::filesystem::file_size(path) > 0);
}

TEST_CASE("splits partition deterministically") {
  const auto s1 = data::split_dataset(100, 7, 80, 10, 10);
  const auto s2 = data::split_dataset(100, 7, 80, 10, 10);
  CHECK(s1.train == s2.train);
  CHECK(s1.val == s2.val);
  CHECK(s1.test == s2.test);
  CHECK(s1.train.size() == 80);
  CHECK(s1.val.size() == 10);
  CHECK(s1.test.size() == 10);

  std::set<int64_t> all;
  for (int64_t i : s1.train) all.insert(i);
  for (int64_t i : s1.val) all.insert(i);
  for (int64_t i : s1.test) all.insert(i);
  CHECK(all.size() == 100);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 99);

  const auto other_seed = data::split_dataset(100, 8, 80, 10, 10);
  CHECK(s1.train != other_seed.train);

  CHECK_THROWS_AS(data::split_dataset(10, 0, 8, 2, 1), Error);
}

TEST_CASE("target statistics match a hand computation") {
  SyntheticSpec spec;
  spec.seed = 11;
  Dataset ds = data::generate_synthetic(spec, 12);
  std::vector<int64_t> idx = {0, 2, 4, 6, 8};
  const auto stats = data::compute_target_stats(ds, idx);
  REQUIRE(stats.mean.size() == 1);

  double mean = 0.0;
  for (int64_t i : idx) mean += ds.graphs[static_cast<size_t>(i)].graph_label[0];
  mean /= static_cast<double>(idx.size());
  double var = 0.0;
  for (int64_t i : idx) {
    const double d = ds.graphs[static_cast<size_t>(i)].graph_label[0] - mean;
    var += d * d;
  }
  var /= static_cast<double>(idx.size());
  CHECK(stats.mean[0] == doctest::Approx(mean).epsilon(1e-12));
  CHECK(stats.stddev[0] == doctest::Approx(std::sqrt(var)).epsilon(1e-12));

  // constant targets: stddev is clamped away from zero
  Dataset flat = ds;
  for (auto& g : flat.graphs) g.graph_label = {3.0};
  const auto const_stats = data::compute_target_stats(flat, idx);
  CHECK(const_stats.mean[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(const_stats.stddev[0] > 0.0);
}
