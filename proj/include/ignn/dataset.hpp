#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ignn/graph.hpp"
#include "ignn/objectives.hpp"

namespace ignn::data {

struct DatasetHeader {
  int64_t d_x = 0;
  int64_t d_e = 0;
  int64_t num_relations = 0;
  int64_t target_arity = 1;
  std::string task = "graph";  // "graph" | "node"
  int64_t count = 0;
  std::string provenance;      // generator settings, free-form
  std::vector<double> target_mean;  // whole-file stats, one per target
  std::vector<double> target_std;
  std::string edge_mode = "bond";  // "bond" | "complete"
  int64_t formula_id = 0;          // closed-form target recipe used by the generator
};

struct Dataset {
  DatasetHeader header;
  std::vector<graph::Graph> graphs;  // directed edges (duplicated pairs) in memory
};

// Binary records behind a one-line JSON header; undirected edges stored once.
void save_dataset(const std::string& path, const Dataset& ds);
// Duplicates each stored edge into both directions and validates every graph.
Dataset load_dataset(const std::string& path);
// Human-readable export for inspection; not meant to be read back.
void save_dataset_text(const std::string& path, const Dataset& ds);

struct SyntheticSpec {
  int64_t min_nodes = 5;
  int64_t max_nodes = 9;
  double edge_prob = 0.45;
  int64_t num_relations = 4;
  double dist_lo = 0.8;
  double dist_hi = 3.0;
  int64_t num_node_types = 5;
  int64_t formula_id = 0;  // 0: edge term + node term, 1: edge term only
  double noise_std = 0.0;
  uint64_t seed = 0;
  bool complete_graph = false;  // all pairs connected, extra "no-bond" relation
  bool node_targets = false;    // per-node labels instead of a graph label
};

// y = sum over undirected edges of k_r / dist + sum over nodes of c_type,
// with k_r = 1 + 0.5 r and c_type = 0.3 type - 0.6.
Dataset generate_synthetic(const SyntheticSpec& spec, int64_t count);

// Closed-form target recomputed from a graph's features; the learnability
// ceiling for models trained on this data.
std::vector<double> oracle_predict(const graph::Graph& g, const DatasetHeader& header);

struct SplitIndices {
  std::vector<int64_t> train, val, test;
};

SplitIndices split_dataset(int64_t total, uint64_t seed, int64_t train_n, int64_t val_n,
                           int64_t test_n);

// Per-target mean and population stddev over the indexed examples
// (graph labels or node labels depending on the header task).
model::TargetStats compute_target_stats(const Dataset& ds, std::span<const int64_t> indices);

}  // namespace ignn::data
