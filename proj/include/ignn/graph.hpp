#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ignn/tensor.hpp"

namespace ignn::graph {

// A single graph. Edges are directed; an undirected dataset edge appears as
// two directed entries sharing features and relation id. Self-loops are not
// stored: every propagation rule carries an explicit self term.
struct Graph {
  int64_t num_nodes = 0;
  num::Tensor node_features;                        // [n, d_x]
  std::vector<std::pair<int32_t, int32_t>> edges;   // (src, dst)
  num::Tensor edge_features;                        // [m, d_e]
  std::vector<int32_t> relation_ids;                // [m]
  std::vector<double> graph_label;                  // graph-level targets (may be empty)
  num::Tensor node_labels;                          // [n, arity] (undefined if none)

  int64_t num_edges() const { return static_cast<int64_t>(edges.size()); }
  int64_t node_dim() const { return node_features.defined() ? node_features.dim(1) : 0; }
  int64_t edge_dim() const { return edge_features.defined() ? edge_features.dim(1) : 0; }
};

// Collects every violation instead of stopping at the first.
std::vector<std::string> validate_graph(const Graph& g);
void require_valid(const Graph& g);

// Disjoint union of graphs: node indices of graph k are offset by the total
// node count of graphs 0..k-1, so no cross-graph edges exist.
struct GraphBatch {
  int64_t num_graphs = 0;
  int64_t num_nodes = 0;
  int64_t num_edges = 0;
  num::Tensor node_features;        // [N, d_x]
  std::vector<int32_t> edge_src;    // [M]
  std::vector<int32_t> edge_dst;    // [M]
  num::Tensor edge_features;        // [M, d_e]
  std::vector<int32_t> relation_ids;
  std::vector<int32_t> node_graph;  // node index -> graph id
  std::vector<int64_t> node_offset; // graph id -> first node index, size num_graphs+1
  std::vector<int32_t> edge_graph;  // edge index -> graph id
  num::Tensor graph_labels;         // [G, arity] (undefined if the graphs carry none)
  num::Tensor node_labels;          // [N, arity] (undefined if the graphs carry none)
};

GraphBatch batch_graphs(std::span<const Graph> graphs);

// Incoming-message neighborhood of v: one (w, edge-id) entry per edge (w, v),
// ordered by edge id.
std::vector<std::pair<int32_t, int32_t>> neighbors(const Graph& g, int32_t v);

// Relabel nodes: new_index_of[v] gives the new id of node v. Structure-level
// helper for equivariance checks.
Graph permute_graph(const Graph& g, std::span<const int32_t> new_index_of);

}  // namespace ignn::graph
