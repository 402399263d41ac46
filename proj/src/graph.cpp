#include "ignn/graph.hpp"

#include <algorithm>
#include <cmath>

namespace ignn::graph {

using num::Tensor;

std::vector<std::string> validate_graph(const Graph& g) {
  std::vector<std::string> problems;
  auto bad = [&](std::string msg) { problems.push_back(std::move(msg)); };

  if (g.num_nodes < 0) bad("negative node count");
  if (!g.node_features.defined() || g.node_features.ndim() != 2)
    bad("node_features must be a 2-d tensor");
  else if (g.node_features.dim(0) != g.num_nodes)
    bad("node_features has " + std::to_string(g.node_features.dim(0)) + " rows for " +
        std::to_string(g.num_nodes) + " nodes");

  const int64_t m = g.num_edges();
  for (int64_t i = 0; i < m; ++i) {
    const auto [s, d] = g.edges[static_cast<size_t>(i)];
    if (s < 0 || s >= g.num_nodes || d < 0 || d >= g.num_nodes)
      bad("edge " + std::to_string(i) + " endpoint out of range: (" + std::to_string(s) + ", " +
          std::to_string(d) + ") with " + std::to_string(g.num_nodes) + " nodes");
  }
  if (!g.edge_features.defined() || g.edge_features.ndim() != 2)
    bad("edge_features must be a 2-d tensor");
  else if (g.edge_features.dim(0) != m)
    bad("edge_features has " + std::to_string(g.edge_features.dim(0)) + " rows for " +
        std::to_string(m) + " edges");
  if (static_cast<int64_t>(g.relation_ids.size()) != m)
    bad("relation_ids has " + std::to_string(g.relation_ids.size()) + " entries for " +
        std::to_string(m) + " edges");
  for (size_t i = 0; i < g.relation_ids.size(); ++i)
    if (g.relation_ids[i] < 0)
      bad("negative relation id at edge " + std::to_string(i));

  auto scan_rows = [&](const Tensor& t, const char* name) {
    if (!t.defined() || t.ndim() != 2) return;
    const int64_t rows = t.dim(0), cols = t.dim(1);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c)
        if (!std::isfinite(t.data()[static_cast<size_t>(r * cols + c)])) {
          bad(std::string("NaN in ") + name + " row " + std::to_string(r));
          break;
        }
  };
  scan_rows(g.node_features, "node_features");
  scan_rows(g.edge_features, "edge_features");

  for (size_t i = 0; i < g.graph_label.size(); ++i)
    if (!std::isfinite(g.graph_label[i])) bad("NaN in graph_label entry " + std::to_string(i));
  if (g.node_labels.defined()) {
    if (g.node_labels.ndim() != 2 || g.node_labels.dim(0) != g.num_nodes)
      bad("node_labels must be [num_nodes x arity]");
    else
      scan_rows(g.node_labels, "node_labels");
  }
  if (!g.graph_label.empty() && g.node_labels.defined())
    bad("graph carries both graph-level and node-level labels");
  return problems;
}

void require_valid(const Graph& g) {
  auto problems = validate_graph(g);
  if (problems.empty()) return;
  std::string msg = "invalid graph:";
  for (const auto& p : problems) msg += "\n  - " + p;
  throw Error(Errc::data, msg);
}

GraphBatch batch_graphs(std::span<const Graph> graphs) {
  if (graphs.empty())
    throw Error(Errc::invalid_argument, "batch_graphs: empty graph list");
  for (const auto& g : graphs) require_valid(g);

  const int64_t d_x = graphs[0].node_dim();
  const int64_t d_e = graphs[0].edge_dim();
  const size_t label_arity = graphs[0].graph_label.size();
  const bool has_node_labels = graphs[0].node_labels.defined();
  const int64_t node_label_arity = has_node_labels ? graphs[0].node_labels.dim(1) : 0;
  for (size_t k = 0; k < graphs.size(); ++k) {
    const auto& g = graphs[k];
    if (g.node_dim() != d_x || g.edge_dim() != d_e)
      throw Error(Errc::invalid_argument,
                       "batch_graphs: feature width mismatch at graph " + std::to_string(k));
    if (g.graph_label.size() != label_arity || g.node_labels.defined() != has_node_labels ||
        (has_node_labels && g.node_labels.dim(1) != node_label_arity))
      throw Error(Errc::invalid_argument,
                       "batch_graphs: label arity mismatch at graph " + std::to_string(k));
  }

  GraphBatch b;
  b.num_graphs = static_cast<int64_t>(graphs.size());
  for (const auto& g : graphs) {
    b.num_nodes += g.num_nodes;
    b.num_edges += g.num_edges();
  }

  std::vector<double> nodes(static_cast<size_t>(b.num_nodes * d_x));
  std::vector<double> edges_f(static_cast<size_t>(b.num_edges * d_e));
  std::vector<double> glabels;
  std::vector<double> nlabels;
  if (label_arity) glabels.reserve(static_cast<size_t>(b.num_graphs) * label_arity);
  if (has_node_labels) nlabels.reserve(static_cast<size_t>(b.num_nodes * node_label_arity));
  b.edge_src.reserve(static_cast<size_t>(b.num_edges));
  b.edge_dst.reserve(static_cast<size_t>(b.num_edges));
  b.relation_ids.reserve(static_cast<size_t>(b.num_edges));
  b.node_graph.reserve(static_cast<size_t>(b.num_nodes));
  b.edge_graph.reserve(static_cast<size_t>(b.num_edges));
  b.node_offset.assign(1, 0);

  int64_t node_base = 0, edge_base = 0;
  for (size_t k = 0; k < graphs.size(); ++k) {
    const auto& g = graphs[k];
    std::copy(g.node_features.data().begin(), g.node_features.data().end(),
              nodes.begin() + node_base * d_x);
    std::copy(g.edge_features.data().begin(), g.edge_features.data().end(),
              edges_f.begin() + edge_base * d_e);
    for (const auto& [s, d] : g.edges) {
      b.edge_src.push_back(static_cast<int32_t>(s + node_base));
      b.edge_dst.push_back(static_cast<int32_t>(d + node_base));
      b.edge_graph.push_back(static_cast<int32_t>(k));
    }
    b.relation_ids.insert(b.relation_ids.end(), g.relation_ids.begin(), g.relation_ids.end());
    for (int64_t v = 0; v < g.num_nodes; ++v) b.node_graph.push_back(static_cast<int32_t>(k));
    glabels.insert(glabels.end(), g.graph_label.begin(), g.graph_label.end());
    if (has_node_labels)
      nlabels.insert(nlabels.end(), g.node_labels.data().begin(), g.node_labels.data().end());
    node_base += g.num_nodes;
    edge_base += g.num_edges();
    b.node_offset.push_back(node_base);
  }

  b.node_features = Tensor::from({b.num_nodes, d_x}, std::move(nodes));
  b.edge_features = Tensor::from({b.num_edges, d_e}, std::move(edges_f));
  if (label_arity)
    b.graph_labels =
        Tensor::from({b.num_graphs, static_cast<int64_t>(label_arity)}, std::move(glabels));
  if (has_node_labels)
    b.node_labels = Tensor::from({b.num_nodes, node_label_arity}, std::move(nlabels));
  return b;
}

std::vector<std::pair<int32_t, int32_t>> neighbors(const Graph& g, int32_t v) {
  if (v < 0 || v >= g.num_nodes)
    throw Error(Errc::invalid_argument,
                     "neighbors: node " + std::to_string(v) + " out of range");
  std::vector<std::pair<int32_t, int32_t>> out;
  for (int64_t e = 0; e < g.num_edges(); ++e)
    if (g.edges[static_cast<size_t>(e)].second == v)
      out.emplace_back(g.edges[static_cast<size_t>(e)].first, static_cast<int32_t>(e));
  return out;
}

Graph permute_graph(const Graph& g, std::span<const int32_t> new_index_of) {
  if (static_cast<int64_t>(new_index_of.size()) != g.num_nodes)
    throw Error(Errc::invalid_argument, "permute_graph: permutation size mismatch");
  std::vector<bool> seen(static_cast<size_t>(g.num_nodes), false);
  for (int32_t p : new_index_of) {
    if (p < 0 || p >= g.num_nodes || seen[static_cast<size_t>(p)])
      throw Error(Errc::invalid_argument, "permute_graph: not a permutation");
    seen[static_cast<size_t>(p)] = true;
  }
  Graph out;
  out.num_nodes = g.num_nodes;
  const int64_t d_x = g.node_dim();
  std::vector<double> nodes(static_cast<size_t>(g.num_nodes * d_x));
  for (int64_t v = 0; v < g.num_nodes; ++v)
    std::copy(g.node_features.data().begin() + v * d_x,
              g.node_features.data().begin() + (v + 1) * d_x,
              nodes.begin() + new_index_of[static_cast<size_t>(v)] * d_x);
  out.node_features = Tensor::from({g.num_nodes, d_x}, std::move(nodes));
  out.edges.reserve(g.edges.size());
  for (const auto& [s, d] : g.edges)
    out.edges.emplace_back(new_index_of[static_cast<size_t>(s)],
                           new_index_of[static_cast<size_t>(d)]);
  out.edge_features = g.edge_features.detached_copy();
  out.relation_ids = g.relation_ids;
  out.graph_label = g.graph_label;
  if (g.node_labels.defined()) {
    const int64_t a = g.node_labels.dim(1);
    std::vector<double> nl(static_cast<size_t>(g.num_nodes * a));
    for (int64_t v = 0; v < g.num_nodes; ++v)
      std::copy(g.node_labels.data().begin() + v * a, g.node_labels.data().begin() + (v + 1) * a,
                nl.begin() + new_index_of[static_cast<size_t>(v)] * a);
    out.node_labels = Tensor::from({g.num_nodes, a}, std::move(nl));
  }
  return out;
}

}  // namespace ignn::graph
