#include "ignn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "ignn/binio.hpp"
#include "ignn/rng.hpp"

namespace ignn::data {

using graph::Graph;


using num::Tensor;
using nlohmann::json;

namespace {

constexpr uint8_t kFormatVersion = 1;

std::string header_to_json(const DatasetHeader& h) {
  json j;
  j["d_x"] = h.d_x;
  j["d_e"] = h.d_e;
  j["num_relations"] = h.num_relations;
  j["target_arity"] = h.target_arity;
  j["task"] = h.task;
  j["count"] = h.count;
  j["provenance"] = h.provenance;
  j["target_mean"] = h.target_mean;
  j["target_std"] = h.target_std;
  j["edge_mode"] = h.edge_mode;
  j["formula_id"] = h.formula_id;
  return j.dump();
}

DatasetHeader header_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::data, std::string("dataset header: ") + e.what());
  }
  DatasetHeader h;
  try {
    h.d_x = j.at("d_x").get<int64_t>();
    h.d_e = j.at("d_e").get<int64_t>();
    h.num_relations = j.at("num_relations").get<int64_t>();
    h.target_arity = j.at("target_arity").get<int64_t>();
    h.task = j.at("task").get<std::string>();
    h.count = j.at("count").get<int64_t>();
    h.provenance = j.at("provenance").get<std::string>();
    h.target_mean = j.at("target_mean").get<std::vector<double>>();
    h.target_std = j.at("target_std").get<std::vector<double>>();
    h.edge_mode = j.at("edge_mode").get<std::string>();
    h.formula_id = j.at("formula_id").get<int64_t>();
  } catch (const json::exception& e) {
    throw Error(Errc::data, std::string("dataset header: ") + e.what());
  }
  if (h.task != "graph" && h.task != "node")
    throw Error(Errc::data, "dataset header: unknown task '" + h.task + "'");
  if (h.d_x <= 0 || h.d_e <= 0 || h.count < 0 || h.target_arity <= 0)
    throw Error(Errc::data, "dataset header: non-positive dimensions");
  return h;
}

// One direction per undirected pair, recovered from the duplicated in-memory
// form: keep edges with src < dst and check the mirror exists.
std::vector<int64_t> undirected_edge_ids(const Graph& g, int64_t record_index) {
  std::vector<int64_t> ids;
  int64_t mirrors = 0;
  for (int64_t e = 0; e < g.num_edges(); ++e) {
    const auto [s, d] = g.edges[static_cast<size_t>(e)];
    if (s == d)
      throw Error(Errc::data,
                  "record " + std::to_string(record_index) + ": self-loop cannot be serialized");
    if (s < d)
      ids.push_back(e);
    else
      ++mirrors;
  }
  if (mirrors != static_cast<int64_t>(ids.size()))
    throw Error(Errc::data, "record " + std::to_string(record_index) +
                                ": directed edges do not form undirected pairs");
  return ids;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  if (ds.header.count != static_cast<int64_t>(ds.graphs.size()))
    throw Error(Errc::invalid_argument, "save_dataset: header count mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot open '" + path + "' for writing");
  io::write_u8(os, kFormatVersion);
  const std::string header = header_to_json(ds.header);
  io::write_bytes(os, header.data(), header.size());
  io::write_u8(os, '\n');
  const bool node_task = ds.header.task == "node";
  for (int64_t k = 0; k < ds.header.count; ++k) {
    const Graph& g = ds.graphs[static_cast<size_t>(k)];
    const auto und = undirected_edge_ids(g, k);
    io::write_u32(os, static_cast<uint32_t>(g.num_nodes));
    io::write_u32(os, static_cast<uint32_t>(und.size()));
    for (double v : g.node_features.data()) io::write_f64(os, v);
    const int64_t d_e = g.edge_dim();
    for (int64_t e : und) {
      const auto [s, d] = g.edges[static_cast<size_t>(e)];
      io::write_u32(os, static_cast<uint32_t>(s));
      io::write_u32(os, static_cast<uint32_t>(d));
      io::write_i32(os, g.relation_ids[static_cast<size_t>(e)]);
      for (int64_t j = 0; j < d_e; ++j)
        io::write_f64(os, g.edge_features.data()[static_cast<size_t>(e * d_e + j)]);
    }
    if (node_task) {
      for (double v : g.node_labels.data()) io::write_f64(os, v);
    } else {
      for (double v : g.graph_label) io::write_f64(os, v);
    }
  }
  os.flush();
  if (!os) throw Error(Errc::io, "write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open dataset '" + path + "'");
  const uint8_t version = io::read_u8(is, "format version");
  if (version != kFormatVersion)
    throw Error(Errc::data, "unsupported dataset format version " + std::to_string(version));
  std::string header_line;
  if (!std::getline(is, header_line))
    throw Error(Errc::data, "missing dataset header line");
  Dataset ds;
  ds.header = header_from_json(header_line);
  const bool node_task = ds.header.task == "node";
  ds.graphs.reserve(static_cast<size_t>(ds.header.count));
  for (int64_t k = 0; k < ds.header.count; ++k) {
    const std::string where = "record " + std::to_string(k);
    Graph g;
    try {
      g.num_nodes = io::read_u32(is, "node count");
      const int64_t num_und = io::read_u32(is, "edge count");
      std::vector<double> nodes(static_cast<size_t>(g.num_nodes * ds.header.d_x));
      for (auto& v : nodes) v = io::read_f64(is, "node features");
      g.node_features = Tensor::from({g.num_nodes, ds.header.d_x}, std::move(nodes));
      std::vector<double> efeat;
      efeat.reserve(static_cast<size_t>(2 * num_und * ds.header.d_e));
      for (int64_t e = 0; e < num_und; ++e) {
        const int64_t s = io::read_u32(is, "edge src");
        const int64_t d = io::read_u32(is, "edge dst");
        const int32_t rel = io::read_i32(is, "relation id");
        if (rel < 0 || rel >= ds.header.num_relations)
          throw Error(Errc::data, "relation id " + std::to_string(rel) + " out of range");
        std::vector<double> row(static_cast<size_t>(ds.header.d_e));
        for (auto& v : row) v = io::read_f64(is, "edge features");
        // both directions share the stored features
        g.edges.emplace_back(static_cast<int32_t>(s), static_cast<int32_t>(d));
        g.edges.emplace_back(static_cast<int32_t>(d), static_cast<int32_t>(s));
        g.relation_ids.push_back(rel);
        g.relation_ids.push_back(rel);
        efeat.insert(efeat.end(), row.begin(), row.end());
        efeat.insert(efeat.end(), row.begin(), row.end());
      }
      g.edge_features = Tensor::from({2 * num_und, ds.header.d_e}, std::move(efeat));
      if (node_task) {
        std::vector<double> nl(static_cast<size_t>(g.num_nodes * ds.header.target_arity));
        for (auto& v : nl) v = io::read_f64(is, "node labels");
        g.node_labels = Tensor::from({g.num_nodes, ds.header.target_arity}, std::move(nl));
      } else {
        g.graph_label.resize(static_cast<size_t>(ds.header.target_arity));
        for (auto& v : g.graph_label) v = io::read_f64(is, "graph label");
      }
    } catch (const Error& e) {
      throw Error(Errc::data, where + ": " + e.what());
    }
    auto problems = graph::validate_graph(g);
    if (!problems.empty())
      throw Error(Errc::data, where + ": " + problems.front());
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

void save_dataset_text(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::io, "cannot open '" + path + "' for writing");
  os << header_to_json(ds.header) << "\n";
  os.precision(17);
  for (int64_t k = 0; k < static_cast<int64_t>(ds.graphs.size()); ++k) {
    const Graph& g = ds.graphs[static_cast<size_t>(k)];
    os << "graph " << k << " nodes " << g.num_nodes << " directed_edges " << g.num_edges()
       << "\n";
    const int64_t d_x = g.node_dim();
    for (int64_t v = 0; v < g.num_nodes; ++v) {
      os << "  node " << v << ":";
      for (int64_t j = 0; j < d_x; ++j)
        os << " " << g.node_features.data()[static_cast<size_t>(v * d_x + j)];
      os << "\n";
    }
    const int64_t d_e = g.edge_dim();
    for (int64_t e = 0; e < g.num_edges(); ++e) {
      os << "  edge " << g.edges[static_cast<size_t>(e)].first << "->"
         << g.edges[static_cast<size_t>(e)].second << " rel "
         << g.relation_ids[static_cast<size_t>(e)] << ":";
      for (int64_t j = 0; j < d_e; ++j)
        os << " " << g.edge_features.data()[static_cast<size_t>(e * d_e + j)];
      os << "\n";
    }
    if (!g.graph_label.empty()) {
      os << "  label:";
      for (double v : g.graph_label) os << " " << v;
      os << "\n";
    }
    if (g.node_labels.defined()) {
      for (int64_t v = 0; v < g.num_nodes; ++v) {
        os << "  node_label " << v << ":";
        for (int64_t j = 0; j < g.node_labels.dim(1); ++j)
          os << " " << g.node_labels.data()[static_cast<size_t>(v * g.node_labels.dim(1) + j)];
        os << "\n";
      }
    }
  }
}

namespace {

double relation_coefficient(int64_t rel, int64_t num_bond_relations) {
  // the "no-bond" relation (complete-graph mode) contributes nothing
  if (rel >= num_bond_relations) return 0.0;
  return 1.0 + 0.5 * static_cast<double>(rel);
}

double node_type_coefficient(int64_t type) { return 0.3 * static_cast<double>(type) - 0.6; }

bool connected(int64_t n, const std::vector<std::pair<int32_t, int32_t>>& und_edges) {
  if (n <= 1) return true;
  std::vector<int64_t> parent(static_cast<size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int64_t(int64_t)> find = [&](int64_t x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  };
  int64_t components = n;
  for (const auto& [a, b] : und_edges) {
    const int64_t ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[static_cast<size_t>(ra)] = rb;
      --components;
    }
  }
  return components == 1;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, int64_t count) {
  if (count < 0 || spec.min_nodes < 1 || spec.max_nodes < spec.min_nodes ||
      spec.num_relations < 1 || spec.num_node_types < 1 || spec.edge_prob < 0.0 ||
      spec.edge_prob > 1.0 || spec.dist_lo <= 0.0 || spec.dist_hi < spec.dist_lo ||
      spec.noise_std < 0.0 || (spec.formula_id != 0 && spec.formula_id != 1))
    throw Error(Errc::invalid_argument, "generate_synthetic: invalid spec");

  Dataset ds;
  const int64_t total_relations = spec.num_relations + (spec.complete_graph ? 1 : 0);
  ds.header.d_x = spec.num_node_types;
  ds.header.d_e = total_relations + 1;  // one-hot relation + distance column
  ds.header.num_relations = total_relations;
  ds.header.target_arity = 1;
  ds.header.task = spec.node_targets ? "node" : "graph";
  ds.header.count = count;
  ds.header.edge_mode = spec.complete_graph ? "complete" : "bond";
  ds.header.formula_id = spec.formula_id;
  {
    json prov;
    prov["generator"] = "synthetic-bond-energy";
    prov["min_nodes"] = spec.min_nodes;
    prov["max_nodes"] = spec.max_nodes;
    prov["edge_prob"] = spec.edge_prob;
    prov["num_relations"] = spec.num_relations;
    prov["dist_lo"] = spec.dist_lo;
    prov["dist_hi"] = spec.dist_hi;
    prov["num_node_types"] = spec.num_node_types;
    prov["formula_id"] = spec.formula_id;
    prov["noise_std"] = spec.noise_std;
    prov["seed"] = spec.seed;
    prov["complete_graph"] = spec.complete_graph;
    prov["node_targets"] = spec.node_targets;
    ds.header.provenance = prov.dump();
  }

  const SplitRng master(spec.seed);
  ds.graphs.reserve(static_cast<size_t>(count));
  for (int64_t k = 0; k < count; ++k) {
    SplitRng rng = master.split(static_cast<uint64_t>(k));
    Graph g;
    const int64_t span = spec.max_nodes - spec.min_nodes + 1;
    g.num_nodes = spec.min_nodes + static_cast<int64_t>(rng.below(static_cast<uint64_t>(span)));

    std::vector<int64_t> types(static_cast<size_t>(g.num_nodes));
    for (auto& t : types) t = static_cast<int64_t>(rng.below(static_cast<uint64_t>(spec.num_node_types)));

    // undirected skeleton: (src, dst, relation, distance) with src < dst
    struct UndEdge { int32_t s, d; int64_t rel; double dist; };
    std::vector<UndEdge> und;
    int attempts = 0;
    for (;; ++attempts) {
      if (attempts >= 1000)
        throw Error(Errc::invalid_argument,
                    "generate_synthetic: no connected graph after 1000 attempts at record " +
                        std::to_string(k));
      und.clear();
      for (int32_t a = 0; a < g.num_nodes; ++a) {
        for (int32_t b = a + 1; b < g.num_nodes; ++b) {
          const bool bonded = rng.uniform() < spec.edge_prob;
          if (spec.complete_graph) {
            const int64_t rel = bonded
                                    ? static_cast<int64_t>(rng.below(
                                          static_cast<uint64_t>(spec.num_relations)))
                                    : spec.num_relations;  // "no-bond" id
            und.push_back({a, b, rel, rng.uniform(spec.dist_lo, spec.dist_hi)});
          } else if (bonded) {
            const int64_t rel =
                static_cast<int64_t>(rng.below(static_cast<uint64_t>(spec.num_relations)));
            und.push_back({a, b, rel, rng.uniform(spec.dist_lo, spec.dist_hi)});
          }
        }
      }
      std::vector<std::pair<int32_t, int32_t>> skeleton;
      skeleton.reserve(und.size());
      for (const auto& e : und) skeleton.emplace_back(e.s, e.d);
      if (connected(g.num_nodes, skeleton)) break;
    }

    std::vector<double> xf(static_cast<size_t>(g.num_nodes * ds.header.d_x), 0.0);
    for (int64_t v = 0; v < g.num_nodes; ++v)
      xf[static_cast<size_t>(v * ds.header.d_x + types[static_cast<size_t>(v)])] = 1.0;
    g.node_features = Tensor::from({g.num_nodes, ds.header.d_x}, std::move(xf));

    const int64_t m = 2 * static_cast<int64_t>(und.size());
    std::vector<double> ef(static_cast<size_t>(m * ds.header.d_e), 0.0);
    g.edges.reserve(static_cast<size_t>(m));
    g.relation_ids.reserve(static_cast<size_t>(m));
    for (size_t e = 0; e < und.size(); ++e) {
      const auto& u = und[e];
      for (int dir = 0; dir < 2; ++dir) {
        const size_t row = 2 * e + static_cast<size_t>(dir);
        g.edges.emplace_back(dir == 0 ? u.s : u.d, dir == 0 ? u.d : u.s);
        g.relation_ids.push_back(static_cast<int32_t>(u.rel));
        ef[row * static_cast<size_t>(ds.header.d_e) + static_cast<size_t>(u.rel)] = 1.0;
        ef[row * static_cast<size_t>(ds.header.d_e) +
           static_cast<size_t>(ds.header.d_e - 1)] = u.dist;
      }
    }
    g.edge_features = Tensor::from({m, ds.header.d_e}, std::move(ef));

    if (spec.node_targets) {
      std::vector<double> nl(static_cast<size_t>(g.num_nodes), 0.0);
      for (int64_t v = 0; v < g.num_nodes; ++v)
        if (spec.formula_id == 0)
          nl[static_cast<size_t>(v)] = node_type_coefficient(types[static_cast<size_t>(v)]);
      for (const auto& u : und) {
        const double term = relation_coefficient(u.rel, spec.num_relations) / u.dist;
        nl[static_cast<size_t>(u.s)] += term;
        nl[static_cast<size_t>(u.d)] += term;
      }
      if (spec.noise_std > 0.0)
        for (auto& v : nl) v += spec.noise_std * rng.normal();
      g.node_labels = Tensor::from({g.num_nodes, 1}, std::move(nl));
    } else {
      double y = 0.0;
      for (const auto& u : und) y += relation_coefficient(u.rel, spec.num_relations) / u.dist;
      if (spec.formula_id == 0)
        for (int64_t t : types) y += node_type_coefficient(t);
      if (spec.noise_std > 0.0) y += spec.noise_std * rng.normal();
      g.graph_label = {y};
    }
    graph::require_valid(g);
    ds.graphs.push_back(std::move(g));
  }

  // whole-file target stats, for the header record
  std::vector<int64_t> all(static_cast<size_t>(count));
  std::iota(all.begin(), all.end(), 0);
  if (count > 0) {
    const auto stats = compute_target_stats(ds, all);
    ds.header.target_mean = stats.mean;
    ds.header.target_std = stats.stddev;
  } else {
    ds.header.target_mean.assign(1, 0.0);
    ds.header.target_std.assign(1, 1.0);
  }
  return ds;
}

std::vector<double> oracle_predict(const graph::Graph& g, const DatasetHeader& header) {
  const int64_t d_e = header.d_e;
  const int64_t num_rel = header.num_relations;
  const int64_t num_bond = header.edge_mode == "complete" ? num_rel - 1 : num_rel;
  double edge_term = 0.0;
  for (int64_t e = 0; e < g.num_edges(); ++e) {
    const int64_t rel = g.relation_ids[static_cast<size_t>(e)];
    const double dist =
        g.edge_features.data()[static_cast<size_t>(e * d_e + (d_e - 1))];
    // directed storage double-counts each undirected edge; halve
    edge_term += 0.5 * relation_coefficient(rel, num_bond) / dist;
  }
  double node_term = 0.0;
  if (header.formula_id == 0) {
    const int64_t d_x = g.node_dim();
    for (int64_t v = 0; v < g.num_nodes; ++v) {
      int64_t type = 0;
      for (int64_t j = 1; j < d_x; ++j)
        if (g.node_features.data()[static_cast<size_t>(v * d_x + j)] >
            g.node_features.data()[static_cast<size_t>(v * d_x + type)])
          type = j;
      node_term += node_type_coefficient(type);
    }
  }
  return {edge_term + node_term};
}

SplitIndices split_dataset(int64_t total, uint64_t seed, int64_t train_n, int64_t val_n,
                           int64_t test_n) {
  if (train_n < 0 || val_n < 0 || test_n < 0 || train_n + val_n + test_n > total)
    throw Error(Errc::invalid_argument,
                "split_dataset: requested " + std::to_string(train_n + val_n + test_n) +
                    " examples from " + std::to_string(total));
  std::vector<int64_t> idx(static_cast<size_t>(total));
  std::iota(idx.begin(), idx.end(), 0);
  SplitRng rng = SplitRng(seed).split("split");
  rng.shuffle(idx);
  SplitIndices out;
  out.train.assign(idx.begin(), idx.begin() + train_n);
  out.val.assign(idx.begin() + train_n, idx.begin() + train_n + val_n);
  out.test.assign(idx.begin() + train_n + val_n, idx.begin() + train_n + val_n + test_n);
  return out;
}

model::TargetStats compute_target_stats(const Dataset& ds, std::span<const int64_t> indices) {
  if (indices.empty())
    throw Error(Errc::invalid_argument, "compute_target_stats: empty index set");
  const bool node_task = ds.header.task == "node";
  const int64_t arity = ds.header.target_arity;
  auto for_each_row = [&](auto&& fn) {
    for (int64_t i : indices) {
      const Graph& g = ds.graphs.at(static_cast<size_t>(i));
      if (node_task) {
        for (int64_t v = 0; v < g.num_nodes; ++v)
          fn(g.node_labels.data().subspan(static_cast<size_t>(v * arity),
                                          static_cast<size_t>(arity)));
      } else {
        fn(std::span<const double>(g.graph_label));
      }
    }
  };
  std::vector<double> sum(static_cast<size_t>(arity), 0.0);
  int64_t n = 0;
  for_each_row([&](std::span<const double> row) {
    for (int64_t tgt = 0; tgt < arity; ++tgt) sum[static_cast<size_t>(tgt)] += row[static_cast<size_t>(tgt)];
    ++n;
  });
  model::TargetStats stats;
  stats.mean.resize(static_cast<size_t>(arity));
  stats.stddev.resize(static_cast<size_t>(arity));
  for (int64_t tgt = 0; tgt < arity; ++tgt)
    stats.mean[static_cast<size_t>(tgt)] = sum[static_cast<size_t>(tgt)] / static_cast<double>(n);
  std::vector<double> ss(static_cast<size_t>(arity), 0.0);
  for_each_row([&](std::span<const double> row) {
    for (int64_t tgt = 0; tgt < arity; ++tgt) {
      const double d = row[static_cast<size_t>(tgt)] - stats.mean[static_cast<size_t>(tgt)];
      ss[static_cast<size_t>(tgt)] += d * d;
    }
  });
  for (int64_t tgt = 0; tgt < arity; ++tgt) {
    const double var = ss[static_cast<size_t>(tgt)] / static_cast<double>(n);
    // degenerate (constant) targets normalize by 1e-12 floor instead of dividing by zero
    stats.stddev[static_cast<size_t>(tgt)] = std::max(std::sqrt(var), 1e-12);
  }
  return stats;
}

}  // namespace ignn::data
