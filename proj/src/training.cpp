#include "ignn/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ignn/rng.hpp"

namespace ignn::train {

using graph::Graph;
using graph::GraphBatch;
using model::L0Kind;
using model::MetricsReport;
using model::ModelConfig;
using model::TargetStats;


using num::ParameterStore;
using num::Tape;
using num::Tensor;
using nlohmann::json;

void TrainConfig::validate(bool allow_zero_epochs) const {
  auto fail = [](const std::string& msg) {
    throw Error(Errc::invalid_argument, "train config: " + msg);
  };
  if (lambda < 0.0) fail("lambda must be nonnegative");
  if (epochs < (allow_zero_epochs ? 0 : 1)) fail("epochs must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (lr < 0.0) fail("lr must be nonnegative");
  if (patience < 1) fail("patience must be at least 1");
  if (val_count < 0 || test_count < 0) fail("split counts must be nonnegative");
  model.validate();
}

std::string TrainConfig::to_json() const {
  json j;
  j["model"] = json::parse(model.to_json());
  j["lambda"] = lambda;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["patience"] = patience;
  j["seed"] = seed;
  j["l0"] = model::to_string(l0);
  j["val_count"] = val_count;
  j["test_count"] = test_count;
  j["ablate_distance"] = ablate_distance;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::data, std::string("train config JSON: ") + e.what());
  }
  TrainConfig c;
  try {
    c.model = ModelConfig::from_json(j.at("model").dump());
    c.lambda = j.at("lambda").get<double>();
    c.epochs = j.at("epochs").get<int64_t>();
    c.batch_size = j.at("batch_size").get<int64_t>();
    c.lr = j.at("lr").get<double>();
    c.patience = j.at("patience").get<int64_t>();
    c.seed = j.at("seed").get<uint64_t>();
    c.l0 = model::l0_from_string(j.at("l0").get<std::string>());
    c.val_count = j.at("val_count").get<int64_t>();
    c.test_count = j.at("test_count").get<int64_t>();
    c.ablate_distance = j.at("ablate_distance").get<bool>();
  } catch (const json::exception& e) {
    throw Error(Errc::data, std::string("train config JSON: ") + e.what());
  }
  return c;
}

uint64_t TrainConfig::hash() const { return model::fnv1a64(to_json()); }

std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

namespace {

json metrics_to_json(const MetricsReport& rep) {
  json j;
  j["mae"] = rep.mae;
  j["mae_mean"] = rep.mae_mean;
  j["nmae"] = rep.nmae;
  json r = json::array();
  for (const auto& p : rep.pearson) {
    if (p)
      r.push_back(*p);
    else
      r.push_back(nullptr);
  }
  j["pearson"] = r;
  return j;
}

}  // namespace

std::string RunRecord::to_jsonl() const {
  std::string out;
  {
    json j;
    j["config"] = json::parse(config_json);
    out += j.dump();
    out += "\n";
  }
  for (const auto& e : epochs) {
    json j;
    j["epoch"] = e.epoch;
    j["train_total"] = e.train_total;
    j["train_l0"] = e.train_l0;
    j["train_mean_li"] = e.train_mean_li;
    j["train_recon"] = e.train_recon;
    j["val_mae"] = e.val_mae;
    j["val_nmae"] = e.val_nmae;
    out += j.dump();
    out += "\n";
  }
  json j;
  j["best_epoch"] = best_epoch;
  j["recon_init"] = recon_init;
  j["recon_best"] = recon_best;
  j["test"] = metrics_to_json(test_metrics);
  out += j.dump();
  out += "\n";
  return out;
}

std::string metrics_csv_header(int64_t target_arity) {
  std::string h = "run_id,split";
  for (int64_t t = 0; t < target_arity; ++t) h += ",mae_" + std::to_string(t);
  h += ",mae_mean,nmae";
  for (int64_t t = 0; t < target_arity; ++t) h += ",pearson_" + std::to_string(t);
  h += "\n";
  return h;
}

std::string metrics_csv_row(const std::string& run_id, const std::string& split,
                            const MetricsReport& rep) {
  std::string row = run_id + "," + split;
  for (double v : rep.mae) row += "," + format_double(v);
  row += "," + format_double(rep.mae_mean) + "," + format_double(rep.nmae);
  for (const auto& p : rep.pearson) row += "," + (p ? format_double(*p) : std::string("na"));
  row += "\n";
  return row;
}

namespace {

void check_dataset_compatible(const TrainConfig& cfg, const ModelConfig& mcfg,
                              const data::Dataset& ds) {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_argument, msg); };
  if (mcfg.input_dim != ds.header.d_x)
    fail("model input_dim " + std::to_string(mcfg.input_dim) + " does not match dataset d_x " +
         std::to_string(ds.header.d_x));
  if ((mcfg.uses_edge_network() || mcfg.has_decoder()) && mcfg.edge_dim != ds.header.d_e)
    fail("model edge_dim " + std::to_string(mcfg.edge_dim) + " does not match dataset d_e " +
         std::to_string(ds.header.d_e));
  if (model::to_string(mcfg.task) != ds.header.task)
    fail("model task '" + model::to_string(mcfg.task) + "' does not match dataset task '" +
         ds.header.task + "'");
  if (mcfg.scheme == model::Scheme::rgcn && mcfg.num_relations != ds.header.num_relations)
    fail("rgcn num_relations " + std::to_string(mcfg.num_relations) +
         " does not match dataset " + std::to_string(ds.header.num_relations));
  if (cfg.l0 == L0Kind::ce) {
    if (ds.header.target_arity != 1) fail("ce expects a single class-index target column");
  } else if (mcfg.target_arity != ds.header.target_arity) {
    fail("model target_arity " + std::to_string(mcfg.target_arity) +
         " does not match dataset " + std::to_string(ds.header.target_arity));
  }
}

// Feature-side transform only; labels stay in original units.
std::vector<Graph> prepare_features(const TrainConfig& cfg, const data::Dataset& ds) {
  std::vector<Graph> out(ds.graphs.begin(), ds.graphs.end());
  if (!cfg.ablate_distance) return out;
  const int64_t d_e = ds.header.d_e;
  const int64_t first_cont = ds.header.num_relations;  // one-hot block, then continuous tail
  for (auto& g : out) {
    if (!g.edge_features.defined() || g.edge_features.numel() == 0) continue;
    std::vector<double> vals(g.edge_features.data().begin(), g.edge_features.data().end());
    const int64_t m = g.edge_features.dim(0);
    for (int64_t e = 0; e < m; ++e)
      for (int64_t j = first_cont; j < d_e; ++j) vals[static_cast<size_t>(e * d_e + j)] = 0.0;
    g.edge_features = Tensor::from({m, d_e}, std::move(vals));
  }
  return out;
}

Graph with_normalized_labels(const Graph& g, const TargetStats& stats, bool node_task) {
  Graph out = g;
  if (node_task) {
    const int64_t arity = g.node_labels.dim(1);
    std::vector<double> vals(g.node_labels.data().begin(), g.node_labels.data().end());
    for (int64_t v = 0; v < g.num_nodes; ++v)
      for (int64_t t = 0; t < arity; ++t)
        vals[static_cast<size_t>(v * arity + t)] =
            (vals[static_cast<size_t>(v * arity + t)] - stats.mean[static_cast<size_t>(t)]) /
            stats.stddev[static_cast<size_t>(t)];
    out.node_labels = Tensor::from({g.num_nodes, arity}, std::move(vals));
  } else {
    out.graph_label = g.graph_label;
    for (size_t t = 0; t < out.graph_label.size(); ++t)
      out.graph_label[t] = (out.graph_label[t] - stats.mean[t]) / stats.stddev[t];
  }
  return out;
}

TargetStats identity_stats(int64_t arity) {
  TargetStats s;
  s.mean.assign(static_cast<size_t>(arity), 0.0);
  s.stddev.assign(static_cast<size_t>(arity), 1.0);
  return s;
}

MetricsReport eval_prepared(const TrainConfig& cfg, const ModelConfig& mcfg,
                            const ParameterStore& params, const TargetStats& stats,
                            const std::vector<Graph>& prepared,
                            std::span<const int64_t> indices) {
  if (indices.empty())
    throw Error(Errc::invalid_argument, "evaluate: empty index set");
  const bool node_task = mcfg.task == model::TaskKind::node;
  const bool classify = cfg.l0 == L0Kind::ce;
  std::vector<std::vector<double>> preds, truths;
  constexpr int64_t kChunk = 256;
  for (size_t start = 0; start < indices.size(); start += kChunk) {
    const size_t end = std::min(indices.size(), start + kChunk);
    std::vector<Graph> gs;
    gs.reserve(end - start);
    for (size_t i = start; i < end; ++i)
      gs.push_back(prepared.at(static_cast<size_t>(indices[i])));
    const GraphBatch b = graph::batch_graphs(gs);
    Tape tape;
    tape.set_recording(false);
    const auto fwd = model::model_forward(tape, mcfg, params, b);
    const Tensor& pred = fwd.prediction;
    const int64_t rows = pred.dim(0);
    const int64_t width = pred.dim(1);
    const Tensor& truth_t = node_task ? b.node_labels : b.graph_labels;
    for (int64_t r = 0; r < rows; ++r) {
      std::vector<double> prow, trow;
      if (classify) {
        int64_t best = 0;
        for (int64_t j = 1; j < width; ++j)
          if (pred.data()[static_cast<size_t>(r * width + j)] >
              pred.data()[static_cast<size_t>(r * width + best)])
            best = j;
        prow.push_back(static_cast<double>(best));
        trow.push_back(truth_t.data()[static_cast<size_t>(r)]);
      } else {
        for (int64_t j = 0; j < width; ++j) {
          const double norm = pred.data()[static_cast<size_t>(r * width + j)];
          prow.push_back(norm * stats.stddev[static_cast<size_t>(j)] +
                         stats.mean[static_cast<size_t>(j)]);
          trow.push_back(truth_t.data()[static_cast<size_t>(r * width + j)]);
        }
      }
      preds.push_back(std::move(prow));
      truths.push_back(std::move(trow));
    }
  }
  return model::compute_metrics(preds, truths, stats);
}

double mean_recon_prepared(const ModelConfig& mcfg, const ParameterStore& params,
                           const std::vector<Graph>& prepared,
                           std::span<const int64_t> indices) {
  double total_sq = 0.0;
  int64_t total_edges = 0;
  constexpr int64_t kChunk = 256;
  for (size_t start = 0; start < indices.size(); start += kChunk) {
    const size_t end = std::min(indices.size(), start + kChunk);
    std::vector<Graph> gs;
    gs.reserve(end - start);
    for (size_t i = start; i < end; ++i)
      gs.push_back(prepared.at(static_cast<size_t>(indices[i])));
    const GraphBatch b = graph::batch_graphs(gs);
    Tape tape;
    tape.set_recording(false);
    const auto pr = model::propagate(tape, mcfg, params, b);
    const auto li = model::li_loss(tape, mcfg, params, pr.edge_transforms, b.edge_features, 1.0);
    for (double v : li.per_edge_sq_err) total_sq += v;
    total_edges += b.num_edges;
  }
  return total_edges > 0 ? total_sq / static_cast<double>(total_edges) : 0.0;
}

struct LoopResult {
  RunRecord record;
  std::map<std::string, std::vector<double>> best_values;
};

// The shared train/fine-tune loop; `params` enters initialized and leaves
// holding the best-epoch values.
LoopResult run_training_loop(const TrainConfig& cfg, const ModelConfig& mcfg,
                             ParameterStore& params, const TargetStats& stats,
                             const std::vector<Graph>& prepared,
                             const data::SplitIndices& split,
                             const EpochCallback& on_epoch) {
  const auto t_start = std::chrono::steady_clock::now();
  const bool node_task = mcfg.task == model::TaskKind::node;
  const bool normalize = cfg.l0 != L0Kind::ce;
  const bool use_li = mcfg.has_decoder();

  LoopResult out;
  out.record.config_json = cfg.to_json();
  out.record.recon_init =
      use_li ? mean_recon_prepared(mcfg, params, prepared, split.train) : 0.0;

  num::Adam adam(num::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  const SplitRng shuffle_master = SplitRng(cfg.seed).split("shuffle");

  double best_val = std::numeric_limits<double>::infinity();
  int64_t since_best = 0;
  out.record.best_epoch = -1;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order(split.train.begin(), split.train.end());
    shuffle_master.split(static_cast<uint64_t>(epoch)).shuffle(order);

    double sum_total = 0.0, sum_l0 = 0.0, sum_li = 0.0, sum_recon = 0.0;
    int64_t sum_examples = 0, sum_edges = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Graph> gs;
      gs.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        const Graph& g = prepared.at(static_cast<size_t>(order[i]));
        gs.push_back(normalize ? with_normalized_labels(g, stats, node_task) : g);
      }
      const int64_t batch_index = static_cast<int64_t>(start / cfg.batch_size);
      const std::string where =
          "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index);
      try {
        const GraphBatch b = graph::batch_graphs(gs);
        Tape tape;
        auto fwd = model::model_forward(tape, mcfg, params, b);
        model::LiResult li;
        if (use_li)
          li = model::li_loss(tape, mcfg, params, fwd.edge_transforms, b.edge_features,
                              cfg.lambda);
        const Tensor& target = node_task ? b.node_labels : b.graph_labels;
        auto obj = node_task
                       ? model::node_objective(tape, cfg.l0, fwd.prediction, target,
                                               use_li ? &li : nullptr, b)
                       : model::graph_objective(tape, cfg.l0, fwd.prediction, target,
                                                use_li ? &li : nullptr, b);
        if (!std::isfinite(obj.breakdown.total))
          throw Error(Errc::diverged, "non-finite training loss");
        tape.backward(obj.total);
        adam.step(params);

        const int64_t examples = node_task ? b.num_nodes : b.num_graphs;
        sum_total += obj.breakdown.total * static_cast<double>(examples);
        sum_l0 += obj.breakdown.l0 * static_cast<double>(examples);
        sum_li += obj.breakdown.mean_li * static_cast<double>(b.num_edges);
        sum_recon += obj.breakdown.recon_mse * static_cast<double>(b.num_edges);
        sum_examples += examples;
        sum_edges += b.num_edges;
      } catch (const Error& e) {
        if (e.code() == Errc::diverged || e.code() == Errc::nonfinite)
          throw Error(Errc::diverged, "training diverged at " + where + ": " + e.what());
        throw;
      }
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_total = sum_examples ? sum_total / static_cast<double>(sum_examples) : 0.0;
    er.train_l0 = sum_examples ? sum_l0 / static_cast<double>(sum_examples) : 0.0;
    er.train_mean_li = sum_edges ? sum_li / static_cast<double>(sum_edges) : 0.0;
    er.train_recon = sum_edges ? sum_recon / static_cast<double>(sum_edges) : 0.0;

    if (!split.val.empty()) {
      const MetricsReport val = eval_prepared(cfg, mcfg, params, stats, prepared, split.val);
      er.val_mae = val.mae_mean;
      er.val_nmae = val.nmae;
      if (er.val_mae < best_val) {
        best_val = er.val_mae;
        out.record.best_epoch = epoch;
        out.best_values = params.snapshot_values();
        since_best = 0;
      } else {
        ++since_best;
      }
      out.record.epochs.push_back(er);
      if (on_epoch) on_epoch(er);
      if (since_best >= cfg.patience) break;
    } else {
      out.record.epochs.push_back(er);
      if (on_epoch) on_epoch(er);
    }
  }

  if (out.record.best_epoch < 0) {
    // no validation split (or zero epochs): the final weights are the model
    out.record.best_epoch = static_cast<int64_t>(out.record.epochs.size()) - 1;
    out.best_values = params.snapshot_values();
  }
  params.restore_values(out.best_values);

  if (!split.test.empty())
    out.record.test_metrics = eval_prepared(cfg, mcfg, params, stats, prepared, split.test);
  out.record.recon_best =
      use_li ? mean_recon_prepared(mcfg, params, prepared, split.train) : 0.0;
  out.record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

void attach_extras(ParameterStore& params, const TrainConfig& cfg, const ModelConfig& mcfg,
                   const TargetStats& stats) {
  params.extras["target_mean"] = stats.mean;
  params.extras["target_std"] = stats.stddev;
  params.text_extras["model_config"] = mcfg.to_json();
  params.text_extras["train_config"] = cfg.to_json();
}

}  // namespace

TrainOutput train_model(const TrainConfig& raw_cfg, const data::Dataset& ds,
                        const EpochCallback& on_epoch) {
  TrainConfig cfg = raw_cfg;
  cfg.model = cfg.model.resolved();
  cfg.validate();
  const ModelConfig mcfg = cfg.model;
  check_dataset_compatible(cfg, mcfg, ds);

  const int64_t total = static_cast<int64_t>(ds.graphs.size());
  const int64_t train_n = total - cfg.val_count - cfg.test_count;
  if (train_n <= 0)
    throw Error(Errc::invalid_argument, "train config: no graphs left for training");
  const auto split = data::split_dataset(total, cfg.seed, train_n, cfg.val_count, cfg.test_count);

  const TargetStats stats = cfg.l0 == L0Kind::ce
                                ? identity_stats(ds.header.target_arity)
                                : data::compute_target_stats(ds, split.train);
  const auto prepared = prepare_features(cfg, ds);

  TrainOutput out;
  model::build_params(out.params, mcfg);
  model::init_params(out.params, mcfg, cfg.seed);

  auto loop = run_training_loop(cfg, mcfg, out.params, stats, prepared, split, on_epoch);
  out.record = std::move(loop.record);
  out.stats = stats;
  attach_extras(out.params, cfg, mcfg, stats);
  return out;
}

RestoredModel restore_model(const num::LoadedCheckpoint& ck) {
  auto it = ck.text_extras.find("train_config");
  if (it == ck.text_extras.end())
    throw Error(Errc::data, "checkpoint does not carry a train_config record");
  RestoredModel out;
  out.cfg = TrainConfig::from_json(it->second);
  out.cfg.model = out.cfg.model.resolved();
  if (out.cfg.model.hash() != ck.config_hash)
    throw Error(Errc::mismatch,
                "checkpoint config hash does not match its stored model configuration");
  model::build_params(out.params, out.cfg.model);
  num::restore_from_checkpoint(out.params, ck);
  const auto mean_it = ck.extras.find("target_mean");
  const auto std_it = ck.extras.find("target_std");
  if (mean_it == ck.extras.end() || std_it == ck.extras.end())
    throw Error(Errc::data, "checkpoint does not carry target statistics");
  out.stats.mean = mean_it->second;
  out.stats.stddev = std_it->second;
  return out;
}

TrainOutput fine_tune(const num::LoadedCheckpoint& ck, const data::Dataset& ds,
                      TrainConfig cfg, const EpochCallback& on_epoch) {
  RestoredModel base = restore_model(ck);
  // architecture, loss kind, and featurization all follow the base run
  cfg.model = base.cfg.model;
  cfg.l0 = base.cfg.l0;
  cfg.ablate_distance = base.cfg.ablate_distance;
  cfg.validate(/*allow_zero_epochs=*/true);
  const ModelConfig mcfg = cfg.model;
  check_dataset_compatible(cfg, mcfg, ds);

  const int64_t total = static_cast<int64_t>(ds.graphs.size());
  const int64_t train_n = total - cfg.val_count - cfg.test_count;
  if (train_n <= 0)
    throw Error(Errc::invalid_argument, "fine-tune: no graphs left for training");
  const auto split = data::split_dataset(total, cfg.seed, train_n, cfg.val_count, cfg.test_count);
  const auto prepared = prepare_features(cfg, ds);

  TrainOutput out;
  model::build_params(out.params, mcfg);
  num::restore_from_checkpoint(out.params, ck);
  out.params.extras.clear();
  out.params.text_extras.clear();

  auto loop = run_training_loop(cfg, mcfg, out.params, base.stats, prepared, split, on_epoch);
  out.record = std::move(loop.record);
  out.stats = base.stats;
  attach_extras(out.params, cfg, mcfg, base.stats);
  return out;
}

MetricsReport evaluate_model(const TrainConfig& cfg, const ParameterStore& params,
                             const TargetStats& stats, const data::Dataset& ds,
                             std::span<const int64_t> indices) {
  const ModelConfig mcfg = cfg.model.resolved();
  check_dataset_compatible(cfg, mcfg, ds);
  const auto prepared = prepare_features(cfg, ds);
  return eval_prepared(cfg, mcfg, params, stats, prepared, indices);
}

double mean_reconstruction_error(const TrainConfig& cfg, const ParameterStore& params,
                                 const data::Dataset& ds, std::span<const int64_t> indices) {
  const ModelConfig mcfg = cfg.model.resolved();
  if (!mcfg.has_decoder())
    throw Error(Errc::invalid_argument, "reconstruction error needs an ignn model");
  const auto prepared = prepare_features(cfg, ds);
  return mean_recon_prepared(mcfg, params, prepared, indices);
}

}  // namespace ignn::train
