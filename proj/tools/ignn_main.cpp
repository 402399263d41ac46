// Command-line front end: dataset generation, training, evaluation,
// fine-tuning, and the numeric self-checks. Every command writes only under
// its --out directory and is bit-reproducible for fixed flags.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ignn/dataset.hpp"
#include "ignn/gradcheck.hpp"
#include "ignn/infomax.hpp"
#include "ignn/model_config.hpp"
#include "ignn/param_store.hpp"
#include "ignn/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using ignn::Errc;
using ignn::Error;

namespace {

// 0 ok | 1 usage | 2 missing/unreadable file | 3 invalid data or config
// 4 gradient check failed | 5 bound violated | 6 checkpoint mismatch
// 7 training diverged
int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::io:
      return 2;
    case Errc::data:
    case Errc::invalid_argument:
      return 3;
    case Errc::mismatch:
      return 6;
    case Errc::diverged:
    case Errc::nonfinite:
      return 7;
  }
  return 3;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot open " + path);
  std::string out((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot write " + path.string());
  f << content;
  f.flush();
  if (!f) throw Error(Errc::io, "short write to " + path.string());
}

void log_epoch(const ignn::train::EpochRecord& er) {
  std::fprintf(stderr, "epoch %lld train_total=%.6g train_l0=%.6g recon=%.6g val_mae=%.6g\n",
               static_cast<long long>(er.epoch), er.train_total, er.train_l0, er.train_recon,
               er.val_mae);
}

// ---- gen-data ----

struct GenArgs {
  ignn::data::SyntheticSpec spec;
  int64_t count = 1000;
  std::string out;
};

int run_gen(const GenArgs& a) {
  const auto ds = ignn::data::generate_synthetic(a.spec, a.count);
  fs::create_directories(a.out);
  json cfg;
  cfg["command"] = "gen-data";
  cfg["count"] = a.count;
  cfg["min_nodes"] = a.spec.min_nodes;
  cfg["max_nodes"] = a.spec.max_nodes;
  cfg["edge_prob"] = a.spec.edge_prob;
  cfg["num_relations"] = a.spec.num_relations;
  cfg["dist_lo"] = a.spec.dist_lo;
  cfg["dist_hi"] = a.spec.dist_hi;
  cfg["num_node_types"] = a.spec.num_node_types;
  cfg["formula_id"] = a.spec.formula_id;
  cfg["noise_std"] = a.spec.noise_std;
  cfg["seed"] = a.spec.seed;
  cfg["complete_graph"] = a.spec.complete_graph;
  cfg["node_targets"] = a.spec.node_targets;
  write_text_file(fs::path(a.out) / "config.json", cfg.dump(2) + "\n");
  ignn::data::save_dataset((fs::path(a.out) / "dataset.bin").string(), ds);
  std::fprintf(stderr, "gen-data: wrote %lld graphs (d_x=%lld d_e=%lld)\n",
               static_cast<long long>(ds.header.count), static_cast<long long>(ds.header.d_x),
               static_cast<long long>(ds.header.d_e));
  return 0;
}

// ---- shared train/fine-tune plumbing ----

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config_path;
  std::string checkpoint;  // fine-tune only
  std::string run_id;
  ignn::train::TrainConfig cfg;
};

void fill_dims_from_header(ignn::model::ModelConfig& m, const ignn::data::DatasetHeader& h,
                           ignn::model::L0Kind l0) {
  if (m.input_dim == 0) m.input_dim = h.d_x;
  if (m.edge_dim == 0) m.edge_dim = h.d_e;
  if (m.num_relations <= 1) m.num_relations = h.num_relations;
  m.task = ignn::model::task_from_string(h.task);
  if (m.target_arity == 0 && l0 != ignn::model::L0Kind::ce) m.target_arity = h.target_arity;
}

void fill_layer_defaults(ignn::model::ModelConfig& m) {
  if (m.uses_edge_network() && m.edge_net_hidden.empty())
    m.edge_net_hidden = ignn::model::ModelConfig::default_edge_hidden(m.hidden_dim);
  if (m.has_decoder() && m.decoder_hidden.empty())
    m.decoder_hidden = ignn::model::ModelConfig::default_decoder_hidden(m.hidden_dim);
}

// metrics rows for whichever splits exist, evaluated with the best weights
std::string split_metrics_csv(const ignn::train::TrainConfig& cfg,
                              const ignn::train::TrainOutput& res,
                              const ignn::data::Dataset& ds, const std::string& run_id) {
  const int64_t total = static_cast<int64_t>(ds.graphs.size());
  const auto split = ignn::data::split_dataset(total, cfg.seed,
                                               total - cfg.val_count - cfg.test_count,
                                               cfg.val_count, cfg.test_count);
  std::string csv = ignn::train::metrics_csv_header(
      static_cast<int64_t>(res.stats.mean.size()));
  const auto add_row = [&](const char* name, std::span<const int64_t> idx) {
    if (idx.empty()) return;
    const auto rep = ignn::train::evaluate_model(cfg, res.params, res.stats, ds, idx);
    csv += ignn::train::metrics_csv_row(run_id, name, rep);
  };
  add_row("train", split.train);
  add_row("val", split.val);
  add_row("test", split.test);
  return csv;
}

void write_run_outputs(const TrainArgs& a, const ignn::train::TrainConfig& cfg,
                       const ignn::train::TrainOutput& res, const ignn::data::Dataset& ds) {
  fs::create_directories(a.out);
  write_text_file(fs::path(a.out) / "config.json",
                  json::parse(res.record.config_json).dump(2) + "\n");
  ignn::num::save_checkpoint((fs::path(a.out) / "checkpoint.bin").string(), res.params,
                             cfg.model.hash());
  write_text_file(fs::path(a.out) / "history.jsonl", res.record.to_jsonl());
  write_text_file(fs::path(a.out) / "metrics.csv", split_metrics_csv(cfg, res, ds, a.run_id));
  std::fprintf(stderr, "best epoch %lld", static_cast<long long>(res.record.best_epoch));
  if (!res.record.test_metrics.mae.empty())
    std::fprintf(stderr, ", test mae_mean=%.6g nmae=%.6g", res.record.test_metrics.mae_mean,
                 res.record.test_metrics.nmae);
  std::fprintf(stderr, "\n");
}

int run_train(TrainArgs& a) {
  const auto ds = ignn::data::load_dataset(a.data);
  fill_dims_from_header(a.cfg.model, ds.header, a.cfg.l0);
  fill_layer_defaults(a.cfg.model);
  a.cfg.model = a.cfg.model.resolved();
  if (a.run_id.empty()) a.run_id = "run-seed" + std::to_string(a.cfg.seed);
  const auto res = ignn::train::train_model(a.cfg, ds, log_epoch);
  const auto cfg = ignn::train::TrainConfig::from_json(res.record.config_json);
  write_run_outputs(a, cfg, res, ds);
  return 0;
}

int run_fine_tune(TrainArgs& a) {
  const auto ck = ignn::num::load_checkpoint(a.checkpoint);
  const auto ds = ignn::data::load_dataset(a.data);
  if (a.run_id.empty()) a.run_id = "ft-seed" + std::to_string(a.cfg.seed);
  const auto res = ignn::train::fine_tune(ck, ds, a.cfg, log_epoch);
  const auto cfg = ignn::train::TrainConfig::from_json(res.record.config_json);
  write_run_outputs(a, cfg, res, ds);
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string run_id = "eval";
  std::string split_name = "eval";
};

int run_eval(const EvalArgs& a) {
  const auto ck = ignn::num::load_checkpoint(a.checkpoint);
  const auto restored = ignn::train::restore_model(ck);
  const auto ds = ignn::data::load_dataset(a.data);
  std::vector<int64_t> all(ds.graphs.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int64_t>(i);
  const auto rep =
      ignn::train::evaluate_model(restored.cfg, restored.params, restored.stats, ds, all);

  fs::create_directories(a.out);
  json cfg;
  cfg["command"] = "eval";
  cfg["checkpoint"] = a.checkpoint;
  cfg["data"] = a.data;
  cfg["run_id"] = a.run_id;
  cfg["split"] = a.split_name;
  write_text_file(fs::path(a.out) / "config.json", cfg.dump(2) + "\n");
  std::string csv = ignn::train::metrics_csv_header(static_cast<int64_t>(rep.mae.size()));
  csv += ignn::train::metrics_csv_row(a.run_id, a.split_name, rep);
  write_text_file(fs::path(a.out) / "metrics.csv", csv);
  std::fprintf(stderr, "eval: %zu graphs, mae_mean=%.6g nmae=%.6g\n", ds.graphs.size(),
               rep.mae_mean, rep.nmae);
  return 0;
}

// ---- gradcheck ----

int run_gradcheck(uint64_t seed, int seeds, const std::string& out) {
  const auto suite = ignn::check::run_gradient_suite(seed, seeds);
  json report = json::array();
  for (const auto& c : suite.cases) {
    std::printf("%-22s max_err=%.3e coords=%lld %s\n", c.name.c_str(), c.max_error,
                static_cast<long long>(c.coords), c.pass ? "[PASS]" : "[FAIL]");
    json j;
    j["name"] = c.name;
    j["max_error"] = c.max_error;
    j["coords"] = c.coords;
    j["pass"] = c.pass;
    report.push_back(j);
  }
  std::printf("gradcheck: %s (tolerance %.1e, %d seeds)\n", suite.pass ? "PASS" : "FAIL",
              ignn::check::kGradTolerance, seeds);
  if (!out.empty()) {
    fs::create_directories(out);
    json cfg;
    cfg["command"] = "gradcheck";
    cfg["seed"] = seed;
    cfg["seeds"] = seeds;
    write_text_file(fs::path(out) / "config.json", cfg.dump(2) + "\n");
    write_text_file(fs::path(out) / "gradcheck.json", report.dump(2) + "\n");
  }
  return suite.pass ? 0 : 4;
}

// ---- bound-check ----

int run_bound_check(uint64_t seed, int trials, const std::string& out) {
  using ignn::model::DiscreteToy;
  int violations = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  double max_tight_gap = 0.0;
  json rows = json::array();
  for (int k = 0; k < trials; ++k) {
    DiscreteToy toy = ignn::model::random_toy(seed + static_cast<uint64_t>(k));
    const auto rep = ignn::model::variational_bound_check(toy);
    // any admissible q lower-bounds the exact mutual information
    const bool ok = rep.rhs_infinite || rep.gap >= -1e-12;
    if (!ok) {
      ++violations;
      std::printf("trial %d VIOLATION: I=%.12g rhs=%.12g gap=%.3e\n", k, rep.lhs, rep.rhs,
                  rep.gap);
    }
    if (!rep.rhs_infinite) min_gap = std::min(min_gap, rep.gap);

    // with q set to the true posterior the bound is tight
    DiscreteToy tight = toy;
    tight.q_table = ignn::model::true_posterior(toy);
    const auto trep = ignn::model::variational_bound_check(tight);
    max_tight_gap = std::max(max_tight_gap, std::abs(trep.gap));
    if (std::abs(trep.gap) > 1e-12) {
      ++violations;
      std::printf("trial %d TIGHTNESS VIOLATION: |gap|=%.3e\n", k, std::abs(trep.gap));
    }
    json j;
    j["trial"] = k;
    j["mi"] = rep.lhs;
    j["rhs"] = rep.rhs;
    j["gap"] = rep.gap;
    j["tight_gap"] = trep.gap;
    rows.push_back(j);
  }
  std::printf("bound-check: %d trials, min gap=%.6g, max |tight gap|=%.3e -> %s\n", trials,
              min_gap, max_tight_gap, violations == 0 ? "PASS" : "FAIL");
  if (!out.empty()) {
    fs::create_directories(out);
    json cfg;
    cfg["command"] = "bound-check";
    cfg["seed"] = seed;
    cfg["trials"] = trials;
    write_text_file(fs::path(out) / "config.json", cfg.dump(2) + "\n");
    write_text_file(fs::path(out) / "bound_check.json", rows.dump(2) + "\n");
  }
  return violations == 0 ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edge-information-maximizing graph network engine"};
  app.require_subcommand(1);

  // gen-data
  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic bond-energy dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--count", gen.count, "number of graphs");
  gen_cmd->add_option("--min-nodes", gen.spec.min_nodes);
  gen_cmd->add_option("--max-nodes", gen.spec.max_nodes);
  gen_cmd->add_option("--edge-prob", gen.spec.edge_prob);
  gen_cmd->add_option("--relations", gen.spec.num_relations, "number of bond types");
  gen_cmd->add_option("--node-types", gen.spec.num_node_types);
  gen_cmd->add_option("--dist-lo", gen.spec.dist_lo);
  gen_cmd->add_option("--dist-hi", gen.spec.dist_hi);
  gen_cmd->add_option("--formula", gen.spec.formula_id, "0: edge+node terms, 1: edge term only");
  gen_cmd->add_option("--noise-std", gen.spec.noise_std);
  gen_cmd->add_option("--seed", gen.spec.seed);
  gen_cmd->add_flag("--complete", gen.spec.complete_graph,
                    "all pairs connected, extra no-bond relation");
  gen_cmd->add_flag("--node-targets", gen.spec.node_targets, "per-node labels");

  // train / fine-tune share their option set
  TrainArgs tr, ft;
  std::string tr_scheme = "ignn", tr_l0 = "mse", tr_readout = "set2set", tr_act = "relu";
  std::string ft_scheme = "ignn", ft_l0 = "mse", ft_readout = "set2set", ft_act = "relu";
  const auto add_train_options = [](CLI::App* cmd, TrainArgs& a, std::string& scheme,
                                    std::string& l0, std::string& readout, std::string& act) {
    cmd->add_option("--data", a.data, "dataset file")->required();
    cmd->add_option("--out", a.out, "output directory")->required();
    cmd->add_option("--config", a.config_path, "TrainConfig JSON file; flags override");
    cmd->add_option("--run-id", a.run_id, "row label for metrics.csv");
    cmd->add_option("--scheme", scheme, "gcn | rgcn | mpnn | ignn");
    cmd->add_option("--hidden", a.cfg.model.hidden_dim, "node state width");
    cmd->add_option("--layers", a.cfg.model.num_layers);
    cmd->add_option("--relations", a.cfg.model.num_relations, "rgcn relation count");
    cmd->add_option("--edge-hidden", a.cfg.model.edge_net_hidden,
                    "edge network hidden widths (single 0 = linear)");
    cmd->add_option("--decoder-hidden", a.cfg.model.decoder_hidden,
                    "decoder hidden widths (single 0 = linear)");
    cmd->add_option("--s2s-steps", a.cfg.model.set2set_steps);
    cmd->add_option("--readout", readout, "sum | set2set");
    cmd->add_option("--head-hidden", a.cfg.model.head_hidden, "0 = node state width");
    cmd->add_option("--classes", a.cfg.model.target_arity,
                    "output width; required for --l0 ce");
    cmd->add_flag("--identity-embed", a.cfg.model.identity_embed);
    cmd->add_flag("--li-detach-f", a.cfg.model.li_detach_f);
    cmd->add_option("--activation", act, "relu | identity");
    cmd->add_option("--lambda", a.cfg.lambda, "auxiliary loss weight");
    cmd->add_option("--epochs", a.cfg.epochs);
    cmd->add_option("--batch", a.cfg.batch_size);
    cmd->add_option("--lr", a.cfg.lr);
    cmd->add_option("--patience", a.cfg.patience, "early-stopping patience in epochs");
    cmd->add_option("--seed", a.cfg.seed);
    cmd->add_option("--l0", l0, "mse | mae | ce");
    cmd->add_option("--val", a.cfg.val_count, "validation graphs");
    cmd->add_option("--test", a.cfg.test_count, "test graphs");
    cmd->add_flag("--ablate-distance", a.cfg.ablate_distance,
                  "zero the continuous edge-feature columns");
  };
  auto* tr_cmd = app.add_subcommand("train", "train a model from scratch");
  add_train_options(tr_cmd, tr, tr_scheme, tr_l0, tr_readout, tr_act);
  auto* ft_cmd = app.add_subcommand("fine-tune", "continue training from a checkpoint");
  add_train_options(ft_cmd, ft, ft_scheme, ft_l0, ft_readout, ft_act);
  ft_cmd->add_option("--checkpoint", ft.checkpoint, "base model checkpoint")->required();

  // eval
  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a whole dataset");
  ev_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  ev_cmd->add_option("--data", ev.data)->required();
  ev_cmd->add_option("--out", ev.out, "output directory")->required();
  ev_cmd->add_option("--run-id", ev.run_id);
  ev_cmd->add_option("--split-name", ev.split_name, "split column value in metrics.csv");

  // gradcheck
  uint64_t gc_seed = 0;
  int gc_seeds = 5;
  std::string gc_out;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("--seeds", gc_seeds, "random instantiations per case");
  gc_cmd->add_option("--out", gc_out, "optional report directory");

  // bound-check
  uint64_t bc_seed = 0;
  int bc_trials = 200;
  std::string bc_out;
  auto* bc_cmd = app.add_subcommand("bound-check",
                                    "exact-enumeration audit of the variational bound");
  bc_cmd->add_option("--seed", bc_seed);
  bc_cmd->add_option("--trials", bc_trials);
  bc_cmd->add_option("--out", bc_out, "optional report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int r = app.exit(e);
    return r == 0 ? 0 : 1;
  }

  try {
    const auto finish_train_args = [](TrainArgs& a, CLI::App* cmd, const std::string& scheme,
                                      const std::string& l0, const std::string& readout,
                                      const std::string& act) {
      if (!a.config_path.empty()) {
        ignn::train::TrainConfig base =
            ignn::train::TrainConfig::from_json(read_text_file(a.config_path));
        // flags the user actually passed override the file
        TrainArgs flags = a;
        base.model.scheme = cmd->count("--scheme") ? ignn::model::scheme_from_string(scheme)
                                                   : base.model.scheme;
        if (cmd->count("--hidden")) base.model.hidden_dim = flags.cfg.model.hidden_dim;
        if (cmd->count("--layers")) base.model.num_layers = flags.cfg.model.num_layers;
        if (cmd->count("--relations")) base.model.num_relations = flags.cfg.model.num_relations;
        if (cmd->count("--edge-hidden")) base.model.edge_net_hidden = flags.cfg.model.edge_net_hidden;
        if (cmd->count("--decoder-hidden"))
          base.model.decoder_hidden = flags.cfg.model.decoder_hidden;
        if (cmd->count("--s2s-steps")) base.model.set2set_steps = flags.cfg.model.set2set_steps;
        if (cmd->count("--readout")) base.model.readout = ignn::model::readout_from_string(readout);
        if (cmd->count("--head-hidden")) base.model.head_hidden = flags.cfg.model.head_hidden;
        if (cmd->count("--classes")) base.model.target_arity = flags.cfg.model.target_arity;
        if (cmd->count("--identity-embed")) base.model.identity_embed = true;
        if (cmd->count("--li-detach-f")) base.model.li_detach_f = true;
        if (cmd->count("--activation"))
          base.model.activation = ignn::model::activation_from_string(act);
        if (cmd->count("--lambda")) base.lambda = flags.cfg.lambda;
        if (cmd->count("--epochs")) base.epochs = flags.cfg.epochs;
        if (cmd->count("--batch")) base.batch_size = flags.cfg.batch_size;
        if (cmd->count("--lr")) base.lr = flags.cfg.lr;
        if (cmd->count("--patience")) base.patience = flags.cfg.patience;
        if (cmd->count("--seed")) base.seed = flags.cfg.seed;
        if (cmd->count("--l0")) base.l0 = ignn::model::l0_from_string(l0);
        if (cmd->count("--val")) base.val_count = flags.cfg.val_count;
        if (cmd->count("--test")) base.test_count = flags.cfg.test_count;
        if (cmd->count("--ablate-distance")) base.ablate_distance = true;
        a.cfg = base;
      } else {
        a.cfg.model.scheme = ignn::model::scheme_from_string(scheme);
        a.cfg.model.readout = ignn::model::readout_from_string(readout);
        a.cfg.model.activation = ignn::model::activation_from_string(act);
        a.cfg.l0 = ignn::model::l0_from_string(l0);
      }
      // a single 0 means "no hidden layers"
      if (a.cfg.model.edge_net_hidden == std::vector<int64_t>{0}) a.cfg.model.edge_net_hidden.clear();
      if (a.cfg.model.decoder_hidden == std::vector<int64_t>{0}) a.cfg.model.decoder_hidden.clear();
      if (a.cfg.model.target_arity == 0 && a.cfg.l0 == ignn::model::L0Kind::ce)
        throw Error(Errc::invalid_argument, "--l0 ce needs --classes");
    };

    if (gen_cmd->parsed()) return run_gen(gen);
    if (tr_cmd->parsed()) {
      tr.cfg.model.target_arity = tr_cmd->count("--classes") ? tr.cfg.model.target_arity : 0;
      finish_train_args(tr, tr_cmd, tr_scheme, tr_l0, tr_readout, tr_act);
      return run_train(tr);
    }
    if (ft_cmd->parsed()) {
      ft.cfg.model.target_arity = ft_cmd->count("--classes") ? ft.cfg.model.target_arity : 0;
      finish_train_args(ft, ft_cmd, ft_scheme, ft_l0, ft_readout, ft_act);
      return run_fine_tune(ft);
    }
    if (ev_cmd->parsed()) return run_eval(ev);
    if (gc_cmd->parsed()) return run_gradcheck(gc_seed, gc_seeds, gc_out);
    if (bc_cmd->parsed()) return run_bound_check(bc_seed, bc_trials, bc_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
