#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ignn/adam.hpp"
#include "ignn/dataset.hpp"
#include "ignn/model.hpp"
#include "ignn/objectives.hpp"

namespace ignn::train {

struct TrainConfig {
  model::ModelConfig model;
  double lambda = 1.0;
  int64_t epochs = 300;
  int64_t batch_size = 32;
  double lr = 1e-3;
  int64_t patience = 30;
  uint64_t seed = 0;
  model::L0Kind l0 = model::L0Kind::mse;
  int64_t val_count = 0;
  int64_t test_count = 0;
  bool ablate_distance = false;  // zero the continuous edge-feature columns

  void validate(bool allow_zero_epochs = false) const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  uint64_t hash() const;
};

struct EpochRecord {
  int64_t epoch = 0;
  double train_total = 0.0;    // batch totals, weighted by examples
  double train_l0 = 0.0;
  double train_mean_li = 0.0;  // weighted by edges
  double train_recon = 0.0;    // weighted by edges
  double val_mae = 0.0;
  double val_nmae = 0.0;
};

struct RunRecord {
  std::string config_json;
  std::vector<EpochRecord> epochs;
  int64_t best_epoch = -1;
  model::MetricsReport test_metrics;
  double recon_init = 0.0;  // mean |e - g(f(e))|^2 on the training split, fresh weights
  double recon_best = 0.0;  // same quantity with the best-epoch weights
  double wall_seconds = 0.0;  // in-memory only; serialization skips it on purpose

  std::string to_jsonl() const;  // deterministic line-delimited form
};

struct TrainOutput {
  RunRecord record;
  num::ParameterStore params;  // best-epoch values plus stats/config extras
  model::TargetStats stats;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainOutput train_model(const TrainConfig& cfg, const data::Dataset& ds,
                        const EpochCallback& on_epoch = {});

// Continues from checkpoint parameters with a fresh optimizer. The model
// architecture and the target normalization both come from the checkpoint:
// keeping the original stats makes a 0-epoch fine-tune equal a plain
// evaluation.
TrainOutput fine_tune(const num::LoadedCheckpoint& ck, const data::Dataset& ds,
                      TrainConfig cfg, const EpochCallback& on_epoch = {});

model::MetricsReport evaluate_model(const TrainConfig& cfg, const num::ParameterStore& params,
                                    const model::TargetStats& stats, const data::Dataset& ds,
                                    std::span<const int64_t> indices);

// Mean squared reconstruction error of the decoder over the indexed graphs.
double mean_reconstruction_error(const TrainConfig& cfg, const num::ParameterStore& params,
                                 const data::Dataset& ds, std::span<const int64_t> indices);

// Checkpoint plumbing shared by the CLI commands.
struct RestoredModel {
  TrainConfig cfg;          // the run configuration stored in the checkpoint
  num::ParameterStore params;
  model::TargetStats stats;
};
RestoredModel restore_model(const num::LoadedCheckpoint& ck);

// Flat CSV: run id, split, per-target MAE, mean MAE, nMAE, per-target R.
std::string metrics_csv_header(int64_t target_arity);
std::string metrics_csv_row(const std::string& run_id, const std::string& split,
                            const model::MetricsReport& rep);

std::string format_double(double v);  // shortest round-trip decimal form

}  // namespace ignn::train
