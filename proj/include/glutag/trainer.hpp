#pragma once

// Training loop, early stopping, checkpoints and clip-level prediction for
// the CTC, GMP and GAP heads.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "glutag/features.hpp"
#include "glutag/labels.hpp"
#include "glutag/metrics.hpp"
#include "glutag/model.hpp"
#include "glutag/optim.hpp"
#include "glutag/synth.hpp"

namespace glutag {

struct Example {
  std::string clip_id;
  FloatMatrix features;  // frames x bins, un-normalized log mel
  SequentialLabel tokens;
  TagSet tags;
};

struct TrainConfig {
  int max_epochs = 200;
  double learning_rate = 0.001;
  int batch_size = 8;
  int patience = 10;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
  int workers = 1;
  ModelConfig model;  // head, gating, architecture; num_classes/input_bins are set from data

  void check() const;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  int stop_epoch = 0;
  std::string stop_reason;  // "max_epochs" or "early_stop"
  int skipped_infeasible = 0;
  int skipped_updates = 0;

  /// epoch,train_loss,val_loss,seconds
  std::string to_csv() const;
};

/// Everything needed to run a trained network on raw log-mel features.
struct TrainedModel {
  ModelConfig config;
  ClassTable table;
  FeatureConfig features;
  Eigen::RowVectorXf norm_mean;
  Eigen::RowVectorXf norm_scale;  // 1 / std
  ModelParams<float> params;

  Matrix<float> normalize(const FloatMatrix& raw) const;
};

struct TrainResult {
  TrainedModel model;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Shuffled mini-batch Adam with a held-out validation split. Returns the
/// parameters of the epoch with the lowest validation loss.
TrainResult train(const std::vector<Example>& data, const ClassTable& table,
                  const FeatureConfig& features, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Mean head loss over `data` in inference mode; infeasible CTC targets skipped.
double evaluate_loss(const TrainedModel& model, const std::vector<Example>& data);

struct Prediction {
  TagSet tags;
  Eigen::VectorXd scores;  // clip score per class
  Eigen::MatrixXd trace;   // frames x output width, per-frame probabilities
  SequentialLabel decoded; // CTC head only
};

/// CTC: best-path decode; a class is tagged when its start token appears;
/// score = max over frames of its start/end probabilities. GMP/GAP: pooled
/// clip probability, tagged iff >= 0.5.
Prediction predict_tags(const FloatMatrix& raw_features, const TrainedModel& model);

std::vector<EvalRecord> evaluate_records(const TrainedModel& model,
                                         const std::vector<Example>& data);

/// Column names for Prediction::trace.
std::vector<std::string> trace_columns(const TrainedModel& model);

/// Log-mel features plus labels for every clip of a split. When
/// `features_dir` is non-empty, <clip_id>.fmat files are read from it
/// instead of computing features from the WAVs.
std::vector<Example> load_examples(const DatasetSplit& split, const FeatureConfig& features,
                                   const std::string& features_dir = "", int workers = 1);

/// Checkpoint directory: manifest.txt plus one FMAT file per array.
void save_checkpoint(const std::string& dir, const TrainedModel& model);
TrainedModel load_checkpoint(const std::string& dir);

}  // namespace glutag
