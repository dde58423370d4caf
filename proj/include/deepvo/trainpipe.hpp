#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepvo/dataset.hpp"
#include "deepvo/net.hpp"
#include "deepvo/nn/sgd.hpp"

namespace deepvo {

enum class PresetName { UnknownEnv, KnownEnv80, KnownEnv50, FastPrior, PretrainedHead };
std::string_view to_string(PresetName p);
PresetName parse_preset_name(std::string_view name);

struct ExperimentPreset {
  PresetName name = PresetName::UnknownEnv;
  SplitSpec split;
  NetVariant variant = NetVariant::TwoStreamRgb;
  long iterations = 5000;
  long test_interval = 100;

  /// Holdout presets default to the KITTI 00-06 / 07-10 assignment; random presets use `seed`.
  static ExperimentPreset make(PresetName name, std::uint64_t seed = 0);
  /// FastPrior requires the 4-channel variant, PretrainedHead the activation head.
  void validate() const;
};

struct LossRecord {
  long iteration = 0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
  /// Full training-set loss with dropout off, when the run tracks it.
  std::optional<double> train_eval_loss;
};

class LossLog {
 public:
  /// Iterations must be strictly increasing.
  void append(const LossRecord& r);
  const std::vector<LossRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  /// Drops records at or after `iteration`.
  void truncate(long iteration);
  std::optional<double> first_test_loss() const;
  std::optional<double> last_test_loss() const;

  /// Columns `iter,train_loss,test_loss,train_eval_loss`; absent values are empty fields.
  void write_csv(const std::filesystem::path& path) const;
  static LossLog read_csv(const std::filesystem::path& path);

 private:
  std::vector<LossRecord> records_;
};

struct TrainOptions {
  NetConfig net;
  nn::SgdConfig sgd;
  int batch_size = 16;
  int eval_batch_size = 16;
  std::uint64_t seed = 1;
  long iterations = 5000;
  long test_interval = 100;
  long checkpoint_interval = 0;  // 0 writes only the final checkpoint
  bool standardize_labels = false;
  /// Stops at an evaluation point once the full training-set loss is below this value.
  std::optional<double> stop_below_train_loss;
  /// Records the full training-set loss at every evaluation point.
  bool track_train_eval = false;
  std::string preset = "custom";
  /// Copied into checkpoint metadata (e.g. the FAST settings used in preprocessing).
  KeyValues extra_metadata;
  std::filesystem::path out_dir;  // empty: no files written
};

struct TrainResult {
  LossLog log;
  long iterations_run = 0;  // parameter updates applied, counting resumed ones
  std::optional<double> final_test_loss;
  std::optional<double> final_train_eval_loss;
  std::filesystem::path checkpoint;
};

/// Owns the graph, optimizer state, and statistics for one run. Batch order and dropout
/// masks depend only on (seed, iteration), so a resumed run replays the same stream.
class Trainer {
 public:
  Trainer(TrainOptions opts, const PairDataset& train, const PairDataset* test);
  /// Continues from a checkpoint written by a previous run over the same data.
  static Trainer resume(const std::filesystem::path& ckpt, TrainOptions opts, const PairDataset& train,
                        const PairDataset* test);

  /// Trains until `opts.iterations` updates or the early-stop bound.
  TrainResult run();
  /// Applies one update; returns the batch loss.
  double step();

  long iteration() const { return iteration_; }
  ModelGraph<float>& graph() { return graph_; }
  const NormStats& norm() const { return norm_; }
  const LabelScaling& scaling() const { return scaling_; }
  const TrainOptions& options() const { return opts_; }

  nn::Checkpoint make_checkpoint();
  std::filesystem::path save(const std::filesystem::path& path);

 private:
  Trainer(TrainOptions opts, const PairDataset& train, const PairDataset* test, NormStats norm,
          LabelScaling scaling);
  std::vector<std::size_t> batch_indices(long iteration);
  double batch_loss(long iteration, bool update);

  TrainOptions opts_;
  const PairDataset* train_;
  const PairDataset* test_;
  NormStats norm_;
  LabelScaling scaling_;
  ModelGraph<float> graph_;
  nn::SgdState<float> sgd_state_;
  long iteration_ = 0;
  LossLog log_;
  long cached_epoch_ = -1;
  std::vector<std::size_t> epoch_order_;
};

/// Mean per-sample euclidean loss in target units over all of `data`, dropout off.
/// Batches are weighted by size, so the result does not depend on `batch_size`.
double evaluate_loss(ModelGraph<float>& g, const PairDataset& data, const NormStats& norm,
                     const LabelScaling& scaling, int batch_size = 16);

/// Predicted deltas (physical units) for every item of `data`, dropout off.
std::vector<DeltaPose> predict(ModelGraph<float>& g, const PairDataset& data, const NormStats& norm,
                               const LabelScaling& scaling, int batch_size = 16);

/// Seeded 64-bit mix used for per-epoch and per-iteration streams.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace deepvo
