#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepvo/dataset.hpp"
#include "deepvo/fastdet.hpp"
#include "deepvo/net.hpp"

namespace deepvo {

/// Milliseconds per image pair, measured around the forward pass only.
struct LatencyStats {
  std::size_t pairs = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;

  static LatencyStats from_samples(std::span<const double> ms);
};

/// Everything inference needs from a checkpoint.
struct LoadedModel {
  NetConfig net;
  NormStats norm;
  LabelScaling scaling;
  FastConfig fast;
  std::string id;
  std::unique_ptr<ModelGraph<float>> graph;
};

/// Throws CheckpointMissingStats when the checkpoint has no normalization statistics.
LoadedModel load_model(const std::filesystem::path& ckpt);

struct SequenceInference {
  std::vector<DeltaPose> deltas;
  std::vector<double> latency_ms;
};

/// Resizes each raw frame to the network input, appends the FAST channel for the
/// 4-channel variant, normalizes, and predicts one delta per consecutive pair.
SequenceInference infer_sequence(ModelGraph<float>& g, std::span<const Raster> frames, const NormStats& norm,
                                 const LabelScaling& scaling = {}, const FastConfig& fast = {});
SequenceInference infer_sequence(LoadedModel& model, std::span<const Raster> frames);

/// Frames of a sequence directory: `image/`, `image_2/`, or the directory itself.
std::vector<Raster> load_sequence_frames(const std::filesystem::path& dir);

struct ReportOptions {
  std::optional<std::filesystem::path> loss_csv;  // copied through and plotted
  std::optional<LatencyStats> latency;
  std::string checkpoint_id;
  std::string sequence_id;
};

struct TrajectoryReport {
  std::vector<PlanarState> predicted;
  std::vector<PlanarState> ground_truth;
  std::vector<double> deviation;
  std::optional<LatencyStats> latency;
  std::string checkpoint_id;
  std::string sequence_id;
};

/// Integrates predicted and ground-truth deltas from the first ground-truth pose and
/// writes trajectory.csv, ground_truth.csv, deviation.csv, trajectory.svg, deviation.svg,
/// and, when given, loss.csv/loss.svg and latency.txt. Output is a pure function of inputs.
TrajectoryReport report(std::span<const DeltaPose> predicted, std::span<const PoseMatrix> ground_truth,
                        const std::filesystem::path& out_dir, const ReportOptions& opts = {});

}  // namespace deepvo
