#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "deepvo/fastdet.hpp"
#include "deepvo/ingest.hpp"
#include "deepvo/keyvalue.hpp"
#include "deepvo/nn/checkpoint.hpp"
#include "deepvo/nn/tensor.hpp"

namespace deepvo {

/// Indexed (input_a, input_b, label) triples. Inputs are produced in "unit" scale
/// (8-bit pixels divided by 255, activations as stored); per-channel normalization is
/// applied at batch assembly.
class PairDataset {
 public:
  virtual ~PairDataset() = default;
  virtual std::size_t size() const = 0;
  /// (C, H, W) of one input.
  virtual nn::Shape input_shape() const = 0;
  virtual void load_inputs(std::size_t i, float* a, float* b) const = 0;
  virtual DeltaPose label(std::size_t i) const = 0;
  virtual SplitKey key(std::size_t i) const = 0;
};

class RasterPairs final : public PairDataset {
 public:
  explicit RasterPairs(std::vector<Sample> samples);

  std::size_t size() const override { return samples_.size(); }
  nn::Shape input_shape() const override;
  void load_inputs(std::size_t i, float* a, float* b) const override;
  DeltaPose label(std::size_t i) const override { return samples_[i].label; }
  SplitKey key(std::size_t i) const override { return {samples_[i].seq_id, samples_[i].frame_idx}; }

  const std::vector<Sample>& samples() const { return samples_; }

 private:
  std::vector<Sample> samples_;
};

/// Externally computed per-frame activation tensors (C, H, W), paired consecutively.
class ActivationPairs final : public PairDataset {
 public:
  ActivationPairs() = default;
  /// Adds one sequence: activations[i] pairs with activations[i+1] under deltas[i].
  void add_sequence(const std::string& seq_id, std::vector<nn::Tensor<float>> activations,
                    std::span<const DeltaPose> deltas);

  std::size_t size() const override { return items_.size(); }
  nn::Shape input_shape() const override;
  void load_inputs(std::size_t i, float* a, float* b) const override;
  DeltaPose label(std::size_t i) const override { return items_[i].label; }
  SplitKey key(std::size_t i) const override { return items_[i].key; }

 private:
  struct Item {
    std::shared_ptr<const nn::Tensor<float>> a;
    std::shared_ptr<const nn::Tensor<float>> b;
    DeltaPose label;
    SplitKey key;
  };
  std::vector<Item> items_;
};

/// Read-only view of selected items of another dataset.
class SubsetDataset final : public PairDataset {
 public:
  SubsetDataset(const PairDataset& base, std::vector<std::size_t> indices)
      : base_(&base), indices_(std::move(indices)) {}

  std::size_t size() const override { return indices_.size(); }
  nn::Shape input_shape() const override { return base_->input_shape(); }
  void load_inputs(std::size_t i, float* a, float* b) const override { base_->load_inputs(indices_[i], a, b); }
  DeltaPose label(std::size_t i) const override { return base_->label(indices_[i]); }
  SplitKey key(std::size_t i) const override { return base_->key(indices_[i]); }

 private:
  const PairDataset* base_;
  std::vector<std::size_t> indices_;
};

std::pair<SubsetDataset, SubsetDataset> split_dataset(const PairDataset& data, const SplitSpec& spec);

/// Positions of the given keys in `data`; throws UnknownSequence for keys it lacks.
std::vector<std::size_t> indices_of(const PairDataset& data, std::span<const SplitKey> keys);

/// Per-channel mean/std of unit-scale inputs over both members of every pair.
NormStats compute_norm_stats(const PairDataset& data);

/// Optional standardization of (dx, dz, dtheta) targets.
struct LabelScaling {
  bool enabled = false;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};

  static LabelScaling fit(const PairDataset& data);
  std::array<double, 3> to_target(const DeltaPose& d) const;
  DeltaPose to_delta(const double* target) const;

  void store(KeyValues& kv) const;
  static LabelScaling load(const KeyValues& kv);
};

void store_norm_stats(KeyValues& kv, const NormStats& stats);
/// Throws CheckpointMissingStats when absent.
NormStats load_norm_stats(const KeyValues& kv);

struct Batch {
  nn::Tensor<float> a;
  nn::Tensor<float> b;
  nn::Tensor<float> labels;  // (N,3) in target units
};

Batch make_batch(const PairDataset& data, std::span<const std::size_t> indices, const NormStats& norm,
                 const LabelScaling& scaling);

/// Normalizes a unit-scale (C,H,W) buffer in place.
void normalize_input(float* data, const nn::Shape& chw, const NormStats& norm);

/// Training-time frame preparation, shared with inference: optionally append the FAST
/// corner mask detected at native resolution, then bilinear resize to the network input.
Raster prepare_frame(const Raster& raw, int width, int height, const std::optional<FastConfig>& fast);

/// Prepared frames of one sequence paired with its poses.
std::vector<Sample> prepare_sequence(std::span<const Raster> raw_frames, std::span<const PoseMatrix> poses,
                                     const std::string& seq_id, int width, int height,
                                     const std::optional<FastConfig>& fast);

/// Preprocessed dataset directory: `samples/<seq>.dvos` plus optional `train.txt` /
/// `test.txt` listing `<seq_id> <frame_idx>` per line.
struct DatasetDir {
  std::vector<Sample> samples;
  std::vector<SplitKey> train_keys;
  std::vector<SplitKey> test_keys;
};
void write_dataset_dir(const std::filesystem::path& dir, std::span<const Sample> samples,
                       std::span<const SplitKey> train_keys, std::span<const SplitKey> test_keys);
DatasetDir read_dataset_dir(const std::filesystem::path& dir);

/// Loads per-frame activations stored as DVOC records named by frame index.
std::vector<nn::Tensor<float>> read_activation_file(const std::filesystem::path& path);

}  // namespace deepvo
