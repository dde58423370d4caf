#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepvo/geom.hpp"
#include "deepvo/raster.hpp"

namespace deepvo {

/// One training tuple (I_t, I_t+1, delta).
struct Sample {
  Raster img_a;
  Raster img_b;
  DeltaPose label;
  std::string seq_id;
  int frame_idx = 0;
};

enum class SplitMode { SequenceHoldout, WithinSequenceRandom };

struct SplitSpec {
  SplitMode mode = SplitMode::SequenceHoldout;
  std::vector<std::string> train_sequences;
  std::vector<std::string> test_sequences;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  /// Sequences 00-06 train, 07-10 test.
  static SplitSpec kitti_holdout();
  static SplitSpec random(double fraction, std::uint64_t seed);
};

/// Per-channel statistics of unit-scaled training pixels.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  int channels() const { return static_cast<int>(mean.size()); }
  bool empty() const { return mean.empty(); }
};

std::vector<Sample> build_pairs(std::span<const Raster> frames, std::span<const PoseMatrix> poses,
                                const std::string& seq_id);

/// Returns (train, test). Within-sequence random mode shuffles each sequence with the
/// seed and splits its prefix, then pools the sequences in input order.
std::pair<std::vector<Sample>, std::vector<Sample>> split(std::vector<Sample> samples,
                                                          const SplitSpec& spec);

/// Index-level version of split, shared with datasets that are not raster samples.
struct SplitKey {
  std::string seq_id;
  int frame_idx = 0;
};
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::span<const SplitKey> keys, const SplitSpec& spec);

/// Smallest per-channel std used for normalization. A sparse binary channel (the FAST mask
/// marks ~0.2% of pixels) would otherwise be scaled to values near 40 and swamp the RGB input.
inline constexpr double kMinChannelStd = 0.1;
/// Constant channels get 1 so they pass through as zeros; others are floored at kMinChannelStd.
double normalization_std(double sd);

NormStats compute_norm_stats(std::span<const Sample> train);

Sample augment_with_feature_channel(const Sample& s, const Raster& mask_a, const Raster& mask_b);

/// Appends a single-channel plane to an image.
Raster append_channel(const Raster& img, const Raster& plane);
Raster drop_last_channel(const Raster& img);

/// `<seq_id> <image_dir> <pose_file>` per line.
struct ManifestEntry {
  std::string seq_id;
  std::filesystem::path image_dir;
  std::filesystem::path pose_file;
};
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

/// Sorted PNG files of a directory.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

// Flat sample record: 16-byte header ("DVOS", u16 version, u16 width, u16 height,
// u16 channels, u32 reserved), both frames' raw bytes, then dx, dz, dtheta as f64 LE.
inline constexpr std::uint16_t kSampleRecordVersion = 1;

void write_sample_record(std::ostream& out, const Sample& s);
/// Returns false at a clean end of stream.
bool read_sample_record(std::istream& in, Sample& s);

void write_sample_file(const std::filesystem::path& path, std::span<const Sample> samples);
std::vector<Sample> read_sample_file(const std::filesystem::path& path, const std::string& seq_id);

}  // namespace deepvo
