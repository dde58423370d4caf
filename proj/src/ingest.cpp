#include "deepvo/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "deepvo/binio.hpp"
#include "deepvo/error.hpp"

namespace deepvo {

SplitSpec SplitSpec::kitti_holdout() {
  SplitSpec s;
  s.mode = SplitMode::SequenceHoldout;
  s.train_sequences = {"00", "01", "02", "03", "04", "05", "06"};
  s.test_sequences = {"07", "08", "09", "10"};
  return s;
}

SplitSpec SplitSpec::random(double fraction, std::uint64_t seed) {
  SplitSpec s;
  s.mode = SplitMode::WithinSequenceRandom;
  s.train_fraction = fraction;
  s.seed = seed;
  return s;
}

std::vector<Sample> build_pairs(std::span<const Raster> frames, std::span<const PoseMatrix> poses,
                                const std::string& seq_id) {
  if (frames.size() != poses.size()) {
    throw Error(Errc::LengthMismatch, seq_id + ": " + std::to_string(frames.size()) + " frames vs " +
                                          std::to_string(poses.size()) + " poses");
  }
  if (frames.size() < 2) throw Error(Errc::TooShort, seq_id + ": need at least two frames");
  std::vector<Sample> samples;
  samples.reserve(frames.size() - 1);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    if (!frames[i].same_shape(frames[i + 1])) {
      throw Error(Errc::DimensionMismatch, seq_id + ": frame " + std::to_string(i) + " shape differs");
    }
    samples.push_back({frames[i], frames[i + 1], relative_delta(poses[i], poses[i + 1]), seq_id,
                       static_cast<int>(i)});
  }
  return samples;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::span<const SplitKey> keys, const SplitSpec& spec) {
  if (keys.empty()) throw Error(Errc::EmptySet, "nothing to split");

  // Sequences in order of first appearance.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto [it, inserted] = members.try_emplace(keys[i].seq_id);
    if (inserted) order.push_back(keys[i].seq_id);
    it->second.push_back(i);
  }

  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  if (spec.mode == SplitMode::SequenceHoldout) {
    const std::set<std::string> train_set(spec.train_sequences.begin(), spec.train_sequences.end());
    const std::set<std::string> test_set(spec.test_sequences.begin(), spec.test_sequences.end());
    for (const auto& id : train_set) {
      if (test_set.contains(id)) throw Error(Errc::InvalidConfig, "sequence " + id + " on both sides");
    }
    for (const auto* listed : {&spec.train_sequences, &spec.test_sequences}) {
      for (const auto& id : *listed) {
        if (!members.contains(id)) throw Error(Errc::UnknownSequence, "sequence " + id + " not in dataset");
      }
    }
    for (const auto& id : order) {
      bool to_train = train_set.contains(id);
      bool to_test = test_set.contains(id);
      if (!to_train && !to_test) {
        // An empty side list means "everything else".
        if (train_set.empty()) to_train = true;
        else if (test_set.empty()) to_test = true;
        else throw Error(Errc::UnknownSequence, "sequence " + id + " assigned to neither side");
      }
      auto& side = to_train ? train : test;
      side.insert(side.end(), members[id].begin(), members[id].end());
    }
  } else {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
      throw Error(Errc::InvalidConfig, "train_fraction must lie in (0, 1)");
    }
    std::mt19937_64 rng(spec.seed);
    for (const auto& id : order) {
      std::vector<std::size_t> idx = members[id];
      std::shuffle(idx.begin(), idx.end(), rng);
      const auto n_train = static_cast<std::size_t>(std::lround(spec.train_fraction * idx.size()));
      train.insert(train.end(), idx.begin(), idx.begin() + n_train);
      test.insert(test.end(), idx.begin() + n_train, idx.end());
    }
  }

  if (train.empty() || test.empty()) {
    throw Error(Errc::EmptySide, std::string(train.empty() ? "train" : "test") + " side is empty");
  }
  return {std::move(train), std::move(test)};
}

std::pair<std::vector<Sample>, std::vector<Sample>> split(std::vector<Sample> samples,
                                                          const SplitSpec& spec) {
  std::vector<SplitKey> keys;
  keys.reserve(samples.size());
  for (const auto& s : samples) keys.push_back({s.seq_id, s.frame_idx});
  auto [train_idx, test_idx] = split_indices(keys, spec);

  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  out.first.reserve(train_idx.size());
  out.second.reserve(test_idx.size());
  for (auto i : train_idx) out.first.push_back(std::move(samples[i]));
  for (auto i : test_idx) out.second.push_back(std::move(samples[i]));
  return out;
}

double normalization_std(double sd) { return sd > 1e-6 ? std::max(sd, kMinChannelStd) : 1.0; }

NormStats compute_norm_stats(std::span<const Sample> train) {
  if (train.empty()) throw Error(Errc::EmptySet, "cannot compute statistics of an empty set");
  const int channels = train.front().img_a.channels;
  std::vector<double> sum(channels, 0.0);
  std::vector<double> sum_sq(channels, 0.0);
  std::size_t count = 0;
  for (const auto& s : train) {
    for (const Raster* img : {&s.img_a, &s.img_b}) {
      if (img->channels != channels) throw Error(Errc::DimensionMismatch, "mixed channel counts");
      for (std::size_t i = 0; i < img->data.size(); ++i) {
        const double v = img->data[i] / 255.0;
        sum[i % channels] += v;
        sum_sq[i % channels] += v * v;
      }
      count += img->data.size() / channels;
    }
  }
  NormStats stats;
  for (int c = 0; c < channels; ++c) {
    const double mean = sum[c] / count;
    const double var = std::max(0.0, sum_sq[c] / count - mean * mean);
    const double sd = std::sqrt(var);
    stats.mean.push_back(mean);
    stats.stddev.push_back(normalization_std(sd));
  }
  return stats;
}

Raster append_channel(const Raster& img, const Raster& plane) {
  if (plane.channels != 1 || plane.width != img.width || plane.height != img.height) {
    throw Error(Errc::DimensionMismatch, "feature plane must be single-channel and match the image");
  }
  Raster out(img.width, img.height, img.channels + 1);
  const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(img.data.begin() + p * img.channels, img.channels, out.data.begin() + p * out.channels);
    out.data[p * out.channels + img.channels] = plane.data[p];
  }
  return out;
}

Raster drop_last_channel(const Raster& img) {
  if (img.channels < 2) throw Error(Errc::DimensionMismatch, "nothing to drop");
  Raster out(img.width, img.height, img.channels - 1);
  const std::size_t pixels = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(img.data.begin() + p * img.channels, out.channels, out.data.begin() + p * out.channels);
  }
  return out;
}

Sample augment_with_feature_channel(const Sample& s, const Raster& mask_a, const Raster& mask_b) {
  Sample out = s;
  out.img_a = append_channel(s.img_a, mask_a);
  out.img_b = append_channel(s.img_b, mask_b);
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string dir, poses;
    if (!(ss >> e.seq_id >> dir >> poses)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw Error(Errc::MalformedLine, "manifest line '" + line + "'");
    }
    e.image_dir = std::filesystem::path(dir).is_absolute() ? std::filesystem::path(dir) : base / dir;
    e.pose_file = std::filesystem::path(poses).is_absolute() ? std::filesystem::path(poses) : base / poses;
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write manifest " + path.string());
  for (const auto& e : entries) {
    out << e.seq_id << ' ' << e.image_dir.string() << ' ' << e.pose_file.string() << '\n';
  }
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::IoError, "no image directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_sample_record(std::ostream& out, const Sample& s) {
  if (!s.img_a.same_shape(s.img_b)) throw Error(Errc::DimensionMismatch, "sample frames differ in shape");
  out.write("DVOS", 4);
  binio::put_uint<std::uint16_t>(out, kSampleRecordVersion);
  binio::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(s.img_a.width));
  binio::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(s.img_a.height));
  binio::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(s.img_a.channels));
  binio::put_uint<std::uint32_t>(out, 0);
  out.write(reinterpret_cast<const char*>(s.img_a.data.data()), s.img_a.data.size());
  out.write(reinterpret_cast<const char*>(s.img_b.data.data()), s.img_b.data.size());
  binio::put_f64(out, s.label.dx);
  binio::put_f64(out, s.label.dz);
  binio::put_f64(out, s.label.dtheta);
}

bool read_sample_record(std::istream& in, Sample& s) {
  if (in.peek() == std::char_traits<char>::eof()) return false;
  binio::expect_magic(in, "DVOS");
  const auto version = binio::get_uint<std::uint16_t>(in);
  if (version != kSampleRecordVersion) {
    throw Error(Errc::DecodeError, "unsupported sample record version " + std::to_string(version));
  }
  const int w = binio::get_uint<std::uint16_t>(in);
  const int h = binio::get_uint<std::uint16_t>(in);
  const int c = binio::get_uint<std::uint16_t>(in);
  binio::get_uint<std::uint32_t>(in);
  s.img_a = Raster(w, h, c);
  s.img_b = Raster(w, h, c);
  if (!in.read(reinterpret_cast<char*>(s.img_a.data.data()), s.img_a.data.size()) ||
      !in.read(reinterpret_cast<char*>(s.img_b.data.data()), s.img_b.data.size())) {
    throw Error(Errc::DecodeError, "truncated sample record");
  }
  s.label.dx = binio::get_f64(in);
  s.label.dz = binio::get_f64(in);
  s.label.dtheta = binio::get_f64(in);
  return true;
}

void write_sample_file(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  for (const auto& s : samples) write_sample_record(out, s);
}

std::vector<Sample> read_sample_file(const std::filesystem::path& path, const std::string& seq_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<Sample> samples;
  Sample s;
  while (read_sample_record(in, s)) {
    s.seq_id = seq_id;
    s.frame_idx = static_cast<int>(samples.size());
    samples.push_back(s);
  }
  return samples;
}

}  // namespace deepvo
