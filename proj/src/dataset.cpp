#include "deepvo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "deepvo/error.hpp"

namespace deepvo {
namespace {

std::string join(const std::vector<double>& v) {
  std::ostringstream ss;
  ss.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? "," : "") << v[i];
  return ss.str();
}

std::vector<double> split_numbers(const std::string& s) {
  std::vector<double> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<SplitKey> read_keys(const std::filesystem::path& path) {
  std::vector<SplitKey> keys;
  std::ifstream in(path);
  if (!in) return keys;
  SplitKey k;
  while (in >> k.seq_id >> k.frame_idx) keys.push_back(k);
  return keys;
}

}  // namespace

RasterPairs::RasterPairs(std::vector<Sample> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw Error(Errc::EmptySet, "raster dataset is empty");
  for (const auto& s : samples_) {
    if (!s.img_a.same_shape(samples_.front().img_a) || !s.img_b.same_shape(s.img_a)) {
      throw Error(Errc::DimensionMismatch, "all samples must share one image shape");
    }
  }
}

nn::Shape RasterPairs::input_shape() const {
  const auto& img = samples_.front().img_a;
  return {img.channels, img.height, img.width};
}

void RasterPairs::load_inputs(std::size_t i, float* a, float* b) const {
  const auto& s = samples_[i];
  const int c = s.img_a.channels;
  const std::size_t plane = static_cast<std::size_t>(s.img_a.width) * s.img_a.height;
  // Interleaved HWC bytes to planar CHW floats.
  for (std::size_t p = 0; p < plane; ++p) {
    for (int k = 0; k < c; ++k) {
      a[k * plane + p] = s.img_a.data[p * c + k] / 255.0f;
      b[k * plane + p] = s.img_b.data[p * c + k] / 255.0f;
    }
  }
}

void ActivationPairs::add_sequence(const std::string& seq_id, std::vector<nn::Tensor<float>> activations,
                                   std::span<const DeltaPose> deltas) {
  if (activations.size() != deltas.size() + 1) {
    throw Error(Errc::LengthMismatch, seq_id + ": " + std::to_string(activations.size()) +
                                          " activations for " + std::to_string(deltas.size()) + " deltas");
  }
  std::vector<std::shared_ptr<const nn::Tensor<float>>> shared;
  for (auto& t : activations) {
    if (t.rank() != 3) throw Error(Errc::ShapeMismatch, "activations must be (C,H,W)");
    if (!items_.empty() && t.shape() != items_.front().a->shape()) {
      throw Error(Errc::ShapeMismatch, "activation shapes differ between frames");
    }
    shared.push_back(std::make_shared<const nn::Tensor<float>>(std::move(t)));
  }
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    items_.push_back({shared[i], shared[i + 1], deltas[i], {seq_id, static_cast<int>(i)}});
  }
}

nn::Shape ActivationPairs::input_shape() const {
  if (items_.empty()) throw Error(Errc::EmptySet, "activation dataset is empty");
  return items_.front().a->shape();
}

void ActivationPairs::load_inputs(std::size_t i, float* a, float* b) const {
  std::copy_n(items_[i].a->data(), items_[i].a->size(), a);
  std::copy_n(items_[i].b->data(), items_[i].b->size(), b);
}

std::pair<SubsetDataset, SubsetDataset> split_dataset(const PairDataset& data, const SplitSpec& spec) {
  std::vector<SplitKey> keys;
  keys.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) keys.push_back(data.key(i));
  auto [train, test] = split_indices(keys, spec);
  return {SubsetDataset(data, std::move(train)), SubsetDataset(data, std::move(test))};
}

std::vector<std::size_t> indices_of(const PairDataset& data, std::span<const SplitKey> keys) {
  std::map<std::pair<std::string, int>, std::size_t> where;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto k = data.key(i);
    where.emplace(std::make_pair(k.seq_id, k.frame_idx), i);
  }
  std::vector<std::size_t> out;
  out.reserve(keys.size());
  for (const auto& k : keys) {
    const auto it = where.find({k.seq_id, k.frame_idx});
    if (it == where.end()) {
      throw Error(Errc::UnknownSequence, "no sample " + k.seq_id + "/" + std::to_string(k.frame_idx));
    }
    out.push_back(it->second);
  }
  return out;
}

NormStats compute_norm_stats(const PairDataset& data) {
  if (data.size() == 0) throw Error(Errc::EmptySet, "cannot compute statistics of an empty set");
  const auto shape = data.input_shape();
  const auto channels = static_cast<std::size_t>(shape[0]);
  const auto plane = static_cast<std::size_t>(shape[1] * shape[2]);
  std::vector<float> a(channels * plane), b(channels * plane);
  std::vector<double> sum(channels, 0.0), sum_sq(channels, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data.load_inputs(i, a.data(), b.data());
    for (const auto* buf : {&a, &b}) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
          const double v = (*buf)[c * plane + p];
          sum[c] += v;
          sum_sq[c] += v * v;
        }
      }
    }
  }
  const double count = 2.0 * static_cast<double>(data.size() * plane);
  NormStats stats;
  for (std::size_t c = 0; c < channels; ++c) {
    const double mean = sum[c] / count;
    const double sd = std::sqrt(std::max(0.0, sum_sq[c] / count - mean * mean));
    stats.mean.push_back(mean);
    stats.stddev.push_back(normalization_std(sd));
  }
  return stats;
}

LabelScaling LabelScaling::fit(const PairDataset& data) {
  if (data.size() == 0) throw Error(Errc::EmptySet, "cannot fit label scaling on an empty set");
  LabelScaling s;
  s.enabled = true;
  std::array<double, 3> sum{}, sum_sq{};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto v = data.label(i).vector();
    for (int k = 0; k < 3; ++k) {
      sum[k] += v[k];
      sum_sq[k] += v[k] * v[k];
    }
  }
  const double n = static_cast<double>(data.size());
  for (int k = 0; k < 3; ++k) {
    s.mean[k] = sum[k] / n;
    const double sd = std::sqrt(std::max(0.0, sum_sq[k] / n - s.mean[k] * s.mean[k]));
    s.stddev[k] = sd > 1e-9 ? sd : 1.0;
  }
  return s;
}

std::array<double, 3> LabelScaling::to_target(const DeltaPose& d) const {
  const std::array<double, 3> v{d.dx, d.dz, d.dtheta};
  if (!enabled) return v;
  return {(v[0] - mean[0]) / stddev[0], (v[1] - mean[1]) / stddev[1], (v[2] - mean[2]) / stddev[2]};
}

DeltaPose LabelScaling::to_delta(const double* t) const {
  if (!enabled) return {t[0], t[1], t[2]};
  return {t[0] * stddev[0] + mean[0], t[1] * stddev[1] + mean[1], t[2] * stddev[2] + mean[2]};
}

void LabelScaling::store(KeyValues& kv) const {
  kv.set("labels.scaled", enabled ? 1.0 : 0.0);
  kv.set("labels.mean", join({mean.begin(), mean.end()}));
  kv.set("labels.std", join({stddev.begin(), stddev.end()}));
}

LabelScaling LabelScaling::load(const KeyValues& kv) {
  LabelScaling s;
  s.enabled = kv.number_or("labels.scaled", 0.0) != 0.0;
  if (s.enabled) {
    const auto m = split_numbers(kv.get_or("labels.mean", ""));
    const auto sd = split_numbers(kv.get_or("labels.std", ""));
    if (m.size() != 3 || sd.size() != 3) throw Error(Errc::CheckpointMissingStats, "label scaling incomplete");
    std::copy(m.begin(), m.end(), s.mean.begin());
    std::copy(sd.begin(), sd.end(), s.stddev.begin());
  }
  return s;
}

void store_norm_stats(KeyValues& kv, const NormStats& stats) {
  kv.set("norm.mean", join(stats.mean));
  kv.set("norm.std", join(stats.stddev));
}

NormStats load_norm_stats(const KeyValues& kv) {
  const auto mean = kv.get("norm.mean");
  const auto sd = kv.get("norm.std");
  if (!mean || !sd) throw Error(Errc::CheckpointMissingStats, "checkpoint carries no normalization statistics");
  NormStats stats{split_numbers(*mean), split_numbers(*sd)};
  if (stats.mean.empty() || stats.mean.size() != stats.stddev.size()) {
    throw Error(Errc::CheckpointMissingStats, "malformed normalization statistics");
  }
  return stats;
}

void normalize_input(float* data, const nn::Shape& chw, const NormStats& norm) {
  const auto channels = static_cast<std::size_t>(chw[0]);
  if (norm.mean.size() != channels) {
    throw Error(Errc::ChannelMismatch, "normalization has " + std::to_string(norm.mean.size()) +
                                           " channels, input " + std::to_string(channels));
  }
  const auto plane = static_cast<std::size_t>(chw[1] * chw[2]);
  for (std::size_t c = 0; c < channels; ++c) {
    const auto mean = static_cast<float>(norm.mean[c]);
    const auto inv = static_cast<float>(1.0 / norm.stddev[c]);
    float* p = data + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * inv;
  }
}

Batch make_batch(const PairDataset& data, std::span<const std::size_t> indices, const NormStats& norm,
                 const LabelScaling& scaling) {
  const auto chw = data.input_shape();
  const auto n = static_cast<nn::Index>(indices.size());
  Batch batch{nn::Tensor<float>({n, chw[0], chw[1], chw[2]}), nn::Tensor<float>({n, chw[0], chw[1], chw[2]}),
              nn::Tensor<float>({n, 3})};
  const nn::Index per = nn::shape_size(chw);
  for (nn::Index j = 0; j < n; ++j) {
    float* a = batch.a.data() + j * per;
    float* b = batch.b.data() + j * per;
    data.load_inputs(indices[static_cast<std::size_t>(j)], a, b);
    normalize_input(a, chw, norm);
    normalize_input(b, chw, norm);
    const auto t = scaling.to_target(data.label(indices[static_cast<std::size_t>(j)]));
    for (int k = 0; k < 3; ++k) batch.labels[j * 3 + k] = static_cast<float>(t[k]);
  }
  return batch;
}

Raster prepare_frame(const Raster& raw, int width, int height, const std::optional<FastConfig>& fast) {
  if (!fast) return warp_resize(raw, width, height);
  return warp_resize(append_channel(raw, corner_mask(to_luma(raw), *fast)), width, height);
}

std::vector<Sample> prepare_sequence(std::span<const Raster> raw_frames, std::span<const PoseMatrix> poses,
                                     const std::string& seq_id, int width, int height,
                                     const std::optional<FastConfig>& fast) {
  std::vector<Raster> frames;
  frames.reserve(raw_frames.size());
  for (const auto& f : raw_frames) frames.push_back(prepare_frame(f, width, height, fast));
  return build_pairs(frames, poses, seq_id);
}

void write_dataset_dir(const std::filesystem::path& dir, std::span<const Sample> samples,
                       std::span<const SplitKey> train_keys, std::span<const SplitKey> test_keys) {
  std::filesystem::create_directories(dir / "samples");
  std::map<std::string, std::vector<const Sample*>> by_seq;
  std::vector<std::string> order;
  for (const auto& s : samples) {
    auto [it, inserted] = by_seq.try_emplace(s.seq_id);
    if (inserted) order.push_back(s.seq_id);
    it->second.push_back(&s);
  }
  std::ofstream index(dir / "sequences.txt");
  for (const auto& id : order) {
    auto& list = by_seq[id];
    std::sort(list.begin(), list.end(), [](auto* x, auto* y) { return x->frame_idx < y->frame_idx; });
    std::ofstream out(dir / "samples" / (id + ".dvos"), std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write samples for " + id);
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i]->frame_idx != static_cast<int>(i)) {
        throw Error(Errc::InvalidConfig, id + ": sample records must cover frames 0..n-1");
      }
      write_sample_record(out, *list[i]);
    }
    index << id << ' ' << list.size() << '\n';
  }
  auto write_keys = [&](const char* name, std::span<const SplitKey> keys) {
    if (keys.empty()) return;
    std::ofstream out(dir / name);
    for (const auto& k : keys) out << k.seq_id << ' ' << k.frame_idx << '\n';
  };
  write_keys("train.txt", train_keys);
  write_keys("test.txt", test_keys);
}

DatasetDir read_dataset_dir(const std::filesystem::path& dir) {
  std::ifstream index(dir / "sequences.txt");
  if (!index) throw Error(Errc::IoError, "no dataset index in " + dir.string());
  DatasetDir out;
  std::string id;
  std::size_t count = 0;
  while (index >> id >> count) {
    auto samples = read_sample_file(dir / "samples" / (id + ".dvos"), id);
    if (samples.size() != count) throw Error(Errc::DecodeError, id + ": sample count disagrees with index");
    for (auto& s : samples) out.samples.push_back(std::move(s));
  }
  if (out.samples.empty()) throw Error(Errc::EmptySet, "dataset " + dir.string() + " holds no samples");
  out.train_keys = read_keys(dir / "train.txt");
  out.test_keys = read_keys(dir / "test.txt");
  return out;
}

std::vector<nn::Tensor<float>> read_activation_file(const std::filesystem::path& path) {
  const auto ckpt = nn::load_checkpoint(path);
  std::map<long, nn::Tensor<float>> frames;
  for (const auto& [name, t] : ckpt.tensors) {
    std::size_t used = 0;
    long idx = -1;
    try {
      idx = std::stol(name, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != name.size() || idx < 0) throw Error(Errc::DecodeError, "activation record name '" + name + "'");
    frames.emplace(idx, t);
  }
  std::vector<nn::Tensor<float>> out;
  long expect = 0;
  for (auto& [idx, t] : frames) {
    if (idx != expect++) throw Error(Errc::DecodeError, "activation frames are not contiguous");
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace deepvo
