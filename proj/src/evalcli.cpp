#include "deepvo/evalcli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "deepvo/error.hpp"
#include "deepvo/svg.hpp"
#include "deepvo/trainpipe.hpp"

namespace deepvo {
namespace {

double percentile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  // Linear interpolation between closest ranks.
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void write_deviation_csv(const std::filesystem::path& path, std::span<const double> dev) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "t,deviation\n";
  for (std::size_t t = 0; t < dev.size(); ++t) out << t << ',' << format_real(dev[t]) << '\n';
}

void write_latency(const std::filesystem::path& path, const LatencyStats& s) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "# per-pair inference time, forward pass only, batch of one\n";
  out << "pairs " << s.pairs << '\n';
  out << "mean_ms " << format_real(s.mean_ms) << '\n';
  out << "p50_ms " << format_real(s.p50_ms) << '\n';
  out << "p95_ms " << format_real(s.p95_ms) << '\n';
  out << "# reference: 9 ms per pair was reported for the original full-width network on its own\n";
  out << "# hardware; the figure is hardware-dependent and recorded for comparison only\n";
  out << "reference_ms 9\n";
}

std::vector<std::pair<double, double>> xz_points(std::span<const PlanarState> states) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(states.size());
  for (const auto& s : states) pts.emplace_back(s.x, s.z);
  return pts;
}

}  // namespace

LatencyStats LatencyStats::from_samples(std::span<const double> ms) {
  LatencyStats s;
  s.pairs = ms.size();
  if (ms.empty()) return s;
  double sum = 0.0;
  for (double v : ms) sum += v;
  s.mean_ms = sum / static_cast<double>(ms.size());
  const std::vector<double> v(ms.begin(), ms.end());
  s.p50_ms = percentile(v, 0.5);
  s.p95_ms = percentile(v, 0.95);
  return s;
}

LoadedModel load_model(const std::filesystem::path& ckpt_path) {
  const auto ckpt = nn::load_checkpoint(ckpt_path);
  const KeyValues& kv = ckpt.metadata;
  LoadedModel m;
  m.net = NetConfig::load(kv);
  m.norm = load_norm_stats(kv);
  if (m.norm.channels() != m.net.input_channels) {
    throw Error(Errc::ChannelMismatch, "normalization statistics do not match the network input");
  }
  m.scaling = LabelScaling::load(kv);
  m.fast.threshold = static_cast<int>(kv.number_or("fast.threshold", m.fast.threshold));
  m.fast.arc_length = static_cast<int>(kv.number_or("fast.arc_length", m.fast.arc_length));
  m.fast.nms = kv.number_or("fast.nms", m.fast.nms ? 1.0 : 0.0) != 0.0;
  m.id = ckpt_path.filename().string() + "@" + kv.get_or("train.iteration", "0");
  m.graph = std::make_unique<ModelGraph<float>>(m.net, 0);
  m.graph->load_parameters(ckpt);
  return m;
}

SequenceInference infer_sequence(ModelGraph<float>& g, std::span<const Raster> frames, const NormStats& norm,
                                 const LabelScaling& scaling, const FastConfig& fast) {
  if (frames.size() < 2) throw Error(Errc::TooShort, "inference needs at least two frames");
  if (norm.empty()) throw Error(Errc::CheckpointMissingStats, "no normalization statistics");
  const NetConfig& cfg = g.config();
  const bool fast_channel = cfg.variant == NetVariant::TwoStreamRgbFast;
  const int raw_channels = cfg.input_channels - (fast_channel ? 1 : 0);
  for (const auto& f : frames) {
    if (f.channels != raw_channels) {
      throw Error(Errc::ChannelMismatch, "frames have " + std::to_string(f.channels) + " channels, network expects " +
                                             std::to_string(raw_channels) + " before feature channels");
    }
  }
  const nn::Shape chw{cfg.input_channels, cfg.input_height, cfg.input_width};
  std::vector<nn::Tensor<float>> prepared;
  prepared.reserve(frames.size());
  for (const auto& f : frames) {
    const Raster img = prepare_frame(f, cfg.input_width, cfg.input_height,
                                     fast_channel ? std::optional<FastConfig>(fast) : std::nullopt);
    nn::Tensor<float> t({1, chw[0], chw[1], chw[2]});
    const std::size_t plane = static_cast<std::size_t>(chw[1] * chw[2]);
    for (std::size_t p = 0; p < plane; ++p) {
      for (nn::Index c = 0; c < chw[0]; ++c) {
        t[static_cast<nn::Index>(c * plane + p)] = img.data[p * img.channels + c] / 255.0f;
      }
    }
    normalize_input(t.data(), chw, norm);
    prepared.push_back(std::move(t));
  }
  SequenceInference out;
  for (std::size_t i = 0; i + 1 < prepared.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    const auto pred = g.forward(prepared[i], prepared[i + 1], nn::RunMode{});
    const auto stop = std::chrono::steady_clock::now();
    const double t[3] = {pred[0], pred[1], pred[2]};
    out.deltas.push_back(scaling.to_delta(t));
    out.latency_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return out;
}

SequenceInference infer_sequence(LoadedModel& model, std::span<const Raster> frames) {
  return infer_sequence(*model.graph, frames, model.norm, model.scaling, model.fast);
}

std::vector<Raster> load_sequence_frames(const std::filesystem::path& dir) {
  std::filesystem::path source = dir;
  for (const char* sub : {"image", "image_2"}) {
    if (std::filesystem::is_directory(dir / sub)) {
      source = dir / sub;
      break;
    }
  }
  std::vector<Raster> frames;
  for (const auto& p : list_frames(source)) frames.push_back(load_raster(p));
  if (frames.empty()) throw Error(Errc::TooShort, "no frames in " + source.string());
  return frames;
}

TrajectoryReport report(std::span<const DeltaPose> predicted, std::span<const PoseMatrix> ground_truth,
                        const std::filesystem::path& out_dir, const ReportOptions& opts) {
  if (predicted.size() + 1 != ground_truth.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(predicted.size()) + " predicted deltas for " +
                                          std::to_string(ground_truth.size()) + " ground-truth poses");
  }
  const auto first = ground_truth.front();
  const PlanarState origin{first.translation.x(), first.translation.z(), planar_yaw(first.rotation)};
  TrajectoryReport rep;
  rep.predicted = integrate_trajectory(origin, predicted);
  rep.ground_truth = integrate_trajectory(origin, decompose_trajectory(ground_truth));
  rep.deviation = deviation_curve(rep.predicted, rep.ground_truth);
  rep.latency = opts.latency;
  rep.checkpoint_id = opts.checkpoint_id;
  rep.sequence_id = opts.sequence_id;

  std::filesystem::create_directories(out_dir);
  write_trajectory_csv(out_dir / "trajectory.csv", rep.predicted);
  write_trajectory_csv(out_dir / "ground_truth.csv", rep.ground_truth);
  write_deviation_csv(out_dir / "deviation.csv", rep.deviation);

  const std::string suffix = rep.sequence_id.empty() ? "" : " (" + rep.sequence_id + ")";
  write_svg(out_dir / "trajectory.svg", {"Trajectory" + suffix, "x [m]", "z [m]", true,
                                         {{"ground truth", "#1f77b4", xz_points(rep.ground_truth)},
                                          {"predicted", "#d62728", xz_points(rep.predicted)}}});
  SvgSeries dev{"deviation", "#2ca02c", {}};
  for (std::size_t t = 0; t < rep.deviation.size(); ++t) dev.points.emplace_back(static_cast<double>(t), rep.deviation[t]);
  write_svg(out_dir / "deviation.svg", {"Deviation from ground truth" + suffix, "frame", "deviation [m]", false, {dev}});

  if (opts.loss_csv) {
    const auto log = LossLog::read_csv(*opts.loss_csv);
    log.write_csv(out_dir / "loss.csv");
    SvgSeries train{"train", "#1f77b4", {}}, test{"test", "#d62728", {}};
    for (const auto& r : log.records()) {
      train.points.emplace_back(static_cast<double>(r.iteration), r.train_loss);
      if (r.test_loss) test.points.emplace_back(static_cast<double>(r.iteration), *r.test_loss);
    }
    SvgPlot plot{"Training and test loss", "iteration", "loss", false, {train}};
    if (!test.points.empty()) plot.series.push_back(test);
    write_svg(out_dir / "loss.svg", plot);
  }
  if (opts.latency) write_latency(out_dir / "latency.txt", *opts.latency);
  return rep;
}

}  // namespace deepvo
