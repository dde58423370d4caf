#include "deepvo/trainpipe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "deepvo/error.hpp"

namespace deepvo {
namespace {

constexpr std::uint64_t kEpochStream = 0x45504f4348ULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

bool all_finite(ModelGraph<float>& g) {
  for (auto* t : g.parameter_tensors()) {
    if (!t->grad().allFinite()) return false;
  }
  return true;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

std::string_view to_string(PresetName p) {
  switch (p) {
    case PresetName::UnknownEnv: return "UnknownEnv";
    case PresetName::KnownEnv80: return "KnownEnv80";
    case PresetName::KnownEnv50: return "KnownEnv50";
    case PresetName::FastPrior: return "FastPrior";
    case PresetName::PretrainedHead: return "PretrainedHead";
  }
  return "UnknownEnv";
}

PresetName parse_preset_name(std::string_view name) {
  for (auto p : {PresetName::UnknownEnv, PresetName::KnownEnv80, PresetName::KnownEnv50, PresetName::FastPrior,
                 PresetName::PretrainedHead}) {
    if (to_string(p) == name) return p;
  }
  throw Error(Errc::InvalidConfig, "unknown preset '" + std::string(name) + "'");
}

ExperimentPreset ExperimentPreset::make(PresetName name, std::uint64_t seed) {
  ExperimentPreset p;
  p.name = name;
  switch (name) {
    case PresetName::UnknownEnv:
      p.split = SplitSpec::kitti_holdout();
      break;
    case PresetName::KnownEnv80:
      p.split = SplitSpec::random(0.8, seed);
      break;
    case PresetName::KnownEnv50:
      p.split = SplitSpec::random(0.5, seed);
      break;
    case PresetName::FastPrior:
      p.split = SplitSpec::kitti_holdout();
      p.variant = NetVariant::TwoStreamRgbFast;
      break;
    case PresetName::PretrainedHead:
      p.split = SplitSpec::kitti_holdout();
      p.variant = NetVariant::PretrainedHead;
      break;
  }
  return p;
}

void ExperimentPreset::validate() const {
  const bool fast = name == PresetName::FastPrior;
  const bool head = name == PresetName::PretrainedHead;
  if (fast != (variant == NetVariant::TwoStreamRgbFast) || head != (variant == NetVariant::PretrainedHead)) {
    throw Error(Errc::InvalidConfig, std::string(to_string(name)) + " preset with " +
                                         std::string(to_string(variant)) + " network");
  }
  const bool random = name == PresetName::KnownEnv80 || name == PresetName::KnownEnv50;
  if (random != (split.mode == SplitMode::WithinSequenceRandom)) {
    throw Error(Errc::InvalidConfig, std::string(to_string(name)) + " preset with mismatched split mode");
  }
  if (iterations < 1 || test_interval < 1) throw Error(Errc::InvalidConfig, "iterations and test interval must be >= 1");
}

void LossLog::append(const LossRecord& r) {
  if (!records_.empty() && r.iteration <= records_.back().iteration) {
    throw Error(Errc::InvalidConfig, "loss log iterations must increase");
  }
  records_.push_back(r);
}

void LossLog::truncate(long iteration) {
  std::erase_if(records_, [&](const LossRecord& r) { return r.iteration >= iteration; });
}

std::optional<double> LossLog::first_test_loss() const {
  for (const auto& r : records_) {
    if (r.test_loss) return r.test_loss;
  }
  return std::nullopt;
}

std::optional<double> LossLog::last_test_loss() const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->test_loss) return it->test_loss;
  }
  return std::nullopt;
}

void LossLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "iter,train_loss,test_loss,train_eval_loss\n";
  for (const auto& r : records_) {
    out << r.iteration << ',' << format_optional(r.train_loss) << ',' << format_optional(r.test_loss) << ','
        << format_optional(r.train_eval_loss) << '\n';
  }
}

LossLog LossLog::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  LossLog log;
  std::string line;
  std::getline(in, line);
  if (!line.starts_with("iter,train_loss")) throw Error(Errc::MalformedLine, path.string() + ": missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() < 3) throw Error(Errc::MalformedLine, path.string() + ": '" + line + "'");
    try {
      LossRecord r;
      r.iteration = std::stol(fields[0]);
      r.train_loss = std::stod(fields[1]);
      if (!fields[2].empty()) r.test_loss = std::stod(fields[2]);
      if (fields.size() > 3 && !fields[3].empty()) r.train_eval_loss = std::stod(fields[3]);
      log.append(r);
    } catch (const std::logic_error&) {
      throw Error(Errc::MalformedLine, path.string() + ": '" + line + "'");
    }
  }
  return log;
}

double evaluate_loss(ModelGraph<float>& g, const PairDataset& data, const NormStats& norm,
                     const LabelScaling& scaling, int batch_size) {
  if (data.size() == 0) throw Error(Errc::EmptySet, "evaluate_loss on an empty set");
  if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch size must be >= 1");
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < data.size(); first += static_cast<std::size_t>(batch_size)) {
    idx.resize(std::min<std::size_t>(batch_size, data.size() - first));
    std::iota(idx.begin(), idx.end(), first);
    const Batch b = make_batch(data, idx, norm, scaling);
    const auto pred = g.forward(b.a, b.b, nn::RunMode{});
    total += nn::euclidean_loss(pred, b.labels).loss * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

std::vector<DeltaPose> predict(ModelGraph<float>& g, const PairDataset& data, const NormStats& norm,
                               const LabelScaling& scaling, int batch_size) {
  if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch size must be >= 1");
  std::vector<DeltaPose> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < data.size(); first += static_cast<std::size_t>(batch_size)) {
    idx.resize(std::min<std::size_t>(batch_size, data.size() - first));
    std::iota(idx.begin(), idx.end(), first);
    const Batch b = make_batch(data, idx, norm, scaling);
    const auto pred = g.forward(b.a, b.b, nn::RunMode{});
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double t[3] = {pred[j * 3], pred[j * 3 + 1], pred[j * 3 + 2]};
      out.push_back(scaling.to_delta(t));
    }
  }
  return out;
}

Trainer::Trainer(TrainOptions opts, const PairDataset& train, const PairDataset* test)
    : Trainer(opts, train, test, train.size() ? compute_norm_stats(train) : NormStats{},
              opts.standardize_labels && train.size() ? LabelScaling::fit(train) : LabelScaling{}) {}

Trainer::Trainer(TrainOptions opts, const PairDataset& train, const PairDataset* test, NormStats norm,
                 LabelScaling scaling)
    : opts_(std::move(opts)),
      train_(&train),
      test_(test),
      norm_(std::move(norm)),
      scaling_(scaling),
      graph_(opts_.net, opts_.seed) {
  if (train.size() == 0 || (test && test->size() == 0)) {
    throw Error(Errc::EmptySplit, "training needs samples on both sides of the split");
  }
  opts_.sgd.validate();
  if (opts_.batch_size < 1 || opts_.eval_batch_size < 1 || opts_.test_interval < 1 || opts_.iterations < 0 ||
      opts_.checkpoint_interval < 0) {
    throw Error(Errc::InvalidConfig, "batch sizes and intervals must be positive");
  }
  const auto shape = train.input_shape();
  if (shape[0] != opts_.net.input_channels) {
    throw Error(Errc::ChannelMismatch, "data has " + std::to_string(shape[0]) + " channels, network expects " +
                                           std::to_string(opts_.net.input_channels));
  }
  if (shape[1] != opts_.net.input_height || shape[2] != opts_.net.input_width) {
    throw Error(Errc::ShapeMismatch, "data inputs are " + nn::shape_string(shape) + ", network expects " +
                                         std::to_string(opts_.net.input_height) + "x" +
                                         std::to_string(opts_.net.input_width));
  }
  if (test && test->input_shape() != shape) throw Error(Errc::ShapeMismatch, "train and test inputs differ");
}

Trainer Trainer::resume(const std::filesystem::path& ckpt_path, TrainOptions opts, const PairDataset& train,
                        const PairDataset* test) {
  const auto ckpt = nn::load_checkpoint(ckpt_path);
  const KeyValues& kv = ckpt.metadata;
  opts.net = NetConfig::load(kv);
  opts.sgd = nn::SgdConfig::load(kv);
  opts.seed = static_cast<std::uint64_t>(std::stoull(kv.get_or("train.seed", "1")));
  opts.batch_size = static_cast<int>(kv.number_or("train.batch_size", opts.batch_size));
  opts.preset = kv.get_or("train.preset", opts.preset);
  for (const auto& [k, v] : kv.entries()) {
    if (k.starts_with("fast.") || k.starts_with("data.")) opts.extra_metadata.set(k, v);
  }
  LabelScaling scaling = LabelScaling::load(kv);
  opts.standardize_labels = scaling.enabled;
  Trainer t(std::move(opts), train, test, load_norm_stats(kv), scaling);
  t.graph_.load_parameters(ckpt);
  t.iteration_ = static_cast<long>(kv.number_or("train.iteration", 0.0));
  for (const auto& p : t.graph_.parameters()) {
    const auto* v = ckpt.find("velocity/" + p.name);
    if (!v) {
      t.sgd_state_.velocity.clear();
      break;
    }
    nn::require_shape(v->shape(), p.tensor->shape(), p.name.c_str());
    t.sgd_state_.velocity.push_back(v->values());
  }
  const auto log_path = ckpt_path.parent_path() / "loss.csv";
  if (std::filesystem::exists(log_path)) {
    t.log_ = LossLog::read_csv(log_path);
    t.log_.truncate(t.iteration_);
  }
  return t;
}

std::vector<std::size_t> Trainer::batch_indices(long iteration) {
  const std::size_t n = train_->size();
  const auto b = static_cast<std::size_t>(opts_.batch_size);
  std::vector<std::size_t> out;
  out.reserve(b);
  // Position p of the infinite stream maps to epoch p / n, slot p % n.
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t p = static_cast<std::size_t>(iteration) * b + j;
    const auto epoch = static_cast<long>(p / n);
    if (epoch != cached_epoch_) {
      epoch_order_.resize(n);
      std::iota(epoch_order_.begin(), epoch_order_.end(), std::size_t{0});
      std::mt19937_64 rng(stream_seed(opts_.seed, kEpochStream, static_cast<std::uint64_t>(epoch)));
      std::shuffle(epoch_order_.begin(), epoch_order_.end(), rng);
      cached_epoch_ = epoch;
    }
    out.push_back(epoch_order_[p % n]);
  }
  return out;
}

double Trainer::batch_loss(long iteration, bool update) {
  const auto idx = batch_indices(iteration);
  const Batch b = make_batch(*train_, idx, norm_, scaling_);
  std::mt19937_64 rng(stream_seed(opts_.seed, kDropoutStream, static_cast<std::uint64_t>(iteration)));
  const auto pred = graph_.forward(b.a, b.b, nn::RunMode{true, &rng});
  auto loss = nn::euclidean_loss(pred, b.labels);
  if (!update) return loss.loss;
  graph_.zero_grad();
  graph_.backward(loss.grad);
  if (!std::isfinite(loss.loss) || !all_finite(graph_)) {
    // Parameters are still those of the last finite update.
    if (!opts_.out_dir.empty()) {
      save(opts_.out_dir / "last_good.dvoc");
      log_.write_csv(opts_.out_dir / "loss.csv");
    }
    throw Error(Errc::DivergedLoss, "non-finite loss or gradient at iteration " + std::to_string(iteration));
  }
  auto params = graph_.parameter_tensors();
  nn::sgd_step<float>(params, sgd_state_, opts_.sgd, iteration);
  return loss.loss;
}

double Trainer::step() {
  const double loss = batch_loss(iteration_, true);
  ++iteration_;
  return loss;
}

TrainResult Trainer::run() {
  if (!opts_.out_dir.empty()) std::filesystem::create_directories(opts_.out_dir);
  TrainResult result;
  while (true) {
    const bool at_end = iteration_ >= opts_.iterations;
    const bool eval_point = at_end || iteration_ % opts_.test_interval == 0;
    LossRecord r;
    r.iteration = iteration_;
    if (eval_point && test_) r.test_loss = evaluate_loss(graph_, *test_, norm_, scaling_, opts_.eval_batch_size);
    if (eval_point && (opts_.track_train_eval || opts_.stop_below_train_loss)) {
      r.train_eval_loss = evaluate_loss(graph_, *train_, norm_, scaling_, opts_.eval_batch_size);
    }
    const bool converged =
        opts_.stop_below_train_loss && r.train_eval_loss && *r.train_eval_loss < *opts_.stop_below_train_loss;
    if (at_end || converged) {
      r.train_loss = batch_loss(iteration_, false);
      log_.append(r);
      result.final_test_loss = r.test_loss;
      result.final_train_eval_loss = r.train_eval_loss;
      break;
    }
    r.train_loss = step();
    log_.append(r);
    if (opts_.checkpoint_interval > 0 && iteration_ % opts_.checkpoint_interval == 0 && !opts_.out_dir.empty()) {
      save(opts_.out_dir / ("ckpt_" + std::to_string(iteration_) + ".dvoc"));
      log_.write_csv(opts_.out_dir / "loss.csv");
    }
  }
  result.iterations_run = iteration_;
  result.log = log_;
  if (!opts_.out_dir.empty()) {
    result.checkpoint = save(opts_.out_dir / "model.dvoc");
    log_.write_csv(opts_.out_dir / "loss.csv");
  }
  return result;
}

nn::Checkpoint Trainer::make_checkpoint() {
  nn::Checkpoint ckpt;
  graph_.save_parameters(ckpt);
  const auto params = graph_.parameters();
  for (std::size_t i = 0; i < sgd_state_.velocity.size(); ++i) {
    nn::Tensor<float> v(params[i].tensor->shape());
    v.values() = sgd_state_.velocity[i];
    ckpt.put("velocity/" + params[i].name, std::move(v));
  }
  KeyValues kv = opts_.extra_metadata;
  opts_.net.store(kv);
  opts_.sgd.store(kv);
  store_norm_stats(kv, norm_);
  scaling_.store(kv);
  kv.set("train.iteration", static_cast<double>(iteration_));
  kv.set("train.seed", std::to_string(opts_.seed));
  kv.set("train.batch_size", static_cast<double>(opts_.batch_size));
  kv.set("train.preset", opts_.preset);
  ckpt.metadata = std::move(kv);
  return ckpt;
}

std::filesystem::path Trainer::save(const std::filesystem::path& path) {
  nn::save_checkpoint(path, make_checkpoint());
  return path;
}

}  // namespace deepvo
