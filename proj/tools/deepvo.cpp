#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepvo/dataset.hpp"
#include "deepvo/error.hpp"
#include "deepvo/evalcli.hpp"
#include "deepvo/fastdet.hpp"
#include "deepvo/synthworld.hpp"
#include "deepvo/trainpipe.hpp"

namespace fs = std::filesystem;
using namespace deepvo;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct PreprocessArgs {
  fs::path manifest;
  fs::path out;
  int size = 256;
  bool fast_channel = false;
  FastConfig fast;
  std::string split = "none";
  double fraction = 0.8;
  std::uint64_t seed = 0;
  std::string train_seqs;
  std::string test_seqs;
};

int run_preprocess(const PreprocessArgs& a) {
  const auto entries = read_manifest(a.manifest);
  const std::optional<FastConfig> fast = a.fast_channel ? std::optional<FastConfig>(a.fast) : std::nullopt;
  std::vector<Sample> samples;
  for (const auto& e : entries) {
    std::vector<Raster> frames;
    for (const auto& p : list_frames(e.image_dir)) frames.push_back(load_raster(p));
    const auto poses = read_pose_file(e.pose_file);
    auto seq = prepare_sequence(frames, poses, e.seq_id, a.size, a.size, fast);
    std::cout << e.seq_id << ": " << seq.size() << " pairs\n";
    for (auto& s : seq) samples.push_back(std::move(s));
  }
  std::vector<SplitKey> keys;
  for (const auto& s : samples) keys.push_back({s.seq_id, s.frame_idx});
  std::vector<SplitKey> train_keys, test_keys;
  if (a.split != "none") {
    SplitSpec spec;
    if (a.split == "random") {
      spec = SplitSpec::random(a.fraction, a.seed);
    } else if (a.split == "holdout") {
      spec = a.train_seqs.empty() && a.test_seqs.empty() ? SplitSpec::kitti_holdout() : SplitSpec{};
      if (!a.train_seqs.empty() || !a.test_seqs.empty()) {
        spec.train_sequences = split_list(a.train_seqs);
        spec.test_sequences = split_list(a.test_seqs);
      }
    } else {
      throw Error(Errc::InvalidConfig, "split must be none, holdout, or random");
    }
    const auto [train, test] = split_indices(keys, spec);
    for (auto i : train) train_keys.push_back(keys[i]);
    for (auto i : test) test_keys.push_back(keys[i]);
  }
  write_dataset_dir(a.out, samples, train_keys, test_keys);
  KeyValues meta;
  meta.set("data.size", static_cast<double>(a.size));
  meta.set("data.fast_channel", a.fast_channel ? 1.0 : 0.0);
  if (a.fast_channel) {
    meta.set("fast.threshold", static_cast<double>(a.fast.threshold));
    meta.set("fast.arc_length", static_cast<double>(a.fast.arc_length));
    meta.set("fast.nms", a.fast.nms ? 1.0 : 0.0);
  }
  std::ofstream(a.out / "dataset.txt") << meta.serialize();
  std::cout << samples.size() << " pairs written to " << a.out.string() << " (" << train_keys.size() << " train, "
            << test_keys.size() << " test)\n";
  return 0;
}

struct SynthArgs {
  fs::path config;
  fs::path script;
  fs::path out;
  std::string seq_id = "00";
  std::string region = "a";
};

int run_synth(const SynthArgs& a) {
  WorldConfig cfg = a.config.empty() ? WorldConfig{} : read_world_config(a.config);
  if (a.region == "b") {
    cfg = region_b_config(cfg);
  } else if (a.region != "a") {
    throw Error(Errc::InvalidConfig, "region must be a or b");
  }
  const auto script = read_motion_script(a.script);
  const auto seq = render_sequence(cfg, script);
  const auto entry = write_sequence(a.out, a.seq_id, seq);
  const fs::path manifest = a.out / "manifest.txt";
  std::vector<ManifestEntry> entries;
  if (fs::exists(manifest)) {
    for (auto& e : read_manifest(manifest)) {
      if (e.seq_id != a.seq_id) entries.push_back({e.seq_id, fs::relative(e.image_dir, a.out), fs::relative(e.pose_file, a.out)});
    }
  }
  entries.push_back(entry);
  write_manifest(manifest, entries);
  std::cout << seq.frames.size() << " frames of sequence " << a.seq_id << " written to " << a.out.string() << '\n';
  return 0;
}

struct FastArgs {
  fs::path in;
  fs::path out;
  FastConfig cfg;
};

int run_fast(const FastArgs& a) {
  const Raster img = load_raster(a.in);
  const Raster gray = img.channels == 1 ? img : to_luma(img);
  const auto corners = detect(gray, a.cfg);
  save_png(a.out, corner_mask(gray, a.cfg));
  std::cout << corners.size() << " corners\n";
  return 0;
}

struct TrainArgs {
  std::string preset = "UnknownEnv";
  fs::path data;
  std::uint64_t seed = 1;
  double width = 1.0;
  long iters = 5000;
  fs::path out;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  long decay_interval = 10000;
  int batch = 16;
  long test_interval = 100;
  long checkpoint_interval = 0;
  double init_std = 0.01;
  double dropout = 0.5;
  bool standardize = false;
  fs::path resume;
};

// Activation corpora: <data>/<seq>/activations.dvoc and <data>/<seq>/poses.txt.
ActivationPairs load_activation_corpus(const fs::path& dir) {
  ActivationPairs data;
  std::vector<fs::path> seqs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / "activations.dvoc")) seqs.push_back(e.path());
  }
  std::sort(seqs.begin(), seqs.end());
  for (const auto& s : seqs) {
    auto acts = read_activation_file(s / "activations.dvoc");
    const auto deltas = decompose_trajectory(read_pose_file(s / "poses.txt"));
    data.add_sequence(s.filename().string(), std::move(acts), deltas);
  }
  if (data.size() == 0) throw Error(Errc::EmptySet, "no activation sequences in " + dir.string());
  return data;
}

int run_train(const TrainArgs& a) {
  auto preset = ExperimentPreset::make(parse_preset_name(a.preset), a.seed);
  preset.iterations = a.iters;
  preset.test_interval = a.test_interval;
  preset.validate();

  std::unique_ptr<PairDataset> data;
  std::vector<SplitKey> train_keys, test_keys;
  KeyValues meta;
  if (preset.variant == NetVariant::PretrainedHead) {
    data = std::make_unique<ActivationPairs>(load_activation_corpus(a.data));
  } else {
    auto dir = read_dataset_dir(a.data);
    train_keys = std::move(dir.train_keys);
    test_keys = std::move(dir.test_keys);
    data = std::make_unique<RasterPairs>(std::move(dir.samples));
    if (fs::exists(a.data / "dataset.txt")) meta = KeyValues::load(a.data / "dataset.txt");
  }
  std::vector<std::size_t> train_idx, test_idx;
  if (!train_keys.empty() && !test_keys.empty()) {
    // A split fixed at preprocessing time takes precedence over the preset's default.
    train_idx = indices_of(*data, train_keys);
    test_idx = indices_of(*data, test_keys);
  } else {
    std::vector<SplitKey> keys;
    for (std::size_t i = 0; i < data->size(); ++i) keys.push_back(data->key(i));
    std::tie(train_idx, test_idx) = split_indices(keys, preset.split);
  }
  if (train_idx.empty() || test_idx.empty()) throw Error(Errc::EmptySplit, "split leaves one side empty");
  const SubsetDataset train(*data, std::move(train_idx));
  const SubsetDataset test(*data, std::move(test_idx));

  TrainOptions o;
  const auto shape = data->input_shape();
  o.net = preset.variant == NetVariant::PretrainedHead
              ? NetConfig::pretrained_head(static_cast<int>(shape[0]), static_cast<int>(shape[1]), a.width)
          : preset.variant == NetVariant::TwoStreamRgbFast ? NetConfig::fast_prior(a.width)
                                                           : NetConfig::two_stream(a.width);
  o.net.input_height = static_cast<int>(shape[1]);
  o.net.input_width = static_cast<int>(shape[2]);
  o.net.conv_init_std = a.init_std;
  o.net.dropout_p = a.dropout;
  o.sgd.learning_rate = a.lr;
  o.sgd.momentum = a.momentum;
  o.sgd.weight_decay = a.weight_decay;
  o.sgd.decay_interval = a.decay_interval;
  o.batch_size = a.batch;
  o.seed = a.seed;
  o.iterations = a.iters;
  o.test_interval = a.test_interval;
  o.checkpoint_interval = a.checkpoint_interval;
  o.standardize_labels = a.standardize;
  o.preset = std::string(to_string(preset.name));
  o.out_dir = a.out;
  for (const auto& [k, v] : meta.entries()) o.extra_metadata.set(k, v);

  std::cout << "preset " << o.preset << ": " << train.size() << " train / " << test.size() << " test pairs\n";
  Trainer trainer = a.resume.empty() ? Trainer(o, train, &test) : Trainer::resume(a.resume, o, train, &test);
  const auto result = trainer.run();
  std::printf("finished at iteration %ld, final test loss %.6g\n", result.iterations_run,
              result.final_test_loss.value_or(0.0));
  std::cout << "checkpoint " << result.checkpoint.string() << '\n';
  return 0;
}

struct InferArgs {
  fs::path ckpt;
  fs::path seq;
  fs::path gt;
  fs::path out;
  fs::path loss;
};

int run_infer(const InferArgs& a) {
  auto model = load_model(a.ckpt);
  if (model.net.variant == NetVariant::PretrainedHead) {
    throw Error(Errc::InvalidConfig, "infer runs on image sequences; activation models are evaluated by train");
  }
  const auto frames = load_sequence_frames(a.seq);
  const auto inf = infer_sequence(model, frames);
  ReportOptions ro;
  ro.latency = LatencyStats::from_samples(inf.latency_ms);
  ro.checkpoint_id = model.id;
  ro.sequence_id = a.seq.filename().string();
  if (!a.loss.empty()) {
    ro.loss_csv = a.loss;
  } else if (fs::exists(a.ckpt.parent_path() / "loss.csv")) {
    ro.loss_csv = a.ckpt.parent_path() / "loss.csv";
  }
  const auto rep = report(inf.deltas, read_pose_file(a.gt), a.out, ro);
  std::printf("%zu pairs, mean %.3f ms/pair, terminal deviation %.4g m\n", ro.latency->pairs, ro.latency->mean_ms,
              rep.deviation.back());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stream visual odometry: data preparation, training, and evaluation"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Resize frames, pair them with pose deltas, and write a dataset");
  p->add_option("--manifest", pre.manifest, "Lines of <seq_id> <image_dir> <pose_file>")->required();
  p->add_option("--out", pre.out, "Dataset directory")->required();
  p->add_option("--size", pre.size, "Square network input size")->capture_default_str();
  p->add_flag("--fast-channel", pre.fast_channel, "Append the FAST corner mask as a fourth channel");
  p->add_option("--fast-threshold", pre.fast.threshold)->capture_default_str();
  p->add_option("--fast-arc", pre.fast.arc_length)->capture_default_str();
  p->add_option("--split", pre.split, "none, holdout, or random")->capture_default_str();
  p->add_option("--fraction", pre.fraction, "Train fraction for random splits")->capture_default_str();
  p->add_option("--seed", pre.seed)->capture_default_str();
  p->add_option("--train-seqs", pre.train_seqs, "Comma-separated holdout training sequences");
  p->add_option("--test-seqs", pre.test_seqs, "Comma-separated holdout test sequences");

  SynthArgs syn;
  auto* s = app.add_subcommand("synth", "Render a synthetic sequence from a world config and motion script");
  s->add_option("--config", syn.config, "World config (key = value)");
  s->add_option("--script", syn.script, "Motion script CSV (speed,yaw_rate)")->required();
  s->add_option("--out", syn.out, "Output root")->required();
  s->add_option("--seq-id", syn.seq_id)->capture_default_str();
  s->add_option("--region", syn.region, "a or b")->capture_default_str();

  FastArgs fa;
  auto* f = app.add_subcommand("fast", "Detect FAST corners and write the corner mask");
  f->add_option("--in", fa.in)->required();
  f->add_option("--out", fa.out)->required();
  f->add_option("--threshold", fa.cfg.threshold)->capture_default_str();
  f->add_option("--arc", fa.cfg.arc_length)->capture_default_str();
  fa.cfg.nms = false;
  f->add_flag("--nms", fa.cfg.nms, "Apply 3x3 non-maximum suppression");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a preprocessed dataset");
  t->add_option("--preset", tr.preset, "UnknownEnv, KnownEnv80, KnownEnv50, FastPrior, PretrainedHead")->required();
  t->add_option("--data", tr.data)->required();
  t->add_option("--seed", tr.seed)->required();
  t->add_option("--width", tr.width, "Channel width multiplier in (0, 1]")->required();
  t->add_option("--iters", tr.iters)->required();
  t->add_option("--out", tr.out)->required();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--momentum", tr.momentum)->capture_default_str();
  t->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  t->add_option("--decay-interval", tr.decay_interval)->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--test-interval", tr.test_interval)->capture_default_str();
  t->add_option("--checkpoint-interval", tr.checkpoint_interval)->capture_default_str();
  t->add_option("--init-std", tr.init_std, "Gaussian std of conv weights")->capture_default_str();
  t->add_option("--dropout", tr.dropout)->capture_default_str();
  t->add_flag("--standardize-labels", tr.standardize, "Regress standardized (dx, dz, dtheta)");
  t->add_option("--resume", tr.resume, "Continue from a checkpoint");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Run a model over a sequence and write the trajectory report");
  i->add_option("--ckpt", inf.ckpt)->required();
  i->add_option("--seq", inf.seq)->required();
  i->add_option("--gt", inf.gt)->required();
  i->add_option("--out", inf.out)->required();
  i->add_option("--loss", inf.loss, "Loss CSV to include (defaults to loss.csv next to the checkpoint)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*p) return run_preprocess(pre);
    if (*s) return run_synth(syn);
    if (*f) return run_fast(fa);
    if (*t) return run_train(tr);
    if (*i) return run_infer(inf);
  } catch (const Error& e) {
    std::cerr << "deepvo: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "deepvo: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
