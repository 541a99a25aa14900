/* Copyright 2026 The ACNV Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// acnv: dataset generation, training, evaluation, decoding, attention export
// and the sequence-model latency benchmark.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "acnv/trainer.hpp"

namespace fs = std::filesystem;
using namespace acnv;

namespace {

void echo_config(const std::string& title, const KeyValues& kv) {
  std::cout << "# " << title << "\n" << kv.serialize() << std::flush;
}

// Flags bound to config keys; a flag given on the command line replaces the
// value from the config file.
class Overrides {
 public:
  CLI::Option* add(CLI::App& app, const std::string& flag, const std::string& key,
                   const std::string& help, const std::string& fallback) {
    auto& slot = values_[key];
    auto* opt = app.add_option(flag, slot, help)->default_str(fallback);
    opts_.emplace_back(key, opt);
    return opt;
  }
  void apply(KeyValues& kv) const {
    for (const auto& [key, opt] : opts_) {
      if (opt->count() > 0) kv.set(key, values_.at(key));
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::pair<std::string, CLI::Option*>> opts_;
};

Lexicon maybe_lexicon(const std::string& path) {
  if (path.empty()) return Lexicon();
  Lexicon lexicon = Lexicon::load(path);
  if (lexicon.empty()) throw std::invalid_argument("lexicon " + path + " has no words");
  return lexicon;
}

std::vector<Sample> load_samples(const std::string& data_dir, const std::string& labels,
                                 const std::string& spec_path) {
  if (!spec_path.empty()) {
    DatasetSpec spec = DatasetSpec::load(spec_path);
    echo_config("resolved dataset", spec.to_config());
    SyntheticDataset ds(spec);
    std::vector<Sample> out;
    for (Index i = 0; i < ds.size(); ++i) out.push_back(ds.sample(i));
    return out;
  }
  if (data_dir.empty()) throw std::invalid_argument("either --data or --spec is required");
  LoadReport report = load_directory(data_dir, labels);
  for (const auto& m : report.messages) std::cerr << "warning: " << m << "\n";
  if (report.skipped > 0) std::cerr << "warning: skipped " << report.skipped << " line(s)\n";
  return std::move(report.samples);
}

// Channel mean of item 0 of a [B, C, H, W] tensor, min-max scaled to 0..255;
// a constant map becomes all zeros.
GrayImage channel_mean_image(const Tensor<float>& t) {
  const Index c = t.dim(1), h = t.dim(2), w = t.dim(3);
  FloatImage mean = FloatImage::Zero(h, w);
  for (Index ch = 0; ch < c; ++ch) {
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) mean(y, x) += t.at(0, ch, y, x);
    }
  }
  mean /= float(c);
  const float lo = mean.minCoeff(), hi = mean.maxCoeff();
  if (!(hi > lo)) return GrayImage(h, w, 0);
  return to_gray((mean - lo) * (255.0f / (hi - lo)));
}

int cmd_gen(const std::string& spec_path, const std::string& out_dir) {
  DatasetSpec spec = DatasetSpec::load(spec_path);
  echo_config("resolved dataset", spec.to_config());
  SyntheticDataset ds(spec);
  std::vector<Sample> samples;
  for (Index i = 0; i < ds.size(); ++i) samples.push_back(ds.sample(i));
  const std::string labels = write_directory(out_dir, samples);
  std::cout << "wrote " << samples.size() << " images and " << labels << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const Overrides& overrides) {
  KeyValues kv = config_path.empty() ? KeyValues() : KeyValues::load(config_path);
  overrides.apply(kv);
  TrainConfig config = TrainConfig::from_config(kv);
  echo_config("resolved train config", config.to_config());
  const auto start = std::chrono::steady_clock::now();
  TrainResult r = train(config, [&](const MetricsRow& row) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "step " << row.step << "\tloss " << row.loss << "\tseq_acc " << row.seq_acc
              << "\telapsed " << std::lround(secs) << "s" << std::endl;
  });
  std::cout << "finished at step " << r.step;
  if (r.reached_target) std::cout << " (target accuracy reached)";
  if (r.timed_out) std::cout << " (time limit reached)";
  if (r.skipped_samples) std::cout << ", skipped " << r.skipped_samples << " infeasible sample(s)";
  std::cout << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& labels,
             const std::string& spec_path, const std::string& lexicon_path,
             const std::string& predictions_path, Index batch) {
  Checkpoint c = Checkpoint::load(ckpt);
  const std::vector<Sample> samples = load_samples(data_dir, labels, spec_path);
  const Lexicon lexicon = maybe_lexicon(lexicon_path);
  EvalReport r = evaluate(c, samples, lexicon.empty() ? nullptr : &lexicon, batch);
  std::cout << "evaluated=" << r.evaluated << "\nexcluded=" << r.excluded << "\ncorrect=" << r.correct
            << "\naccuracy=" << r.accuracy << "\nempty_predictions=" << r.empty_predictions << "\n";
  if (r.lexicon_accuracy) {
    std::cout << "lexicon_correct=" << *r.lexicon_correct << "\nlexicon_accuracy=" << *r.lexicon_accuracy
              << "\n";
  }
  if (!predictions_path.empty()) {
    std::ofstream out(predictions_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + predictions_path);
    for (const auto& p : r.predictions) {
      out << p.truth.to_string() << '\t' << p.lexicon_free.to_string();
      if (p.lexicon_based) out << '\t' << p.lexicon_based->to_string();
      out << '\n';
    }
  }
  return 0;
}

int cmd_decode(const std::string& ckpt, const std::string& image_path, const std::string& lexicon_path,
               bool frames) {
  AttentionConvNet<float> net = load_network(Checkpoint::load(ckpt));
  const Lexicon lexicon = maybe_lexicon(lexicon_path);
  Decoded d = decode_image(net, read_pgm(image_path), lexicon.empty() ? nullptr : &lexicon);
  std::cout << (d.lexicon_based ? *d.lexicon_based : d.lexicon_free).to_string() << "\n";
  if (frames) {
    std::string path;
    for (int k : d.frames) path += k == kBlank ? '-' : symbol_char(k);
    std::cout << "frames: " << path << "\n";
    if (d.lexicon_based) std::cout << "lexicon_free: " << d.lexicon_free.to_string() << "\n";
  }
  return 0;
}

int cmd_export_attention(const std::string& ckpt, const std::string& image_path,
                         const std::string& out_dir, bool ablate) {
  AttentionConvNet<float> net = load_network(Checkpoint::load(ckpt));
  if (ablate) net.set_attention_ablated(true);
  const auto& arch = net.architecture();
  const GrayImage image = resize(read_pgm(image_path), arch.input_height, arch.input_width);
  EncoderTrace<float> trace;
  {
    NoGradGuard no_grad;
    net.encode(to_tensor<float>(image), Mode::kInfer, &trace);
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + out_dir + ": " + ec.message());
  for (size_t i = 0; i < trace.attention.size(); ++i) {
    const std::string stem = (fs::path(out_dir) / ("attention" + std::to_string(i + 1))).string();
    write_pgm(stem + "_mask.pgm", channel_mean_image(trace.attention[i].attention));
    write_pgm(stem + "_feature.pgm", channel_mean_image(trace.attention[i].feature));
    write_pgm(stem + "_output.pgm", channel_mean_image(trace.attention[i].output));
    std::cout << stem << "_{mask,feature,output}.pgm\n";
  }
  return 0;
}

int cmd_bench(const std::vector<Index>& lengths, Index repeats, Index batch, Index height,
              Index layers, Index kernel, std::uint64_t seed) {
  if (repeats < 1 || batch < 1) throw std::invalid_argument("--repeats and --batch must be >= 1");
  ConvSequenceModel<float> model(layers, kernel);
  ParameterSet<float> params;
  model.collect(params, "sequence");
  initialize(params, seed_override().value_or(seed));
  std::mt19937_64 rng(seed_override().value_or(seed));
  std::normal_distribution<float> normal;

  struct Row {
    Index width;
    double mean, stddev;
  };
  std::vector<Row> rows;
  for (Index w : lengths) {
    if (w < 1) throw std::invalid_argument("--lengths entries must be >= 1");
    Tensor<float> x({batch, 1, height, w});
    for (Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
    NoGradGuard no_grad;
    model(x, Mode::kTrain);  // populates normalization statistics, also warms up
    std::vector<double> ms;
    for (Index r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      FeatureSequence<float> y = model(x, Mode::kInfer);
      const auto t1 = std::chrono::steady_clock::now();
      if (y.length() != w) throw std::logic_error("bench: sequence length changed");
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    double mean = 0, var = 0;
    for (double v : ms) mean += v;
    mean /= double(ms.size());
    for (double v : ms) var += (v - mean) * (v - mean);
    const double stddev = ms.size() > 1 ? std::sqrt(var / double(ms.size() - 1)) : 0.0;
    rows.push_back({w, mean, stddev});
  }
  // Least-squares slope of mean time against width.
  double sw = 0, st = 0, sww = 0, swt = 0;
  for (const Row& r : rows) {
    sw += double(r.width);
    st += r.mean;
    sww += double(r.width) * double(r.width);
    swt += double(r.width) * r.mean;
  }
  const double n = double(rows.size());
  const double denom = n * sww - sw * sw;
  const double slope = denom > 0 ? (n * swt - sw * st) / denom : (rows.empty() ? 0 : rows[0].mean / double(rows[0].width));

  std::cout << "width,repeats,mean_ms,stddev_ms,per_frame_ms\n";
  for (const Row& r : rows) {
    std::cout << r.width << ',' << repeats << ',' << r.mean << ',' << r.stddev << ','
              << r.mean / double(r.width) << "\n";
  }
  std::cerr << "fitted per-frame cost: " << slope << " ms\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-convolutional CTC text recognizer", "acnv"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  std::string spec_path, out_dir;
  auto* gen = app.add_subcommand("gen", "Render a synthetic dataset to portable graymaps");
  gen->add_option("--spec", spec_path, "Dataset spec file (key=value)")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  const KeyValues defaults = TrainConfig{}.to_config();
  auto def = [&](const std::string& key) {
    return defaults.contains(key) ? defaults.get_string(key, "") : std::string();
  };
  std::string config_path;
  Overrides overrides;
  auto* train = app.add_subcommand("train", "Train a recognizer on synthetic data");
  train->add_option("--config", config_path, "Training config file (key=value); flags override it");
  overrides.add(*train, "--vocab", "vocab", "Vocabulary: digits, alnum or words", def("vocab"));
  overrides.add(*train, "--words-file", "words_file", "Word list for vocab=words", "");
  overrides.add(*train, "--min-length", "min_length", "Shortest random label", def("min_length"));
  overrides.add(*train, "--max-length", "max_length", "Longest random label", def("max_length"));
  overrides.add(*train, "--noise", "noise", "Enable image noise (true/false)", def("noise"));
  overrides.add(*train, "--salt-pepper", "salt_pepper", "Salt-and-pepper density", def("salt_pepper"));
  overrides.add(*train, "--gradient", "gradient", "Background gradient amplitude", def("gradient"));
  overrides.add(*train, "--train-count", "train_count", "Training samples", def("train_count"));
  overrides.add(*train, "--train-seed", "train_seed", "Training data seed", def("train_seed"));
  overrides.add(*train, "--test-count", "test_count", "Held-out samples", def("test_count"));
  overrides.add(*train, "--test-seed", "test_seed", "Held-out data seed", def("test_seed"));
  overrides.add(*train, "--batch-size", "batch_size", "Mini-batch size", def("batch_size"));
  overrides.add(*train, "--steps", "steps", "Total optimizer steps", def("steps"));
  overrides.add(*train, "--lr", "learning_rate", "Adam learning rate", def("learning_rate"));
  overrides.add(*train, "--clip", "clip", "Global gradient-norm clip", def("clip"));
  overrides.add(*train, "--seed", "seed", "Initialization and shuffling seed", def("seed"));
  overrides.add(*train, "--eval-every", "eval_every", "Steps between evaluations", def("eval_every"));
  overrides.add(*train, "--eval-limit", "eval_limit", "Held-out samples per evaluation, 0 = all",
                def("eval_limit"));
  overrides.add(*train, "--checkpoint-every", "checkpoint_every", "Steps between checkpoints",
                def("checkpoint_every"));
  overrides.add(*train, "--target-accuracy", "target_accuracy",
                "Stop once an evaluation reaches this accuracy, 0 = never", def("target_accuracy"));
  overrides.add(*train, "--time-limit", "time_limit", "Wall-clock budget in seconds, 0 = none",
                def("time_limit"));
  overrides.add(*train, "--checkpoint", "checkpoint", "Checkpoint path", "");
  overrides.add(*train, "--metrics", "metrics", "Metrics log path (step, loss, seq_acc)", "");
  overrides.add(*train, "--loss-log", "loss_log", "Per-step loss log path (step, loss)", "");
  overrides.add(*train, "--resume", "resume", "Checkpoint to resume from", "");
  overrides.add(*train, "--attention", "attention", "Enable attention (false = A:=0 ablation)",
                def("attention"));

  std::string ckpt, data_dir, labels = "labels.txt", lexicon_path, predictions_path, image_path;
  Index batch = 64;
  auto* eval = app.add_subcommand("eval", "Sequence accuracy of a checkpoint");
  eval->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  eval->add_option("--data", data_dir, "Directory of portable graymaps");
  eval->add_option("--labels", labels, "Labels file, relative to --data unless found as given");
  eval->add_option("--spec", spec_path, "Dataset spec to render instead of --data");
  eval->add_option("--lexicon", lexicon_path, "Word list for lexicon-based decoding");
  eval->add_option("--predictions", predictions_path, "Write truth/prediction pairs here");
  eval->add_option("--batch-size", batch, "Evaluation batch size");

  bool frames = false;
  auto* decode = app.add_subcommand("decode", "Recognize one image");
  decode->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  decode->add_option("--image", image_path, "Portable graymap")->required();
  decode->add_option("--lexicon", lexicon_path, "Word list for lexicon-based decoding");
  decode->add_flag("--frames", frames, "Also print per-frame top-1 classes ('-' is blank)");

  bool ablate = false;
  auto* exporter = app.add_subcommand("export-attention", "Write attention and feature maps as images");
  exporter->add_option("--ckpt", ckpt, "Checkpoint path")->required();
  exporter->add_option("--image", image_path, "Portable graymap")->required();
  exporter->add_option("--out", out_dir, "Output directory")->required();
  exporter->add_flag("--ablate", ablate, "Force the attention maps to zero");

  std::vector<Index> lengths{25, 50, 100};
  Index repeats = 10, bench_batch = 1, height = 2048, layers = 4, kernel = 3;
  std::uint64_t bench_seed = 1;
  auto* bench = app.add_subcommand("bench", "Latency of the convolutional sequence model (CSV)");
  bench->add_option("--lengths", lengths, "Sequence widths")->delimiter(',');
  bench->add_option("--repeats", repeats, "Timed runs per width");
  bench->add_option("--batch", bench_batch, "Batch size per run");
  bench->add_option("--height", height, "Frame dimension");
  bench->add_option("--layers", layers, "Convolution layers");
  bench->add_option("--kernel", kernel, "Kernel size");
  bench->add_option("--seed", bench_seed, "Initialization seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    if (*gen) return cmd_gen(spec_path, out_dir);
    if (*train) return cmd_train(config_path, overrides);
    if (*eval) return cmd_eval(ckpt, data_dir, labels, spec_path, lexicon_path, predictions_path, batch);
    if (*decode) return cmd_decode(ckpt, image_path, lexicon_path, frames);
    if (*exporter) return cmd_export_attention(ckpt, image_path, out_dir, ablate);
    if (*bench) return cmd_bench(lengths, repeats, bench_batch, height, layers, kernel, bench_seed);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 1;
}
