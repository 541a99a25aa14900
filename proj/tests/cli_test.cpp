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

// Drives the acnv executable as a subprocess.

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "acnv/trainer.hpp"

namespace acnv {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class Workspace {
 public:
  explicit Workspace(const std::string& name) : root_(fs::temp_directory_path() / name) {
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  ~Workspace() { fs::remove_all(root_); }
  std::string operator/(const std::string& leaf) const { return (root_ / leaf).string(); }
  const fs::path& root() const { return root_; }

  RunResult run(const std::string& args, const std::string& env = "") const {
    const std::string err_path = (root_ / "stderr.txt").string();
    const std::string command = env + " " ACNV_CLI " " + args + " 2>" + err_path;
    RunResult r;
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    for (size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.err = read_file(err_path);
    fs::remove(err_path);
    return r;
  }

  void write(const std::string& leaf, const std::string& text) const {
    std::ofstream(root_ / leaf) << text;
  }

 private:
  fs::path root_;
};

void check_single_line_error(const RunResult& r) {
  CHECK(r.status != 0);
  const auto err = lines(r.err);
  REQUIRE(err.size() == 1);
  CHECK(err[0].rfind("error: ", 0) == 0);
}

// A small trained checkpoint, so decoding commands have something to load.
std::string make_checkpoint(const Workspace& ws) {
  TrainConfig c;
  c.architecture.stem_channels = 4;
  c.architecture.dense = DenseBlockConfig{1, 2, 3};
  c.architecture.attention_stages = {1, 1};
  c.architecture.top_channels = 8;
  c.architecture.sequence_layers = 2;
  c.train_data.count = 16;
  c.test_data.count = 4;
  c.batch_size = 4;
  c.steps = 3;
  c.eval_every = 0;
  c.checkpoint_every = 0;
  c.checkpoint_path = ws / "model.ckpt";
  train(c);
  return c.checkpoint_path;
}

TEST_CASE("help output matches the snapshots") {
  Workspace ws("acnv_cli_help");
  for (std::string command : {"", "gen", "train", "eval", "decode", "export-attention", "bench"}) {
    INFO(command);
    const RunResult r = ws.run(command + " --help");
    CHECK(r.status == 0);
    const std::string snapshot = std::string(ACNV_SNAPSHOT_DIR) + "/" + (command.empty() ? "acnv" : command) + ".txt";
    CHECK(r.out == read_file(snapshot));
  }
}

TEST_CASE("gen writes the requested count deterministically") {
  Workspace ws("acnv_cli_gen");
  ws.write("spec.conf", "vocab = alnum\ncount = 10\nseed = 4\n");
  const RunResult r = ws.run("gen --spec " + ws / "spec.conf" + " --out " + ws / "a");
  REQUIRE(r.status == 0);
  CHECK(r.out.find("# resolved dataset") != std::string::npos);
  CHECK(r.out.find("count=10") != std::string::npos);
  std::set<std::string> files;
  for (const auto& e : fs::directory_iterator(ws / "a")) files.insert(e.path().filename().string());
  CHECK(files.size() == 11);
  CHECK(files.count("labels.txt") == 1);
  CHECK(lines(read_file(ws / "a/labels.txt")).size() == 10);

  REQUIRE(ws.run("gen --spec " + ws / "spec.conf" + " --out " + ws / "b").status == 0);
  for (const auto& name : files) {
    CHECK(read_file(ws / ("a/" + name)) == read_file(ws / ("b/" + name)));
  }

  const RunResult seeded = ws.run("gen --spec " + ws / "spec.conf" + " --out " + ws / "c", "ACNV_SEED=77");
  REQUIRE(seeded.status == 0);
  CHECK(seeded.out.find("seed=77") != std::string::npos);
  CHECK(read_file(ws / "c/000000.pgm") != read_file(ws / "a/000000.pgm"));
}

TEST_CASE("gen rejects unknown keys and unwritable destinations") {
  Workspace ws("acnv_cli_gen_errors");
  ws.write("bad.conf", "vocab = digits\ncolour = red\n");
  const RunResult bad = ws.run("gen --spec " + ws / "bad.conf" + " --out " + ws / "out");
  check_single_line_error(bad);
  CHECK(bad.err.find("colour") != std::string::npos);

  ws.write("ok.conf", "count = 2\n");
  ws.write("blocker", "a file, not a directory");
  check_single_line_error(ws.run("gen --spec " + ws / "ok.conf" + " --out " + ws / "blocker/sub"));
  check_single_line_error(ws.run("gen --spec " + ws / "absent.conf" + " --out " + ws / "out"));
}

TEST_CASE("missing inputs fail with one error line") {
  Workspace ws("acnv_cli_missing");
  check_single_line_error(ws.run("eval --ckpt " + ws / "none.ckpt" + " --spec " + ws / "none.conf"));
  check_single_line_error(ws.run("decode --ckpt " + ws / "none.ckpt" + " --image " + ws / "none.pgm"));
  check_single_line_error(ws.run("export-attention --ckpt " + ws / "none.ckpt" + " --image x --out " + ws / "o"));
  check_single_line_error(ws.run("decode --image x"));
  check_single_line_error(ws.run("bench --repeats 0"));
  check_single_line_error(ws.run("frobnicate"));
}

TEST_CASE("train echoes its resolved configuration") {
  Workspace ws("acnv_cli_train");
  ws.write("train.conf", "steps = 0\ntrain_count = 2\ntest_count = 2\nbatch_size = 2\n");
  const RunResult r = ws.run("train --config " + ws / "train.conf" + " --eval-every 0 --checkpoint-every 0 --lr 0.01");
  REQUIRE(r.status == 0);
  const auto out = lines(r.out);
  REQUIRE_FALSE(out.empty());
  CHECK(out[0] == "# resolved train config");
  CHECK(r.out.find("learning_rate=0.01\n") != std::string::npos);
  CHECK(r.out.find("steps=0\n") != std::string::npos);
  CHECK(r.out.find("vocab=digits\n") != std::string::npos);

  ws.write("typo.conf", "stpes = 3\n");
  const RunResult typo = ws.run("train --config " + ws / "typo.conf");
  check_single_line_error(typo);
  CHECK(typo.err.find("stpes") != std::string::npos);
}

TEST_CASE("eval and decode on a checkpoint") {
  Workspace ws("acnv_cli_eval");
  const std::string ckpt = make_checkpoint(ws);
  ws.write("test.conf", "count = 6\nseed = 8\n");
  ws.write("words.txt", "123\n4567\n890\n");
  const std::string eval = "eval --ckpt " + ckpt + " --spec " + ws / "test.conf" + " --lexicon " + ws / "words.txt";
  const RunResult first = ws.run(eval);
  const RunResult second = ws.run(eval);
  REQUIRE(first.status == 0);
  CHECK(first.out == second.out);
  CHECK(first.out.find("evaluated=6\n") != std::string::npos);
  CHECK(first.out.find("lexicon_accuracy=") != std::string::npos);
  CHECK(first.out.find("empty_predictions=") != std::string::npos);

  write_pgm(ws / "img.pgm", render(LabelSequence::from_string("abc"), 3).image);
  const RunResult plain = ws.run("decode --ckpt " + ckpt + " --image " + ws / "img.pgm" + " --frames");
  REQUIRE(plain.status == 0);
  const auto out = lines(plain.out);
  REQUIRE(out.size() >= 2);
  CHECK(out[1].rfind("frames: ", 0) == 0);
  CHECK(out[1].size() == 8 + 25);

  const RunResult snapped = ws.run("decode --ckpt " + ckpt + " --image " + ws / "img.pgm" + " --lexicon " + ws / "words.txt");
  REQUIRE(snapped.status == 0);
  const std::string word = lines(snapped.out).at(0);
  CHECK((word == "123" || word == "4567" || word == "890"));

  ws.write("empty.txt", "\n");
  check_single_line_error(ws.run("decode --ckpt " + ckpt + " --image " + ws / "img.pgm" + " --lexicon " + ws / "empty.txt"));
}

TEST_CASE("export-attention writes both modules") {
  Workspace ws("acnv_cli_export");
  const std::string ckpt = make_checkpoint(ws);
  write_pgm(ws / "img.pgm", render(LabelSequence::from_string("42x7"), 5).image);
  REQUIRE(ws.run("export-attention --ckpt " + ckpt + " --image " + ws / "img.pgm" + " --out " + ws / "maps").status == 0);
  for (int module : {1, 2}) {
    for (std::string kind : {"mask", "feature", "output"}) {
      const std::string path = ws / ("maps/attention" + std::to_string(module) + "_" + kind + ".pgm");
      INFO(path);
      REQUIRE(fs::exists(path));
      const GrayImage img = read_pgm(path);
      const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
      CHECK(((*lo == 0 && *hi == 255) || *lo == *hi));
    }
  }
  CHECK_FALSE(fs::exists(ws / "maps/attention3_mask.pgm"));

  REQUIRE(ws.run("export-attention --ablate --ckpt " + ckpt + " --image " + ws / "img.pgm" + " --out " + ws / "ablated").status == 0);
  for (int module : {1, 2}) {
    const GrayImage mask = read_pgm(ws / ("ablated/attention" + std::to_string(module) + "_mask.pgm"));
    CHECK(std::all_of(mask.pixels.begin(), mask.pixels.end(), [](std::uint8_t p) { return p == 0; }));
  }
}

TEST_CASE("bench emits one CSV row per width") {
  Workspace ws("acnv_cli_bench");
  for (int repeats : {1, 10}) {
    const RunResult r = ws.run("bench --lengths 25,50,100 --height 64 --repeats " + std::to_string(repeats));
    REQUIRE(r.status == 0);
    const auto rows = lines(r.out);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "width,repeats,mean_ms,stddev_ms,per_frame_ms");
    for (size_t i = 1; i < rows.size(); ++i) {
      std::vector<std::string> cells;
      std::istringstream row(rows[i]);
      for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
      REQUIRE(cells.size() == 5);
      CHECK(std::stoi(cells[1]) == repeats);
      CHECK(std::stod(cells[3]) >= 0.0);
    }
    CHECK(r.err.find("fitted per-frame cost") != std::string::npos);
  }
}

}  // namespace
}  // namespace acnv
