// Copyright 2026 The confbench Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "confbench/cli.hpp"
#include "confbench/core.hpp"
#include "confbench/io.hpp"
#include "confbench/synthgen.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

using namespace confbench;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "confbench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  Run r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Flags for a dataset small enough to train in well under a second.
std::vector<std::string> tiny(std::vector<std::string> args, const char* num_wsis = "16") {
  for (const char* a : {"--num-wsis", num_wsis, "--tiles-min", "6", "--tiles-max", "10",
                        "--grid-cols", "4"}) {
    args.emplace_back(a);
  }
  return args;
}

std::string directory_digest(const fs::path& dir) {
  std::string all;
  for (const char* f : {"manifest.json", "tiles_train.bin", "tiles_val.bin", "tiles_test.bin"}) {
    all += io::read_file(dir / f);
  }
  return hex64(fnv1a64(all));
}

// Leading JSON document printed by every command.
nlohmann::json resolved(const std::string& out) {
  std::istringstream in(out);
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace

TEST_CASE("help documents every subcommand and flag") {
  const Run top = invoke({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"gen", "embed", "train", "sweep", "ablate", "report"}) {
    CHECK(top.out.find(sub) != std::string::npos);
  }
  const Run sweep = invoke({"sweep", "--help"});
  CHECK(sweep.code == 0);
  for (const char* flag : {"--design", "--modifier", "--p-grid", "--seed", "--jobs", "--config",
                           "--print-config", "--out", "--epochs", "--num-wsis"}) {
    CHECK(sweep.out.find(flag) != std::string::npos);
  }
  const Run ablate = invoke({"ablate", "--help"});
  for (const char* flag : {"--ratios", "--replicates", "--grid-points"}) {
    CHECK(ablate.out.find(flag) != std::string::npos);
  }
}

TEST_CASE("usage errors exit 2 and name the problem") {
  const Run frac = invoke({"gen", "--pos-fraction", "1.5"});
  CHECK(frac.code == 2);
  CHECK(frac.err.find("--pos-fraction") != std::string::npos);
  const Run mod = invoke({"sweep", "--modifier", "glitter"});
  CHECK(mod.code == 2);
  CHECK(mod.err.find("--modifier") != std::string::npos);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"gen", "--bogus"}).code == 2);
  CHECK(invoke({"sweep", "--p-grid", "0,0.5,0.2", "--print-config"}).code == 2);
  CHECK(invoke({"train"}).code == 2);
}

TEST_CASE("gen is reproducible under --seed and keeps the class balance") {
  const auto dir = testing::scratch_dir("cli-gen");
  const Run a = invoke(tiny({"gen", "--seed", "1", "--out", (dir / "a").string()}, "10"));
  const Run b = invoke(tiny({"gen", "--seed", "1", "--out", (dir / "b").string()}, "10"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(directory_digest(dir / "a") == directory_digest(dir / "b"));
  const auto wsis = io::read_dataset(dir / "a");
  int pos = 0;
  for (const Wsi& w : wsis) pos += w.label;
  CHECK(wsis.size() == 10);
  CHECK(pos == 6);
  const nlohmann::json j = resolved(a.out);
  CHECK(j.at("command") == "gen");
  CHECK(j.at("seed") == 1);
  CHECK(j.at("settings").at("num_wsis") == 10);
  const Run c = invoke(tiny({"gen", "--seed", "2", "--out", (dir / "c").string()}, "10"));
  REQUIRE(c.code == 0);
  CHECK(directory_digest(dir / "a") != directory_digest(dir / "c"));
}

TEST_CASE("--print-config resolves file and flags without running") {
  const auto dir = testing::scratch_dir("cli-config");
  io::write_file_atomic(dir / "cfg.json",
                        R"({"gen": {"num_wsis": 5, "pos_fraction": 0.5}, "model": {"lr": 0.002}})");
  const Run r = invoke({"sweep", "--config", (dir / "cfg.json").string(), "--num-wsis", "7",
                     "--epochs", "4", "--seed", "9", "--print-config", "--out",
                     (dir / "never").string()});
  REQUIRE(r.code == 0);
  const nlohmann::json j = resolved(r.out);
  CHECK(j.at("seed") == 9);
  CHECK(j.at("settings").at("gen").at("num_wsis") == 7);
  CHECK(j.at("settings").at("gen").at("pos_fraction") == 0.5);
  CHECK(j.at("settings").at("sweep").at("model").at("lr") == 0.002);
  CHECK(j.at("settings").at("sweep").at("model").at("max_epochs") == 4);
  CHECK(j.at("settings").at("sweep").at("root_seed") == 9);
  CHECK_FALSE(fs::exists(dir / "never"));

  io::write_file_atomic(dir / "bad.json", R"({"gen": {"pos_fraction": 2.0}})");
  const Run bad = invoke({"gen", "--config", (dir / "bad.json").string(), "--print-config"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("pos_fraction") != std::string::npos);
  io::write_file_atomic(dir / "section.json", R"({"plot": {}})");
  CHECK(invoke({"gen", "--config", (dir / "section.json").string()}).code == 2);
  io::write_file_atomic(dir / "broken.json", "{");
  CHECK(invoke({"gen", "--config", (dir / "broken.json").string()}).code == 2);
}

TEST_CASE("embed, train, sweep, report on a generated dataset") {
  const auto dir = testing::scratch_dir("cli-pipeline");
  const std::string data = (dir / "data").string();
  REQUIRE(invoke(tiny({"gen", "--seed", "3", "--out", data})).code == 0);

  const Run e = invoke({"embed", "--data", data});
  CHECK(e.code == 0);
  CHECK(fs::exists(dir / "data" / "embeddings.bin"));

  const Run t = invoke({"train", "--data", data, "--epochs", "2", "--out", (dir / "model").string()});
  CHECK(t.code == 0);
  CHECK(fs::exists(dir / "model" / "model.ckpt"));
  CHECK(fs::exists(dir / "model" / "train_log.csv"));

  const Run s = invoke({"sweep", "--data", data, "--p-grid", "0", "--epochs", "2", "--out",
                     (dir / "results").string(), "--jobs", "2"});
  REQUIRE(s.code == 0);
  fs::path run_dir;
  for (const auto& entry : fs::directory_iterator(dir / "results" / "runs")) run_dir = entry.path();
  const std::string summary = io::read_file(run_dir / "summary.csv");
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 2);
  CHECK(s.out.find(summary) != std::string::npos);

  fs::remove(run_dir / "summary.csv");
  const Run rep = invoke({"report", "--run", run_dir.string()});
  CHECK(rep.code == 0);
  CHECK(io::read_file(run_dir / "summary.csv") == summary);
}

TEST_CASE("full default grid gives five summary rows") {
  const auto dir = testing::scratch_dir("cli-grid");
  const Run s = invoke(tiny({"sweep", "--modifier", "pen-mark", "--epochs", "1", "--no-heatmaps",
                          "--out", dir.string()}));
  REQUIRE(s.code == 0);
  const auto header = s.out.find("design,modifier,p,auc,cr,ncc,sbar_size\n");
  REQUIRE(header != std::string::npos);
  const std::string table = s.out.substr(header);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
}

TEST_CASE("a failed condition makes sweep exit 1") {
  const auto dir = testing::scratch_dir("cli-fail");
  std::vector<Wsi> wsis = synthgen::generate_dataset(testing::tiny_config(5, 12));
  std::erase_if(wsis, [](const Wsi& w) { return w.split == Split::kVal; });
  io::write_dataset(dir / "data", wsis);
  const Run s = invoke({"sweep", "--data", (dir / "data").string(), "--p-grid", "0", "--epochs", "1",
                     "--out", (dir / "results").string()});
  CHECK(s.code == 1);
  CHECK(s.out.find("failed") != std::string::npos);
}

TEST_CASE("ablate with ratio 0 and one replicate") {
  const auto dir = testing::scratch_dir("cli-ablate");
  const Run a = invoke({"ablate", "--num-wsis", "30", "--tiles-min", "6", "--tiles-max", "10",
                     "--ratios", "0", "--replicates", "1", "--grid-points", "5", "--epochs", "2",
                     "--out", dir.string()});
  REQUIRE(a.code == 0);
  fs::path run_dir;
  for (const auto& entry : fs::directory_iterator(dir / "ablation")) run_dir = entry.path();
  CHECK(fs::exists(run_dir / "threshold_curve.csv"));
  std::istringstream csv(io::read_file(run_dir / "ablation.csv"));
  std::string header;
  std::string row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header == "ratio,sdana_p_value,tiles_removed,auc_feature,auc_baseline_mean,auc_baseline_1");
  std::vector<std::string> cells;
  std::stringstream fields(row);
  for (std::string cell; std::getline(fields, cell, ',');) cells.push_back(cell);
  REQUIRE(cells.size() == 6);
  CHECK(cells[3] == cells[4]);
  CHECK(cells[4] == cells[5]);
}

TEST_CASE("results root comes from the environment when --out is absent") {
  const auto dir = testing::scratch_dir("cli-env");
  ::setenv(cli::kResultsEnv, dir.string().c_str(), 1);
  const Run g = invoke(tiny({"gen", "--seed", "4"}));
  ::unsetenv(cli::kResultsEnv);
  REQUIRE(g.code == 0);
  CHECK(fs::exists(dir / "datasets"));
  const std::string out_dir = resolved(g.out).at("settings").at("out");
  CHECK(fs::exists(fs::path(out_dir) / "manifest.json"));
}
