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
#include <cmath>
#include <set>

#include "confbench/experiment.hpp"
#include "confbench/io.hpp"
#include "confbench/metrics.hpp"
#include "confbench/synthgen.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace confbench;
using namespace confbench::experiment;

namespace {

const PreparedDataset& tiny_data() {
  static const PreparedDataset data = [] {
    synthgen::GenConfig cfg = testing::tiny_config(31, 24);
    cfg.jobs = 4;
    return prepare(synthgen::generate_dataset(cfg), 4);
  }();
  return data;
}

SweepSpec quick_spec(modify::Modifier m = modify::Modifier::kBlur,
                     modify::Design d = modify::Design::kTileBased) {
  SweepSpec spec;
  spec.modifier = m;
  spec.design = d;
  spec.model_cfg.max_epochs = 3;
  spec.model_cfg.lr = 1e-3;
  spec.root_seed = 4;
  return spec;
}

abmil::AttentionMap grid_map(std::vector<double> weights, int cols) {
  abmil::AttentionMap m;
  for (int j = 0; j < static_cast<int>(weights.size()); ++j) {
    m.grid_pos.push_back(grid_position(j, cols));
  }
  m.weights = std::move(weights);
  return m;
}

void check_records_equal(const RunRecord& a, const RunRecord& b) {
  nlohmann::json ja = to_json(a);
  nlohmann::json jb = to_json(b);
  ja.erase("wall_seconds");
  jb.erase("wall_seconds");
  CHECK(ja == jb);
}

}  // namespace

TEST_CASE("sweep spec validation") {
  SweepSpec spec;
  CHECK_NOTHROW(validate(spec));
  spec.p_grid = {0.0, 0.5, 0.2};
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec.p_grid = {0.0, 1.2};
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec.p_grid = {};
  CHECK_THROWS_AS(validate(spec), std::invalid_argument);
  spec = SweepSpec{};
  spec.modifier = modify::Modifier::kNone;
  CHECK_THROWS_AS(validate(spec), modify::UnknownModifier);
  spec.p_grid = {0.0};
  CHECK_NOTHROW(validate(spec));
}

TEST_CASE("sweep spec JSON round-trip and hash") {
  SweepSpec spec = quick_spec(modify::Modifier::kPenMark, modify::Design::kWsiBased);
  spec.modifier_params.pen.alpha = 0.3;
  nlohmann::json j;
  to_json(j, spec);
  SweepSpec back;
  from_json(j, back);
  nlohmann::json j2;
  to_json(j2, back);
  CHECK(j == j2);
  const std::string h = spec_hash(spec, 99);
  CHECK(h.size() == 16);
  CHECK(h == spec_hash(back, 99));
  CHECK(h != spec_hash(spec, 98));
  back.p_grid = {0.0, 1.0};
  CHECK(h != spec_hash(back, 99));
  CHECK_THROWS(from_json(nlohmann::json{{"modifier", "glitter"}}, back));
}

TEST_CASE("condition seeds and names") {
  SweepSpec spec = quick_spec(modify::Modifier::kCleverHans);
  const ConditionSeeds s = condition_seeds(spec);
  CHECK(s.train_plan != s.test_plan);
  CHECK(s.train_plan != s.model);
  CHECK(condition_name(spec, 0.2) == "tile-clever-hans-p020");
  CHECK(condition_name(spec, 1.0) == "tile-clever-hans-p100");
  spec.design = modify::Design::kWsiBased;
  CHECK(condition_name(spec, 0.0) == "wsi-clever-hans-p000");
  const ConditionSeeds w = condition_seeds(spec);
  CHECK(w.train_plan != s.train_plan);
  CHECK(w.model == s.model);
}

TEST_CASE("p = 0 reproduces the unconfounded baseline") {
  const PreparedDataset& data = tiny_data();
  const SweepSpec spec = quick_spec();
  const ConditionOutput out = run_condition(data, spec, 0.0);
  CHECK(out.record.ok);
  CHECK(out.record.interpretability.cr == 0.0);
  CHECK(out.record.interpretability.ncc == 1.0);
  CHECK(out.record.interpretability.sbar_size == 0);

  abmil::AbmilConfig cfg = spec.model_cfg;
  cfg.seed = condition_seeds(spec).model;
  const abmil::TrainResult base = abmil::train(data.embedded, cfg);
  CHECK(base.model == out.model);
  std::vector<double> pos;
  std::vector<double> neg;
  for (const auto& w : data.embedded) {
    if (w.split != Split::kTest) continue;
    (w.label == 1 ? pos : neg).push_back(abmil::predict_full(base.model, w).probability);
  }
  CHECK(out.record.auc == metrics::auc(pos, neg));
}

TEST_CASE("conditions are deterministic and pair every test WSI") {
  const PreparedDataset& data = tiny_data();
  const SweepSpec spec = quick_spec(modify::Modifier::kPenMark);
  const ConditionOutput a = run_condition(data, spec, 0.5);
  const ConditionOutput b = run_condition(data, spec, 0.5);
  check_records_equal(a.record, b.record);
  CHECK(a.model == b.model);
  int tests = 0;
  for (const auto& w : data.wsis) tests += w.split == Split::kTest;
  CHECK(static_cast<int>(a.evals.size()) == tests);
  for (const auto& e : a.evals) {
    const Wsi& w = *std::find_if(data.wsis.begin(), data.wsis.end(),
                                 [&](const Wsi& x) { return x.id == e.wsi_id; });
    if (w.label == 0) CHECK(std::none_of(e.modified_mask.begin(), e.modified_mask.end(),
                                         [](bool f) { return f; }));
  }
  CHECK(a.record.interpretability.sbar_size <= tests);
}

TEST_CASE("single-point sweep persists a complete run directory") {
  const PreparedDataset& data = tiny_data();
  SweepSpec spec = quick_spec();
  spec.p_grid = {0.0};
  const auto root = testing::scratch_dir("experiment-single");
  const auto records = run_sweep(data, spec, {root, 1, true});
  REQUIRE(records.size() == 1);
  const auto dir = root / "runs" / spec_hash(spec, data.digest);
  CHECK(std::filesystem::exists(dir / "spec.json"));
  CHECK(std::filesystem::exists(dir / "sweep.png"));
  const std::string summary = io::read_file(dir / "summary.csv");
  CHECK(summary == summary_csv(records));
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 2);
  CHECK(summary.rfind("design,modifier,p,auc,cr,ncc,sbar_size\n", 0) == 0);
  const auto cond = dir / condition_name(spec, 0.0);
  for (const char* f : {"record.json", "model.ckpt", "metrics.csv", "train_log.csv"}) {
    CHECK(std::filesystem::exists(cond / f));
  }
  int pngs = 0;
  for (const auto& e : std::filesystem::directory_iterator(cond / "heatmaps")) {
    pngs += e.path().extension() == ".png";
  }
  int tests = 0;
  for (const auto& w : data.wsis) tests += w.split == Split::kTest;
  CHECK(pngs == 2 * tests);
  CHECK(abmil::load_checkpoint(cond / "model.ckpt") ==
        run_condition(data, spec, 0.0).model);

  const auto reloaded = load_records(dir);
  REQUIRE(reloaded.size() == 1);
  check_records_equal(reloaded[0], records[0]);
}

TEST_CASE("sweep CSVs are identical on re-run") {
  const PreparedDataset& data = tiny_data();
  SweepSpec spec = quick_spec(modify::Modifier::kCleverHans, modify::Design::kWsiBased);
  spec.p_grid = {0.0, 0.5, 1.0};
  const auto a = testing::scratch_dir("experiment-rerun-a");
  const auto b = testing::scratch_dir("experiment-rerun-b");
  run_sweep(data, spec, {a, 3, false});
  run_sweep(data, spec, {b, 1, false});
  const auto sub = std::filesystem::path("runs") / spec_hash(spec, data.digest);
  CHECK(io::read_file(a / sub / "summary.csv") == io::read_file(b / sub / "summary.csv"));
  for (double p : spec.p_grid) {
    for (const char* f : {"metrics.csv", "train_log.csv"}) {
      const auto rel = sub / condition_name(spec, p) / f;
      CHECK(io::read_file(a / rel) == io::read_file(b / rel));
    }
  }
}

TEST_CASE("failing conditions are recorded, not fatal") {
  std::vector<Wsi> wsis = tiny_data().wsis;
  std::erase_if(wsis, [](const Wsi& w) { return w.split == Split::kVal; });
  const PreparedDataset data = prepare(wsis, 2);
  SweepSpec spec = quick_spec();
  spec.p_grid = {0.0, 0.5};
  const auto root = testing::scratch_dir("experiment-fail");
  const auto records = run_sweep(data, spec, {root, 2, false});
  REQUIRE(records.size() == 2);
  for (const auto& r : records) {
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.error.empty());
  }
  const auto dir = root / "runs" / spec_hash(spec, data.digest);
  CHECK(std::filesystem::exists(dir / "summary.csv"));
  const auto loaded = load_records(dir);
  REQUIRE(loaded.size() == 2);
  CHECK(std::isnan(loaded[0].auc));
  CHECK(loaded[1].error == records[1].error);
  CHECK(summary_csv(records).find("tile,blur,0,,,,\n") != std::string::npos);
}

TEST_CASE("heatmap of uniform attention is mid-gray") {
  const auto img = render_attention_heatmap(grid_map(std::vector<double>(6, 1.0 / 6), 3), 2, 3, 4);
  CHECK(img.width == 12);
  CHECK(img.height == 8);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) CHECK(img.pixel(x, y) == Rgb{128, 128, 128});
  }
}

TEST_CASE("heatmap with a single maximum has exactly one white cell") {
  const auto img = render_attention_heatmap(grid_map({0.1, 0.6, 0.2, 0.1}, 3), 2, 3, 2);
  int white = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) white += img.pixel(x, y) == Rgb{255, 255, 255};
  }
  CHECK(white == 4);  // one 2x2 cell
  CHECK(img.pixel(2, 0) == Rgb{255, 255, 255});
  CHECK(img.pixel(0, 0) == Rgb{43, 43, 43});  // round(255 / 6)
  // Grid cells without a tile stay black.
  CHECK(img.pixel(5, 3) == kEmptyCell);
}

TEST_CASE("heatmap outlines modified tiles and validates the grid") {
  const std::vector<bool> mod = {false, true, false, false};
  const auto img = render_attention_heatmap(grid_map({0.1, 0.6, 0.2, 0.1}, 2), 2, 2, 5, &mod);
  CHECK(img.pixel(5, 0) == kOutline);
  CHECK(img.pixel(9, 4) == kOutline);
  CHECK(img.pixel(7, 2) == Rgb{255, 255, 255});
  CHECK(img.pixel(0, 0) != kOutline);

  CHECK_THROWS_AS(render_attention_heatmap(grid_map({0.5, 0.5}, 2), 1, 1), GridMismatch);
  abmil::AttentionMap dup = grid_map({0.5, 0.5}, 2);
  dup.grid_pos[1] = dup.grid_pos[0];
  CHECK_THROWS_AS(render_attention_heatmap(dup, 2, 2), GridMismatch);
  const std::vector<bool> short_mask = {true};
  CHECK_THROWS_AS(render_attention_heatmap(grid_map({0.5, 0.5}, 2), 1, 2, 8, &short_mask),
                  GridMismatch);
}

TEST_CASE("images survive a PNG round-trip pixel for pixel") {
  const auto dir = testing::scratch_dir("experiment-png");
  const std::vector<bool> mod = {true, false, true, false, false};
  const auto img = render_attention_heatmap(grid_map({0.3, 0.1, 0.25, 0.05, 0.3}, 3), 2, 3, 6, &mod);
  write_png(dir / "h.png", img);
  CHECK(read_png(dir / "h.png") == img);

  std::vector<RunRecord> records(3);
  for (int i = 0; i < 3; ++i) {
    records[i].ok = true;
    records[i].p = i * 0.5;
    records[i].auc = 0.7 + 0.1 * i;
    records[i].interpretability.cr = 0.4 * i;
    records[i].interpretability.ncc = 1.0 - 0.8 * i;
  }
  const Image plot = render_sweep_plot(records);
  CHECK(plot.width > 0);
  write_png(dir / "p.png", plot);
  CHECK(read_png(dir / "p.png") == plot);
}

TEST_CASE("run record JSON round-trip") {
  RunRecord r;
  r.spec_hash = "00000000deadbeef";
  r.design = modify::Design::kWsiBased;
  r.modifier = modify::Modifier::kPenMark;
  r.p = 0.8;
  r.seeds = {1, 2, 3};
  r.checkpoint = "x/model.ckpt";
  r.ok = true;
  r.auc = 0.875;
  r.best_epoch = 12;
  r.interpretability.cr = 0.5;
  r.interpretability.ncc = 0.25;
  r.interpretability.sbar_size = 2;
  r.wall_seconds = 1.5;
  const RunRecord back = record_from_json(to_json(r));
  CHECK(to_json(back) == to_json(r));
}
