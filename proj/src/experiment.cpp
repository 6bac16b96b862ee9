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

#include "confbench/experiment.hpp"

#include <png.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "confbench/features.hpp"
#include "confbench/io.hpp"
#include "confbench/parallel.hpp"
#include "confbench/rng.hpp"

namespace confbench::experiment {

namespace {

nlohmann::json rgb_json(Rgb c) { return nlohmann::json::array({c.r, c.g, c.b}); }

Rgb rgb_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("color must be [r,g,b]");
  return {j[0].get<std::uint8_t>(), j[1].get<std::uint8_t>(), j[2].get<std::uint8_t>()};
}

nlohmann::json params_json(const modify::ModifierParams& p) {
  return {{"clever_hans",
           {{"text", p.clever_hans.text},
            {"alpha", p.clever_hans.alpha},
            {"color", rgb_json(p.clever_hans.color)},
            {"scale", p.clever_hans.scale}}},
          {"pen",
           {{"alpha", p.pen.alpha}, {"width", p.pen.width}, {"color", rgb_json(p.pen.color)}}},
          {"blur_sigma", p.blur_sigma}};
}

void params_from_json(const nlohmann::json& j, modify::ModifierParams& p) {
  if (j.contains("clever_hans")) {
    const auto& c = j.at("clever_hans");
    if (c.contains("text")) p.clever_hans.text = c.at("text").get<std::string>();
    if (c.contains("alpha")) p.clever_hans.alpha = c.at("alpha").get<double>();
    if (c.contains("color")) p.clever_hans.color = rgb_from_json(c.at("color"));
    if (c.contains("scale")) p.clever_hans.scale = c.at("scale").get<double>();
  }
  if (j.contains("pen")) {
    const auto& c = j.at("pen");
    if (c.contains("alpha")) p.pen.alpha = c.at("alpha").get<double>();
    if (c.contains("width")) p.pen.width = c.at("width").get<double>();
    if (c.contains("color")) p.pen.color = rgb_from_json(c.at("color"));
  }
  if (j.contains("blur_sigma")) p.blur_sigma = j.at("blur_sigma").get<double>();
}

std::string tag_prefix(const SweepSpec& spec) {
  return "experiment/" + std::string(modify::to_string(spec.design)) + "/" +
         std::string(modify::to_string(spec.modifier));
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void validate(const SweepSpec& spec) {
  if (spec.p_grid.empty()) throw std::invalid_argument("p_grid must not be empty");
  for (std::size_t i = 0; i < spec.p_grid.size(); ++i) {
    const double p = spec.p_grid[i];
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p_grid values must lie in [0,1]");
    if (i > 0 && p <= spec.p_grid[i - 1]) {
      throw std::invalid_argument("p_grid must be strictly increasing");
    }
  }
  if (spec.modifier == modify::Modifier::kNone &&
      std::any_of(spec.p_grid.begin(), spec.p_grid.end(), [](double p) { return p > 0.0; })) {
    throw modify::UnknownModifier("modifier 'none' only supports p = 0");
  }
  abmil::validate(spec.model_cfg);
}

void to_json(nlohmann::json& j, const SweepSpec& spec) {
  nlohmann::json model;
  abmil::to_json(model, spec.model_cfg);
  j = nlohmann::json{{"design", modify::to_string(spec.design)},
                     {"modifier", modify::to_string(spec.modifier)},
                     {"p_grid", spec.p_grid},
                     {"model", model},
                     {"modifier_params", params_json(spec.modifier_params)},
                     {"root_seed", spec.root_seed}};
}

void from_json(const nlohmann::json& j, SweepSpec& spec) {
  if (!j.is_object()) throw std::invalid_argument("sweep config must be a JSON object");
  try {
    if (j.contains("design")) spec.design = modify::parse_design(j.at("design").get<std::string>());
    if (j.contains("modifier")) {
      spec.modifier = modify::parse_modifier(j.at("modifier").get<std::string>());
    }
    if (j.contains("p_grid")) spec.p_grid = j.at("p_grid").get<std::vector<double>>();
    if (j.contains("model")) abmil::from_json(j.at("model"), spec.model_cfg);
    if (j.contains("modifier_params")) params_from_json(j.at("modifier_params"), spec.modifier_params);
    if (j.contains("root_seed")) spec.root_seed = j.at("root_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("sweep config: ") + e.what());
  }
}

std::string spec_hash(const SweepSpec& spec, std::uint64_t dataset_digest) {
  nlohmann::json j;
  to_json(j, spec);
  j["dataset_digest"] = hex64(dataset_digest);
  return hex64(fnv1a64(j.dump()));
}

ConditionSeeds condition_seeds(const SweepSpec& spec) {
  const std::string prefix = tag_prefix(spec);
  return {derive_seed(spec.root_seed, prefix + "/train-plan"),
          derive_seed(spec.root_seed, prefix + "/test-plan"),
          derive_seed(spec.root_seed, "experiment/model")};
}

std::string condition_name(const SweepSpec& spec, double p) {
  char pct[16];
  std::snprintf(pct, sizeof(pct), "p%03d", static_cast<int>(std::lround(p * 100.0)));
  return std::string(modify::to_string(spec.design)) + "-" +
         std::string(modify::to_string(spec.modifier)) + "-" + pct;
}

nlohmann::json to_json(const RunRecord& r) {
  return {{"spec_hash", r.spec_hash},
          {"design", modify::to_string(r.design)},
          {"modifier", modify::to_string(r.modifier)},
          {"p", r.p},
          {"seeds",
           {{"train_plan", r.seeds.train_plan},
            {"test_plan", r.seeds.test_plan},
            {"model", r.seeds.model}}},
          {"checkpoint", r.checkpoint},
          {"ok", r.ok},
          {"error", r.error},
          {"auc", r.auc},
          {"best_epoch", r.best_epoch},
          {"interpretability", metrics::to_json(r.interpretability)},
          {"wall_seconds", r.wall_seconds}};
}

namespace {

// Non-finite values serialize as null.
double number_or_nan(const nlohmann::json& v) {
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  try {
    r.spec_hash = j.at("spec_hash").get<std::string>();
    r.design = modify::parse_design(j.at("design").get<std::string>());
    r.modifier = modify::parse_modifier(j.at("modifier").get<std::string>());
    r.p = j.at("p").get<double>();
    r.seeds.train_plan = j.at("seeds").at("train_plan").get<std::uint64_t>();
    r.seeds.test_plan = j.at("seeds").at("test_plan").get<std::uint64_t>();
    r.seeds.model = j.at("seeds").at("model").get<std::uint64_t>();
    r.checkpoint = j.at("checkpoint").get<std::string>();
    r.ok = j.at("ok").get<bool>();
    r.error = j.at("error").get<std::string>();
    r.auc = number_or_nan(j.at("auc"));
    r.best_epoch = j.at("best_epoch").get<int>();
    const auto& rep = j.at("interpretability");
    r.interpretability.cr = number_or_nan(rep.at("cr"));
    r.interpretability.ncc = number_or_nan(rep.at("ncc"));
    r.interpretability.sbar_size = rep.at("sbar_size").get<int>();
    r.interpretability.ncc_excluded = rep.at("ncc_excluded").get<int>();
    for (const auto& row : rep.at("wsis")) {
      metrics::WsiRow w;
      w.wsi_id = row.at("wsi_id").get<WsiId>();
      w.in_sbar = row.at("in_sbar").get<bool>();
      w.precision = row.at("precision").get<double>();
      w.prevalence = row.at("prevalence").get<double>();
      w.ncc = number_or_nan(row.at("ncc"));
      r.interpretability.rows.push_back(w);
    }
    r.wall_seconds = j.at("wall_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("run record: ") + e.what());
  }
  return r;
}

PreparedDataset prepare(std::vector<Wsi> wsis, int jobs) {
  PreparedDataset d;
  d.digest = dataset_digest(wsis);
  d.embedded = abmil::embed_all(wsis, jobs);
  d.wsis = std::move(wsis);
  return d;
}

namespace {

// Embeddings of `modified`, re-extracting only the edited tiles.
abmil::EmbeddedWsi reembed(const abmil::EmbeddedWsi& base, const Wsi& modified) {
  abmil::EmbeddedWsi out = base;
  for (std::size_t j = 0; j < modified.tiles.size(); ++j) {
    const bool edited = modified.tiles[j].meta.modified;
    out.modified[j] = edited;
    if (!edited) continue;
    const features::FeatureVector f = features::extract(modified.tiles[j].image);
    for (int k = 0; k < features::kFeatureDim; ++k) {
      out.x(static_cast<Eigen::Index>(j), k) = f[k];
    }
  }
  return out;
}

// Applies a plan sampled over the WSIs selected by `pick` and returns the
// modified embeddings aligned with data.embedded (unselected WSIs as is).
std::vector<abmil::EmbeddedWsi> modified_embeddings(const PreparedDataset& data,
                                                    const SweepSpec& spec, double p,
                                                    std::uint64_t seed, bool test_split) {
  std::vector<Wsi> subset;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < data.wsis.size(); ++i) {
    if ((data.wsis[i].split == Split::kTest) == test_split) {
      subset.push_back(data.wsis[i]);
      where.push_back(i);
    }
  }
  const modify::ModificationPlan plan =
      modify::sample_plan(subset, spec.modifier, spec.design, p, seed);
  const std::vector<Wsi> modified = modify::apply_plan(subset, plan, spec.modifier_params);
  std::vector<abmil::EmbeddedWsi> out = data.embedded;
  for (std::size_t k = 0; k < where.size(); ++k) {
    out[where[k]] = reembed(data.embedded[where[k]], modified[k]);
  }
  return out;
}

}  // namespace

ConditionOutput run_condition(const PreparedDataset& data, const SweepSpec& spec, double p) {
  validate(spec);
  const auto start = std::chrono::steady_clock::now();
  ConditionOutput out;
  RunRecord& r = out.record;
  r.spec_hash = spec_hash(spec, data.digest);
  r.design = spec.design;
  r.modifier = spec.modifier;
  r.p = p;
  r.seeds = condition_seeds(spec);

  const std::vector<abmil::EmbeddedWsi> train_set =
      modified_embeddings(data, spec, p, r.seeds.train_plan, false);
  abmil::AbmilConfig cfg = spec.model_cfg;
  cfg.seed = r.seeds.model;
  abmil::TrainResult trained = abmil::train(train_set, cfg);

  const std::vector<abmil::EmbeddedWsi> test_mod =
      modified_embeddings(data, spec, p, r.seeds.test_plan, true);
  std::vector<double> pos;
  std::vector<double> neg;
  for (std::size_t i = 0; i < data.embedded.size(); ++i) {
    const abmil::EmbeddedWsi& orig = data.embedded[i];
    if (orig.split != Split::kTest) continue;
    abmil::Prediction po = abmil::predict_full(trained.model, orig);
    abmil::Prediction pm = abmil::predict_full(trained.model, test_mod[i]);
    (orig.label == 1 ? pos : neg).push_back(pm.probability);
    out.evals.push_back(metrics::make_paired(std::move(po), std::move(pm), test_mod[i].modified));
  }
  r.auc = metrics::auc(pos, neg);
  r.interpretability = metrics::interpretability(out.evals);
  r.best_epoch = trained.best_epoch;
  r.ok = true;
  out.model = std::move(trained.model);
  out.log = std::move(trained.log);
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

namespace {

void persist_condition(const std::filesystem::path& dir, ConditionOutput& out,
                       const PreparedDataset& data, bool heatmaps) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path ckpt = dir / "model.ckpt";
  abmil::save_checkpoint(ckpt, out.model);
  out.record.checkpoint = ckpt.string();
  io::write_file_atomic(dir / "metrics.csv", metrics::to_csv(out.record.interpretability));
  io::write_file_atomic(dir / "train_log.csv", abmil::log_to_csv(out.log));
  if (heatmaps) {
    std::map<WsiId, const Wsi*> by_id;
    for (const Wsi& w : data.wsis) by_id[w.id] = &w;
    const std::filesystem::path hm = dir / "heatmaps";
    std::filesystem::create_directories(hm);
    for (const metrics::PairedEval& e : out.evals) {
      const Wsi& w = *by_id.at(e.wsi_id);
      int rows = 0;
      for (const Tile& t : w.tiles) rows = std::max(rows, t.meta.grid_pos.row + 1);
      const std::string base = "wsi-" + std::to_string(e.wsi_id);
      write_png(hm / (base + "-orig.png"),
                render_attention_heatmap(e.pred_orig.attention, rows, w.grid_cols));
      write_png(hm / (base + "-mod.png"), render_attention_heatmap(e.pred_mod.attention, rows,
                                                                   w.grid_cols, 8,
                                                                   &e.modified_mask));
    }
  }
  io::write_file_atomic(dir / "record.json", to_json(out.record).dump(2) + "\n");
}

}  // namespace

std::vector<RunRecord> run_sweep(const PreparedDataset& data, const SweepSpec& spec,
                                 const SweepOptions& options) {
  validate(spec);
  const std::string hash = spec_hash(spec, data.digest);
  const std::filesystem::path spec_dir =
      options.out_root.empty() ? std::filesystem::path() : options.out_root / "runs" / hash;
  std::vector<RunRecord> records(spec.p_grid.size());
  parallel_for(spec.p_grid.size(), options.jobs, [&](std::size_t i) {
    const double p = spec.p_grid[i];
    const std::filesystem::path dir =
        spec_dir.empty() ? spec_dir : spec_dir / condition_name(spec, p);
    try {
      ConditionOutput out = run_condition(data, spec, p);
      if (!dir.empty()) persist_condition(dir, out, data, options.heatmaps);
      records[i] = std::move(out.record);
    } catch (const std::exception& e) {
      RunRecord failed;
      failed.spec_hash = hash;
      failed.design = spec.design;
      failed.modifier = spec.modifier;
      failed.p = p;
      failed.seeds = condition_seeds(spec);
      failed.ok = false;
      failed.error = e.what();
      failed.auc = std::numeric_limits<double>::quiet_NaN();
      failed.interpretability.cr = std::numeric_limits<double>::quiet_NaN();
      failed.interpretability.ncc = std::numeric_limits<double>::quiet_NaN();
      if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        nlohmann::json j = to_json(failed);
        io::write_file_atomic(dir / "record.json", j.dump(2) + "\n");
      }
      records[i] = std::move(failed);
    }
  });
  if (!spec_dir.empty()) {
    std::filesystem::create_directories(spec_dir);
    nlohmann::json sj;
    to_json(sj, spec);
    sj["dataset_digest"] = hex64(data.digest);
    io::write_file_atomic(spec_dir / "spec.json", sj.dump(2) + "\n");
    io::write_file_atomic(spec_dir / "summary.csv", summary_csv(records));
    write_png(spec_dir / "sweep.png", render_sweep_plot(records));
  }
  return records;
}

std::string summary_csv(std::span<const RunRecord> records) {
  std::ostringstream out;
  out << "design,modifier,p,auc,cr,ncc,sbar_size\n";
  for (const RunRecord& r : records) {
    out << modify::to_string(r.design) << ',' << modify::to_string(r.modifier) << ','
        << format_double(r.p) << ',';
    if (r.ok) {
      out << format_double(r.auc) << ',' << format_double(r.interpretability.cr) << ','
          << format_double(r.interpretability.ncc) << ',' << r.interpretability.sbar_size;
    } else {
      out << ",,,";
    }
    out << '\n';
  }
  return out.str();
}

std::vector<RunRecord> load_records(const std::filesystem::path& spec_dir) {
  std::vector<RunRecord> out;
  for (const auto& entry : std::filesystem::directory_iterator(spec_dir)) {
    const std::filesystem::path rec = entry.path() / "record.json";
    if (!entry.is_directory() || !std::filesystem::exists(rec)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(io::read_file(rec));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(rec.string() + ": " + e.what());
    }
    RunRecord r = record_from_json(j);
    if (!r.ok) {
      r.auc = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) {
    if (a.design != b.design) return a.design < b.design;
    if (a.modifier != b.modifier) return a.modifier < b.modifier;
    return a.p < b.p;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Images

Rgb Image::pixel(int x, int y) const {
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[o], rgb[o + 1], rgb[o + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t o = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[o] = c.r;
  rgb[o + 1] = c.g;
  rgb[o + 2] = c.b;
}

Image blank_image(int width, int height, Rgb fill) {
  if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be >= 1");
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = fill.r;
    img.rgb[i + 1] = fill.g;
    img.rgb[i + 2] = fill.b;
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
    throw Error(path.string() + ": png encoding failed: " + png.message);
  }
  std::string buffer(size, '\0');
  if (!png_image_write_to_memory(&png, buffer.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
    throw Error(path.string() + ": png encoding failed: " + png.message);
  }
  buffer.resize(size);
  io::write_file_atomic(path, buffer);
}

Image read_png(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, data.data(), data.size())) {
    throw FormatError(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image img;
  img.width = static_cast<int>(png.width);
  img.height = static_cast<int>(png.height);
  img.rgb.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + png.message);
  }
  return img;
}

Image render_attention_heatmap(const abmil::AttentionMap& map, int grid_rows, int grid_cols,
                               int cell_px, const std::vector<bool>* modified) {
  if (grid_rows < 1 || grid_cols < 1 || cell_px < 1) {
    throw GridMismatch("grid dimensions and cell size must be >= 1");
  }
  if (map.grid_pos.size() != map.weights.size() || map.weights.empty()) {
    throw GridMismatch("attention map needs one grid position per weight");
  }
  if (modified != nullptr && modified->size() != map.weights.size()) {
    throw GridMismatch("modification mask length differs from the attention map");
  }
  std::set<GridPos> used;
  for (const GridPos& g : map.grid_pos) {
    if (g.row < 0 || g.col < 0 || g.row >= grid_rows || g.col >= grid_cols) {
      throw GridMismatch("tile at (" + std::to_string(g.row) + "," + std::to_string(g.col) +
                         ") lies outside a " + std::to_string(grid_rows) + "x" +
                         std::to_string(grid_cols) + " grid");
    }
    if (!used.insert(g).second) throw GridMismatch("two tiles share a grid cell");
  }
  const auto [lo, hi] = std::minmax_element(map.weights.begin(), map.weights.end());
  const bool uniform = *lo == *hi;
  Image img = blank_image(grid_cols * cell_px, grid_rows * cell_px, kEmptyCell);
  for (std::size_t j = 0; j < map.weights.size(); ++j) {
    const std::uint8_t v =
        uniform ? kUniformGray
                : static_cast<std::uint8_t>(std::lround(255.0 * map.weights[j] / *hi));
    const int x0 = map.grid_pos[j].col * cell_px;
    const int y0 = map.grid_pos[j].row * cell_px;
    const bool outline = modified != nullptr && (*modified)[j];
    for (int y = 0; y < cell_px; ++y) {
      for (int x = 0; x < cell_px; ++x) {
        const bool border = x == 0 || y == 0 || x == cell_px - 1 || y == cell_px - 1;
        img.set(x0 + x, y0 + y, outline && border ? kOutline : Rgb{v, v, v});
      }
    }
  }
  return img;
}

namespace {

void plot_line(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

Image render_sweep_plot(std::span<const RunRecord> records) {
  constexpr int kPanelW = 320;
  constexpr int kPanelH = 160;
  constexpr int kMargin = 16;
  constexpr Rgb kWhite = {255, 255, 255};
  constexpr Rgb kAxis = {160, 160, 160};
  constexpr Rgb kSeries[3] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}};
  Image img = blank_image(kPanelW, 3 * kPanelH, kWhite);
  for (int panel = 0; panel < 3; ++panel) {
    const double lo = panel == 2 ? -1.0 : 0.0;
    const double hi = 1.0;
    const int top = panel * kPanelH + kMargin;
    const int bottom = (panel + 1) * kPanelH - kMargin;
    const int left = kMargin;
    const int right = kPanelW - kMargin;
    auto px = [&](double p) { return left + static_cast<int>(std::lround(p * (right - left))); };
    auto py = [&](double v) {
      const double t = (std::clamp(v, lo, hi) - lo) / (hi - lo);
      return bottom - static_cast<int>(std::lround(t * (bottom - top)));
    };
    plot_line(img, left, bottom, right, bottom, kAxis);
    plot_line(img, left, top, left, bottom, kAxis);
    if (lo < 0.0) plot_line(img, left, py(0.0), right, py(0.0), kAxis);
    int prev_x = -1;
    int prev_y = -1;
    for (const RunRecord& r : records) {
      if (!r.ok) continue;
      const double v = panel == 0 ? r.auc : panel == 1 ? r.interpretability.cr
                                                        : r.interpretability.ncc;
      const int x = px(r.p);
      const int y = py(v);
      if (prev_x >= 0) plot_line(img, prev_x, prev_y, x, y, kSeries[panel]);
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) img.set(x + dx, y + dy, kSeries[panel]);
      }
      prev_x = x;
      prev_y = y;
    }
  }
  return img;
}

}  // namespace confbench::experiment
