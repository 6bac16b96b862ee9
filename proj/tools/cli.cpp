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

#include "confbench/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "confbench/ablation.hpp"
#include "confbench/abmil.hpp"
#include "confbench/core.hpp"
#include "confbench/experiment.hpp"
#include "confbench/features.hpp"
#include "confbench/io.hpp"
#include "confbench/metrics.hpp"
#include "confbench/modify.hpp"
#include "confbench/parallel.hpp"
#include "confbench/rng.hpp"
#include "confbench/synthgen.hpp"
#include "json.hpp"

namespace confbench::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Raised while resolving settings; maps to kExitUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr char kEmbeddingsFile[] = "embeddings.bin";

// Flags shared by several subcommands. Optionals stay empty unless given, so
// they only override file values that the user actually set on the line.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = default_jobs();
  bool print_config = false;
  std::string out;
};

struct GenFlags {
  std::optional<int> num_wsis;
  std::optional<double> pos_fraction;
  std::optional<int> tile_size;
  std::optional<int> tiles_min;
  std::optional<int> tiles_max;
  std::optional<int> grid_cols;
  std::optional<double> lesion_fraction;
};

struct ModelFlags {
  std::string preset;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<int> bag_size;
  std::optional<int> bags_per_batch;
  std::optional<double> dropout;
  std::optional<double> label_smoothing;
  std::vector<int> widths;
  std::optional<int> attention_dim;
  bool gated = false;
};

struct SweepFlags {
  std::string data;
  std::string design;
  std::string modifier;
  std::vector<double> p_grid;
  bool no_heatmaps = false;
};

struct AblateFlags {
  std::string data;
  std::vector<double> ratios;
  std::optional<int> replicates;
  std::optional<int> grid_points;
};

struct TrainFlags {
  std::string data;
};

struct EmbedFlags {
  std::string data;
};

struct ReportFlags {
  std::string run;
};

void add_common(CLI::App* app, Common& c, bool with_out, const std::string& out_help) {
  app->add_option("--config", c.config_path, "JSON settings file (sections gen, model, sweep, ablation)")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Root seed (default 0)");
  app->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_flag("--print-config", c.print_config, "Print the resolved settings as JSON and exit");
  if (with_out) app->add_option("--out", c.out, out_help);
}

void add_gen_flags(CLI::App* app, GenFlags& g) {
  app->add_option("--num-wsis", g.num_wsis, "Number of WSIs")->check(CLI::PositiveNumber);
  app->add_option("--pos-fraction", g.pos_fraction, "Fraction of positive WSIs, in [0,1]")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--tile-size", g.tile_size, "Tile side in pixels")->check(CLI::Range(8, 4096));
  app->add_option("--tiles-min", g.tiles_min, "Minimum tiles per WSI")->check(CLI::PositiveNumber);
  app->add_option("--tiles-max", g.tiles_max, "Maximum tiles per WSI")->check(CLI::PositiveNumber);
  app->add_option("--grid-cols", g.grid_cols, "Tile grid width")->check(CLI::PositiveNumber);
  app->add_option("--lesion-fraction", g.lesion_fraction,
                  "Fraction of lesion tiles in positive WSIs, in (0,1]")
      ->check(CLI::Range(0.0, 1.0));
}

void add_model_flags(CLI::App* app, ModelFlags& m) {
  app->add_option("--preset", m.preset, "Model preset applied before the config file")
      ->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--epochs", m.epochs, "Maximum training epochs")->check(CLI::NonNegativeNumber);
  app->add_option("--lr", m.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app->add_option("--bag-size", m.bag_size, "Tiles sampled per training bag")
      ->check(CLI::PositiveNumber);
  app->add_option("--bags-per-batch", m.bags_per_batch, "Bags per optimizer step")
      ->check(CLI::PositiveNumber);
  app->add_option("--dropout", m.dropout, "Dropout rate in [0,1)")->check(CLI::Range(0.0, 1.0));
  app->add_option("--label-smoothing", m.label_smoothing, "Label smoothing in [0,1)")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--widths", m.widths, "Dense layer widths, comma separated")->delimiter(',');
  app->add_option("--attention-dim", m.attention_dim, "Attention hidden size")
      ->check(CLI::PositiveNumber);
  app->add_flag("--gated", m.gated, "Use gated attention");
}

// Settings file: an object whose optional sections hold the JSON form of
// each config type.
json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("--config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("--config " + path + ": top level must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "gen" && key != "model" && key != "sweep" && key != "ablation") {
      throw UsageError("--config " + path + ": unknown section '" + key + "'");
    }
  }
  return j;
}

template <typename T, typename Fn>
void override_if(const std::optional<T>& flag, Fn&& set) {
  if (flag) set(*flag);
}

// Runs a settings-resolution step; its configuration errors become
// UsageError. Errors raised after resolution keep their runtime meaning.
template <typename Fn>
auto resolving(Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError&) {
    throw;
  } catch (const synthgen::ConfigError& e) {
    throw UsageError(e.what());
  } catch (const abmil::ConfigError& e) {
    throw UsageError(e.what());
  } catch (const modify::UnknownModifier& e) {
    throw UsageError(e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(e.what());
  }
}

synthgen::GenConfig resolve_gen(const json& file, const Common& c, const GenFlags& g) {
  synthgen::GenConfig cfg;
  if (file.contains("gen")) synthgen::from_json(file.at("gen"), cfg);
  override_if(g.num_wsis, [&](int v) { cfg.num_wsis = v; });
  override_if(g.pos_fraction, [&](double v) { cfg.pos_fraction = v; });
  override_if(g.tile_size, [&](int v) { cfg.tile_size = v; });
  override_if(g.tiles_min, [&](int v) { cfg.tiles_per_wsi_range.first = v; });
  override_if(g.tiles_max, [&](int v) { cfg.tiles_per_wsi_range.second = v; });
  override_if(g.grid_cols, [&](int v) { cfg.grid_cols = v; });
  override_if(g.lesion_fraction, [&](double v) { cfg.lesion_tile_fraction = v; });
  override_if(c.seed, [&](std::uint64_t v) { cfg.seed = v; });
  cfg.jobs = c.jobs;
  synthgen::validate(cfg);
  return cfg;
}

abmil::AbmilConfig resolve_model(const json& file, const Common& c, const ModelFlags& m) {
  abmil::AbmilConfig cfg = m.preset == "paper" ? abmil::AbmilConfig::paper()
                                               : abmil::AbmilConfig::desk();
  if (file.contains("model")) abmil::from_json(file.at("model"), cfg);
  override_if(m.epochs, [&](int v) { cfg.max_epochs = v; });
  override_if(m.lr, [&](double v) { cfg.lr = v; });
  override_if(m.bag_size, [&](int v) { cfg.bag_size = v; });
  override_if(m.bags_per_batch, [&](int v) { cfg.bags_per_batch = v; });
  override_if(m.dropout, [&](double v) { cfg.dropout = v; });
  override_if(m.label_smoothing, [&](double v) { cfg.label_smoothing = v; });
  override_if(m.attention_dim, [&](int v) { cfg.attention_dim = v; });
  if (!m.widths.empty()) cfg.layer_widths = m.widths;
  if (m.gated) cfg.gated = true;
  override_if(c.seed, [&](std::uint64_t v) { cfg.seed = v; });
  abmil::validate(cfg);
  return cfg;
}

fs::path results_root(const Common& c) {
  if (!c.out.empty()) return c.out;
  if (const char* env = std::getenv(kResultsEnv); env != nullptr && *env != '\0') return env;
  return kDefaultResultsDir;
}

std::string short_hash(const json& j) { return hex64(fnv1a64(j.dump())); }

// Prints the resolved settings; returns true when the command should stop.
bool announce(std::ostream& out, const std::string& command, std::uint64_t seed, json settings,
              const Common& c) {
  json doc = {{"command", command}, {"seed", seed}, {"settings", std::move(settings)}};
  out << doc.dump(2) << '\n';
  return c.print_config;
}

// Dataset from --data when given, otherwise generated from the gen settings.
std::vector<Wsi> load_or_generate(const std::string& data, const synthgen::GenConfig& gen) {
  if (!data.empty()) return io::read_dataset(data);
  return synthgen::generate_dataset(gen);
}

// Embeddings from <data>/embeddings.bin when it matches the dataset, else
// freshly extracted.
std::vector<abmil::EmbeddedWsi> load_embeddings(const std::string& data,
                                                std::span<const Wsi> wsis, int jobs) {
  const fs::path store = data.empty() ? fs::path() : fs::path(data) / kEmbeddingsFile;
  if (store.empty() || !fs::exists(store)) return abmil::embed_all(wsis, jobs);
  const features::EmbeddingTable table = features::read_embeddings(store);
  std::size_t total = 0;
  for (const Wsi& w : wsis) total += w.tiles.size();
  if (table.rows != total || table.k != features::kFeatureDim) {
    throw FormatError(store.string() + " does not match the dataset; re-run embed");
  }
  std::vector<abmil::EmbeddedWsi> out;
  out.reserve(wsis.size());
  std::size_t row = 0;
  for (const Wsi& w : wsis) {
    std::vector<features::FeatureVector> rows(w.tiles.size());
    for (auto& r : rows) {
      const auto src = table.row(row++);
      std::copy(src.begin(), src.end(), r.begin());
    }
    out.push_back(abmil::embed(w, rows));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns an exit code; UsageError escapes to run_cli.

int cmd_gen(const Common& c, const GenFlags& g, std::ostream& out) {
  const synthgen::GenConfig cfg =
      resolving([&] { return resolve_gen(load_config_file(c.config_path), c, g); });
  json settings;
  synthgen::to_json(settings, cfg);
  const fs::path dir = c.out.empty() ? results_root(c) / "datasets" / short_hash(settings)
                                     : fs::path(c.out);
  settings["out"] = dir.string();
  if (announce(out, "gen", cfg.seed, settings, c)) return kExitOk;

  const std::vector<Wsi> wsis = synthgen::generate_dataset(cfg);
  io::write_dataset(dir, wsis);
  int positives = 0;
  for (const Wsi& w : wsis) positives += w.label;
  out << "wrote " << wsis.size() << " WSIs (" << positives << " positive) to " << dir.string()
      << "\ndigest " << hex64(dataset_digest(wsis)) << '\n';
  return kExitOk;
}

int cmd_embed(const Common& c, const EmbedFlags& e, std::ostream& out) {
  const fs::path path = c.out.empty() ? fs::path(e.data) / kEmbeddingsFile : fs::path(c.out);
  json settings = {{"data", e.data}, {"out", path.string()}, {"jobs", c.jobs}};
  if (announce(out, "embed", c.seed.value_or(0), settings, c)) return kExitOk;

  const std::vector<Wsi> wsis = io::read_dataset(e.data);
  const auto per_wsi = features::extract_all(wsis, c.jobs);
  const features::EmbeddingTable table = features::to_table(per_wsi);
  features::write_embeddings(path, table);
  out << "wrote " << table.rows << " embeddings (k=" << table.k << ") to " << path.string()
      << '\n';
  return kExitOk;
}

int cmd_train(const Common& c, const TrainFlags& t, const ModelFlags& m, std::ostream& out) {
  const abmil::AbmilConfig cfg =
      resolving([&] { return resolve_model(load_config_file(c.config_path), c, m); });
  json settings;
  abmil::to_json(settings["model"], cfg);
  settings["data"] = t.data;
  const fs::path dir =
      c.out.empty() ? results_root(c) / "train" / short_hash(settings) : fs::path(c.out);
  settings["out"] = dir.string();
  if (announce(out, "train", cfg.seed, settings, c)) return kExitOk;

  const std::vector<Wsi> wsis = io::read_dataset(t.data);
  const auto embedded = load_embeddings(t.data, wsis, c.jobs);
  const abmil::TrainResult result = abmil::train(embedded, cfg);

  std::vector<double> pos;
  std::vector<double> neg;
  for (const auto& w : embedded) {
    if (w.split != Split::kTest) continue;
    const double prob = abmil::predict_full(result.model, w).probability;
    (w.label == 1 ? pos : neg).push_back(prob);
  }
  const double test_auc = metrics::auc(pos, neg);

  fs::create_directories(dir);
  abmil::save_checkpoint(dir / "model.ckpt", result.model);
  io::write_file_atomic(dir / "train_log.csv", abmil::log_to_csv(result.log));
  io::write_file_atomic(dir / "config.json", settings.dump(2) + "\n");
  out << "best epoch " << result.best_epoch << ", test AUC " << test_auc << '\n'
      << "wrote " << (dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_sweep(const Common& c, const SweepFlags& s, const GenFlags& g, const ModelFlags& m,
              std::ostream& out) {
  experiment::SweepSpec spec;
  synthgen::GenConfig gen;
  resolving([&] {
    const json file = load_config_file(c.config_path);
    if (file.contains("sweep")) experiment::from_json(file.at("sweep"), spec);
    spec.model_cfg = resolve_model(file, c, m);
    if (!s.design.empty()) spec.design = modify::parse_design(s.design);
    if (!s.modifier.empty()) spec.modifier = modify::parse_modifier(s.modifier);
    if (!s.p_grid.empty()) spec.p_grid = s.p_grid;
    if (c.seed) spec.root_seed = *c.seed;
    experiment::validate(spec);
    gen = resolve_gen(file, c, g);
    return 0;
  });

  json settings;
  experiment::to_json(settings["sweep"], spec);
  if (s.data.empty()) {
    synthgen::to_json(settings["gen"], gen);
  } else {
    settings["data"] = s.data;
  }
  settings["out"] = results_root(c).string();
  if (announce(out, "sweep", spec.root_seed, settings, c)) return kExitOk;

  const experiment::PreparedDataset data =
      experiment::prepare(load_or_generate(s.data, gen), c.jobs);
  experiment::SweepOptions options;
  options.out_root = results_root(c);
  options.jobs = c.jobs;
  options.heatmaps = !s.no_heatmaps;
  const auto records = experiment::run_sweep(data, spec, options);

  out << "results " << (options.out_root / "runs" / experiment::spec_hash(spec, data.digest)).string()
      << '\n'
      << experiment::summary_csv(records);
  bool all_ok = true;
  for (const auto& r : records) {
    if (!r.ok) {
      all_ok = false;
      out << "condition p=" << r.p << " failed: " << r.error << '\n';
    }
  }
  return all_ok ? kExitOk : kExitFailure;
}

int cmd_ablate(const Common& c, const AblateFlags& a, const GenFlags& g, const ModelFlags& m,
               std::ostream& out) {
  ablation::AblationConfig cfg;
  abmil::AbmilConfig model;
  synthgen::GenConfig gen;
  resolving([&] {
    const json file = load_config_file(c.config_path);
    if (file.contains("ablation")) ablation::from_json(file.at("ablation"), cfg);
    if (!a.ratios.empty()) cfg.removal_ratios = a.ratios;
    override_if(a.replicates, [&](int v) { cfg.baseline_replicates = v; });
    override_if(a.grid_points, [&](int v) { cfg.grid_points = v; });
    if (c.seed) cfg.seed = *c.seed;
    ablation::validate(cfg);
    model = resolve_model(file, c, m);
    gen = resolve_gen(file, c, g);
    return 0;
  });

  json settings;
  ablation::to_json(settings["ablation"], cfg);
  abmil::to_json(settings["model"], model);
  if (a.data.empty()) {
    synthgen::to_json(settings["gen"], gen);
  } else {
    settings["data"] = a.data;
  }
  if (announce(out, "ablate", cfg.seed, settings, c)) return kExitOk;

  const std::vector<Wsi> wsis = load_or_generate(a.data, gen);
  const ablation::AblationReport report = ablation::run_ablation_study(wsis, cfg, model, c.jobs);
  settings["dataset_digest"] = hex64(dataset_digest(wsis));
  const fs::path dir = results_root(c) / "ablation" / short_hash(settings);
  fs::create_directories(dir);
  io::write_file_atomic(dir / "config.json", settings.dump(2) + "\n");
  io::write_file_atomic(dir / "threshold_curve.csv", ablation::curve_to_csv(report.curve));
  const std::string results = ablation::results_to_csv(report);
  io::write_file_atomic(dir / "ablation.csv", results);
  out << "results " << dir.string() << '\n'
      << "threshold " << report.curve.best_threshold << '\n'
      << results;
  return kExitOk;
}

int cmd_report(const Common& c, const ReportFlags& r, std::ostream& out) {
  json settings = {{"run", r.run}};
  if (announce(out, "report", c.seed.value_or(0), settings, c)) return kExitOk;
  const auto records = experiment::load_records(r.run);
  if (records.empty()) throw std::runtime_error("no record.json found below " + r.run);
  const std::string summary = experiment::summary_csv(records);
  io::write_file_atomic(fs::path(r.run) / "summary.csv", summary);
  experiment::write_png(fs::path(r.run) / "sweep.png", experiment::render_sweep_plot(records));
  out << summary;
  bool all_ok = true;
  for (const auto& rec : records) all_ok = all_ok && rec.ok;
  return all_ok ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"confbench: confounder benchmark for attention-based MIL"};
  app.name("confbench");
  app.require_subcommand(1);

  Common common;
  GenFlags gen_flags;
  ModelFlags model_flags;
  SweepFlags sweep_flags;
  AblateFlags ablate_flags;
  TrainFlags train_flags;
  EmbedFlags embed_flags;
  ReportFlags report_flags;

  CLI::App* gen = app.add_subcommand("gen", "Generate and persist a synthetic dataset");
  add_common(gen, common, true, "Dataset directory (default <results>/datasets/<hash>)");
  add_gen_flags(gen, gen_flags);

  CLI::App* embed = app.add_subcommand("embed", "Extract tile embeddings into an embedding store");
  add_common(embed, common, true, "Embedding store path (default <data>/embeddings.bin)");
  embed->add_option("--data", embed_flags.data, "Dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI::App* train = app.add_subcommand("train", "Train one model on an unmodified dataset");
  add_common(train, common, true, "Output directory (default <results>/train/<hash>)");
  train->add_option("--data", train_flags.data, "Dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  add_model_flags(train, model_flags);

  CLI::App* sweep = app.add_subcommand("sweep", "Run a confounder sweep over p");
  add_common(sweep, common, true, "Results root");
  sweep->add_option("--data", sweep_flags.data,
                    "Dataset directory (default: generate from the gen settings)")
      ->check(CLI::ExistingDirectory);
  sweep->add_option("--design", sweep_flags.design, "Modification design")
      ->check(CLI::IsMember({"tile", "wsi", "tile-based", "wsi-based"}));
  sweep->add_option("--modifier", sweep_flags.modifier, "Confounder")
      ->check(CLI::IsMember({"clever-hans", "blur", "pen-mark", "none"}));
  sweep->add_option("--p-grid", sweep_flags.p_grid, "Modification probabilities, comma separated")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0));
  sweep->add_flag("--no-heatmaps", sweep_flags.no_heatmaps, "Skip attention heatmap images");
  add_gen_flags(sweep, gen_flags);
  add_model_flags(sweep, model_flags);

  CLI::App* ablate = app.add_subcommand("ablate", "Feature-based ablation against a random baseline");
  add_common(ablate, common, true, "Results root");
  ablate->add_option("--data", ablate_flags.data,
                     "Dataset directory (default: generate from the gen settings)")
      ->check(CLI::ExistingDirectory);
  ablate->add_option("--ratios", ablate_flags.ratios, "Removal ratios, comma separated")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0));
  ablate->add_option("--replicates", ablate_flags.replicates, "Random baseline replicates")
      ->check(CLI::PositiveNumber);
  ablate->add_option("--grid-points", ablate_flags.grid_points, "Threshold grid size")
      ->check(CLI::Range(2, 100000));
  add_gen_flags(ablate, gen_flags);
  add_model_flags(ablate, model_flags);

  CLI::App* report = app.add_subcommand("report", "Re-render summary CSV and plot from records");
  add_common(report, common, false, "");
  report->add_option("--run", report_flags.run, "Sweep directory runs/<spec-hash>")
      ->required()
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &app;
    for (CLI::App* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(common, gen_flags, out);
    if (embed->parsed()) return cmd_embed(common, embed_flags, out);
    if (train->parsed()) return cmd_train(common, train_flags, model_flags, out);
    if (sweep->parsed()) return cmd_sweep(common, sweep_flags, gen_flags, model_flags, out);
    if (ablate->parsed()) return cmd_ablate(common, ablate_flags, gen_flags, model_flags, out);
    if (report->parsed()) return cmd_report(common, report_flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace confbench::cli
