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
#include <numeric>

#include "confbench/abmil.hpp"
#include "confbench/features.hpp"
#include "confbench/io.hpp"
#include "confbench/metrics.hpp"
#include "confbench/synthgen.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace confbench;
using namespace confbench::abmil;

namespace {

AbmilModel random_model(std::uint64_t seed, bool gated, std::vector<int> widths = {32, 16}) {
  AbmilConfig cfg;
  cfg.layer_widths = std::move(widths);
  cfg.gated = gated;
  RngStream rng(seed, 1);
  AbmilModel m(features::kFeatureDim, cfg, rng);
  // Non-zero biases exercise every gradient path.
  RngStream jitter(seed, 2);
  for (double& p : m.params()) p += 0.1 * jitter.normal();
  return m;
}

Matrix random_bag(int t, std::uint64_t seed) {
  RngStream rng(seed, 3);
  Matrix x(t, features::kFeatureDim);
  for (int r = 0; r < t; ++r) {
    for (int c = 0; c < features::kFeatureDim; ++c) x(r, c) = rng.normal();
  }
  return x;
}

// Smoothed BCE straight from the definition.
double reference_loss(double logit, int y, double eps) {
  const double target = y * (1.0 - eps) + eps / 2.0;
  const double prob = 1.0 / (1.0 + std::exp(-logit));
  return -(target * std::log(prob) + (1.0 - target) * std::log(1.0 - prob));
}

double loss_at(const AbmilModel& m, const Matrix& bag, int y, double eps,
               const DropoutMasks* drop = nullptr) {
  return reference_loss(forward_cache(m, bag, drop).logit, y, eps);
}

// Largest relative error between the analytic gradient and central
// differences; the 1e-6 floor ignores rounding noise on zero gradients.
double max_relative_error(const AbmilModel& model, const Matrix& bag, int y, double eps,
                          const DropoutMasks* drop = nullptr) {
  const Gradient g = backward(model, bag, y, eps, drop);
  REQUIRE(g.grad.size() == model.param_count());
  AbmilModel probe = model;
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < probe.param_count(); ++i) {
    const double keep = probe.params()[i];
    probe.params()[i] = keep + h;
    const double up = loss_at(probe, bag, y, eps, drop);
    probe.params()[i] = keep - h;
    const double down = loss_at(probe, bag, y, eps, drop);
    probe.params()[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(g.grad[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - g.grad[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("presets and validation") {
  const AbmilConfig desk = AbmilConfig::desk();
  CHECK(desk.layer_widths == std::vector<int>{32, 16});
  CHECK(desk.bag_size == 64);
  CHECK(desk.bags_per_batch == 8);
  CHECK(desk.max_epochs == 60);
  CHECK(desk.lr == 1e-4);
  CHECK(desk.dropout == 0.1);
  const AbmilConfig paper = AbmilConfig::paper();
  CHECK(paper.layer_widths == std::vector<int>{1024, 1024, 512, 128, 64, 32});
  CHECK(paper.bag_size == 1024);
  CHECK(paper.bags_per_batch == 32);
  CHECK(paper.max_epochs == 300);
  CHECK(paper.lr == 1e-4);

  AbmilConfig bad = desk;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = desk;
  bad.lr = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = desk;
  bad.layer_widths = {8, 0};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = desk;
  bad.label_smoothing = 1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("config JSON round-trip and type errors") {
  AbmilConfig cfg = AbmilConfig::paper();
  cfg.gated = true;
  cfg.seed = 77;
  nlohmann::json j;
  to_json(j, cfg);
  AbmilConfig back;
  from_json(j, back);
  nlohmann::json j2;
  to_json(j2, back);
  CHECK(j == j2);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"lr", "fast"}}, back), ConfigError);
}

TEST_CASE("parameter layout and initialization") {
  for (bool gated : {false, true}) {
    const AbmilConfig cfg = [&] {
      AbmilConfig c;
      c.gated = gated;
      return c;
    }();
    RngStream rng(1, 1);
    const AbmilModel m(features::kFeatureDim, cfg, rng);
    std::vector<std::string> names;
    std::size_t total = 0;
    for (const auto& b : m.blocks()) {
      names.push_back(b.name);
      CHECK(b.offset == total);
      total += static_cast<std::size_t>(b.rows) * b.cols;
    }
    CHECK(total == m.param_count());
    std::vector<std::string> expect = {"W0", "b0", "W1", "b1", "V", "w"};
    if (gated) expect.push_back("U");
    expect.push_back("c");
    expect.push_back("bias");
    CHECK(names == expect);
    CHECK(m.block("V").rows == cfg.attention_dim);
    CHECK(m.block("V").cols == 16);
    for (const auto& b : m.blocks()) {
      const bool is_bias = b.name == "bias" || b.name[0] == 'b';
      const double limit = std::sqrt(6.0 / (b.rows + b.cols));
      for (int i = 0; i < b.rows * b.cols; ++i) {
        const double v = m.params()[b.offset + i];
        if (is_bias) {
          CHECK(v == 0.0);
        } else {
          CHECK(std::abs(v) <= limit);
        }
      }
    }
  }
}

TEST_CASE("singleton bag gets all the attention") {
  const AbmilModel m = random_model(3, false);
  const Prediction p = forward(m, random_bag(1, 1));
  REQUIRE(p.attention.weights.size() == 1);
  CHECK(p.attention.weights[0] == 1.0);
}

TEST_CASE("attention is a distribution and label_hat follows the threshold") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const AbmilModel m = random_model(s, s % 2 == 1);
    const Prediction p = forward(m, random_bag(1 + static_cast<int>(s % 16), s));
    double sum = 0.0;
    for (double a : p.attention.weights) {
      CHECK(a >= 0.0);
      sum += a;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(p.probability > 0.0);
    CHECK(p.probability < 1.0);
    CHECK(p.label_hat == (p.probability >= kDecisionThreshold));
  }
}

TEST_CASE("forward is permutation equivariant") {
  for (bool gated : {false, true}) {
    const AbmilModel m = random_model(5, gated);
    const Matrix bag = random_bag(12, 5);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    RngStream rng(9, 9);
    rng.shuffle(std::span<int>(perm));
    Matrix shuffled(12, bag.cols());
    for (int i = 0; i < 12; ++i) shuffled.row(i) = bag.row(perm[i]);
    const Prediction a = forward(m, bag);
    const Prediction b = forward(m, shuffled);
    CHECK(std::abs(a.probability - b.probability) < 1e-12);
    for (int i = 0; i < 12; ++i) {
      CHECK(std::abs(b.attention.weights[i] - a.attention.weights[perm[i]]) < 1e-12);
    }
  }
}

TEST_CASE("duplicated tiles receive equal attention") {
  const AbmilModel m = random_model(8, true);
  Matrix bag = random_bag(6, 8);
  bag.row(4) = bag.row(1);
  const Prediction p = forward(m, bag);
  CHECK(std::abs(p.attention.weights[1] - p.attention.weights[4]) < 1e-12);
}

TEST_CASE("shape errors") {
  const AbmilModel m = random_model(1, false);
  CHECK_THROWS_AS(forward(m, Matrix(3, 5)), ShapeMismatch);
  CHECK_THROWS_AS(forward(m, Matrix(0, features::kFeatureDim)), ShapeMismatch);
  EmbeddedWsi w;
  w.x = Matrix(2, 7);
  CHECK_THROWS_AS(predict_full(m, w), ShapeMismatch);
}

TEST_CASE("smoothed loss values") {
  CHECK(smoothed_target(1, 0.1) == doctest::Approx(0.95));
  CHECK(smoothed_target(0, 0.1) == doctest::Approx(0.05));
  CHECK(bce_loss(1.0 - 1e-7, 1, 0.0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(bce_loss(0.5, 1, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(0.5, 0, 0.0) == doctest::Approx(std::log(2.0)));
  // With smoothing 0.1 the minimum over prob sits at 0.95.
  const double at = bce_loss(0.95, 1, 0.1);
  CHECK(at < bce_loss(0.94, 1, 0.1));
  CHECK(at < bce_loss(0.96, 1, 0.1));
  const double slope = (bce_loss(0.95 + 1e-6, 1, 0.1) - bce_loss(0.95 - 1e-6, 1, 0.1)) / 2e-6;
  CHECK(std::abs(slope) < 1e-6);
  CHECK_THROWS_AS(bce_loss(0.0, 1, 0.1), DomainError);
  CHECK_THROWS_AS(bce_loss(1.0, 0, 0.1), DomainError);
  for (double logit : {-30.0, -2.0, 0.0, 0.7, 25.0}) {
    for (int y : {0, 1}) {
      CHECK(bce_from_logit(logit, y, 0.1) == doctest::Approx(reference_loss(logit, y, 0.1)));
    }
  }
}

TEST_CASE("backward matches central differences") {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const AbmilModel m = random_model(100 + s, s % 2 == 0, s < 3 ? std::vector<int>{32, 16}
                                                                 : std::vector<int>{12, 9, 5});
    const Matrix bag = random_bag(1 + static_cast<int>(s * 3 % 16), s);
    CHECK(max_relative_error(m, bag, static_cast<int>(s % 2), 0.1) < 1e-4);
  }
}

TEST_CASE("backward with zero attention weights w") {
  AbmilModel m = random_model(4, false);
  const auto& w = m.block("w");
  std::fill_n(m.params().begin() + w.offset, w.rows * w.cols, 0.0);
  const Matrix bag = random_bag(7, 4);
  const Gradient g = backward(m, bag, 1, 0.1);
  for (int i = 0; i < w.rows * w.cols; ++i) CHECK(std::isfinite(g.grad[w.offset + i]));
  CHECK(max_relative_error(m, bag, 1, 0.1) < 1e-4);
}

TEST_CASE("backward under dropout masks") {
  const AbmilModel m = random_model(6, true);
  const Matrix bag = random_bag(9, 6);
  DropoutMasks drop;
  RngStream rng(6, 7);
  for (int width : m.layer_widths()) {
    Matrix mask(9, width);
    for (int r = 0; r < 9; ++r) {
      for (int c = 0; c < width; ++c) mask(r, c) = rng.bernoulli(0.2) ? 0.0 : 1.0 / 0.8;
    }
    drop.masks.push_back(mask);
  }
  CHECK(max_relative_error(m, bag, 0, 0.1, &drop) < 1e-4);
}

TEST_CASE("head gradients vanish at the smoothed target") {
  AbmilModel m = random_model(2, false);
  const auto& c = m.block("c");
  std::fill_n(m.params().begin() + c.offset, c.rows * c.cols, 0.0);
  m.params()[m.block("bias").offset] = std::log(0.95 / 0.05);
  const Gradient g = backward(m, random_bag(5, 2), 1, 0.1);
  for (double v : g.grad) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("library finite differences agree with backward") {
  const AbmilModel m = random_model(12, true);
  const Matrix bag = random_bag(4, 12);
  const auto fd = numeric_gradient(m, bag, 1, 0.1);
  const auto g = backward(m, bag, 1, 0.1).grad;
  REQUIRE(fd.size() == g.size());
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(fd[i] == doctest::Approx(g[i]).epsilon(1e-5));
}

namespace {

const std::vector<Wsi>& tiny_wsis() {
  static const std::vector<Wsi> wsis = synthgen::generate_dataset(testing::tiny_config(5, 16));
  return wsis;
}

}  // namespace

TEST_CASE("embed checks row counts and carries metadata") {
  const Wsi& w = tiny_wsis()[0];
  const auto rows = features::extract_all(std::span(&w, 1))[0];
  const EmbeddedWsi e = embed(w, rows);
  CHECK(e.tile_count() == w.tile_count());
  CHECK(e.x(0, 3) == doctest::Approx(rows[0][3]));
  CHECK(e.grid_pos[1] == w.tiles[1].meta.grid_pos);
  CHECK_THROWS_AS(embed(w, std::span(rows).first(1)), ShapeMismatch);
}

TEST_CASE("training with zero epochs returns the initial model") {
  const auto data = embed_all(tiny_wsis(), 2);
  AbmilConfig cfg;
  cfg.max_epochs = 0;
  const TrainResult a = train(data, cfg);
  CHECK(a.log.empty());
  CHECK(a.best_epoch == -1);
  CHECK(a.model == train(data, cfg).model);
}

TEST_CASE("training is deterministic and keeps the best validation epoch") {
  const auto data = embed_all(tiny_wsis(), 2);
  AbmilConfig cfg;
  cfg.max_epochs = 8;
  cfg.lr = 1e-3;
  const TrainResult a = train(data, cfg);
  const TrainResult b = train(data, cfg);
  CHECK(a.model == b.model);
  REQUIRE(a.log.size() == 8);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].epoch == static_cast<int>(i) + 1);
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_loss == b.log[i].val_loss);
  }
  const auto best = std::min_element(a.log.begin(), a.log.end(), [](const auto& x, const auto& y) {
    return x.val_loss < y.val_loss;
  });
  CHECK(a.best_epoch == best->epoch);
  const std::string csv = log_to_csv(a.log);
  CHECK(csv.rfind("epoch,train_loss,val_loss\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

  cfg.seed = 1;
  CHECK_FALSE(train(data, cfg).model == a.model);
}

TEST_CASE("training needs train and validation bags") {
  auto data = embed_all(tiny_wsis(), 2);
  std::erase_if(data, [](const EmbeddedWsi& w) { return w.split == Split::kVal; });
  CHECK_THROWS_AS(train(data, AbmilConfig{}), EmptySplit);
}

TEST_CASE("predict_full covers every tile and is repeatable") {
  const auto data = embed_all(tiny_wsis(), 2);
  const AbmilModel m = random_model(1, false);
  for (const EmbeddedWsi& w : data) {
    const Prediction a = predict_full(m, w);
    const Prediction b = predict_full(m, w);
    CHECK(a.probability == b.probability);
    CHECK(a.attention.weights == b.attention.weights);
    CHECK(a.attention.weights.size() == static_cast<std::size_t>(w.tile_count()));
    CHECK(a.attention.grid_pos == w.grid_pos);
    CHECK(a.attention.wsi_id == w.id);
  }
}

TEST_CASE("checkpoint round-trip") {
  const auto dir = testing::scratch_dir("abmil-ckpt");
  AbmilModel m = random_model(3, true, {7, 5});
  Vector mean = Vector::LinSpaced(features::kFeatureDim, -1.0, 1.0);
  Vector scale = Vector::Constant(features::kFeatureDim, 2.5);
  m.set_standardization(mean, scale);
  save_checkpoint(dir / "m.ckpt", m);
  const AbmilModel back = load_checkpoint(dir / "m.ckpt");
  CHECK(back == m);
  CHECK(back.gated());
  CHECK(back.layer_widths() == std::vector<int>{7, 5});
  const Matrix bag = random_bag(4, 3);
  CHECK(forward(back, bag).probability == forward(m, bag).probability);
  std::string raw = io::read_file(dir / "m.ckpt");
  CHECK(raw.substr(0, 4) == "CBMD");
  raw[0] = 'X';
  io::write_file_atomic(dir / "bad.ckpt", raw);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), FormatError);
}

TEST_CASE("desk-scale default training clears the baseline bar") {
  synthgen::GenConfig gen;
  gen.jobs = 4;
  const auto data = embed_all(synthgen::generate_dataset(gen), 4);
  const TrainResult r = train(data, AbmilConfig::desk());
  std::vector<double> pos;
  std::vector<double> neg;
  for (const EmbeddedWsi& w : data) {
    if (w.split != Split::kTest) continue;
    (w.label == 1 ? pos : neg).push_back(predict_full(r.model, w).probability);
  }
  CHECK(metrics::auc(pos, neg) >= 0.85);
}
