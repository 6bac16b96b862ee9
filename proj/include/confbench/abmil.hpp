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

/// @file abmil.hpp
/// @brief Attention-based MIL binary classifier with hand-written gradients.
///
/// For a bag X (T x k) of standardized tile embeddings:
///
///     H   = MLP(X)                       dense layers with GELU
///     u_j = w . tanh(V h_j)              (gated: w . (tanh(V h_j) * sigmoid(U h_j)))
///     a   = softmax(u)
///     z   = sum_j a_j h_j
///     p   = sigmoid(c . z + b)
///
/// All parameters live in one flat vector so that the optimizer, the
/// checkpoint, and the finite-difference check share a single layout.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confbench/core.hpp"
#include "confbench/features.hpp"
#include "confbench/rng.hpp"
#include "json.hpp"

namespace confbench::abmil {

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class EmptySplit : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct AbmilConfig {
  std::vector<int> layer_widths = {32, 16};
  int attention_dim = 8;
  bool gated = false;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  double lr = 1e-4;
  int bag_size = 64;
  int bags_per_batch = 8;
  int max_epochs = 60;
  std::uint64_t seed = 0;

  static AbmilConfig desk();
  static AbmilConfig paper();
};

/// Throws ConfigError naming the offending field.
void validate(const AbmilConfig& cfg);
void to_json(nlohmann::json& j, const AbmilConfig& cfg);
/// Missing keys keep their current values.
void from_json(const nlohmann::json& j, AbmilConfig& cfg);

/// One WSI in embedding space.
struct EmbeddedWsi {
  WsiId id = 0;
  int label = 0;
  Split split = Split::kTrain;
  Matrix x;  // T x k
  std::vector<GridPos> grid_pos;
  std::vector<bool> modified;

  int tile_count() const { return static_cast<int>(x.rows()); }
};

EmbeddedWsi embed(const Wsi& wsi, std::span<const features::FeatureVector> rows);
/// Extracts features for every WSI and embeds them.
std::vector<EmbeddedWsi> embed_all(std::span<const Wsi> wsis, int jobs = 1);

struct AttentionMap {
  WsiId wsi_id = 0;
  std::vector<double> weights;
  std::vector<GridPos> grid_pos;
};

struct Prediction {
  double probability = 0.0;
  bool label_hat = false;
  AttentionMap attention;
};

inline constexpr double kDecisionThreshold = 0.5;

class AbmilModel {
 public:
  AbmilModel() = default;
  /// Glorot-uniform initialization from `rng`; identity standardization.
  AbmilModel(int input_dim, const AbmilConfig& cfg, RngStream& rng);

  int input_dim() const { return input_dim_; }
  const std::vector<int>& layer_widths() const { return widths_; }
  int attention_dim() const { return attention_dim_; }
  bool gated() const { return gated_; }
  int hidden_dim() const { return widths_.empty() ? input_dim_ : widths_.back(); }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  /// Per-feature affine standardization applied before the first layer.
  const Vector& input_mean() const { return mean_; }
  const Vector& input_scale() const { return scale_; }
  void set_standardization(Vector mean, Vector scale);
  /// Mean and population std of every feature over the given bags; zero
  /// spread maps to unit scale.
  void fit_standardization(std::span<const EmbeddedWsi> bags);

  /// Names of the parameter blocks, in layout order, with their offsets.
  struct Block {
    std::string name;
    std::size_t offset;
    int rows;
    int cols;
  };
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(std::string_view name) const;

  friend bool operator==(const AbmilModel&, const AbmilModel&);

 private:
  void build_layout();

  int input_dim_ = 0;
  std::vector<int> widths_;
  int attention_dim_ = 0;
  bool gated_ = false;
  std::vector<double> params_;
  std::vector<Block> blocks_;
  Vector mean_;
  Vector scale_;
};

/// Dropout masks for one forward pass; empty means no dropout.
struct DropoutMasks {
  std::vector<Matrix> masks;  // per dense layer, T x width, entries 0 or 1/(1-rate)
};

/// Everything backward needs from a forward pass.
struct ForwardCache {
  std::vector<Matrix> pre;   // pre-activations per dense layer
  std::vector<Matrix> post;  // post[0] = standardized input, post[l+1] = layer l output
  Matrix tanh_part;          // T x L
  Matrix gate_part;          // T x L (gated only)
  Vector scores;             // u
  Vector attention;          // a
  Vector pooled;             // z
  double logit = 0.0;
  double probability = 0.0;
};

/// Forward pass over raw (unstandardized) embeddings.
ForwardCache forward_cache(const AbmilModel& model, const Matrix& bag,
                           const DropoutMasks* dropout = nullptr);

Prediction forward(const AbmilModel& model, const Matrix& bag, WsiId wsi_id = 0,
                   std::span<const GridPos> grid_pos = {});

/// Inference over every tile of the WSI, no dropout.
Prediction predict_full(const AbmilModel& model, const EmbeddedWsi& wsi);

/// Smoothed target y(1 - eps) + eps / 2.
double smoothed_target(int y, double eps);

/// Binary cross-entropy against the smoothed target. Throws DomainError
/// unless prob lies in the open interval (0, 1); the value is computed with
/// prob clamped to [1e-7, 1 - 1e-7].
double bce_loss(double prob, int y, double eps);

/// Numerically stable BCE from the logit.
double bce_from_logit(double logit, int y, double eps);

/// Loss and gradient with respect to every parameter (same layout as
/// params()).
struct Gradient {
  double loss = 0.0;
  std::vector<double> grad;
};
Gradient backward(const AbmilModel& model, const Matrix& bag, int y, double eps,
                  const DropoutMasks* dropout = nullptr);

/// Central finite-difference gradient of the loss with step h.
std::vector<double> numeric_gradient(const AbmilModel& model, const Matrix& bag, int y,
                                     double eps, double h = 1e-5);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  AbmilModel model;
  std::vector<EpochLog> log;
  int best_epoch = -1;  // -1 when no epoch ran
};

/// Adam training over the train split, model selection by minimum mean
/// validation loss (earliest epoch on ties). Throws EmptySplit when either
/// split has no WSIs.
TrainResult train(std::span<const EmbeddedWsi> dataset, const AbmilConfig& cfg);

std::string log_to_csv(std::span<const EpochLog> log);

// ---------------------------------------------------------------------------
// Checkpoint (little-endian):
//   magic "CBMD" | version u16 | gated u16 | input_dim u32 | attention_dim u32
//   | layer count u32 | widths u32[] | mean f64[k] | scale f64[k]
//   | parameter count u64 | parameters f64[]

inline constexpr char kCheckpointMagic[4] = {'C', 'B', 'M', 'D'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const AbmilModel& model);
AbmilModel load_checkpoint(const std::filesystem::path& path);

}  // namespace confbench::abmil
