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

/// @file metrics.hpp
/// @brief Classification and attention-interpretability metrics.
///
/// S-bar is the set of test WSIs whose thresholded prediction differs
/// between the original and the modified copy. Confounder robustness (CR)
/// and NCC are averaged over S-bar and computed on the attention of the
/// modified copy. Empty S-bar gives CR = 0 and NCC = 1.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "confbench/abmil.hpp"
#include "confbench/core.hpp"
#include "json.hpp"

namespace confbench::metrics {

class EmptyClass : public Error {
 public:
  using Error::Error;
};

class DegenerateSamples : public Error {
 public:
  using Error::Error;
};

class ZeroVarianceAttention : public Error {
 public:
  using Error::Error;
};

/// P(score_pos > score_neg) + 0.5 P(tie). Exact: computed from integer
/// pair counts. Throws EmptyClass when either list is empty.
double auc(std::span<const double> scores_pos, std::span<const double> scores_neg);

inline constexpr double kTopFraction = 0.2;

/// Marks the ceil(fraction * T) highest weights; equal weights are taken in
/// increasing index order.
std::vector<bool> top_attention_mask(std::span<const double> attention,
                                     double fraction = kTopFraction);

double prevalence(const std::vector<bool>& mask);

/// Fraction of the top-attention tiles that are modified.
double precision_at_top(std::span<const double> attention, const std::vector<bool>& modified,
                        double fraction = kTopFraction);

struct PairedEval {
  WsiId wsi_id = 0;
  abmil::Prediction pred_orig;
  abmil::Prediction pred_mod;
  std::vector<bool> modified_mask;
  bool in_sbar = false;
};

/// Throws std::invalid_argument when the predictions and mask disagree on T.
PairedEval make_paired(abmil::Prediction orig, abmil::Prediction mod,
                       std::vector<bool> modified_mask);

enum class CrRule : std::uint8_t {
  /// Success iff Precision > Prevalence.
  kStrict,
  /// As kStrict, but a WSI whose tiles are all modified (Prevalence = 1)
  /// counts as a success: its top tiles are necessarily modified tiles and
  /// the strict comparison can never hold.
  kSaturated,
};

double confounder_robustness(std::span<const PairedEval> evals, CrRule rule = CrRule::kSaturated);

enum class NccVariant : std::uint8_t {
  /// sum (a - a_mean)(b - b_mean) / sum |a - a_mean||b - b_mean|
  kAbsoluteProduct,
  /// Pearson correlation of the two maps.
  kPearson,
};

/// Per-WSI NCC between two attention maps. Throws ZeroVarianceAttention when
/// the denominator is zero, std::invalid_argument on a length mismatch.
double ncc_pair(std::span<const double> a, std::span<const double> b,
                NccVariant variant = NccVariant::kAbsoluteProduct);

struct NccResult {
  double value = 1.0;
  int excluded = 0;  // S-bar members skipped for zero-variance attention
};

/// Mean per-WSI NCC over S-bar (original vs modified attention). Returns 1
/// when no S-bar member has a defined value.
NccResult ncc(std::span<const PairedEval> evals,
              NccVariant variant = NccVariant::kAbsoluteProduct);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Two-sided Welch t-test. Throws DegenerateSamples if either sample has
/// fewer than two values or both have zero variance.
WelchResult welch_t_test(std::span<const double> x, std::span<const double> y);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Two-sided tail P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided(double t, double df);

/// Spearman rank correlation with average ranks for ties. NaN when either
/// input is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct WsiRow {
  WsiId wsi_id = 0;
  bool in_sbar = false;
  double precision = 0.0;
  double prevalence = 0.0;
  double ncc = 0.0;  // NaN when undefined
};

struct InterpretabilityReport {
  double cr = 0.0;
  double ncc = 1.0;
  int sbar_size = 0;
  int ncc_excluded = 0;
  std::vector<WsiRow> rows;
};

InterpretabilityReport interpretability(std::span<const PairedEval> evals,
                                        CrRule rule = CrRule::kSaturated,
                                        NccVariant variant = NccVariant::kAbsoluteProduct);

nlohmann::json to_json(const InterpretabilityReport& report);
/// Columns: wsi_id, in_sbar, precision, prevalence, ncc.
std::string to_csv(const InterpretabilityReport& report);

}  // namespace confbench::metrics
