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

#include "confbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace confbench::metrics {

double auc(std::span<const double> scores_pos, std::span<const double> scores_neg) {
  if (scores_pos.empty() || scores_neg.empty()) {
    throw EmptyClass("auc needs at least one positive and one negative score");
  }
  std::vector<double> neg(scores_neg.begin(), scores_neg.end());
  std::sort(neg.begin(), neg.end());
  // Twice the Mann-Whitney U, kept integral so the result is exact.
  std::uint64_t twice_u = 0;
  for (double s : scores_pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
    const auto hi = std::upper_bound(lo, neg.end(), s);
    twice_u += 2 * static_cast<std::uint64_t>(lo - neg.begin()) +
               static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(scores_pos.size()) * static_cast<double>(neg.size());
  return static_cast<double>(twice_u) / (2.0 * pairs);
}

std::vector<bool> top_attention_mask(std::span<const double> attention, double fraction) {
  const std::size_t t = attention.size();
  if (t == 0) throw std::invalid_argument("attention map is empty");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("top fraction must be in (0,1)");
  }
  // The epsilon keeps products such as 0.2 * 15 from rounding up past an integer.
  std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(t) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, t);
  std::vector<std::size_t> order(t);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return attention[i] > attention[j]; });
  std::vector<bool> mask(t, false);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = true;
  return mask;
}

double prevalence(const std::vector<bool>& mask) {
  if (mask.empty()) throw std::invalid_argument("mask is empty");
  return static_cast<double>(std::count(mask.begin(), mask.end(), true)) /
         static_cast<double>(mask.size());
}

double precision_at_top(std::span<const double> attention, const std::vector<bool>& modified,
                        double fraction) {
  if (attention.size() != modified.size()) {
    throw std::invalid_argument("attention and modification mask lengths differ");
  }
  const std::vector<bool> top = top_attention_mask(attention, fraction);
  std::size_t hits = 0;
  std::size_t selected = 0;
  for (std::size_t j = 0; j < top.size(); ++j) {
    if (!top[j]) continue;
    ++selected;
    if (modified[j]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(selected);
}

PairedEval make_paired(abmil::Prediction orig, abmil::Prediction mod,
                       std::vector<bool> modified_mask) {
  const std::size_t t = orig.attention.weights.size();
  if (mod.attention.weights.size() != t || modified_mask.size() != t) {
    throw std::invalid_argument("paired predictions and mask must cover the same tiles");
  }
  PairedEval e;
  e.wsi_id = orig.attention.wsi_id;
  e.in_sbar = orig.label_hat != mod.label_hat;
  e.pred_orig = std::move(orig);
  e.pred_mod = std::move(mod);
  e.modified_mask = std::move(modified_mask);
  return e;
}

namespace {

bool cr_success(const PairedEval& e, CrRule rule) {
  const double prev = prevalence(e.modified_mask);
  const double prec = precision_at_top(e.pred_mod.attention.weights, e.modified_mask);
  if (prec > prev) return true;
  return rule == CrRule::kSaturated && prev == 1.0;
}

}  // namespace

double confounder_robustness(std::span<const PairedEval> evals, CrRule rule) {
  int members = 0;
  int successes = 0;
  for (const PairedEval& e : evals) {
    if (!e.in_sbar) continue;
    ++members;
    if (cr_success(e, rule)) ++successes;
  }
  return members == 0 ? 0.0 : static_cast<double>(successes) / members;
}

double ncc_pair(std::span<const double> a, std::span<const double> b, NccVariant variant) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("attention maps must be non-empty and of equal length");
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double num = 0.0;
  double den = 0.0;
  double ssa = 0.0;
  double ssb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double da = a[j] - ma;
    const double db = b[j] - mb;
    num += da * db;
    den += std::abs(da) * std::abs(db);
    ssa += da * da;
    ssb += db * db;
  }
  if (variant == NccVariant::kPearson) den = std::sqrt(ssa * ssb);
  if (den == 0.0) throw ZeroVarianceAttention("attention map has no usable variation");
  return std::clamp(num / den, -1.0, 1.0);
}

NccResult ncc(std::span<const PairedEval> evals, NccVariant variant) {
  NccResult out;
  double sum = 0.0;
  int used = 0;
  for (const PairedEval& e : evals) {
    if (!e.in_sbar) continue;
    try {
      sum += ncc_pair(e.pred_orig.attention.weights, e.pred_mod.attention.weights, variant);
      ++used;
    } catch (const ZeroVarianceAttention&) {
      ++out.excluded;
    }
  }
  out.value = used == 0 ? 1.0 : sum / used;
  return out;
}

// ---------------------------------------------------------------------------
// Welch t-test

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("incomplete_beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

WelchResult welch_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) {
    throw DegenerateSamples("welch t-test needs at least two values per sample");
  }
  auto moments = [](std::span<const double> s) {
    const double n = static_cast<double>(s.size());
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [mx, vx] = moments(x);
  const auto [my, vy] = moments(y);
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  const double sx = vx / nx;
  const double sy = vy / ny;
  if (sx + sy == 0.0) throw DegenerateSamples("both samples have zero variance");
  WelchResult r;
  r.t = (mx - my) / std::sqrt(sx + sy);
  r.df = (sx + sy) * (sx + sy) / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
  r.p_value = std::clamp(student_t_two_sided(r.t, r.df), 0.0, 1.0);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman needs two equal-length inputs of size >= 2");
  }
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double num = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (dx == 0.0 || dy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return num / std::sqrt(dx * dy);
}

// ---------------------------------------------------------------------------

InterpretabilityReport interpretability(std::span<const PairedEval> evals, CrRule rule,
                                        NccVariant variant) {
  InterpretabilityReport r;
  r.cr = confounder_robustness(evals, rule);
  const NccResult n = ncc(evals, variant);
  r.ncc = n.value;
  r.ncc_excluded = n.excluded;
  for (const PairedEval& e : evals) {
    if (e.in_sbar) ++r.sbar_size;
    WsiRow row;
    row.wsi_id = e.wsi_id;
    row.in_sbar = e.in_sbar;
    row.precision = precision_at_top(e.pred_mod.attention.weights, e.modified_mask);
    row.prevalence = prevalence(e.modified_mask);
    try {
      row.ncc = ncc_pair(e.pred_orig.attention.weights, e.pred_mod.attention.weights, variant);
    } catch (const ZeroVarianceAttention&) {
      row.ncc = std::numeric_limits<double>::quiet_NaN();
    }
    r.rows.push_back(row);
  }
  return r;
}

nlohmann::json to_json(const InterpretabilityReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const WsiRow& row : report.rows) {
    rows.push_back({{"wsi_id", row.wsi_id},
                    {"in_sbar", row.in_sbar},
                    {"precision", row.precision},
                    {"prevalence", row.prevalence},
                    {"ncc", std::isnan(row.ncc) ? nlohmann::json(nullptr) : nlohmann::json(row.ncc)}});
  }
  return {{"cr", report.cr},
          {"ncc", report.ncc},
          {"sbar_size", report.sbar_size},
          {"ncc_excluded", report.ncc_excluded},
          {"wsis", rows}};
}

std::string to_csv(const InterpretabilityReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "wsi_id,in_sbar,precision,prevalence,ncc\n";
  for (const WsiRow& row : report.rows) {
    out << row.wsi_id << ',' << (row.in_sbar ? 1 : 0) << ',' << row.precision << ','
        << row.prevalence << ',';
    if (!std::isnan(row.ncc)) out << row.ncc;
    out << '\n';
  }
  return out.str();
}

}  // namespace confbench::metrics
