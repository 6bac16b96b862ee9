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

#include "confbench/abmil.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "confbench/io.hpp"

namespace confbench::abmil {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;
constexpr double kProbClamp = 1e-7;
constexpr double kMinScale = 1e-6;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ConstMap view(const AbmilModel& m, const AbmilModel::Block& b) {
  return ConstMap(m.params().data() + b.offset, b.rows, b.cols);
}

MutMap view(std::vector<double>& v, const AbmilModel::Block& b) {
  return MutMap(v.data() + b.offset, b.rows, b.cols);
}

void check_bag(const AbmilModel& model, const Matrix& bag) {
  if (bag.rows() < 1) throw ShapeMismatch("bag has no tiles");
  if (bag.cols() != model.input_dim()) {
    throw ShapeMismatch("bag has " + std::to_string(bag.cols()) + " features, model expects " +
                        std::to_string(model.input_dim()));
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t{p[3]} << 24);
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  io::put_u64(out, bits);
}

double get_f64(const unsigned char* p) {
  const std::uint64_t bits = io::get_u64(p);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

AbmilConfig AbmilConfig::desk() { return AbmilConfig{}; }

AbmilConfig AbmilConfig::paper() {
  AbmilConfig cfg;
  cfg.layer_widths = {1024, 1024, 512, 128, 64, 32};
  cfg.bag_size = 1024;
  cfg.bags_per_batch = 32;
  cfg.max_epochs = 300;
  return cfg;
}

void validate(const AbmilConfig& cfg) {
  if (cfg.layer_widths.empty()) throw ConfigError("layer_widths must not be empty");
  for (int w : cfg.layer_widths) {
    if (w < 1) throw ConfigError("layer_widths entries must be >= 1");
  }
  if (cfg.attention_dim < 1) throw ConfigError("attention_dim must be >= 1");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("dropout must be in [0,1)");
  if (!(cfg.label_smoothing >= 0.0 && cfg.label_smoothing < 1.0)) {
    throw ConfigError("label_smoothing must be in [0,1)");
  }
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("lr must be > 0");
  if (cfg.bag_size < 1) throw ConfigError("bag_size must be >= 1");
  if (cfg.bags_per_batch < 1) throw ConfigError("bags_per_batch must be >= 1");
  if (cfg.max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
}

void to_json(nlohmann::json& j, const AbmilConfig& cfg) {
  j = nlohmann::json{{"layer_widths", cfg.layer_widths},
                     {"attention_dim", cfg.attention_dim},
                     {"gated", cfg.gated},
                     {"dropout", cfg.dropout},
                     {"label_smoothing", cfg.label_smoothing},
                     {"lr", cfg.lr},
                     {"bag_size", cfg.bag_size},
                     {"bags_per_batch", cfg.bags_per_batch},
                     {"max_epochs", cfg.max_epochs},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, AbmilConfig& cfg) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("model config field '") + key + "' has the wrong type");
    }
  };
  get("layer_widths", cfg.layer_widths);
  get("attention_dim", cfg.attention_dim);
  get("gated", cfg.gated);
  get("dropout", cfg.dropout);
  get("label_smoothing", cfg.label_smoothing);
  get("lr", cfg.lr);
  get("bag_size", cfg.bag_size);
  get("bags_per_batch", cfg.bags_per_batch);
  get("max_epochs", cfg.max_epochs);
  get("seed", cfg.seed);
}

// ---------------------------------------------------------------------------
// Embedding

EmbeddedWsi embed(const Wsi& wsi, std::span<const features::FeatureVector> rows) {
  if (rows.size() != wsi.tiles.size()) {
    throw ShapeMismatch("wsi " + std::to_string(wsi.id) + ": " + std::to_string(rows.size()) +
                        " embeddings for " + std::to_string(wsi.tiles.size()) + " tiles");
  }
  EmbeddedWsi out;
  out.id = wsi.id;
  out.label = wsi.label;
  out.split = wsi.split;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), features::kFeatureDim);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (int f = 0; f < features::kFeatureDim; ++f) out.x(j, f) = rows[j][f];
    out.grid_pos.push_back(wsi.tiles[j].meta.grid_pos);
    out.modified.push_back(wsi.tiles[j].meta.modified);
  }
  return out;
}

std::vector<EmbeddedWsi> embed_all(std::span<const Wsi> wsis, int jobs) {
  const auto per_wsi = features::extract_all(wsis, jobs);
  std::vector<EmbeddedWsi> out;
  out.reserve(wsis.size());
  for (std::size_t i = 0; i < wsis.size(); ++i) out.push_back(embed(wsis[i], per_wsi[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Model

AbmilModel::AbmilModel(int input_dim, const AbmilConfig& cfg, RngStream& rng)
    : input_dim_(input_dim),
      widths_(cfg.layer_widths),
      attention_dim_(cfg.attention_dim),
      gated_(cfg.gated) {
  validate(cfg);
  if (input_dim < 1) throw ShapeMismatch("input dimension must be >= 1");
  build_layout();
  for (const Block& b : blocks_) {
    const bool bias = b.rows == 1 && b.name.front() == 'b';
    if (bias) continue;  // biases start at zero
    const double limit = std::sqrt(6.0 / (b.rows + b.cols));
    for (std::size_t i = 0; i < static_cast<std::size_t>(b.rows) * b.cols; ++i) {
      params_[b.offset + i] = rng.uniform(-limit, limit);
    }
  }
  mean_ = Vector::Zero(input_dim);
  scale_ = Vector::Ones(input_dim);
}

void AbmilModel::build_layout() {
  blocks_.clear();
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    blocks_.push_back({std::move(name), offset, rows, cols});
    offset += static_cast<std::size_t>(rows) * cols;
  };
  int in = input_dim_;
  for (std::size_t l = 0; l < widths_.size(); ++l) {
    add("W" + std::to_string(l), widths_[l], in);
    add("b" + std::to_string(l), 1, widths_[l]);
    in = widths_[l];
  }
  add("V", attention_dim_, in);
  add("w", 1, attention_dim_);
  if (gated_) add("U", attention_dim_, in);
  add("c", 1, in);
  add("bias", 1, 1);
  params_.assign(offset, 0.0);
}

const AbmilModel::Block& AbmilModel::block(std::string_view name) const {
  for (const Block& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block named " + std::string(name));
}

void AbmilModel::set_standardization(Vector mean, Vector scale) {
  if (mean.size() != input_dim_ || scale.size() != input_dim_) {
    throw ShapeMismatch("standardization vectors must have input_dim entries");
  }
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

void AbmilModel::fit_standardization(std::span<const EmbeddedWsi> bags) {
  Vector sum = Vector::Zero(input_dim_);
  Vector sq = Vector::Zero(input_dim_);
  double count = 0;
  for (const EmbeddedWsi& bag : bags) {
    if (bag.x.cols() != input_dim_) throw ShapeMismatch("bag width differs from model input");
    sum += bag.x.colwise().sum().transpose();
    sq += bag.x.array().square().matrix().colwise().sum().transpose();
    count += static_cast<double>(bag.x.rows());
  }
  if (count == 0) return;
  mean_ = sum / count;
  scale_.resize(input_dim_);
  for (int f = 0; f < input_dim_; ++f) {
    const double var = std::max(0.0, sq(f) / count - mean_(f) * mean_(f));
    const double sd = std::sqrt(var);
    scale_(f) = sd > kMinScale ? sd : 1.0;
  }
}

bool operator==(const AbmilModel& a, const AbmilModel& b) {
  return a.input_dim_ == b.input_dim_ && a.widths_ == b.widths_ &&
         a.attention_dim_ == b.attention_dim_ && a.gated_ == b.gated_ && a.params_ == b.params_ &&
         a.mean_ == b.mean_ && a.scale_ == b.scale_;
}

// ---------------------------------------------------------------------------
// Forward / backward

ForwardCache forward_cache(const AbmilModel& model, const Matrix& bag,
                           const DropoutMasks* dropout) {
  check_bag(model, bag);
  const auto& widths = model.layer_widths();
  ForwardCache c;
  Matrix x = (bag.rowwise() - model.input_mean().transpose()).array().rowwise() /
             model.input_scale().transpose().array();
  c.post.push_back(std::move(x));
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const auto W = view(model, model.block("W" + std::to_string(l)));
    const auto b = view(model, model.block("b" + std::to_string(l)));
    Matrix z = c.post.back() * W.transpose();
    z.rowwise() += b.row(0);
    Matrix h = z.unaryExpr([](double v) { return gelu(v); });
    if (dropout != nullptr && !dropout->masks.empty()) h = h.cwiseProduct(dropout->masks[l]);
    c.pre.push_back(std::move(z));
    c.post.push_back(std::move(h));
  }
  const Matrix& H = c.post.back();
  const auto V = view(model, model.block("V"));
  const auto w = view(model, model.block("w"));
  c.tanh_part = (H * V.transpose()).array().tanh();
  Matrix q = c.tanh_part;
  if (model.gated()) {
    const auto U = view(model, model.block("U"));
    c.gate_part = (H * U.transpose()).unaryExpr([](double v) { return sigmoid(v); });
    q = q.cwiseProduct(c.gate_part);
  }
  c.scores = q * w.row(0).transpose();
  const double top = c.scores.maxCoeff();
  c.attention = (c.scores.array() - top).exp();
  c.attention /= c.attention.sum();
  c.pooled = H.transpose() * c.attention;
  const auto head = view(model, model.block("c"));
  const double bias = model.params()[model.block("bias").offset];
  c.logit = head.row(0).dot(c.pooled) + bias;
  c.probability = sigmoid(c.logit);
  return c;
}

Prediction forward(const AbmilModel& model, const Matrix& bag, WsiId wsi_id,
                   std::span<const GridPos> grid_pos) {
  const ForwardCache c = forward_cache(model, bag);
  Prediction p;
  p.probability = c.probability;
  p.label_hat = c.probability >= kDecisionThreshold;
  p.attention.wsi_id = wsi_id;
  p.attention.weights.assign(c.attention.data(), c.attention.data() + c.attention.size());
  p.attention.grid_pos.assign(grid_pos.begin(), grid_pos.end());
  return p;
}

Prediction predict_full(const AbmilModel& model, const EmbeddedWsi& wsi) {
  return forward(model, wsi.x, wsi.id, wsi.grid_pos);
}

double smoothed_target(int y, double eps) { return y * (1.0 - eps) + eps / 2.0; }

double bce_loss(double prob, int y, double eps) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw DomainError("probability must lie in (0,1), got " + std::to_string(prob));
  }
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  const double t = smoothed_target(y, eps);
  return -(t * std::log(p) + (1.0 - t) * std::log1p(-p));
}

double bce_from_logit(double logit, int y, double eps) {
  // -[t log s(x) + (1-t) log(1-s(x))] = softplus(x) - t x
  const double t = smoothed_target(y, eps);
  const double softplus = logit > 0 ? logit + std::log1p(std::exp(-logit))
                                    : std::log1p(std::exp(logit));
  return softplus - t * logit;
}

Gradient backward(const AbmilModel& model, const Matrix& bag, int y, double eps,
                  const DropoutMasks* dropout) {
  const ForwardCache c = forward_cache(model, bag, dropout);
  Gradient g;
  g.loss = bce_from_logit(c.logit, y, eps);
  g.grad.assign(model.param_count(), 0.0);

  const double dlogit = c.probability - smoothed_target(y, eps);
  const Matrix& H = c.post.back();
  const auto head = view(model, model.block("c"));
  view(g.grad, model.block("c")).row(0) = dlogit * c.pooled.transpose();
  g.grad[model.block("bias").offset] = dlogit;

  const Vector dz = dlogit * head.row(0).transpose();
  Matrix dH = c.attention * dz.transpose();
  const Vector da = H * dz;
  const Vector du = c.attention.cwiseProduct((da.array() - c.attention.dot(da)).matrix());

  const auto V = view(model, model.block("V"));
  const auto w = view(model, model.block("w"));
  Matrix q = c.tanh_part;
  if (model.gated()) q = q.cwiseProduct(c.gate_part);
  view(g.grad, model.block("w")).row(0) = (q.transpose() * du).transpose();
  const Matrix dq = du * w.row(0);
  if (model.gated()) {
    const auto U = view(model, model.block("U"));
    const Matrix dtanh = dq.cwiseProduct(c.gate_part);
    const Matrix dgate = dq.cwiseProduct(c.tanh_part);
    const Matrix dpre_v =
        dtanh.array() * (1.0 - c.tanh_part.array().square());
    const Matrix dpre_u =
        dgate.array() * c.gate_part.array() * (1.0 - c.gate_part.array());
    view(g.grad, model.block("V")) = dpre_v.transpose() * H;
    view(g.grad, model.block("U")) = dpre_u.transpose() * H;
    dH += dpre_v * V + dpre_u * U;
  } else {
    const Matrix dpre_v = dq.array() * (1.0 - c.tanh_part.array().square());
    view(g.grad, model.block("V")) = dpre_v.transpose() * H;
    dH += dpre_v * V;
  }

  for (std::size_t l = model.layer_widths().size(); l-- > 0;) {
    const std::string idx = std::to_string(l);
    Matrix dpre = dH;
    if (dropout != nullptr && !dropout->masks.empty()) dpre = dpre.cwiseProduct(dropout->masks[l]);
    dpre = dpre.cwiseProduct(c.pre[l].unaryExpr([](double v) { return gelu_grad(v); }));
    view(g.grad, model.block("W" + idx)) = dpre.transpose() * c.post[l];
    view(g.grad, model.block("b" + idx)).row(0) = dpre.colwise().sum();
    if (l > 0) dH = dpre * view(model, model.block("W" + idx));
  }
  return g;
}

std::vector<double> numeric_gradient(const AbmilModel& model, const Matrix& bag, int y,
                                     double eps, double h) {
  AbmilModel probe = model;
  std::vector<double> out(model.param_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double saved = probe.params()[i];
    probe.params()[i] = saved + h;
    const double up = bce_from_logit(forward_cache(probe, bag).logit, y, eps);
    probe.params()[i] = saved - h;
    const double down = bce_from_logit(forward_cache(probe, bag).logit, y, eps);
    probe.params()[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

Matrix sample_bag(const Matrix& x, int bag_size, RngStream& rng) {
  const int t = static_cast<int>(x.rows());
  if (t <= bag_size) return x;
  std::vector<int> idx(t);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < bag_size; ++i) {
    std::swap(idx[i], idx[i + static_cast<int>(rng.below(t - i))]);
  }
  std::sort(idx.begin(), idx.begin() + bag_size);
  Matrix out(bag_size, x.cols());
  for (int i = 0; i < bag_size; ++i) out.row(i) = x.row(idx[i]);
  return out;
}

DropoutMasks sample_dropout(const AbmilModel& model, int rows, double rate, RngStream& rng) {
  DropoutMasks d;
  if (rate <= 0.0) return d;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int width : model.layer_widths()) {
    Matrix m(rows, width);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < width; ++c) m(r, c) = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    d.masks.push_back(std::move(m));
  }
  return d;
}

double mean_loss(const AbmilModel& model, std::span<const EmbeddedWsi* const> bags, double eps) {
  double total = 0.0;
  for (const EmbeddedWsi* bag : bags) {
    total += bce_from_logit(forward_cache(model, bag->x).logit, bag->label, eps);
  }
  return total / static_cast<double>(bags.size());
}

}  // namespace

TrainResult train(std::span<const EmbeddedWsi> dataset, const AbmilConfig& cfg) {
  validate(cfg);
  std::vector<const EmbeddedWsi*> train_set;
  std::vector<const EmbeddedWsi*> val_set;
  for (const EmbeddedWsi& w : dataset) {
    if (w.split == Split::kTrain) train_set.push_back(&w);
    if (w.split == Split::kVal) val_set.push_back(&w);
  }
  if (train_set.empty()) throw EmptySplit("training split is empty");
  if (val_set.empty()) throw EmptySplit("validation split is empty");
  const int k = static_cast<int>(train_set.front()->x.cols());

  RngStream init_rng = derive_stream(cfg.seed, "abmil/init");
  TrainResult result;
  result.model = AbmilModel(k, cfg, init_rng);
  {
    std::vector<EmbeddedWsi> fit;
    fit.reserve(train_set.size());
    for (const EmbeddedWsi* w : train_set) fit.push_back(*w);
    result.model.fit_standardization(fit);
  }
  if (cfg.max_epochs == 0) return result;

  AbmilModel model = result.model;
  const std::size_t n = model.param_count();
  std::vector<double> m(n, 0.0);
  std::vector<double> v(n, 0.0);
  std::vector<double> grad(n);
  std::int64_t step = 0;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    RngStream rng = derive_stream(cfg.seed, "abmil/epoch/" + std::to_string(epoch));
    std::vector<const EmbeddedWsi*> order = train_set;
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.bags_per_batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.bags_per_batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const Matrix bag = sample_bag(order[i]->x, cfg.bag_size, rng);
        const DropoutMasks masks =
            sample_dropout(model, static_cast<int>(bag.rows()), cfg.dropout, rng);
        const Gradient g = backward(model, bag, order[i]->label, cfg.label_smoothing, &masks);
        epoch_loss += g.loss;
        for (std::size_t p = 0; p < n; ++p) grad[p] += g.grad[p];
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      ++step;
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      auto& params = model.params();
      for (std::size_t p = 0; p < n; ++p) {
        const double gp = grad[p] * inv;
        m[p] = kAdamBeta1 * m[p] + (1.0 - kAdamBeta1) * gp;
        v[p] = kAdamBeta2 * v[p] + (1.0 - kAdamBeta2) * gp * gp;
        params[p] -= cfg.lr * (m[p] / c1) / (std::sqrt(v[p] / c2) + kAdamEpsilon);
      }
    }
    EpochLog row;
    row.epoch = epoch;
    row.train_loss = epoch_loss / static_cast<double>(order.size());
    row.val_loss = mean_loss(model, val_set, cfg.label_smoothing);
    if (!std::isfinite(row.train_loss) || !std::isfinite(row.val_loss)) {
      throw Error("training diverged at epoch " + std::to_string(epoch));
    }
    result.log.push_back(row);
    if (row.val_loss < best_val) {
      best_val = row.val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

std::string log_to_csv(std::span<const EpochLog> log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_loss\n";
  for (const EpochLog& row : log) {
    out << row.epoch << ',' << row.train_loss << ',' << row.val_loss << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Checkpoint

void save_checkpoint(const std::filesystem::path& path, const AbmilModel& model) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  io::put_u16(out, kCheckpointVersion);
  io::put_u16(out, model.gated() ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(model.input_dim()));
  put_u32(out, static_cast<std::uint32_t>(model.attention_dim()));
  put_u32(out, static_cast<std::uint32_t>(model.layer_widths().size()));
  for (int w : model.layer_widths()) put_u32(out, static_cast<std::uint32_t>(w));
  for (int f = 0; f < model.input_dim(); ++f) put_f64(out, model.input_mean()(f));
  for (int f = 0; f < model.input_dim(); ++f) put_f64(out, model.input_scale()(f));
  io::put_u64(out, model.param_count());
  for (double p : model.params()) put_f64(out, p);
  io::write_file_atomic(path, out);
}

AbmilModel load_checkpoint(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  std::size_t pos = 0;
  auto need = [&](std::size_t bytes) {
    if (pos + bytes > data.size()) throw FormatError(path.string() + ": truncated checkpoint");
  };
  need(20);
  if (std::memcmp(p, kCheckpointMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a CBMD checkpoint");
  }
  if (io::get_u16(p + 4) != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version");
  }
  AbmilConfig cfg;
  cfg.gated = io::get_u16(p + 6) != 0;
  const int input_dim = static_cast<int>(get_u32(p + 8));
  cfg.attention_dim = static_cast<int>(get_u32(p + 12));
  const std::uint32_t layers = get_u32(p + 16);
  pos = 20;
  need(4ull * layers);
  cfg.layer_widths.clear();
  for (std::uint32_t l = 0; l < layers; ++l, pos += 4) {
    cfg.layer_widths.push_back(static_cast<int>(get_u32(p + pos)));
  }
  RngStream unused(0, 0);
  AbmilModel model;
  try {
    model = AbmilModel(input_dim, cfg, unused);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": bad shape table: " + e.what());
  }
  need(16ull * input_dim + 8);
  Vector mean(input_dim);
  Vector scale(input_dim);
  for (int f = 0; f < input_dim; ++f, pos += 8) mean(f) = get_f64(p + pos);
  for (int f = 0; f < input_dim; ++f, pos += 8) scale(f) = get_f64(p + pos);
  model.set_standardization(std::move(mean), std::move(scale));
  const std::uint64_t count = io::get_u64(p + pos);
  pos += 8;
  if (count != model.param_count()) {
    throw FormatError(path.string() + ": parameter count does not match shape table");
  }
  need(8 * count);
  for (std::uint64_t i = 0; i < count; ++i, pos += 8) model.params()[i] = get_f64(p + pos);
  if (pos != data.size()) throw FormatError(path.string() + ": trailing bytes in checkpoint");
  return model;
}

}  // namespace confbench::abmil
