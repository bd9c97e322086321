#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "msecnn/metrics.hpp"
#include "msecnn/model.hpp"
#include "msecnn/rng.hpp"

namespace msecnn {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Index batch_size = 16;
  Index max_epochs = 100;
  std::uint64_t seed = 1;
  Index early_stop_patience = 10;  // <= 0 disables early stopping

  void validate() const {
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
      throw ArgumentError("adam betas must lie in (0,1)");
    if (eps <= 0) throw ArgumentError("adam eps must be positive");
    if (batch_size < 1) throw ArgumentError("batch_size must be at least 1");
    if (max_epochs < 0) throw ArgumentError("max_epochs must be non-negative");
    if (learning_rate < 0) throw ArgumentError("learning_rate must be non-negative");
  }
};

template <typename Scalar>
struct BceResult {
  double loss = 0.0;
  Tensor<Scalar> dscores;
};

/// Mean binary cross-entropy over all N*T cells, with the matching gradient.
/// Scores are clamped away from 0 and 1 before the logs so saturated float
/// sigmoids cannot produce infinities.
template <typename Scalar>
BceResult<Scalar> bce_loss(const Tensor<Scalar>& scores, const Tensor<Scalar>& labels) {
  require_dim(scores, 2, "bce_loss scores");
  if (labels.shape != scores.shape)
    throw ShapeError("bce_loss: scores " + shape_str(scores.shape) + " vs labels " +
                     shape_str(labels.shape));
  const Index count = scores.numel();
  if (count == 0) throw ArgumentError("bce_loss: empty batch");

  BceResult<Scalar> r;
  r.dscores = Tensor<Scalar>(std::vector<Index>(scores.shape));
  const Scalar lo = Scalar(1e-7), hi = Scalar(1) - Scalar(1e-7);
  double loss = 0.0;
  for (Index i = 0; i < count; ++i) {
    const Scalar y = labels[i];
    if (y != Scalar(0) && y != Scalar(1))
      throw ArgumentError("bce_loss: label at flat index " + std::to_string(i) +
                          " is not binary");
    const Scalar s = std::clamp(scores[i], lo, hi);
    loss -= static_cast<double>(y) * std::log(static_cast<double>(s)) +
            (1.0 - static_cast<double>(y)) * std::log(1.0 - static_cast<double>(s));
    r.dscores[i] = (s - y) / (s * (Scalar(1) - s) * Scalar(count));
  }
  r.loss = loss / static_cast<double>(count);
  return r;
}

template <typename Scalar>
std::vector<Tensor<Scalar>*> param_tensors(ParamSet<Scalar>& p) {
  std::vector<Tensor<Scalar>*> out;
  for_each_param(p, [&](const std::string&, Tensor<Scalar>& t) { out.push_back(&t); });
  return out;
}

template <typename Scalar>
std::vector<const Tensor<Scalar>*> param_tensors(const ParamSet<Scalar>& p) {
  std::vector<const Tensor<Scalar>*> out;
  for_each_param(p, [&](const std::string&, const Tensor<Scalar>& t) { out.push_back(&t); });
  return out;
}

template <typename Scalar>
struct AdamState {
  ParamSet<Scalar> m, v;
  long long t = 0;

  static AdamState init(const ParamSet<Scalar>& params) {
    AdamState s;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    return s;
  }
};

/// One bias-corrected Adam update, walking parameters in the fixed
/// for_each_param order.
template <typename Scalar>
void adam_step(ParamSet<Scalar>& params, const ParamSet<Scalar>& grads,
               AdamState<Scalar>& adam, const TrainConfig& cfg) {
  adam.t += 1;
  auto ps = param_tensors(params);
  auto gs = param_tensors(grads);
  auto ms = param_tensors(adam.m);
  auto vs = param_tensors(adam.v);
  const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
  const Scalar corr1 = Scalar(1) - Scalar(std::pow(cfg.beta1, static_cast<double>(adam.t)));
  const Scalar corr2 = Scalar(1) - Scalar(std::pow(cfg.beta2, static_cast<double>(adam.t)));
  const Scalar lr = Scalar(cfg.learning_rate), eps = Scalar(cfg.eps);
  for (size_t k = 0; k < ps.size(); ++k) {
    Tensor<Scalar>& p = *ps[k];
    const Tensor<Scalar>& g = *gs[k];
    Tensor<Scalar>& m = *ms[k];
    Tensor<Scalar>& v = *vs[k];
    if (g.shape != p.shape)
      throw ShapeError("adam_step: gradient shape " + shape_str(g.shape) +
                       " vs parameter " + shape_str(p.shape));
    for (Index i = 0; i < p.numel(); ++i) {
      m[i] = b1 * m[i] + (Scalar(1) - b1) * g[i];
      v[i] = b2 * v[i] + (Scalar(1) - b2) * g[i] * g[i];
      const Scalar mhat = m[i] / corr1;
      const Scalar vhat = v[i] / corr2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename Scalar>
struct Example {
  Tensor<Scalar> x;  // [1,H,W]
  Tensor<Scalar> y;  // [n_tags]
};

template <typename Scalar>
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual Index size() const = 0;
  virtual Example<Scalar> get(Index i) const = 0;
};

namespace detail {

template <typename Scalar>
void assemble_batch(const BatchSource<Scalar>& source, const std::vector<Index>& ids,
                    const ModelConfig& cfg, Tensor<Scalar>& x, Tensor<Scalar>& y) {
  const Index B = static_cast<Index>(ids.size());
  x = Tensor<Scalar>({B, cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]});
  y = Tensor<Scalar>({B, cfg.n_tags});
  const Index x_stride = cfg.input_shape[0] * cfg.input_shape[1] * cfg.input_shape[2];
  for (Index b = 0; b < B; ++b) {
    Example<Scalar> ex = source.get(ids[static_cast<size_t>(b)]);
    require_shape(ex.x, {cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]},
                  "batch example input");
    require_shape(ex.y, {cfg.n_tags}, "batch example labels");
    std::copy(ex.x.data.begin(), ex.x.data.end(), x.data.begin() + b * x_stride);
    std::copy(ex.y.data.begin(), ex.y.data.end(), y.data.begin() + b * cfg.n_tags);
  }
}

}  // namespace detail

/// One pass over the source in a seed+epoch shuffled order; returns the
/// example-weighted mean train loss.
template <typename Scalar>
double train_epoch(ModelState<Scalar>& state, AdamState<Scalar>& adam,
                   const BatchSource<Scalar>& source, const ModelConfig& model_cfg,
                   const TrainConfig& cfg, Index epoch) {
  const Index n = source.size();
  if (n == 0) throw ArgumentError("train_epoch: empty dataset");
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Xoshiro256pp rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());

  double loss_sum = 0.0;
  for (Index start = 0; start < n; start += cfg.batch_size) {
    const Index stop = std::min<Index>(n, start + cfg.batch_size);
    std::vector<Index> ids(order.begin() + start, order.begin() + stop);
    Tensor<Scalar> x, y;
    detail::assemble_batch(source, ids, model_cfg, x, y);
    auto fwd = forward(state, model_cfg, x, BnMode::Train, &rng);
    state.bn_stats = std::move(fwd.bn_stats);
    auto bce = bce_loss(fwd.scores, y);
    auto grads = backward(state, model_cfg, fwd.cache, bce.dscores);
    adam_step(state.params, grads.params, adam, cfg);
    loss_sum += bce.loss * static_cast<double>(stop - start);
  }
  return loss_sum / static_cast<double>(n);
}

/// Inference scores over a whole source, batched; labels come along so the
/// caller can hand the pair straight to macro_metrics.
template <typename Scalar>
EvalMatrix collect_scores(const ModelState<Scalar>& state, const ModelConfig& cfg,
                          const BatchSource<Scalar>& source, Index batch_size) {
  const Index n = source.size();
  if (n == 0) throw ArgumentError("collect_scores: empty dataset");
  EvalMatrix m;
  m.scores = Tensor<double>({n, cfg.n_tags});
  m.labels = Tensor<double>({n, cfg.n_tags});
  for (Index start = 0; start < n; start += batch_size) {
    const Index stop = std::min<Index>(n, start + batch_size);
    std::vector<Index> ids(static_cast<size_t>(stop - start));
    std::iota(ids.begin(), ids.end(), start);
    Tensor<Scalar> x, y;
    detail::assemble_batch(source, ids, cfg, x, y);
    auto fwd = forward(state, cfg, x, BnMode::Infer);
    for (Index b = 0; b < stop - start; ++b)
      for (Index t = 0; t < cfg.n_tags; ++t) {
        m.scores(start + b, t) = static_cast<double>(fwd.scores(b, t));
        m.labels(start + b, t) = static_cast<double>(y(b, t));
      }
  }
  if (static_cast<Index>(cfg.tag_names.size()) == cfg.n_tags)
    m.tag_names = cfg.tag_names;
  else
    for (Index t = 0; t < cfg.n_tags; ++t) m.tag_names.push_back("tag" + std::to_string(t));
  return m;
}

template <typename Scalar>
struct FitResult {
  ModelState<Scalar> best_state;
  double best_val_roc = std::numeric_limits<double>::quiet_NaN();
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  Index epochs_run = 0;
};

/// Epoch driver: trains, logs one line per epoch, tracks the best validation
/// ROC-AUC, and stops after `early_stop_patience` epochs without improvement.
/// Epochs whose validation metrics are undefined (no/degenerate val data)
/// leave the patience counter untouched.
template <typename Scalar>
FitResult<Scalar> fit(ModelState<Scalar> state, const ModelConfig& model_cfg,
                      const TrainConfig& cfg, const BatchSource<Scalar>& train,
                      const BatchSource<Scalar>* val, std::ostream& log) {
  cfg.validate();
  AdamState<Scalar> adam = AdamState<Scalar>::init(state.params);
  FitResult<Scalar> result;
  result.best_state = state;
  Index bad_epochs = 0;
  bool have_best = false;
  for (Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double loss = train_epoch(state, adam, train, model_cfg, cfg, epoch);
    result.final_train_loss = loss;
    result.epochs_run = epoch + 1;

    double val_roc = std::numeric_limits<double>::quiet_NaN();
    double val_pr = std::numeric_limits<double>::quiet_NaN();
    if (val && val->size() > 0) {
      try {
        const MacroReport report =
            macro_metrics(collect_scores(state, model_cfg, *val, cfg.batch_size));
        val_roc = report.macro_roc;
        val_pr = report.macro_pr;
      } catch (const ArgumentError&) {
        // every tag degenerate on this val slice; metrics stay undefined
      }
    }
    log << "epoch " << (epoch + 1) << " train_loss " << loss << " val_roc_auc " << val_roc
        << " val_pr_auc " << val_pr << "\n";
    log.flush();

    if (std::isfinite(val_roc)) {
      if (!have_best || val_roc > result.best_val_roc) {
        result.best_val_roc = val_roc;
        result.best_state = state;
        have_best = true;
        bad_epochs = 0;
      } else {
        ++bad_epochs;
        if (cfg.early_stop_patience > 0 && bad_epochs >= cfg.early_stop_patience) break;
      }
    }
  }
  if (!have_best) result.best_state = std::move(state);
  return result;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
};

/// Central-difference check of backward() over every parameter of a (small)
/// config, in 64-bit precision. The relative-error denominator is floored so
/// parameters with analytically zero gradient (conv biases under batch norm)
/// do not divide by zero. `mutate` lets tests corrupt the analytic gradients
/// to prove the harness would catch a wrong backward pass.
inline GradCheckResult gradient_check(
    const ModelConfig& cfg, std::uint64_t seed, double eps = 1e-4,
    const std::function<void(ParamSet<double>&)>& mutate = nullptr) {
  ModelState<double> state = build_model<double>(cfg, seed);
  Xoshiro256pp rng(mix_seed(seed, 0x9d5));
  const Index N = 2;
  Tensor<double> x({N, cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]});
  for (Index i = 0; i < x.numel(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  Tensor<double> labels({N, cfg.n_tags});
  for (Index i = 0; i < labels.numel(); ++i) labels[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;

  const auto loss_at = [&](const ModelState<double>& s) {
    auto fwd = forward(s, cfg, x, BnMode::Train);
    return bce_loss(fwd.scores, labels).loss;
  };

  auto fwd = forward(state, cfg, x, BnMode::Train);
  auto bce = bce_loss(fwd.scores, labels);
  ModelGrads<double> grads = backward(state, cfg, fwd.cache, bce.dscores);
  if (mutate) mutate(grads.params);

  GradCheckResult result;
  auto ps = param_tensors(state.params);
  auto gs = param_tensors(grads.params);
  std::vector<std::string> names;
  for_each_param(state.params,
                 [&](const std::string& name, const Tensor<double>&) { names.push_back(name); });
  for (size_t k = 0; k < ps.size(); ++k) {
    Tensor<double>& p = *ps[k];
    for (Index i = 0; i < p.numel(); ++i) {
      const double keep = p[i];
      p[i] = keep + eps;
      const double up = loss_at(state);
      p[i] = keep - eps;
      const double down = loss_at(state);
      p[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = (*gs[k])[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = names[k];
        result.worst_index = i;
      }
    }
  }
  return result;
}

/// The two-level instantiation used by the gradient suite; small enough that
/// the exhaustive parameter sweep takes seconds.
inline ModelConfig tiny_model_config(Variant variant, Index n_tags = 3) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.channels = {2, 2};
  cfg.pooling = {{2, 2}, {3, 4}};
  cfg.n_tags = n_tags;
  cfg.input_shape = {1, 6, 8};
  return cfg;
}

}  // namespace msecnn
