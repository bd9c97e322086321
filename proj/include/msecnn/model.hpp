#pragma once

#include <array>
#include <string>
#include <vector>

#include "msecnn/nn_ops.hpp"
#include "msecnn/parallel.hpp"
#include "msecnn/rng.hpp"
#include "msecnn/tensor.hpp"

namespace msecnn {

enum class Variant { Fcn5, MseCnn };

inline Variant variant_from_string(const std::string& name) {
  if (name == "fcn5") return Variant::Fcn5;
  if (name == "msecnn") return Variant::MseCnn;
  throw ArgumentError("unknown variant '" + name + "' (expected fcn5 or msecnn)");
}

inline std::string to_string(Variant v) {
  return v == Variant::Fcn5 ? "fcn5" : "msecnn";
}

struct PoolSize {
  Index h = 1, w = 1;
  bool operator==(const PoolSize&) const = default;
};

struct ModelConfig {
  Variant variant = Variant::MseCnn;
  std::vector<Index> channels{64, 128, 128, 128, 64};
  std::vector<PoolSize> pooling{{2, 4}, {2, 4}, {2, 4}, {3, 5}, {4, 4}};
  Index n_tags = 50;
  std::array<Index, 3> input_shape{1, 96, 1366};  // (C,H,W), C must be 1
  double dropout_rate = 0.0;
  std::vector<std::string> tag_names;  // empty or exactly n_tags entries
};

struct LevelPlan {
  Index in_channels = 0;    // channels entering the level
  Index conv_channels = 0;  // conv output channels
  Index out_channels = 0;   // after the (optional) skip concatenation
  Index h_in = 0, w_in = 0;
  Index h_out = 0, w_out = 0;
  PoolSize pool;
};

struct ModelPlan {
  std::vector<LevelPlan> levels;
  Index feature_width = 0;  // channels at the 1x1 stage, the dense input size
};

/// Derives every shape in the network from the config alone, and rejects
/// configs whose pooling schedule does not land exactly on 1x1.
inline ModelPlan plan_model(const ModelConfig& cfg) {
  if (cfg.channels.empty() || cfg.channels.size() != cfg.pooling.size())
    throw ArgumentError("model config needs matching non-empty channels and pooling lists, got " +
                        std::to_string(cfg.channels.size()) + " and " +
                        std::to_string(cfg.pooling.size()));
  if (cfg.n_tags < 1) throw ArgumentError("n_tags must be at least 1");
  if (cfg.input_shape[0] != 1)
    throw ArgumentError("input must be single-channel, got " +
                        std::to_string(cfg.input_shape[0]));
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
    throw ArgumentError("dropout_rate must be in [0,1)");
  if (!cfg.tag_names.empty() && static_cast<Index>(cfg.tag_names.size()) != cfg.n_tags)
    throw ArgumentError("got " + std::to_string(cfg.tag_names.size()) + " tag names for " +
                        std::to_string(cfg.n_tags) + " tags");

  ModelPlan plan;
  Index c = cfg.input_shape[0];
  Index h = cfg.input_shape[1], w = cfg.input_shape[2];
  for (size_t k = 0; k < cfg.channels.size(); ++k) {
    LevelPlan lv;
    lv.in_channels = c;
    lv.conv_channels = cfg.channels[k];
    lv.pool = cfg.pooling[k];
    lv.h_in = h;
    lv.w_in = w;
    if (lv.conv_channels < 1)
      throw ArgumentError("level " + std::to_string(k + 1) + " has no channels");
    if (lv.pool.h < 1 || lv.pool.w < 1)
      throw ArgumentError("level " + std::to_string(k + 1) + " pooling must be positive");
    lv.h_out = h / lv.pool.h;
    lv.w_out = w / lv.pool.w;
    if (lv.h_out < 1 || lv.w_out < 1)
      throw ArgumentError("level " + std::to_string(k + 1) + " pools " + std::to_string(h) +
                          "x" + std::to_string(w) + " by " + std::to_string(lv.pool.h) + "x" +
                          std::to_string(lv.pool.w) + " to an empty map");
    lv.out_channels =
        cfg.variant == Variant::MseCnn ? lv.in_channels + lv.conv_channels : lv.conv_channels;
    c = lv.out_channels;
    h = lv.h_out;
    w = lv.w_out;
    plan.levels.push_back(lv);
  }
  if (h != 1 || w != 1)
    throw ArgumentError("pooling schedule ends at " + std::to_string(h) + "x" +
                        std::to_string(w) + " instead of 1x1");
  plan.feature_width = c;
  return plan;
}

template <typename Scalar>
struct LevelParams {
  Tensor<Scalar> conv_w, conv_b, gamma, beta;
};

template <typename Scalar>
struct ParamSet {
  std::vector<LevelParams<Scalar>> levels;
  Tensor<Scalar> dense_w, dense_b;
};

/// Visits every learnable tensor in the fixed serialization/update order.
template <typename Scalar, typename Fn>
void for_each_param(ParamSet<Scalar>& p, Fn&& fn) {
  for (size_t k = 0; k < p.levels.size(); ++k) {
    const std::string tag = std::to_string(k + 1);
    fn("conv" + tag + ".weight", p.levels[k].conv_w);
    fn("conv" + tag + ".bias", p.levels[k].conv_b);
    fn("bn" + tag + ".gamma", p.levels[k].gamma);
    fn("bn" + tag + ".beta", p.levels[k].beta);
  }
  fn("dense.weight", p.dense_w);
  fn("dense.bias", p.dense_b);
}

template <typename Scalar, typename Fn>
void for_each_param(const ParamSet<Scalar>& p, Fn&& fn) {
  for (size_t k = 0; k < p.levels.size(); ++k) {
    const std::string tag = std::to_string(k + 1);
    fn("conv" + tag + ".weight", p.levels[k].conv_w);
    fn("conv" + tag + ".bias", p.levels[k].conv_b);
    fn("bn" + tag + ".gamma", p.levels[k].gamma);
    fn("bn" + tag + ".beta", p.levels[k].beta);
  }
  fn("dense.weight", p.dense_w);
  fn("dense.bias", p.dense_b);
}

template <typename Scalar>
ParamSet<Scalar> zeros_like(const ParamSet<Scalar>& p) {
  ParamSet<Scalar> z;
  z.levels.resize(p.levels.size());
  for (size_t k = 0; k < p.levels.size(); ++k) {
    z.levels[k].conv_w = Tensor<Scalar>(std::vector<Index>(p.levels[k].conv_w.shape));
    z.levels[k].conv_b = Tensor<Scalar>(std::vector<Index>(p.levels[k].conv_b.shape));
    z.levels[k].gamma = Tensor<Scalar>(std::vector<Index>(p.levels[k].gamma.shape));
    z.levels[k].beta = Tensor<Scalar>(std::vector<Index>(p.levels[k].beta.shape));
  }
  z.dense_w = Tensor<Scalar>(std::vector<Index>(p.dense_w.shape));
  z.dense_b = Tensor<Scalar>(std::vector<Index>(p.dense_b.shape));
  return z;
}

template <typename Scalar>
struct ModelState {
  ParamSet<Scalar> params;
  std::vector<BatchNormStats<Scalar>> bn_stats;

  template <typename Other>
  ModelState<Other> cast() const {
    ModelState<Other> out;
    out.params.levels.resize(params.levels.size());
    for (size_t k = 0; k < params.levels.size(); ++k) {
      out.params.levels[k].conv_w = params.levels[k].conv_w.template cast<Other>();
      out.params.levels[k].conv_b = params.levels[k].conv_b.template cast<Other>();
      out.params.levels[k].gamma = params.levels[k].gamma.template cast<Other>();
      out.params.levels[k].beta = params.levels[k].beta.template cast<Other>();
    }
    out.params.dense_w = params.dense_w.template cast<Other>();
    out.params.dense_b = params.dense_b.template cast<Other>();
    for (const auto& s : bn_stats) {
      BatchNormStats<Other> so;
      so.running_mean = s.running_mean.template cast<Other>();
      so.running_var = s.running_var.template cast<Other>();
      so.updates = s.updates;
      out.bn_stats.push_back(std::move(so));
    }
    return out;
  }
};

/// He-uniform initialization: weights uniform in ±sqrt(6/fan_in), zero biases,
/// unit gamma. Draw order is fixed, so a seed pins every parameter bit.
template <typename Scalar>
ModelState<Scalar> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  const ModelPlan plan = plan_model(cfg);
  Xoshiro256pp rng(seed);
  ModelState<Scalar> state;
  for (const LevelPlan& lv : plan.levels) {
    LevelParams<Scalar> p;
    p.conv_w = Tensor<Scalar>({lv.conv_channels, lv.in_channels, 3, 3});
    const double bound = std::sqrt(6.0 / static_cast<double>(lv.in_channels * 9));
    for (Index i = 0; i < p.conv_w.numel(); ++i)
      p.conv_w[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    p.conv_b = Tensor<Scalar>({lv.conv_channels});
    p.gamma = Tensor<Scalar>::full({lv.conv_channels}, Scalar(1));
    p.beta = Tensor<Scalar>({lv.conv_channels});
    state.params.levels.push_back(std::move(p));
    state.bn_stats.push_back(BatchNormStats<Scalar>::init(lv.conv_channels));
  }
  state.params.dense_w = Tensor<Scalar>({cfg.n_tags, plan.feature_width});
  const double bound = std::sqrt(6.0 / static_cast<double>(plan.feature_width));
  for (Index i = 0; i < state.params.dense_w.numel(); ++i)
    state.params.dense_w[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  state.params.dense_b = Tensor<Scalar>({cfg.n_tags});
  return state;
}

template <typename Scalar>
struct LevelCache {
  std::vector<Tensor<Scalar>> x_in;    // per sample, level input [C_in,H,W]
  BatchNormCache<Scalar> bn;
  Tensor<Scalar> bn_out;               // [N,C,H,W], the relu input
  std::vector<PoolIndices> pool_main;
  std::vector<PoolIndices> pool_skip;  // msecnn only
};

template <typename Scalar>
struct ForwardCache {
  std::vector<LevelCache<Scalar>> levels;
  Tensor<Scalar> features;      // [N,D] dense input (after dropout)
  Tensor<Scalar> dropout_mask;  // [N,D] scale factors; empty when inactive
  Tensor<Scalar> scores;        // [N,T]
  bool train_mode = false;
};

template <typename Scalar>
struct ForwardResult {
  Tensor<Scalar> scores;
  ForwardCache<Scalar> cache;
  std::vector<BatchNormStats<Scalar>> bn_stats;  // updated copies
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> slice_sample(const Tensor<Scalar>& batch, Index n) {
  const Index C = batch.shape[1], H = batch.shape[2], W = batch.shape[3];
  Tensor<Scalar> out({C, H, W});
  const Index stride = C * H * W;
  std::copy(batch.data.begin() + n * stride, batch.data.begin() + (n + 1) * stride,
            out.data.begin());
  return out;
}

template <typename Scalar>
Tensor<Scalar> stack_samples(const std::vector<Tensor<Scalar>>& samples) {
  const Index N = static_cast<Index>(samples.size());
  const Index C = samples[0].shape[0], H = samples[0].shape[1], W = samples[0].shape[2];
  Tensor<Scalar> out({N, C, H, W});
  const Index stride = C * H * W;
  for (Index n = 0; n < N; ++n)
    std::copy(samples[static_cast<size_t>(n)].data.begin(),
              samples[static_cast<size_t>(n)].data.end(), out.data.begin() + n * stride);
  return out;
}

}  // namespace detail

/// Runs the level stack. fcn5: x <- pool(relu(BN(conv(x)))). msecnn keeps the
/// raw level input alive: x <- concat(pool(x), pool(relu(BN(conv(x))))), the
/// identity path stacked first. Train mode returns updated BN running stats;
/// dropout draws from `dropout_rng` when the rate is nonzero.
template <typename Scalar>
ForwardResult<Scalar> forward(const ModelState<Scalar>& state, const ModelConfig& cfg,
                              const Tensor<Scalar>& x, BnMode mode,
                              Xoshiro256pp* dropout_rng = nullptr) {
  const ModelPlan plan = plan_model(cfg);
  require_dim(x, 4, "forward input");
  if (x.shape[1] != cfg.input_shape[0] || x.shape[2] != cfg.input_shape[1] ||
      x.shape[3] != cfg.input_shape[2])
    throw ShapeError("forward input " + shape_str(x.shape) + " does not match configured (" +
                     std::to_string(cfg.input_shape[0]) + ", " +
                     std::to_string(cfg.input_shape[1]) + ", " +
                     std::to_string(cfg.input_shape[2]) + ")");
  const Index N = x.shape[0];
  if (N < 1) throw ShapeError("forward needs a non-empty batch");
  if (state.params.levels.size() != plan.levels.size() ||
      state.bn_stats.size() != plan.levels.size())
    throw InternalError("model state has " + std::to_string(state.params.levels.size()) +
                        " levels, config expects " + std::to_string(plan.levels.size()));

  ForwardResult<Scalar> result;
  result.cache.train_mode = (mode == BnMode::Train);
  result.bn_stats = state.bn_stats;

  std::vector<Tensor<Scalar>> cur(static_cast<size_t>(N));
  for (Index n = 0; n < N; ++n) cur[static_cast<size_t>(n)] = detail::slice_sample(x, n);

  for (size_t k = 0; k < plan.levels.size(); ++k) {
    const LevelPlan& lv = plan.levels[k];
    const LevelParams<Scalar>& p = state.params.levels[k];
    LevelCache<Scalar> lc;

    std::vector<Tensor<Scalar>> conv_out(static_cast<size_t>(N));
    parallel_for(N, [&](long long n) {
      conv_out[static_cast<size_t>(n)] = conv2d(cur[static_cast<size_t>(n)], p.conv_w, p.conv_b);
    });
    Tensor<Scalar> conv_batch = detail::stack_samples(conv_out);
    conv_out.clear();

    auto bn = batchnorm2d(conv_batch, p.gamma, p.beta, result.bn_stats[k], mode);
    result.bn_stats[k] = std::move(bn.stats);
    lc.bn = std::move(bn.cache);
    lc.bn_out = std::move(bn.y);

    const Tensor<Scalar> relu_batch = activation(lc.bn_out, Activation::Relu);

    std::vector<Tensor<Scalar>> next(static_cast<size_t>(N));
    lc.pool_main.resize(static_cast<size_t>(N));
    if (cfg.variant == Variant::MseCnn) lc.pool_skip.resize(static_cast<size_t>(N));
    parallel_for(N, [&](long long n) {
      auto main = maxpool2d(detail::slice_sample(relu_batch, static_cast<Index>(n)),
                            lv.pool.h, lv.pool.w);
      lc.pool_main[static_cast<size_t>(n)] = std::move(main.idx);
      if (cfg.variant == Variant::MseCnn) {
        auto skip = maxpool2d(cur[static_cast<size_t>(n)], lv.pool.h, lv.pool.w);
        lc.pool_skip[static_cast<size_t>(n)] = std::move(skip.idx);
        std::vector<Tensor<Scalar>> parts;
        parts.push_back(std::move(skip.y));
        parts.push_back(std::move(main.y));
        next[static_cast<size_t>(n)] = concat_channels(parts);
      } else {
        next[static_cast<size_t>(n)] = std::move(main.y);
      }
    });
    lc.x_in = std::move(cur);
    cur = std::move(next);
    result.cache.levels.push_back(std::move(lc));
  }

  const Index D = plan.feature_width;
  Tensor<Scalar> features({N, D});
  for (Index n = 0; n < N; ++n)
    for (Index d = 0; d < D; ++d) features(n, d) = cur[static_cast<size_t>(n)](d, 0, 0);

  if (mode == BnMode::Train && cfg.dropout_rate > 0.0) {
    if (!dropout_rng)
      throw InternalError("dropout is enabled but no generator was supplied");
    const Scalar keep = Scalar(1.0 - cfg.dropout_rate);
    result.cache.dropout_mask = Tensor<Scalar>({N, D});
    for (Index i = 0; i < features.numel(); ++i) {
      const bool kept = dropout_rng->uniform() >= cfg.dropout_rate;
      result.cache.dropout_mask[i] = kept ? Scalar(1) / keep : Scalar(0);
      features[i] *= result.cache.dropout_mask[i];
    }
  }

  result.scores = Tensor<Scalar>({N, cfg.n_tags});
  for (Index n = 0; n < N; ++n) {
    Tensor<Scalar> feat({D});
    for (Index d = 0; d < D; ++d) feat[d] = features(n, d);
    const Tensor<Scalar> logits = dense(feat, state.params.dense_w, state.params.dense_b);
    for (Index t = 0; t < cfg.n_tags; ++t) result.scores(n, t) = sigmoid(logits[t]);
  }

  result.cache.features = std::move(features);
  result.cache.scores = result.scores;
  return result;
}

template <typename Scalar>
struct ModelGrads {
  ParamSet<Scalar> params;
  Tensor<Scalar> dx;  // [N,1,H,W]
};

/// Exact gradients of the train-mode forward graph with respect to dscores.
/// The msecnn concat split routes upstream gradient into both the identity
/// pool path and the conv path of each level.
template <typename Scalar>
ModelGrads<Scalar> backward(const ModelState<Scalar>& state, const ModelConfig& cfg,
                            const ForwardCache<Scalar>& cache, const Tensor<Scalar>& dscores) {
  const ModelPlan plan = plan_model(cfg);
  if (!cache.train_mode)
    throw InternalError("backward needs a cache from a train-mode forward");
  if (cache.levels.size() != plan.levels.size())
    throw InternalError("cache has " + std::to_string(cache.levels.size()) +
                        " levels, config expects " + std::to_string(plan.levels.size()));
  if (dscores.shape != cache.scores.shape)
    throw ShapeError("backward dscores " + shape_str(dscores.shape) + " vs cached scores " +
                     shape_str(cache.scores.shape));
  const Index N = dscores.shape[0];
  const Index D = plan.feature_width;

  ModelGrads<Scalar> g;
  g.params = zeros_like(state.params);

  // Sigmoid head, then the dense layer per sample (summed in sample order).
  Tensor<Scalar> dfeat({N, D});
  for (Index n = 0; n < N; ++n) {
    Tensor<Scalar> dlogits({cfg.n_tags});
    for (Index t = 0; t < cfg.n_tags; ++t) {
      const Scalar s = cache.scores(n, t);
      dlogits[t] = dscores(n, t) * s * (Scalar(1) - s);
    }
    Tensor<Scalar> feat({D});
    for (Index d = 0; d < D; ++d) feat[d] = cache.features(n, d);
    auto dg = dense_grad(feat, state.params.dense_w, dlogits);
    g.params.dense_w.as_vector() += dg.dw.as_vector();
    g.params.dense_b.as_vector() += dg.db.as_vector();
    for (Index d = 0; d < D; ++d) dfeat(n, d) = dg.dx[d];
  }

  if (cache.dropout_mask.numel() > 0)
    for (Index i = 0; i < dfeat.numel(); ++i) dfeat[i] *= cache.dropout_mask[i];

  std::vector<Tensor<Scalar>> dy(static_cast<size_t>(N));
  for (Index n = 0; n < N; ++n) {
    Tensor<Scalar> t({D, 1, 1});
    for (Index d = 0; d < D; ++d) t(d, 0, 0) = dfeat(n, d);
    dy[static_cast<size_t>(n)] = std::move(t);
  }

  for (size_t ki = plan.levels.size(); ki-- > 0;) {
    const LevelPlan& lv = plan.levels[ki];
    const LevelCache<Scalar>& lc = cache.levels[ki];
    const LevelParams<Scalar>& p = state.params.levels[ki];

    std::vector<Tensor<Scalar>> d_relu(static_cast<size_t>(N));
    std::vector<Tensor<Scalar>> d_skip(static_cast<size_t>(N));
    parallel_for(N, [&](long long n) {
      const auto& up = dy[static_cast<size_t>(n)];
      Tensor<Scalar> d_main;
      if (cfg.variant == Variant::MseCnn) {
        auto parts = concat_grad(up, {lv.in_channels, lv.conv_channels});
        d_skip[static_cast<size_t>(n)] = maxpool2d_grad(
            lc.pool_skip[static_cast<size_t>(n)], parts[0],
            {lv.in_channels, lv.h_in, lv.w_in});
        d_main = std::move(parts[1]);
      } else {
        d_main = up;
      }
      d_relu[static_cast<size_t>(n)] = maxpool2d_grad(
          lc.pool_main[static_cast<size_t>(n)], d_main,
          {lv.conv_channels, lv.h_in, lv.w_in});
    });

    Tensor<Scalar> d_relu_batch = detail::stack_samples(d_relu);
    d_relu.clear();
    const Tensor<Scalar> d_bn_out = activation_grad(lc.bn_out, d_relu_batch, Activation::Relu);
    auto bng = batchnorm2d_grad(lc.bn, d_bn_out);
    g.params.levels[ki].gamma = std::move(bng.dgamma);
    g.params.levels[ki].beta = std::move(bng.dbeta);

    std::vector<Conv2dGrads<Scalar>> cg(static_cast<size_t>(N));
    parallel_for(N, [&](long long n) {
      cg[static_cast<size_t>(n)] =
          conv2d_grad(lc.x_in[static_cast<size_t>(n)], p.conv_w,
                      detail::slice_sample(bng.dx, static_cast<Index>(n)));
    });
    for (Index n = 0; n < N; ++n) {
      g.params.levels[ki].conv_w.as_vector() += cg[static_cast<size_t>(n)].dw.as_vector();
      g.params.levels[ki].conv_b.as_vector() += cg[static_cast<size_t>(n)].db.as_vector();
    }

    std::vector<Tensor<Scalar>> dy_next(static_cast<size_t>(N));
    parallel_for(N, [&](long long n) {
      Tensor<Scalar> d = std::move(cg[static_cast<size_t>(n)].dx);
      if (cfg.variant == Variant::MseCnn)
        d.as_vector() += d_skip[static_cast<size_t>(n)].as_vector();
      dy_next[static_cast<size_t>(n)] = std::move(d);
    });
    dy = std::move(dy_next);
  }

  g.dx = detail::stack_samples(dy);
  return g;
}

inline long long count_params(const ModelConfig& cfg) {
  const ModelPlan plan = plan_model(cfg);
  long long total = 0;
  for (const LevelPlan& lv : plan.levels)
    total += lv.conv_channels * lv.in_channels * 9  // conv weight
             + lv.conv_channels                     // conv bias
             + 2 * lv.conv_channels;                // gamma, beta
  total += cfg.n_tags * plan.feature_width + cfg.n_tags;
  return total;
}

struct FlopReport {
  std::vector<long long> conv_macs;  // per level, at pre-pool spatial size
  long long dense_macs = 0;
  long long total = 0;
};

/// Forward-pass multiply-accumulate count, conv and dense layers only
/// (pooling, normalization, and activations are excluded).
inline FlopReport count_flops(const ModelConfig& cfg) {
  const ModelPlan plan = plan_model(cfg);
  FlopReport report;
  for (const LevelPlan& lv : plan.levels) {
    const long long macs = static_cast<long long>(lv.h_in) * lv.w_in * lv.in_channels *
                           lv.conv_channels * 9;
    report.conv_macs.push_back(macs);
    report.total += macs;
  }
  report.dense_macs = static_cast<long long>(plan.feature_width) * cfg.n_tags;
  report.total += report.dense_macs;
  return report;
}

}  // namespace msecnn
