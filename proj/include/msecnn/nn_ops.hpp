#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "msecnn/tensor.hpp"

namespace msecnn {

// ---------------------------------------------------------------------------
// im2col helpers for the fixed 3x3 / stride 1 / pad 1 convolution.
// Patch matrix layout: row (c*9 + u*3 + v), column (i*W + j) holds
// x_pad[c, i+u, j+v], so a flat view of w multiplies it directly.

template <typename Scalar>
MatrixX<Scalar> im2col_3x3(const Tensor<Scalar>& x) {
  const Index C = x.shape[0], H = x.shape[1], W = x.shape[2];
  MatrixX<Scalar> cols = MatrixX<Scalar>::Zero(C * 9, H * W);
  for (Index c = 0; c < C; ++c) {
    for (Index u = 0; u < 3; ++u) {
      for (Index v = 0; v < 3; ++v) {
        const Index r = c * 9 + u * 3 + v;
        const Index di = u - 1, dj = v - 1;
        const Index j0 = std::max<Index>(0, -dj);
        const Index j1 = std::min<Index>(W, W - dj);
        if (j1 <= j0) continue;
        for (Index i = 0; i < H; ++i) {
          const Index ii = i + di;
          if (ii < 0 || ii >= H) continue;
          for (Index j = j0; j < j1; ++j) cols(r, i * W + j) = x(c, ii, j + dj);
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
void col2im_3x3_add(const MatrixX<Scalar>& cols, Tensor<Scalar>& dx) {
  const Index C = dx.shape[0], H = dx.shape[1], W = dx.shape[2];
  for (Index c = 0; c < C; ++c) {
    for (Index u = 0; u < 3; ++u) {
      for (Index v = 0; v < 3; ++v) {
        const Index r = c * 9 + u * 3 + v;
        const Index di = u - 1, dj = v - 1;
        const Index j0 = std::max<Index>(0, -dj);
        const Index j1 = std::min<Index>(W, W - dj);
        if (j1 <= j0) continue;
        for (Index i = 0; i < H; ++i) {
          const Index ii = i + di;
          if (ii < 0 || ii >= H) continue;
          for (Index j = j0; j < j1; ++j) dx(c, ii, j + dj) += cols(r, i * W + j);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// conv2d: 3x3 kernel, stride 1, zero padding 1, output spatial size == input.

template <typename Scalar>
void check_conv_shapes(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                       const Tensor<Scalar>& b) {
  require_dim(x, 3, "conv2d input");
  require_dim(w, 4, "conv2d weight");
  if (w.shape[2] != 3 || w.shape[3] != 3)
    throw ShapeError("conv2d weight must be 3x3 spatially, got " + shape_str(w.shape));
  if (w.shape[1] != x.shape[0])
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape) +
                     " vs weight " + shape_str(w.shape));
  require_shape(b, {w.shape[0]}, "conv2d bias");
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                      const Tensor<Scalar>& b) {
  check_conv_shapes(x, w, b);
  const Index C_out = w.shape[0], C_in = x.shape[0];
  const Index H = x.shape[1], W = x.shape[2];
  const MatrixX<Scalar> cols = im2col_3x3(x);
  Tensor<Scalar> y({C_out, H, W});
  auto y_mat = y.as_matrix(C_out, H * W);
  y_mat.noalias() = w.as_matrix(C_out, C_in * 9) * cols;
  y_mat.colwise() += b.as_vector();
  return y;
}

template <typename Scalar>
struct Conv2dGrads {
  Tensor<Scalar> dx, dw, db;
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                                const Tensor<Scalar>& dy) {
  require_dim(x, 3, "conv2d_grad input");
  require_dim(w, 4, "conv2d_grad weight");
  const Index C_out = w.shape[0], C_in = x.shape[0];
  const Index H = x.shape[1], W = x.shape[2];
  if (w.shape[1] != C_in)
    throw ShapeError("conv2d_grad channel mismatch: input " + shape_str(x.shape) +
                     " vs weight " + shape_str(w.shape));
  require_shape(dy, {C_out, H, W}, "conv2d_grad upstream");

  const MatrixX<Scalar> cols = im2col_3x3(x);
  auto dy_mat = dy.as_matrix(C_out, H * W);

  Conv2dGrads<Scalar> g;
  g.db = Tensor<Scalar>({C_out});
  g.db.as_vector() = dy_mat.rowwise().sum();

  g.dw = Tensor<Scalar>(std::vector<Index>(w.shape));
  g.dw.as_matrix(C_out, C_in * 9).noalias() = dy_mat * cols.transpose();

  const MatrixX<Scalar> dcols = w.as_matrix(C_out, C_in * 9).transpose() * dy_mat;
  g.dx = Tensor<Scalar>({C_in, H, W});
  col2im_3x3_add(dcols, g.dx);
  return g;
}

// ---------------------------------------------------------------------------
// Max pooling with non-overlapping windows; remainder rows/cols are dropped.

struct PoolIndices {
  std::vector<Index> out_shape;
  std::vector<Index> flat_argmax;
};

template <typename Scalar>
struct PoolResult {
  Tensor<Scalar> y;
  PoolIndices idx;
};

template <typename Scalar>
PoolResult<Scalar> maxpool2d(const Tensor<Scalar>& x, Index ph, Index pw) {
  require_dim(x, 3, "maxpool2d input");
  if (ph <= 0 || pw <= 0)
    throw ArgumentError("maxpool2d window must be positive, got " + std::to_string(ph) +
                        "x" + std::to_string(pw));
  const Index C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const Index Ho = H / ph, Wo = W / pw;
  if (Ho == 0 || Wo == 0)
    throw ShapeError("maxpool2d window " + std::to_string(ph) + "x" + std::to_string(pw) +
                     " exceeds input " + shape_str(x.shape));
  PoolResult<Scalar> r;
  r.y = Tensor<Scalar>({C, Ho, Wo});
  r.idx.out_shape = {C, Ho, Wo};
  r.idx.flat_argmax.resize(static_cast<size_t>(C * Ho * Wo));
  Index out = 0;
  for (Index c = 0; c < C; ++c) {
    for (Index oi = 0; oi < Ho; ++oi) {
      for (Index oj = 0; oj < Wo; ++oj, ++out) {
        Scalar best = x(c, oi * ph, oj * pw);
        Index best_flat = (c * H + oi * ph) * W + oj * pw;
        for (Index u = 0; u < ph; ++u) {
          for (Index v = 0; v < pw; ++v) {
            const Index i = oi * ph + u, j = oj * pw + v;
            const Scalar val = x(c, i, j);
            if (val > best) {
              best = val;
              best_flat = (c * H + i) * W + j;
            }
          }
        }
        r.y[out] = best;
        r.idx.flat_argmax[static_cast<size_t>(out)] = best_flat;
      }
    }
  }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2d_grad(const PoolIndices& idx, const Tensor<Scalar>& dy,
                              const std::vector<Index>& in_shape) {
  if (dy.shape != idx.out_shape)
    throw ShapeError("maxpool2d_grad upstream shape " + shape_str(dy.shape) +
                     " does not match pooled shape " + shape_str(idx.out_shape));
  Tensor<Scalar> dx(in_shape);
  const Index n = dx.numel();
  for (size_t k = 0; k < idx.flat_argmax.size(); ++k) {
    const Index fi = idx.flat_argmax[k];
    if (fi < 0 || fi >= n)
      throw InternalError("maxpool2d_grad argmax index " + std::to_string(fi) +
                          " outside input of " + std::to_string(n) + " elements");
    dx[fi] += dy[static_cast<Index>(k)];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization over (N,H,W) per channel.

template <typename Scalar>
struct BatchNormStats {
  Tensor<Scalar> running_mean, running_var;
  long long updates = 0;

  static BatchNormStats init(Index channels) {
    BatchNormStats s;
    s.running_mean = Tensor<Scalar>({channels});
    s.running_var = Tensor<Scalar>::full({channels}, Scalar(1));
    return s;
  }
};

enum class BnMode { Train, Infer };

template <typename Scalar>
struct BatchNormCache {
  Tensor<Scalar> xhat;
  Tensor<Scalar> inv_std;
  Tensor<Scalar> gamma;
  bool valid = false;
};

template <typename Scalar>
struct BatchNormResult {
  Tensor<Scalar> y;
  BatchNormStats<Scalar> stats;
  BatchNormCache<Scalar> cache;
};

template <typename Scalar>
BatchNormResult<Scalar> batchnorm2d(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                                    const Tensor<Scalar>& beta,
                                    const BatchNormStats<Scalar>& stats, BnMode mode,
                                    Scalar eps = Scalar(1e-5),
                                    Scalar momentum = Scalar(0.9)) {
  require_dim(x, 4, "batchnorm2d input");
  const Index N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  require_shape(gamma, {C}, "batchnorm2d gamma");
  require_shape(beta, {C}, "batchnorm2d beta");
  require_shape(stats.running_mean, {C}, "batchnorm2d running mean");

  const Index per_channel = N * H * W;
  BatchNormResult<Scalar> r;
  r.y = Tensor<Scalar>(std::vector<Index>(x.shape));
  r.stats = stats;

  if (mode == BnMode::Train) {
    if (per_channel < 2)
      throw ShapeError("batchnorm2d train mode needs at least 2 values per channel, got " +
                       shape_str(x.shape));
    r.cache.xhat = Tensor<Scalar>(std::vector<Index>(x.shape));
    r.cache.inv_std = Tensor<Scalar>({C});
    r.cache.gamma = gamma;
    r.cache.valid = true;
    for (Index c = 0; c < C; ++c) {
      Scalar sum = 0;
      for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < H; ++i)
          for (Index j = 0; j < W; ++j) sum += x(n, c, i, j);
      const Scalar mean = sum / Scalar(per_channel);
      Scalar sq = 0;
      for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < H; ++i)
          for (Index j = 0; j < W; ++j) {
            const Scalar d = x(n, c, i, j) - mean;
            sq += d * d;
          }
      const Scalar var = sq / Scalar(per_channel);
      const Scalar inv_std = Scalar(1) / std::sqrt(var + eps);
      r.cache.inv_std[c] = inv_std;
      for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < H; ++i)
          for (Index j = 0; j < W; ++j) {
            const Scalar xh = (x(n, c, i, j) - mean) * inv_std;
            r.cache.xhat(n, c, i, j) = xh;
            r.y(n, c, i, j) = gamma[c] * xh + beta[c];
          }
      r.stats.running_mean[c] = momentum * r.stats.running_mean[c] + (Scalar(1) - momentum) * mean;
      r.stats.running_var[c] = momentum * r.stats.running_var[c] + (Scalar(1) - momentum) * var;
    }
    r.stats.updates += 1;
  } else {
    if (stats.updates == 0)
      throw InternalError("batchnorm2d inference requested before any training update");
    for (Index c = 0; c < C; ++c) {
      const Scalar inv_std = Scalar(1) / std::sqrt(stats.running_var[c] + eps);
      const Scalar mean = stats.running_mean[c];
      for (Index n = 0; n < N; ++n)
        for (Index i = 0; i < H; ++i)
          for (Index j = 0; j < W; ++j)
            r.y(n, c, i, j) = gamma[c] * (x(n, c, i, j) - mean) * inv_std + beta[c];
    }
  }
  return r;
}

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> dx, dgamma, dbeta;
};

/// Gradient of the train-mode mapping, with batch statistics treated as
/// functions of x (the standard whitening backward pass).
template <typename Scalar>
BatchNormGrads<Scalar> batchnorm2d_grad(const BatchNormCache<Scalar>& cache,
                                        const Tensor<Scalar>& dy) {
  if (!cache.valid)
    throw InternalError("batchnorm2d_grad needs a cache from a train-mode forward");
  if (dy.shape != cache.xhat.shape)
    throw ShapeError("batchnorm2d_grad upstream shape " + shape_str(dy.shape) +
                     " does not match cached " + shape_str(cache.xhat.shape));
  const Index N = dy.shape[0], C = dy.shape[1], H = dy.shape[2], W = dy.shape[3];
  const Scalar per_channel = Scalar(N * H * W);

  BatchNormGrads<Scalar> g;
  g.dx = Tensor<Scalar>(std::vector<Index>(dy.shape));
  g.dgamma = Tensor<Scalar>({C});
  g.dbeta = Tensor<Scalar>({C});
  for (Index c = 0; c < C; ++c) {
    Scalar sum_dy = 0, sum_dy_xhat = 0;
    for (Index n = 0; n < N; ++n)
      for (Index i = 0; i < H; ++i)
        for (Index j = 0; j < W; ++j) {
          const Scalar d = dy(n, c, i, j);
          sum_dy += d;
          sum_dy_xhat += d * cache.xhat(n, c, i, j);
        }
    g.dbeta[c] = sum_dy;
    g.dgamma[c] = sum_dy_xhat;
    const Scalar mean_dy = sum_dy / per_channel;
    const Scalar mean_dy_xhat = sum_dy_xhat / per_channel;
    const Scalar scale = cache.gamma[c] * cache.inv_std[c];
    for (Index n = 0; n < N; ++n)
      for (Index i = 0; i < H; ++i)
        for (Index j = 0; j < W; ++j)
          g.dx(n, c, i, j) =
              scale * (dy(n, c, i, j) - mean_dy - cache.xhat(n, c, i, j) * mean_dy_xhat);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Elementwise activations.

enum class Activation { Relu, Sigmoid };

inline Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ArgumentError("unknown activation '" + name + "' (expected relu or sigmoid)");
}

template <typename Scalar>
Scalar sigmoid(Scalar v) {
  return Scalar(1) / (Scalar(1) + std::exp(-v));
}

template <typename Scalar>
Tensor<Scalar> activation(const Tensor<Scalar>& x, Activation kind) {
  Tensor<Scalar> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
  switch (kind) {
    case Activation::Relu:
      for (size_t i = 0; i < x.data.size(); ++i)
        y.data[i] = x.data[i] > Scalar(0) ? x.data[i] : Scalar(0);
      break;
    case Activation::Sigmoid:
      for (size_t i = 0; i < x.data.size(); ++i) y.data[i] = sigmoid(x.data[i]);
      break;
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> activation_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& dy,
                               Activation kind) {
  if (dy.shape != x.shape)
    throw ShapeError("activation_grad upstream shape " + shape_str(dy.shape) +
                     " does not match input " + shape_str(x.shape));
  Tensor<Scalar> dx;
  dx.shape = x.shape;
  dx.data.resize(x.data.size());
  switch (kind) {
    case Activation::Relu:
      for (size_t i = 0; i < x.data.size(); ++i)
        dx.data[i] = x.data[i] > Scalar(0) ? dy.data[i] : Scalar(0);
      break;
    case Activation::Sigmoid:
      for (size_t i = 0; i < x.data.size(); ++i) {
        const Scalar s = sigmoid(x.data[i]);
        dx.data[i] = dy.data[i] * s * (Scalar(1) - s);
      }
      break;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dense head.

template <typename Scalar>
Tensor<Scalar> dense(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                     const Tensor<Scalar>& b) {
  require_dim(x, 1, "dense input");
  require_dim(w, 2, "dense weight");
  if (w.shape[1] != x.shape[0])
    throw ShapeError("dense dimension mismatch: input " + shape_str(x.shape) +
                     " vs weight " + shape_str(w.shape));
  require_shape(b, {w.shape[0]}, "dense bias");
  Tensor<Scalar> y({w.shape[0]});
  y.as_vector().noalias() = w.as_matrix(w.shape[0], w.shape[1]) * x.as_vector() + b.as_vector();
  return y;
}

template <typename Scalar>
struct DenseGrads {
  Tensor<Scalar> dx, dw, db;
};

template <typename Scalar>
DenseGrads<Scalar> dense_grad(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                              const Tensor<Scalar>& dy) {
  require_dim(x, 1, "dense_grad input");
  require_dim(w, 2, "dense_grad weight");
  if (w.shape[1] != x.shape[0])
    throw ShapeError("dense_grad dimension mismatch: input " + shape_str(x.shape) +
                     " vs weight " + shape_str(w.shape));
  require_shape(dy, {w.shape[0]}, "dense_grad upstream");
  DenseGrads<Scalar> g;
  g.db = dy;
  g.dw = Tensor<Scalar>(std::vector<Index>(w.shape));
  g.dw.as_matrix(w.shape[0], w.shape[1]).noalias() =
      dy.as_vector() * x.as_vector().transpose();
  g.dx = Tensor<Scalar>({x.shape[0]});
  g.dx.as_vector().noalias() = w.as_matrix(w.shape[0], w.shape[1]).transpose() * dy.as_vector();
  return g;
}

// ---------------------------------------------------------------------------
// Channel concatenation, the MsE skip junction.

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& xs) {
  if (xs.empty()) throw ArgumentError("concat_channels needs at least one input");
  const Index H = xs[0].shape[1], W = xs[0].shape[2];
  Index total = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    require_dim(xs[k], 3, "concat_channels input");
    if (xs[k].shape[1] != H || xs[k].shape[2] != W)
      throw ShapeError("concat_channels spatial mismatch at input " + std::to_string(k) +
                       ": " + shape_str(xs[k].shape) + " vs " + shape_str(xs[0].shape));
    total += xs[k].shape[0];
  }
  Tensor<Scalar> y({total, H, W});
  Index offset = 0;
  for (const auto& x : xs) {
    std::copy(x.data.begin(), x.data.end(), y.data.begin() + offset);
    offset += x.numel();
  }
  return y;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> concat_grad(const Tensor<Scalar>& dy,
                                        const std::vector<Index>& channel_sizes) {
  require_dim(dy, 3, "concat_grad upstream");
  Index total = 0;
  for (Index c : channel_sizes) total += c;
  if (total != dy.shape[0])
    throw ShapeError("concat_grad channel sizes sum to " + std::to_string(total) +
                     " but upstream has " + std::to_string(dy.shape[0]));
  const Index H = dy.shape[1], W = dy.shape[2];
  std::vector<Tensor<Scalar>> parts;
  parts.reserve(channel_sizes.size());
  Index offset = 0;
  for (Index c : channel_sizes) {
    Tensor<Scalar> part({c, H, W});
    std::copy(dy.data.begin() + offset, dy.data.begin() + offset + part.numel(),
              part.data.begin());
    offset += part.numel();
    parts.push_back(std::move(part));
  }
  return parts;
}

}  // namespace msecnn
