#pragma once

// Reference implementations used to cross-check the library. These stay
// deliberately naive (direct loops, O(N^2) scans) and share no code with the
// implementations under test.

#include <algorithm>
#include <complex>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "msecnn/rng.hpp"
#include "msecnn/tensor.hpp"

namespace testsupport {

using msecnn::Index;
using msecnn::Tensor;

// 3x3 convolution, stride 1, zero padding 1, as four explicit loops.
template <typename Scalar>
Tensor<Scalar> naive_conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w,
                            const Tensor<Scalar>& b) {
  const Index c_in = x.shape[0], h = x.shape[1], wd = x.shape[2];
  const Index c_out = w.shape[0];
  Tensor<Scalar> y = Tensor<Scalar>::zeros({c_out, h, wd});
  for (Index o = 0; o < c_out; ++o)
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < wd; ++j) {
        Scalar acc = b[o];
        for (Index c = 0; c < c_in; ++c)
          for (Index u = 0; u < 3; ++u)
            for (Index v = 0; v < 3; ++v) {
              const Index ii = i + u - 1, jj = j + v - 1;
              if (ii < 0 || ii >= h || jj < 0 || jj >= wd) continue;
              acc += x(c, ii, jj) * w(o, c, u, v);
            }
        y(o, i, j) = acc;
      }
  return y;
}

// Direct O(N^2) discrete Fourier transform.
inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (size_t t = 0; t < n; ++t) {
      const double angle = -2.0 * M_PI * static_cast<double>(k * t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

// ROC-AUC by scanning every positive/negative pair; ties count one half.
inline std::optional<double> pairwise_roc_auc(const std::vector<double>& scores,
                                              const std::vector<int>& labels) {
  double wins = 0.0;
  long long pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / static_cast<double>(pairs);
}

// Average precision as the mean of precision at each positive, walking the
// ranking one element at a time (original order breaks score ties).
inline std::optional<double> rank_walk_average_precision(const std::vector<double>& scores,
                                                         const std::vector<int>& labels) {
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  long long seen_pos = 0;
  double sum = 0.0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      ++seen_pos;
      sum += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
    }
  }
  if (seen_pos == 0) return std::nullopt;
  return sum / static_cast<double>(seen_pos);
}

// Central-difference gradient of `loss` with respect to one tensor entry.
template <typename Loss, typename Scalar>
double central_diff(Loss&& loss, Tensor<Scalar>& t, Index flat, double eps = 1e-5) {
  const Scalar saved = t[flat];
  t[flat] = saved + static_cast<Scalar>(eps);
  const double up = loss();
  t[flat] = saved - static_cast<Scalar>(eps);
  const double down = loss();
  t[flat] = saved;
  return (up - down) / (2.0 * eps);
}

template <typename Scalar>
Tensor<Scalar> random_tensor(std::vector<Index> shape, msecnn::Xoshiro256pp& rng, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<Scalar> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<Scalar>(rng.uniform(lo, hi));
  return t;
}

// Values drawn on a jittered grid so pooling windows never see exact ties.
template <typename Scalar>
Tensor<Scalar> distinct_tensor(std::vector<Index> shape, msecnn::Xoshiro256pp& rng) {
  Tensor<Scalar> t(std::move(shape));
  std::vector<Index> order(static_cast<size_t>(t.numel()));
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  rng.shuffle(order.begin(), order.end());
  for (size_t i = 0; i < order.size(); ++i)
    t[order[i]] = static_cast<Scalar>(-1.0 + 2.0 * static_cast<double>(i) /
                                                 static_cast<double>(order.size()) +
                                      rng.uniform(0.0, 0.4 / static_cast<double>(order.size())));
  return t;
}

class TempDir {
 public:
  explicit TempDir(const std::string& hint) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (hint + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testsupport
