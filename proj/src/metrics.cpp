#include "msecnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "msecnn/errors.hpp"

namespace msecnn {

namespace {

void check_binary(const std::vector<int>& labels) {
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0 && labels[i] != 1)
      throw ArgumentError("label at index " + std::to_string(i) + " is " +
                          std::to_string(labels[i]) + ", expected 0 or 1");
}

}  // namespace

std::optional<double> roc_auc(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  check_binary(labels);
  const size_t n = scores.size();
  const size_t n_pos = static_cast<size_t>(std::count(labels.begin(), labels.end(), 1));
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Average ranks within tied score groups give the 1/2 tie credit.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("average_precision: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  check_binary(labels);
  const size_t n = scores.size();
  const size_t n_pos = static_cast<size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0) return std::nullopt;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double sum = 0.0;
  size_t seen_pos = 0;
  for (size_t rank = 1; rank <= n; ++rank) {
    if (labels[order[rank - 1]] == 1) {
      ++seen_pos;
      sum += static_cast<double>(seen_pos) / static_cast<double>(rank);
    }
  }
  return sum / static_cast<double>(n_pos);
}

MacroReport macro_metrics(const EvalMatrix& m) {
  require_dim(m.scores, 2, "macro_metrics scores");
  if (m.labels.shape != m.scores.shape)
    throw ShapeError("macro_metrics: scores " + shape_str(m.scores.shape) + " vs labels " +
                     shape_str(m.labels.shape));
  const Index N = m.scores.shape[0], T = m.scores.shape[1];
  if (N < 1) throw ArgumentError("macro_metrics: empty evaluation set");
  if (static_cast<Index>(m.tag_names.size()) != T)
    throw ShapeError("macro_metrics: " + std::to_string(m.tag_names.size()) +
                     " tag names for " + std::to_string(T) + " columns");

  MacroReport report;
  double roc_sum = 0.0, pr_sum = 0.0;
  Index valid = 0;
  for (Index t = 0; t < T; ++t) {
    std::vector<double> s(static_cast<size_t>(N));
    std::vector<int> y(static_cast<size_t>(N));
    for (Index i = 0; i < N; ++i) {
      s[static_cast<size_t>(i)] = m.scores(i, t);
      const double lab = m.labels(i, t);
      if (lab != 0.0 && lab != 1.0)
        throw ArgumentError("macro_metrics: non-binary label for tag '" + m.tag_names[static_cast<size_t>(t)] + "'");
      y[static_cast<size_t>(i)] = static_cast<int>(lab);
    }
    TagMetrics tm;
    tm.name = m.tag_names[static_cast<size_t>(t)];
    tm.n_pos = static_cast<Index>(std::count(y.begin(), y.end(), 1));
    tm.degenerate = (tm.n_pos == 0 || tm.n_pos == N);
    if (!tm.degenerate) {
      tm.roc = roc_auc(s, y);
      tm.pr = average_precision(s, y);
      roc_sum += *tm.roc;
      pr_sum += *tm.pr;
      ++valid;
    } else {
      report.degenerate_tags.push_back(tm.name);
    }
    report.per_tag.push_back(std::move(tm));
  }
  if (valid == 0)
    throw ArgumentError("macro_metrics: every tag is degenerate (single-class labels)");
  report.macro_roc = roc_sum / static_cast<double>(valid);
  report.macro_pr = pr_sum / static_cast<double>(valid);
  return report;
}

std::string format_tsv(const MacroReport& report) {
  std::ostringstream os;
  os << "# pr_auc is step-wise average precision, not interpolated PR area\n";
  os << "tag\tn_pos\troc_auc\tpr_auc\n";
  os.setf(std::ios::fixed);
  os.precision(6);
  for (const auto& tm : report.per_tag) {
    os << tm.name << '\t' << tm.n_pos << '\t';
    if (tm.roc)
      os << *tm.roc;
    else
      os << "nan";
    os << '\t';
    if (tm.pr && !tm.degenerate)
      os << *tm.pr;
    else
      os << "nan";
    os << '\n';
  }
  os << "MACRO\t-\t" << report.macro_roc << '\t' << report.macro_pr << '\n';
  if (!report.degenerate_tags.empty()) {
    os << "# degenerate tags excluded from macro:";
    for (const auto& name : report.degenerate_tags) os << ' ' << name;
    os << '\n';
  }
  return os.str();
}

}  // namespace msecnn
