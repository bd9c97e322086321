#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msecnn/tensor.hpp"

namespace msecnn {

/// Probability that a random positive is scored above a random negative,
/// ties counted 1/2 (Mann-Whitney via average ranks).
/// Empty result marks a degenerate input (needs one of each class).
std::optional<double> roc_auc(const std::vector<double>& scores,
                              const std::vector<int>& labels);

/// Step-wise average precision: mean of precision at each positive's rank,
/// descending scores, ties broken by original index (stable order).
/// Empty result marks a degenerate input (needs at least one positive).
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& labels);

struct EvalMatrix {
  Tensor<double> scores;  // [N, T]
  Tensor<double> labels;  // [N, T], binary
  std::vector<std::string> tag_names;
};

struct TagMetrics {
  std::string name;
  Index n_pos = 0;
  std::optional<double> roc;
  std::optional<double> pr;
  bool degenerate = false;
};

struct MacroReport {
  std::vector<TagMetrics> per_tag;
  double macro_roc = 0.0;
  double macro_pr = 0.0;
  std::vector<std::string> degenerate_tags;
};

/// Per-tag metrics plus unweighted means over the non-degenerate tags.
/// A tag is degenerate when its labels are single-class (all 0 or all 1);
/// such tags are listed by name and excluded from both macro means.
MacroReport macro_metrics(const EvalMatrix& m);

/// TSV: `tag n_pos roc_auc pr_auc` rows, then a MACRO row; the header comment
/// names the PR-AUC estimator since step-wise AP and interpolated PR differ.
std::string format_tsv(const MacroReport& report);

}  // namespace msecnn
