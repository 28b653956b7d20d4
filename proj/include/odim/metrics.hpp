#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "odim/error.hpp"

namespace odim {

namespace detail {
inline void check_two_classes(std::span<const int> labels) {
  bool pos = false, neg = false;
  for (int y : labels) (y != 0 ? pos : neg) = true;
  if (!pos || !neg) throw MetricError("metric undefined: single-class labels");
}
}  // namespace detail

// Probability that a random positive (label 1, outlier) outscores a random
// negative; ties count one half. Mann-Whitney via midranks.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("roc_auc: scores/labels length mismatch");
  detail::check_two_classes(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  const double u = pos_rank_sum -
                   static_cast<double>(n_pos) * static_cast<double>(n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Area under the precision-recall curve as the step sum
// sum_k (R_k - R_{k-1}) P_k over descending score thresholds, tied scores
// grouped at one threshold.
inline double average_precision(std::span<const double> scores,
                                std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ShapeError("average_precision: scores/labels length mismatch");
  detail::check_two_classes(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t total_pos = 0;
  for (int y : labels) total_pos += (y != 0);

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) (labels[order[k]] != 0 ? tp : fp)++;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

}  // namespace odim
