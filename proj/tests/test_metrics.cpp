#include <catch2/catch_amalgamated.hpp>

#include "odim/metrics.hpp"
#include "odim/rng.hpp"

using odim::SeededRng;

namespace {

// O(n^2) pair-counting oracle: P(outlier outscores inlier), ties half.
double auc_oracle(std::span<const double> s, std::span<const int> y) {
  double num = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] == 0) continue;
    ++n_pos;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      if (s[i] > s[j]) num += 1.0;
      else if (s[i] == s[j]) num += 0.5;
    }
  }
  for (int v : y) n_neg += (v == 0);
  return num / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Exhaustive threshold-sweep oracle for average precision: recount TP/FP from
// scratch at every distinct threshold.
double ap_oracle(std::span<const double> s, std::span<const int> y) {
  std::vector<double> thresholds(s.begin(), s.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  std::size_t total_pos = 0;
  for (int v : y) total_pos += (v != 0);

  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] != 0 ? tp : fp)++;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

Instance random_instance(SeededRng& rng, std::size_t max_n, bool force_ties) {
  for (;;) {
    Instance inst;
    const std::size_t n = 2 + rng.uniform_index(max_n - 1);
    inst.scores.resize(n);
    inst.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      // small discrete score set makes ties frequent
      inst.scores[i] = force_ties ? static_cast<double>(rng.uniform_index(5)) * 0.25
                                  : rng.uniform();
      inst.labels[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    bool pos = false, neg = false;
    for (int v : inst.labels) (v != 0 ? pos : neg) = true;
    if (pos && neg) return inst;
  }
}

}  // namespace

TEST_CASE("roc_auc hand cases") {
  const double s[] = {0.1, 0.9};
  const int y[] = {0, 1};
  REQUIRE(odim::roc_auc(s, y) == 1.0);

  const double tied[] = {0.4, 0.4, 0.4, 0.4};
  const int y2[] = {0, 1, 0, 1};
  REQUIRE(odim::roc_auc(tied, y2) == 0.5);
}

TEST_CASE("roc_auc matches the pair-counting oracle exactly") {
  SeededRng rng(41);
  for (int rep = 0; rep < 200; ++rep) {
    const auto inst = random_instance(rng, 100, rep % 2 == 0);
    REQUIRE(odim::roc_auc(inst.scores, inst.labels) ==
            auc_oracle(inst.scores, inst.labels));
  }
}

TEST_CASE("average_precision hand cases") {
  // perfect ranking, 2 outliers of 4
  const double s[] = {0.9, 0.8, 0.2, 0.1};
  const int y[] = {1, 1, 0, 0};
  REQUIRE(odim::average_precision(s, y) == 1.0);

  // worst ranking: both outliers last -> (1/3 + 2/4)/2 = 5/12
  const double s2[] = {0.9, 0.8, 0.2, 0.1};
  const int y2[] = {0, 0, 1, 1};
  REQUIRE_THAT(odim::average_precision(s2, y2),
               Catch::Matchers::WithinAbs(5.0 / 12.0, 1e-12));
}

TEST_CASE("average_precision matches the threshold-sweep oracle") {
  SeededRng rng(42);
  for (int rep = 0; rep < 200; ++rep) {
    const auto inst = random_instance(rng, 100, rep % 2 == 0);
    REQUIRE(odim::average_precision(inst.scores, inst.labels) ==
            ap_oracle(inst.scores, inst.labels));
  }
}

TEST_CASE("roc_auc is invariant under strictly increasing transforms") {
  SeededRng rng(43);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = random_instance(rng, 60, true);
    std::vector<double> mapped(inst.scores.size());
    for (std::size_t i = 0; i < mapped.size(); ++i)
      mapped[i] = std::exp(3.0 * inst.scores[i]) + 2.0;
    REQUIRE(odim::roc_auc(inst.scores, inst.labels) ==
            odim::roc_auc(mapped, inst.labels));
  }
}

TEST_CASE("negating tie-free scores flips AUC") {
  SeededRng rng(44);
  for (int rep = 0; rep < 20; ++rep) {
    const auto inst = random_instance(rng, 60, false);
    std::vector<double> neg(inst.scores.size());
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -inst.scores[i];
    REQUIRE_THAT(odim::roc_auc(neg, inst.labels),
                 Catch::Matchers::WithinAbs(1.0 - odim::roc_auc(inst.scores, inst.labels),
                                            1e-12));
  }
}

TEST_CASE("average precision against prevalence") {
  // perfect ranking beats prevalence
  const double s[] = {5, 4, 3, 2, 1, 0};
  const int y[] = {1, 1, 0, 0, 0, 0};
  REQUIRE(odim::average_precision(s, y) >= 2.0 / 6.0);

  // random scores average to prevalence
  SeededRng rng(45);
  const std::size_t n = 40;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < 10 ? 1 : 0;
  double acc = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> scores(n);
    for (auto& v : scores) v = rng.uniform();
    acc += odim::average_precision(scores, labels);
  }
  REQUIRE_THAT(acc / trials, Catch::Matchers::WithinAbs(0.25, 0.02));
}

TEST_CASE("single-class labels are rejected") {
  const double s[] = {0.1, 0.2};
  const int ones[] = {1, 1};
  const int zeros[] = {0, 0};
  REQUIRE_THROWS_AS(odim::roc_auc(s, ones), odim::MetricError);
  REQUIRE_THROWS_AS(odim::average_precision(s, zeros), odim::MetricError);
}
