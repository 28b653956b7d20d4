#include <catch2/catch_amalgamated.hpp>

#include "odim/linear_vae.hpp"
#include "odim/rng.hpp"
#include "odim/scaler.hpp"

using odim::Matrix;
using odim::ScalerKind;
using odim::SeededRng;

TEST_CASE("min-max fit on a simple column") {
  const Matrix x(3, 1, {2, 4, 6});
  const auto p = odim::fit_scaler(x, ScalerKind::MinMax);
  REQUIRE(p.a[0] == 2.0);
  REQUIRE(p.b[0] == 6.0);
  REQUIRE(p.constant[0] == 0);

  const Matrix y = odim::transform(x, p);
  REQUIRE(y(0, 0) == 0.0);
  REQUIRE(y(1, 0) == 0.5);
  REQUIRE(y(2, 0) == 1.0);
}

TEST_CASE("constant feature is masked and maps to zero") {
  const Matrix x(3, 1, {5, 5, 5});
  const auto p = odim::fit_scaler(x, ScalerKind::MinMax);
  REQUIRE(p.constant[0] == 1);
  const Matrix y = odim::transform(x, p);
  for (double v : y.data) REQUIRE(v == 0.0);

  const auto ps = odim::fit_scaler(x, ScalerKind::Standardize);
  REQUIRE(ps.constant[0] == 1);
  for (double v : odim::transform(x, ps).data) REQUIRE(v == 0.0);
}

TEST_CASE("standardization uses the population standard deviation") {
  const Matrix x(4, 1, {1, 2, 3, 4});
  const auto p = odim::fit_scaler(x, ScalerKind::Standardize);
  REQUIRE_THAT(p.a[0], Catch::Matchers::WithinAbs(2.5, 1e-15));
  REQUIRE_THAT(p.b[0], Catch::Matchers::WithinAbs(std::sqrt(5.0 / 4.0), 1e-15));
}

TEST_CASE("out-of-range values are clamped to [0,1]") {
  const Matrix train(3, 1, {2, 4, 6});
  const auto p = odim::fit_scaler(train, ScalerKind::MinMax);
  const Matrix probe(2, 1, {8, -1});
  const Matrix y = odim::transform(probe, p);
  REQUIRE(y(0, 0) == 1.0);
  REQUIRE(y(1, 0) == 0.0);
}

TEST_CASE("min-max output is always inside [0,1]") {
  SeededRng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix x(20, 4);
    for (auto& v : x.data) v = rng.uniform(-100.0, 100.0);
    const auto p = odim::fit_scaler(x, ScalerKind::MinMax);
    Matrix probe(30, 4);
    for (auto& v : probe.data) v = rng.uniform(-200.0, 200.0);
    for (double v : odim::transform(probe, p).data) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
}

TEST_CASE("transform then inverse recovers in-range data") {
  SeededRng rng(32);
  for (auto kind : {ScalerKind::MinMax, ScalerKind::Standardize}) {
    Matrix x(50, 3);
    for (auto& v : x.data) v = rng.uniform(-5.0, 5.0);
    const auto p = odim::fit_scaler(x, kind);
    const Matrix back = odim::inverse_transform(odim::transform(x, p), p);
    for (std::size_t i = 0; i < x.data.size(); ++i)
      REQUIRE_THAT(back.data[i], Catch::Matchers::WithinAbs(x.data[i], 1e-9));
  }
}

TEST_CASE("transform rejects column mismatch") {
  const Matrix x(3, 2, {1, 2, 3, 4, 5, 6});
  const auto p = odim::fit_scaler(x, ScalerKind::MinMax);
  const Matrix bad(2, 3);
  REQUIRE_THROWS_AS(odim::transform(bad, p), odim::ShapeError);
}

// Wrapping-support mixture: min-max keeps the mean l1-norms of the two groups
// equal, standardization pushes the outliers' above the inliers'.
TEST_CASE("scaling norm-gap behaviour on a wrapping mixture") {
  SeededRng rng(33);
  const auto res = odim::prop2_norm_experiment(6, 20000, rng);

  const double mean_norm = 0.5 * (res.minmax_inlier_mean + res.minmax_outlier_mean);
  REQUIRE(std::abs(res.minmax_gap) < 0.02 * mean_norm);
  REQUIRE(res.standardize_gap > 5.0 * res.standardize_gap_se);
}
