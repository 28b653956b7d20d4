#include <catch2/catch_amalgamated.hpp>

#include "odim/matrix.hpp"
#include "odim/numeric.hpp"
#include "odim/rng.hpp"

using odim::Matrix;
using odim::SeededRng;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.uniform(-1.0, 1.0);
  return m;
}

// Independent oracle: naive triple loop in j-inner order.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
  const Matrix a(2, 2, {1, 2, 3, 4});
  const Matrix prod = odim::matmul(Matrix::identity(2), a);
  REQUIRE(prod.data == a.data);

  const Matrix row(1, 2, {1, 2});
  const Matrix col(2, 1, {3, 4});
  const Matrix r = odim::matmul(row, col);
  REQUIRE(r.rows == 1);
  REQUIRE(r.cols == 1);
  REQUIRE(r(0, 0) == 11.0);
}

TEST_CASE("matmul matches the naive oracle") {
  SeededRng rng(7);
  const Matrix a = random_matrix(5, 7, rng);
  const Matrix b = random_matrix(7, 3, rng);
  REQUIRE(max_abs_diff(odim::matmul(a, b), naive_matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transposes") {
  SeededRng rng(8);
  const Matrix a = random_matrix(6, 4, rng);
  const Matrix b = random_matrix(5, 4, rng);
  Matrix bt(4, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) bt(j, i) = b(i, j);
  REQUIRE(max_abs_diff(odim::matmul_nt(a, b), naive_matmul(a, bt)) < 1e-12);

  const Matrix c = random_matrix(6, 5, rng);
  Matrix at(4, 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
  REQUIRE(max_abs_diff(odim::matmul_tn(a, c), naive_matmul(at, c)) < 1e-12);
}

TEST_CASE("matmul associativity on random conformable triples") {
  SeededRng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = 1 + rng.uniform_index(6);
    const std::size_t n = 1 + rng.uniform_index(6);
    const std::size_t p = 1 + rng.uniform_index(6);
    const std::size_t q = 1 + rng.uniform_index(6);
    const Matrix a = random_matrix(m, n, rng);
    const Matrix b = random_matrix(n, p, rng);
    const Matrix c = random_matrix(p, q, rng);
    const Matrix lhs = odim::matmul(odim::matmul(a, b), c);
    const Matrix rhs = odim::matmul(a, odim::matmul(b, c));
    for (std::size_t i = 0; i < lhs.data.size(); ++i) {
      const double scale = std::max(1.0, std::abs(rhs.data[i]));
      REQUIRE(std::abs(lhs.data[i] - rhs.data[i]) / scale < 1e-9);
    }
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  const Matrix a(2, 3);
  const Matrix b(2, 3);
  REQUIRE_THROWS_AS(odim::matmul(a, b), odim::ShapeError);
}

TEST_CASE("log_sum_exp hand values") {
  const double v0[] = {0.0};
  REQUIRE(odim::log_sum_exp(v0) == 0.0);

  const double v1[] = {1000.0, 1000.0};
  REQUIRE_THAT(odim::log_sum_exp(v1),
               Catch::Matchers::WithinAbs(1000.0 + std::log(2.0), 1e-12));

  const double v2[] = {1.0, 2.0, 3.0};
  REQUIRE_THAT(odim::log_sum_exp(v2),
               Catch::Matchers::WithinAbs(3.40760596444438, 1e-11));
}

TEST_CASE("log_sum_exp shift identity and bounds") {
  SeededRng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> v(1 + rng.uniform_index(10));
    for (auto& x : v) x = rng.uniform(-20.0, 20.0);
    const double c = rng.uniform(-500.0, 500.0);
    std::vector<double> shifted = v;
    for (auto& x : shifted) x += c;
    REQUIRE_THAT(odim::log_sum_exp(shifted),
                 Catch::Matchers::WithinAbs(odim::log_sum_exp(v) + c, 1e-12 * (1.0 + std::abs(c))));

    const double lse = odim::log_sum_exp(v);
    const double mx = *std::max_element(v.begin(), v.end());
    REQUIRE(lse >= mx);
    REQUIRE(lse <= mx + std::log(static_cast<double>(v.size())) + 1e-15);
  }
}

TEST_CASE("log_sum_exp edge cases") {
  REQUIRE_THROWS_AS(odim::log_sum_exp({}), odim::ArgumentError);

  const double inf = std::numeric_limits<double>::infinity();
  const double v[] = {-inf, 0.0};
  REQUIRE_THAT(odim::log_sum_exp(v), Catch::Matchers::WithinAbs(0.0, 1e-15));
  const double w[] = {-inf, -inf};
  REQUIRE(odim::log_sum_exp(w) == -inf);
}
