#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "dfkd/core/rng.hpp"
#include "dfkd/kernels/kernels.hpp"

using namespace dfkd;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("scalar gemm matches naive triple loop") {
  Rng rng(3);
  const std::size_t m = 5, n = 7, k = 3;
  auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
  std::vector<double> c(m * n, 0.0);
  kernels::scalar_table().gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("every kernel variant is bitwise identical to the scalar reference") {
  const auto& ref = kernels::scalar_table();
  Rng rng(11);
  for (const kernels::KernelTable* t : kernels::available_tables()) {
    CAPTURE(t->name);
    for (std::size_t trial = 0; trial < 40; ++trial) {
      const std::size_t m = 1 + rng.below(9), n = 1 + rng.below(40), k = 1 + rng.below(30);
      const auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
      auto c_ref = random_vec(rng, m * n);
      auto c_var = c_ref;
      ref.gemm(m, n, k, a.data(), k, b.data(), n, c_ref.data(), n);
      t->gemm(m, n, k, a.data(), k, b.data(), n, c_var.data(), n);
      CHECK(bitwise_equal(c_ref, c_var));

      const std::size_t len = 1 + rng.below(67);
      const auto x = random_vec(rng, len), y = random_vec(rng, len);
      const double d_ref = ref.dot(x.data(), y.data(), len);
      const double d_var = t->dot(x.data(), y.data(), len);
      CHECK(std::memcmp(&d_ref, &d_var, sizeof(double)) == 0);

      auto y1 = y, y2 = y;
      ref.axpy(0.37, x.data(), y1.data(), len);
      t->axpy(0.37, x.data(), y2.data(), len);
      CHECK(bitwise_equal(y1, y2));

      std::vector<double> o1(len), o2(len);
      ref.add(x.data(), y.data(), o1.data(), len);
      t->add(x.data(), y.data(), o2.data(), len);
      CHECK(bitwise_equal(o1, o2));
      ref.mul(x.data(), y.data(), o1.data(), len);
      t->mul(x.data(), y.data(), o2.data(), len);
      CHECK(bitwise_equal(o1, o2));

      auto s1 = x, s2 = x;
      ref.scale(-1.7, s1.data(), len);
      t->scale(-1.7, s2.data(), len);
      CHECK(bitwise_equal(s1, s2));
    }
  }
}

TEST_CASE("gemm honours leading dimensions of sub-blocks") {
  for (const kernels::KernelTable* t : kernels::available_tables()) {
    // A is the left 2x2 block of a 2x3 buffer; C is a 2x2 block of a 2x4 buffer.
    const std::vector<double> a{1, 2, 99, 3, 4, 99};
    const std::vector<double> b{5, 6, 7, 8};
    std::vector<double> c{0, 0, -1, -1, 0, 0, -1, -1};
    t->gemm(2, 2, 2, a.data(), 3, b.data(), 2, c.data(), 4);
    CHECK(c == std::vector<double>{19, 22, -1, -1, 43, 50, -1, -1});
  }
}

TEST_CASE("select switches the active table") {
  const std::string before = kernels::active().name;
  CHECK(kernels::select("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_FALSE(kernels::select("sse9"));
  CHECK(kernels::select(before));
}

TEST_CASE("rng streams are reproducible and children differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c0 = Rng(42).child(0), c1 = Rng(42).child(1);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += c0.next_u64() == c1.next_u64();
  CHECK(same == 0);
  Rng pinned(7);
  CHECK(pinned.next_u64() == 12935044349602308024ULL);
  CHECK(pinned.next_u64() == 2376943102249048931ULL);
  double mean = 0.0, sq = 0.0;
  Rng g(5);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = g.normal();
    mean += x;
    sq += x * x;
  }
  mean /= n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}
