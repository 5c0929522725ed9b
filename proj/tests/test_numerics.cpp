#include <cfloat>
#include <cmath>
#include <set>

#include "doctest.h"
#include "falldef/error.hpp"
#include "falldef/numerics.hpp"
#include "oracles.hpp"

using namespace falldef;

TEST_SUITE("matmul") {
  TEST_CASE("identity times M is M") {
    Matrix m{{1, 2}, {3, 4}, {5, 6}};
    CHECK(matmul(Matrix::identity(3), m) == m);
  }

  TEST_CASE("zeros annihilate") {
    Matrix m{{1, 2}, {3, 4}, {5, 6}};
    CHECK(matmul(Matrix::zeros(2, 3), m) == Matrix::zeros(2, 2));
  }

  TEST_CASE("random products agree with a triple loop") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t r = 1 + rng.below(7), k = 1 + rng.below(7), c = 1 + rng.below(7);
      Matrix a = oracle::random_window(rng, r, k), b = oracle::random_window(rng, k, c);
      Matrix got = matmul(a, b), want = oracle::naive_matmul(a, b);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) CHECK(std::abs(got(i, j) - want(i, j)) <= 1e-12);
    }
    Matrix a = oracle::random_window(rng, 4, 5), b = oracle::random_window(rng, 5, 3);
    Matrix got = matmul(a, b), want = oracle::naive_matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(got(i, j) - want(i, j)) <= 1e-12);
  }

  TEST_CASE("shape mismatch names both shapes") {
    try {
      matmul(Matrix(2, 3), Matrix(4, 2));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DimensionMismatch);
      const std::string msg = e.what();
      CHECK(msg.find("2x3") != std::string::npos);
      CHECK(msg.find("4x2") != std::string::npos);
    }
  }

  TEST_CASE("matvec matches matmul with a column") {
    Rng rng(3);
    Matrix a = oracle::random_window(rng, 5, 4);
    Vector x{0.5, -1.0, 2.0, 0.25};
    Matrix col(4, 1);
    for (std::size_t i = 0; i < 4; ++i) col(i, 0) = x[i];
    Vector y = matvec(a, x);
    Matrix want = oracle::naive_matmul(a, col);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(y[i] - want(i, 0)) <= 1e-12);
    CHECK_THROWS_AS(matvec(a, Vector(3)), Error);
  }

  TEST_CASE("gemm transposes and accumulates") {
    Rng rng(5);
    Matrix a = oracle::random_window(rng, 3, 4), b = oracle::random_window(rng, 3, 2);
    Matrix c(4, 2, 1.0);
    gemm(2.0, a.view(), Trans::Yes, b.view(), Trans::No, 0.5, c.view());
    Matrix at(4, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) at(j, i) = a(i, j);
    Matrix want = oracle::naive_matmul(at, b);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(c(i, j) - (2.0 * want(i, j) + 0.5)) <= 1e-12);
  }
}

TEST_SUITE("activations") {
  TEST_CASE("sigmoid") {
    CHECK(sigmoid(Vector{0.0})[0] == 0.5);
    for (double x : {0.1, 1.0, 3.7, 12.0, 30.0}) {
      CHECK(std::abs(sigmoid(x) + sigmoid(-x) - 1.0) <= 1e-15);
    }
    const double tiny = sigmoid(-800.0);
    CHECK(tiny > 0.0);
    CHECK(tiny <= 1e-300);
    CHECK(std::isfinite(tiny));
    CHECK(sigmoid(800.0) < 1.0);
  }

  TEST_CASE("sigmoid stays strictly inside (0, 1)") {
    Rng rng(9);
    for (int i = 0; i < 2000; ++i) {
      const double x = rng.uniform(-1000.0, 1000.0);
      const double s = sigmoid(x);
      CHECK(s > 0.0);
      CHECK(s < 1.0);
    }
  }

  TEST_CASE("tanh") {
    CHECK(tanh_act(Vector{0.0})[0] == 0.0);
    for (double x : {0.3, 1.5, 7.0}) CHECK(std::abs(tanh_act(x) + tanh_act(-x)) <= 1e-15);
    const double t20 = tanh_act(20.0);
    CHECK(std::isfinite(t20));
    CHECK(t20 < 1.0);
    CHECK(1.0 - t20 < 1e-15);
  }

  TEST_CASE("softmax") {
    Vector u = softmax(Vector{0.0, 0.0});
    CHECK(u[0] == 0.5);
    CHECK(u[1] == 0.5);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
      const double a = rng.uniform(-5, 5), b = rng.uniform(-5, 5), c = rng.uniform(-100, 100);
      Vector p = softmax(Vector{a, b}), q = softmax(Vector{c + a, c + b});
      CHECK(std::abs(p[0] - q[0]) <= 1e-12);
      CHECK(std::abs(p[1] - q[1]) <= 1e-12);
      CHECK(std::abs(p[0] + p[1] - 1.0) <= 1e-12);
    }
    Vector big = softmax(Vector{1000.0, 0.0});
    CHECK(std::isfinite(big[0]));
    CHECK(std::isfinite(big[1]));
    CHECK(big[0] > 1.0 - 1e-15);
    CHECK(big[0] < 1.0);
    CHECK(big[1] > 0.0);
    CHECK(big[1] < 1e-300);
    CHECK_THROWS_AS(softmax(Vector{}), Error);
  }

  TEST_CASE("softmax_rows matches softmax per row") {
    Matrix m{{1.0, 2.0}, {-3.0, 0.5}, {700.0, -700.0}};
    Matrix copy = m;
    softmax_rows(copy.view());
    for (std::size_t r = 0; r < 3; ++r) {
      Vector want = softmax(Vector{m(r, 0), m(r, 1)});
      CHECK(copy(r, 0) == want[0]);
      CHECK(copy(r, 1) == want[1]);
    }
  }
}

TEST_SUITE("cross_entropy") {
  TEST_CASE("examples") {
    CHECK(cross_entropy(Vector{1.0, 0.0}, 0) == 0.0);
    CHECK(std::abs(cross_entropy(Vector{0.5, 0.5}, 1) - std::log(2.0)) <= 1e-12);
    const double clamped = cross_entropy(Vector{0.0, 1.0}, 0);
    CHECK(std::isfinite(clamped));
    CHECK(clamped == doctest::Approx(-std::log(1e-12)).epsilon(1e-15));
  }

  TEST_CASE("target out of range") {
    CHECK_THROWS_AS(cross_entropy(Vector{0.5, 0.5}, 2), Error);
  }
}

TEST_SUITE("rng") {
  TEST_CASE("glorot is seeded and bounded") {
    Rng a(77), b(77), c(78);
    Matrix ma = glorot_uniform(a, 6, 4), mb = glorot_uniform(b, 6, 4), mc = glorot_uniform(c, 6, 4);
    CHECK(ma == mb);
    CHECK_FALSE(ma == mc);
    const double limit = std::sqrt(6.0 / 10.0);
    for (double v : ma.values()) CHECK(std::abs(v) <= limit);
  }

  TEST_CASE("engine sequence is the standard mt19937_64") {
    // The standard fixes the 10000th output for the default seed.
    Rng r(5489u);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = r.next_u64();
    CHECK(v == 9981545732273789042ull);
  }

  TEST_CASE("below is in range and reaches every value") {
    Rng r(11);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
      const auto v = r.below(7);
      CHECK(v < 7);
      seen.insert(v);
    }
    CHECK(seen.size() == 7);
    CHECK_THROWS_AS(r.below(0), Error);
  }

  TEST_CASE("uniform and normal moments") {
    Rng r(2024);
    double su = 0, sn = 0, sn2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      su += u;
      const double g = r.normal();
      sn += g;
      sn2 += g * g;
    }
    CHECK(std::abs(su / n - 0.5) < 0.005);
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(std::abs(sn2 / n - 1.0) < 0.02);
  }

  TEST_CASE("shuffle is a seeded permutation") {
    std::vector<int> a(50), b(50);
    for (int i = 0; i < 50; ++i) a[i] = b[i] = i;
    Rng r1(3), r2(3);
    r1.shuffle(std::span<int>(a));
    r2.shuffle(std::span<int>(b));
    CHECK(a == b);
    std::set<int> s(a.begin(), a.end());
    CHECK(s.size() == 50);
  }

  TEST_CASE("mix_seed separates streams") {
    CHECK(mix_seed(1, 1) != mix_seed(1, 2));
    CHECK(mix_seed(1, 1) != mix_seed(2, 1));
    CHECK(mix_seed(9, 4) == mix_seed(9, 4));
  }
}
