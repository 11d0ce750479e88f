#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"
#include "tacle/linalg.hpp"
#include "tacle/rng.hpp"

using namespace tacle;

TEST_CASE("softmax basic values") {
  SECTION("symmetric input gives uniform output") {
    const Vector z{0.0, 0.0, 0.0};
    const auto p = softmax(z);
    for (double v : p.values) REQUIRE(v == Catch::Approx(1.0 / 3.0).margin(1e-12));
  }

  SECTION("two-logit case") {
    const Vector z{1.0, 2.0};
    const auto p = softmax(z);
    REQUIRE(p[0] == Catch::Approx(0.26894).margin(1e-5));
    REQUIRE(p[1] == Catch::Approx(0.73106).margin(1e-5));
  }

  SECTION("empty input throws") { REQUIRE_THROWS_AS(softmax(Vector{}), std::invalid_argument); }

  SECTION("large logits stay finite") {
    const auto p = softmax(Vector{1000.0, 999.0});
    REQUIRE(p.is_valid());
    REQUIRE(p[0] > p[1]);
  }
}

TEST_CASE("softmax properties over random vectors") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(64);
    Vector z(n);
    for (double& v : z) v = rng.uniform(-30.0, 30.0);

    const auto p = softmax(z);
    REQUIRE(p.is_valid());

    double sum = 0.0;
    for (double v : p.values) sum += v;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));

    // shift invariance: softmax(z + c) == softmax(z)
    const double c = rng.uniform(-10.0, 10.0);
    Vector shifted = z;
    for (double& v : shifted) v += c;
    const auto ps = softmax(shifted);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(ps[i] == Catch::Approx(p[i]).margin(1e-12));
  }
}

TEST_CASE("cross_entropy") {
  SECTION("one-hot on target is zero") {
    const ProbabilityVector p{{0.0, 1.0, 0.0}};
    REQUIRE(cross_entropy(p, 1) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("uniform over K classes gives ln K") {
    for (std::size_t k : {2u, 5u, 10u}) {
      const ProbabilityVector p{Vector(k, 1.0 / k)};
      REQUIRE(cross_entropy(p, 0) == Catch::Approx(std::log(static_cast<double>(k))).margin(1e-12));
    }
  }

  SECTION("-ln 0.25") {
    const ProbabilityVector p{{0.25, 0.75}};
    REQUIRE(cross_entropy(p, 0) == Catch::Approx(1.38629).margin(1e-5));
  }

  SECTION("out-of-range class throws") {
    const ProbabilityVector p{{0.5, 0.5}};
    REQUIRE_THROWS_AS(cross_entropy(p, 2), std::invalid_argument);
  }

  SECTION("non-negative, zero iff certain") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = softmax(rng.normal_vector(1 + rng.index(8), 0.0, 5.0));
      const std::size_t target = rng.index(p.size());
      const double ce = cross_entropy(p, target);
      REQUIRE(ce >= 0.0);
      if (ce == 0.0) REQUIRE(p[target] == 1.0);
    }
  }
}

TEST_CASE("argmax takes the first maximum on ties") {
  REQUIRE(argmax(Vector{0.5, 0.5}) == 0);
  REQUIRE(argmax(Vector{1.0, 3.0, 3.0, 2.0}) == 1);
}

TEST_CASE("symmetric eigendecomposition reconstructs the matrix") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.index(7);
    // Random PSD matrix A = B B^T
    DenseMatrix b(n, n);
    for (double& v : b.data) v = rng.normal();
    DenseMatrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += b(i, k) * b(j, k);
        a(i, j) = acc;
      }

    const auto eig = symmetric_eigen(a);
    for (double w : eig.eigenvalues) REQUIRE(w >= -1e-9);

    // V diag(w) V^T == A
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += eig.eigenvectors(i, k) * eig.eigenvalues[k] * eig.eigenvectors(j, k);
        REQUIRE(acc == Catch::Approx(a(i, j)).margin(1e-8));
      }
    }
  }
}

TEST_CASE("rng determinism and stream independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng s1 = Rng::derive(0, "labeled");
  Rng s2 = Rng::derive(0, "unlabeled");
  REQUIRE(s1.next_u64() != s2.next_u64());

  Rng t1 = Rng::derive(5, "x", 1);
  Rng t2 = Rng::derive(5, "x", 2);
  REQUIRE(t1.next_u64() != t2.next_u64());
}

TEST_CASE("rng uniform and index ranges") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    REQUIRE(rng.index(7) < 7);
  }
  REQUIRE_THROWS_AS(rng.index(0), std::invalid_argument);
}
