// Minimal dense numerical kernel: row-major matrices, softmax / cross-entropy
// primitives and a symmetric eigensolver. Everything operates on doubles and
// plain std::vector storage; dimensions in this library are small enough that
// cache games and BLAS dispatch would be noise.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tacle {

using Vector = std::vector<double>;

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------------------
// DenseMatrix
// ---------------------------------------------------------------------------

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector data;  // row-major, data.size() == rows * cols

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool empty() const { return data.empty(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
};

// y = A x
inline Vector matvec(const DenseMatrix& a, std::span<const double> x) {
  if (x.size() != a.cols) throw std::invalid_argument("matvec: dimension mismatch");
  Vector y(a.rows, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* row = a.data.data() + r * a.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

// y += A^T x  (x has a.rows entries, y has a.cols entries)
inline void matTvec_add(const DenseMatrix& a, std::span<const double> x, Vector& y) {
  if (x.size() != a.rows || y.size() != a.cols) throw std::invalid_argument("matTvec_add: dimension mismatch");
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* row = a.data.data() + r * a.cols;
    for (std::size_t c = 0; c < a.cols; ++c) y[c] += xr * row[c];
  }
}

// A += scale * u v^T
inline void outer_add(DenseMatrix& a, std::span<const double> u, std::span<const double> v, double scale = 1.0) {
  if (u.size() != a.rows || v.size() != a.cols) throw std::invalid_argument("outer_add: dimension mismatch");
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* row = a.data.data() + r * a.cols;
    const double ur = scale * u[r];
    for (std::size_t c = 0; c < a.cols; ++c) row[c] += ur * v[c];
  }
}

inline void axpy(double alpha, std::span<const double> x, Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// ---------------------------------------------------------------------------
// Probabilities
// ---------------------------------------------------------------------------

struct ProbabilityVector {
  Vector values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }

  // Entries in [0,1] and summing to 1 within 1e-9.
  bool is_valid() const {
    if (values.empty()) return false;
    double sum = 0.0;
    for (double v : values) {
      if (!(v >= 0.0 && v <= 1.0)) return false;
      sum += v;
    }
    return std::abs(sum - 1.0) <= 1e-9;
  }
};

// First index attaining the maximum.
inline std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline double logsumexp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("logsumexp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

// Numerically stable softmax (max-subtraction).
inline ProbabilityVector softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  if (!all_finite(logits)) throw std::invalid_argument("softmax: non-finite logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return ProbabilityVector{std::move(out)};
}

inline constexpr double kProbabilityFloor = 1e-12;

// -log p[target], with p clamped away from zero.
inline double cross_entropy(const ProbabilityVector& p, std::size_t target_class) {
  if (target_class >= p.size()) throw std::invalid_argument("cross_entropy: class index out of range");
  return -std::log(std::max(p[target_class], kProbabilityFloor));
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------
// Good to machine precision for the matrix sizes used here (feature
// covariances, d up to a few hundred). Eigenvectors are the columns of V,
// so A = V diag(w) V^T.

struct SymmetricEigen {
  Vector eigenvalues;
  DenseMatrix eigenvectors;
};

inline SymmetricEigen symmetric_eigen(const DenseMatrix& a, int max_sweeps = 64) {
  if (a.rows != a.cols) throw std::invalid_argument("symmetric_eigen: matrix must be square");
  const std::size_t n = a.rows;
  DenseMatrix m = a;
  DenseMatrix v = DenseMatrix::identity(n);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    if (off <= n * n * 1e-30) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0) ? 1.0 / (theta + std::sqrt(theta * theta + 1.0))
                                        : 1.0 / (theta - std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p);
          const double mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k);
          const double mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  Vector w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = m(i, i);
  return SymmetricEigen{std::move(w), std::move(v)};
}

}  // namespace tacle
