// Test-only helpers: independent oracles (central finite differences,
// nearest-centroid classification, closed-form Bayes heads for Gaussian
// clusters), moment estimators for Monte-Carlo checks, and bitwise parameter
// comparison. Nothing here is used by the library itself.

#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "tacle/tacle.hpp"

namespace tacle::testing {

// ---------------------------------------------------------------------------
// Parameter plumbing for gradient checks
// ---------------------------------------------------------------------------

inline std::vector<double*> trainable_parameters(Model& m, HeadRange r, bool include_features) {
  std::vector<double*> params;
  if (include_features && m.feature_map.has_parameters() && m.feature_map.trainable) {
    for (auto& v : m.feature_map.weight.data) params.push_back(&v);
    for (auto& v : m.feature_map.bias) params.push_back(&v);
  }
  for (std::size_t k = r.begin; k < r.end; ++k) {
    for (auto& v : m.heads[k].weight.data) params.push_back(&v);
    for (auto& v : m.heads[k].bias) params.push_back(&v);
  }
  return params;
}

inline std::vector<double> flatten_gradients(const Gradients& g, const Model& m, HeadRange r,
                                             bool include_features) {
  std::vector<double> flat;
  if (include_features && m.feature_map.has_parameters() && m.feature_map.trainable) {
    if (g.feature_weight.empty()) {
      flat.insert(flat.end(), m.feature_map.weight.data.size() + m.feature_map.bias.size(), 0.0);
    } else {
      flat.insert(flat.end(), g.feature_weight.data.begin(), g.feature_weight.data.end());
      flat.insert(flat.end(), g.feature_bias.begin(), g.feature_bias.end());
    }
  }
  for (std::size_t k = r.begin; k < r.end; ++k) {
    flat.insert(flat.end(), g.head_weight[k].data.begin(), g.head_weight[k].data.end());
    flat.insert(flat.end(), g.head_bias[k].begin(), g.head_bias[k].end());
  }
  return flat;
}

// Central finite differences against an arbitrary scalar loss of the model's
// parameters. Passes when |fd - analytic| <= max(rel_tol * scale, abs_floor)
// for every coordinate.
struct GradCheck {
  double max_err = 0.0;     // worst |fd - analytic| / max(scale, floor)
  std::size_t checked = 0;
  bool ok = true;
};

inline GradCheck finite_difference_check(Model& m, HeadRange r, bool include_features,
                                         const std::function<double()>& loss,
                                         const std::vector<double>& analytic, double h = 1e-5,
                                         double rel_tol = 1e-4, double abs_floor = 1e-7) {
  auto params = trainable_parameters(m, r, include_features);
  GradCheck res;
  res.checked = params.size();
  if (params.size() != analytic.size()) {
    res.ok = false;
    return res;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = *params[i];
    *params[i] = orig + h;
    const double up = loss();
    *params[i] = orig - h;
    const double down = loss();
    *params[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
    const double err = std::abs(fd - analytic[i]);
    if (err > std::max(rel_tol * scale, abs_floor)) res.ok = false;
    res.max_err = std::max(res.max_err, err / std::max(scale, abs_floor));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Independent classifiers
// ---------------------------------------------------------------------------

// Nearest-centroid classifier with centroids estimated from labeled samples.
inline double nearest_centroid_accuracy(const std::vector<Sample>& labeled, const std::vector<Sample>& test) {
  std::map<int, std::pair<Vector, int>> sums;
  for (const auto& s : labeled) {
    auto& [sum, n] = sums[s.true_class];
    if (sum.empty()) sum.assign(s.features.size(), 0.0);
    for (std::size_t i = 0; i < s.features.size(); ++i) sum[i] += s.features[i];
    ++n;
  }
  std::map<int, Vector> centroids;
  for (auto& [cls, entry] : sums) {
    Vector c = entry.first;
    for (double& v : c) v /= entry.second;
    centroids[cls] = std::move(c);
  }
  int correct = 0;
  for (const auto& s : test) {
    double best = std::numeric_limits<double>::infinity();
    int best_cls = -1;
    for (const auto& [cls, c] : centroids) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) d2 += (s.features[i] - c[i]) * (s.features[i] - c[i]);
      if (d2 < best) {
        best = d2;
        best_cls = cls;
      }
    }
    if (best_cls == s.true_class) ++correct;
  }
  return test.empty() ? 0.0 : static_cast<double>(correct) / test.size();
}

// Closed-form Bayes-optimal heads for equal-spread isotropic Gaussian
// clusters: logit_k = mu_k.x / s^2 - |mu_k|^2 / (2 s^2). Gives a confident,
// well-calibrated model without any training.
inline Model planted_bayes_model(const TaskStream& stream, std::size_t upto_task) {
  Model m = Model::make(stream.feature_dim);
  std::map<int, const ClassGenerator*> gen;
  for (const auto& g : stream.generators) gen[g.class_id] = &g;
  for (std::size_t t = 0; t < upto_task; ++t) {
    const auto& cls_set = stream.tasks[t].class_set;
    m.add_head(cls_set.size());
    auto& head = m.heads.back();
    for (std::size_t k = 0; k < cls_set.size(); ++k) {
      const ClassGenerator& g = *gen.at(cls_set[k]);
      const double inv_var = 1.0 / (g.stddev * g.stddev);
      double sq = 0.0;
      for (std::size_t i = 0; i < g.mean.size(); ++i) {
        head.weight(k, i) = g.mean[i] * inv_var;
        sq += g.mean[i] * g.mean[i];
      }
      head.bias[k] = -0.5 * sq * inv_var;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Moments, ranks, bitwise comparison
// ---------------------------------------------------------------------------

inline Vector sample_mean(const std::vector<Vector>& draws) {
  Vector mean(draws.front().size(), 0.0);
  for (const auto& d : draws)
    for (std::size_t i = 0; i < d.size(); ++i) mean[i] += d[i];
  for (double& v : mean) v /= static_cast<double>(draws.size());
  return mean;
}

inline DenseMatrix sample_covariance(const std::vector<Vector>& draws) {
  const Vector mean = sample_mean(draws);
  const std::size_t d = mean.size();
  DenseMatrix cov(d, d);
  Vector centered(d);
  for (const auto& x : draws) {
    for (std::size_t i = 0; i < d; ++i) centered[i] = x[i] - mean[i];
    outer_add(cov, centered, centered);
  }
  for (double& v : cov.data) v /= static_cast<double>(draws.size() - 1);
  return cov;
}

inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t pos = 0; pos < idx.size();) {
      std::size_t end = pos;
      while (end + 1 < idx.size() && v[idx[end + 1]] == v[idx[pos]]) ++end;
      const double avg = 0.5 * (pos + end) + 1.0;  // tie-averaged 1-based rank
      for (std::size_t i = pos; i <= end; ++i) r[idx[i]] = avg;
      pos = end + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline bool bits_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  return a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

inline bool model_params_bits_equal(const Model& a, const Model& b) {
  if (a.heads.size() != b.heads.size()) return false;
  if (!bits_equal(a.feature_map.weight.data, b.feature_map.weight.data)) return false;
  if (!bits_equal(a.feature_map.bias, b.feature_map.bias)) return false;
  for (std::size_t k = 0; k < a.heads.size(); ++k) {
    if (!bits_equal(a.heads[k].weight.data, b.heads[k].weight.data)) return false;
    if (!bits_equal(a.heads[k].bias, b.heads[k].bias)) return false;
  }
  return true;
}

}  // namespace tacle::testing
