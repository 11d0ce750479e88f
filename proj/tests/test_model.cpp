#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"
#include "tacle/model.hpp"

using namespace tacle;
namespace tst = tacle::testing;

namespace {

Model two_class_identity_model() {
  Model m = Model::make(2);
  m.add_head(2);
  m.heads[0].weight = DenseMatrix::identity(2);
  return m;
}

std::vector<WeightedExample> random_batch(Rng& rng, std::size_t n, std::size_t dim, std::size_t classes) {
  std::vector<WeightedExample> batch;
  for (std::size_t i = 0; i < n; ++i) {
    batch.push_back({rng.normal_vector(dim, 0.0, 2.0), rng.index(classes), rng.uniform(0.0, 2.0)});
  }
  return batch;
}

}  // namespace

TEST_CASE("forward basics") {
  SECTION("zero head gives uniform probabilities") {
    Model m = Model::make(3);
    m.add_head(4);
    const auto fwd = forward(m, Vector{0.3, -1.0, 2.0});
    for (double p : fwd.probabilities.values) REQUIRE(p == Catch::Approx(0.25).margin(1e-12));
  }

  SECTION("identity head on [1,0]") {
    const Model m = two_class_identity_model();
    const auto fwd = forward(m, Vector{1.0, 0.0});
    const double e = std::exp(1.0);
    REQUIRE(fwd.probabilities[0] == Catch::Approx(e / (e + 1.0)).margin(1e-12));
    REQUIRE(fwd.probabilities[1] == Catch::Approx(1.0 / (e + 1.0)).margin(1e-12));
  }

  SECTION("two heads concatenate to four logits") {
    Model m = Model::make(3);
    m.add_head(2);
    m.add_head(2);
    const auto fwd = forward(m, Vector{1.0, 2.0, 3.0});
    REQUIRE(fwd.logits.size() == 4);
    REQUIRE(fwd.probabilities.size() == 4);

    // restricting to the second head softmaxes over two classes only
    const auto fwd2 = forward(m, Vector{1.0, 2.0, 3.0}, m.head_range(1));
    REQUIRE(fwd2.logits.size() == 4);
    REQUIRE(fwd2.probabilities.size() == 2);
  }

  SECTION("dimension mismatch throws") {
    Model m = Model::make(3);
    m.add_head(2);
    REQUIRE_THROWS_AS(forward(m, Vector{1.0, 2.0}), std::invalid_argument);
  }

  SECTION("no heads throws") {
    Model m = Model::make(3);
    REQUIRE_THROWS_AS(forward(m, Vector{1.0, 2.0, 3.0}), std::invalid_argument);
  }
}

TEST_CASE("feature map variants") {
  SECTION("identity passes input through") {
    Model m = Model::make(4);
    const Vector x{1.0, -2.0, 0.5, 3.0};
    REQUIRE(m.features(x) == x);
  }

  SECTION("linear_tanh bounds features") {
    Rng rng(1);
    Model m = Model::make(4, FeatureMapKind::linear_tanh, true, 3, &rng);
    const auto h = m.features(Vector{10.0, -10.0, 5.0, 1.0});
    REQUIRE(h.size() == 3);
    for (double v : h) {
      REQUIRE(v <= 1.0);
      REQUIRE(v >= -1.0);
    }
  }
}

TEST_CASE("backward_weighted_ce basics") {
  Model m = two_class_identity_model();

  SECTION("all-zero weights give zero gradients") {
    std::vector<WeightedExample> batch{{Vector{1.0, 2.0}, 0, 0.0}, {Vector{-1.0, 0.5}, 1, 0.0}};
    const auto g = backward_weighted_ce(m, batch, m.all_heads());
    for (double v : g.head_weight[0].data) REQUIRE(v == 0.0);
    for (double v : g.head_bias[0]) REQUIRE(v == 0.0);
  }

  SECTION("gradient is linear in the weight") {
    std::vector<WeightedExample> w1{{Vector{1.0, 2.0}, 0, 1.0}};
    std::vector<WeightedExample> w2{{Vector{1.0, 2.0}, 0, 2.0}};
    const auto g1 = backward_weighted_ce(m, w1, m.all_heads());
    const auto g2 = backward_weighted_ce(m, w2, m.all_heads());
    for (std::size_t i = 0; i < g1.head_weight[0].data.size(); ++i)
      REQUIRE(g2.head_weight[0].data[i] == Catch::Approx(2.0 * g1.head_weight[0].data[i]).margin(1e-15));
  }

  SECTION("empty batch throws") {
    const std::vector<WeightedExample> empty;
    REQUIRE_THROWS_AS(backward_weighted_ce(m, empty, m.all_heads()), std::invalid_argument);
  }

  SECTION("target out of range throws") {
    std::vector<WeightedExample> batch{{Vector{1.0, 2.0}, 5, 1.0}};
    REQUIRE_THROWS_AS(backward_weighted_ce(m, batch, m.all_heads()), std::invalid_argument);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(123);
  int instances = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t dim = 2 + rng.index(5);
    const bool tanh_map = rng.uniform() < 0.5;
    Model m = Model::make(dim, tanh_map ? FeatureMapKind::linear_tanh : FeatureMapKind::linear, true, dim, &rng);
    for (double& v : m.feature_map.bias) v = rng.normal(0.0, 0.2);
    const std::size_t heads = 1 + rng.index(2);
    std::size_t classes = 0;
    for (std::size_t k = 0; k < heads; ++k) {
      const std::size_t nc = 2 + rng.index(2);
      m.add_head(nc);
      for (double& v : m.heads.back().weight.data) v = rng.normal(0.0, 0.7);
      for (double& v : m.heads.back().bias) v = rng.normal(0.0, 0.3);
      classes += nc;
    }
    const HeadRange range = m.all_heads();
    const auto batch = random_batch(rng, 5, dim, classes);

    const auto grads = backward_weighted_ce(m, batch, range);
    const auto flat = tst::flatten_gradients(grads, m, range, true);
    const auto check = tst::finite_difference_check(
        m, range, true, [&] { return weighted_ce_loss(m, batch, range); }, flat);
    INFO("trial " << trial << " max scaled err " << check.max_err);
    REQUIRE(check.ok);
    ++instances;
  }
  REQUIRE(instances == 60);
}

TEST_CASE("gradients flow only into the requested head range") {
  Rng rng(5);
  Model m = Model::make(3);
  m.add_head(2);
  m.add_head(3);
  for (auto& h : m.heads)
    for (double& v : h.weight.data) v = rng.normal();

  std::vector<WeightedExample> batch{{Vector{1.0, 0.0, -1.0}, 1, 1.0}};
  const auto g = backward_weighted_ce(m, batch, m.head_range(1));
  REQUIRE(g.head_weight[0].empty());
  REQUIRE_FALSE(g.head_weight[1].empty());
  REQUIRE(g.feature_weight.empty());
}

TEST_CASE("sgd_step") {
  SECTION("momentum recurrence over two steps") {
    SgdConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    Vector p{1.0}, v{0.0};
    const Vector g{2.0};
    sgd_step(p, g, v, cfg);
    REQUIRE(p[0] == Catch::Approx(1.0 - 0.1 * 2.0).margin(1e-15));
    const double before = p[0];
    sgd_step(p, g, v, cfg);
    REQUIRE(before - p[0] == Catch::Approx(0.1 * 1.9 * 2.0).margin(1e-12));
  }

  SECTION("momentum 0, decay 0 is plain descent") {
    SgdConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    Vector p{3.0}, v{0.0};
    sgd_step(p, Vector{1.0}, v, cfg);
    REQUIRE(p[0] == Catch::Approx(3.0 - 0.05).margin(1e-15));
  }

  SECTION("zero gradient, zero velocity, zero decay is identity") {
    SgdConfig cfg;
    cfg.weight_decay = 0.0;
    Vector p{1.5, -2.5}, v{0.0, 0.0};
    sgd_step(p, Vector{0.0, 0.0}, v, cfg);
    REQUIRE(p == Vector{1.5, -2.5});
  }

  SECTION("lr = 0 is identity on parameters") {
    SgdConfig cfg;
    cfg.learning_rate = 0.0;
    Vector p{1.0, 2.0}, v{0.5, -0.5};
    sgd_step(p, Vector{3.0, 4.0}, v, cfg);
    REQUIRE(p == Vector{1.0, 2.0});
  }

  SECTION("shape mismatch throws") {
    SgdConfig cfg;
    Vector p{1.0}, v{0.0};
    REQUIRE_THROWS_AS(sgd_step(p, Vector{1.0, 2.0}, v, cfg), std::invalid_argument);
  }

  SECTION("weight decay enters the velocity") {
    SgdConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.1;
    Vector p{2.0}, v{0.0};
    sgd_step(p, Vector{0.0}, v, cfg);
    REQUIRE(p[0] == Catch::Approx(2.0 - 0.1 * 2.0).margin(1e-15));
  }
}

TEST_CASE("optimizer applies weight decay to weights but not biases") {
  Model m = Model::make(2);
  m.add_head(2);
  m.heads[0].weight(0, 0) = 1.0;
  m.heads[0].bias[0] = 1.0;

  SgdConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.5;
  SgdOptimizer opt(m, cfg);

  Gradients g;
  g.head_weight.resize(1);
  g.head_bias.resize(1);
  g.head_weight[0] = DenseMatrix(2, 2);
  g.head_bias[0] = Vector(2, 0.0);
  opt.step(m, g);

  REQUIRE(m.heads[0].weight(0, 0) == Catch::Approx(0.5).margin(1e-15));  // decayed
  REQUIRE(m.heads[0].bias[0] == Catch::Approx(1.0).margin(1e-15));       // untouched
}
