#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "stepfuse/losses.hpp"

using Catch::Approx;
using namespace stepfuse;

namespace {

LossConfig make_config(double eps, double gamma, LossForm form) {
  LossConfig cfg;
  cfg.epsilon = eps;
  cfg.gamma = gamma;
  cfg.form = form;
  return cfg;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("smooth_labels places 1-eps on the target", "[losses][labels]") {
  const auto a = smooth_labels(0, 3, 0.06);
  REQUIRE(a[0] == Approx(0.94).margin(1e-15));
  REQUIRE(a[1] == Approx(0.03).margin(1e-15));
  REQUIRE(a[2] == Approx(0.03).margin(1e-15));

  REQUIRE(smooth_labels(1, 4, 0.0) == std::vector<double>{0, 1, 0, 0});
  REQUIRE(smooth_labels(2, 5, 0.5) == std::vector<double>{0.125, 0.125, 0.5, 0.125, 0.125});
}

TEST_CASE("smooth_labels sums to one", "[losses][labels]") {
  for (std::size_t C : {2u, 3u, 7u, 44u}) {
    for (double eps : {0.0, 0.06, 0.3, 0.99}) {
      const auto y = smooth_labels(C - 1, C, eps);
      REQUIRE(std::abs(std::accumulate(y.begin(), y.end(), 0.0) - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("smooth_labels rejects bad arguments", "[losses][labels]") {
  REQUIRE_THROWS_AS(smooth_labels(3, 3, 0.1), IndexError);
  REQUIRE_THROWS_AS(smooth_labels(0, 1, 0.1), InvalidInput);
  REQUIRE_THROWS_AS(smooth_labels(0, 3, 1.0), InvalidInput);
}

TEST_CASE("loss_value reference cases", "[losses][value]") {
  const std::vector<double> p{0.5, 0.25, 0.25};
  // -ln 0.5 - 2 ln 0.75
  REQUIRE(loss_value(p, 0, make_config(0, 0, LossForm::per_class_sum)) == Approx(1.268511).margin(1e-5));
  REQUIRE(loss_value(p, 0, make_config(0, 0, LossForm::target_only)) == Approx(0.693147).margin(1e-6));
  // Term-by-term, values cross-checked with mpmath.
  REQUIRE(loss_value(p, 0, make_config(0.06, 0, LossForm::per_class_sum)) == Approx(0.668819).margin(1e-5));
  REQUIRE(loss_value(p, 0, make_config(0.06, 0.3, LossForm::per_class_sum)) == Approx(0.540618).margin(1e-5));
}

TEST_CASE("loss_value matches the scalar oracles", "[losses][value]") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = 2 + rng.below(10);
    std::vector<double> logits(C);
    for (double& v : logits) v = 2.0 * rng.gaussian();
    const auto p = softmax(logits);
    const std::size_t c = rng.below(C);
    for (double eps : {0.06, 0.3}) {
      for (double gamma : {0.0, 0.3, 2.0}) {
        const double expected = oracle::focal_smoothed(p, c, eps, gamma);
        REQUIRE(loss_value(p, c, make_config(eps, gamma, LossForm::per_class_sum)) ==
                Approx(expected).epsilon(1e-12));
        REQUIRE(loss_value(p, c, make_config(eps, gamma, LossForm::target_only)) ==
                Approx(oracle::focal_smoothed(p, c, eps, gamma, false)).epsilon(1e-12));
      }
    }
    REQUIRE(loss_value(p, c, make_config(0, 0, LossForm::per_class_sum)) ==
            Approx(oracle::plain_per_class(p, c)).epsilon(1e-12));
  }
}

TEST_CASE("loss_value is non-negative and finite at the boundary", "[losses][value]") {
  const std::vector<double> certain{1.0, 0.0, 0.0};
  for (double eps : {0.0, 0.06}) {
    for (double gamma : {0.0, 0.3, 2.0}) {
      for (auto form : {LossForm::per_class_sum, LossForm::target_only}) {
        const auto cfg = make_config(eps, gamma, form);
        const double right = loss_value(certain, 0, cfg);
        const double wrong = loss_value(certain, 1, cfg);
        REQUIRE(std::isfinite(right));
        REQUIRE(std::isfinite(wrong));
        REQUIRE(right >= 0.0);
        REQUIRE(wrong > 0.0);
      }
    }
  }
}

TEST_CASE("focal damping never increases the target term", "[losses][value]") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(5);
    for (double& v : logits) v = 2.0 * rng.gaussian();
    const auto p = softmax(logits);
    double previous = std::numeric_limits<double>::infinity();
    for (double gamma : {0.0, 0.1, 0.3, 1.0, 2.0, 5.0}) {
      const double term = loss_value(p, 2, make_config(0.06, gamma, LossForm::target_only));
      REQUIRE(term <= previous);
      previous = term;
    }
  }
}

TEST_CASE("loss_value rejects invalid input", "[losses][value]") {
  const std::vector<double> not_normalized{0.5, 0.6};
  const std::vector<double> p{0.5, 0.5};
  REQUIRE_THROWS_AS(loss_value(not_normalized, 0, LossConfig{}), InvalidInput);
  REQUIRE_THROWS_AS(loss_value(p, 2, LossConfig{}), IndexError);
  REQUIRE_THROWS_AS(loss_value(p, 0, make_config(1.2, 0, LossForm::per_class_sum)), InvalidInput);
  REQUIRE_THROWS_AS(loss_value(p, 0, make_config(0.1, -1, LossForm::per_class_sum)), InvalidInput);
  LossConfig bad_floor;
  bad_floor.clamp_floor = 0.0;
  REQUIRE_THROWS_AS(loss_value(p, 0, bad_floor), InvalidInput);
}

TEST_CASE("loss_grad of plain cross-entropy is p - onehot", "[losses][grad]") {
  const std::vector<double> logits{0.0, 0.0, 0.0};
  const auto g = loss_grad(logits, 0, LossConfig::cross_entropy());
  REQUIRE(g[0] == Approx(-2.0 / 3.0).margin(1e-15));
  REQUIRE(g[1] == Approx(1.0 / 3.0).margin(1e-15));
  REQUIRE(g[2] == Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("loss_grad vanishes at a confident correct prediction", "[losses][grad]") {
  double previous = 1.0;
  for (double margin : {2.0, 5.0, 10.0, 20.0, 40.0}) {
    const std::vector<double> logits{margin, 0.0, 0.0};
    const double norm = max_abs(loss_grad(logits, 0, LossConfig::cross_entropy()));
    REQUIRE(norm < previous);
    previous = norm;
  }
  REQUIRE(previous < 1e-15);
}

TEST_CASE("loss_grad matches central finite differences", "[losses][grad]") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 2 + rng.below(8);
    std::vector<double> logits(C);
    for (double& v : logits) v = 1.5 * rng.gaussian();
    const std::size_t c = rng.below(C);
    const double eps = std::vector<double>{0.0, 0.06, 0.3}[rng.below(3)];
    const double gamma = std::vector<double>{0.0, 0.3, 2.0}[rng.below(3)];
    const auto form = rng.below(2) ? LossForm::per_class_sum : LossForm::target_only;
    const auto cfg = make_config(eps, gamma, form);

    const auto analytic = loss_grad(logits, c, cfg);
    const auto numeric = oracle::finite_difference(
        [&](const std::vector<double>& z) { return loss_value(oracle::softmax_long(z), c, cfg); }, logits);
    double diff = 0.0;
    for (std::size_t j = 0; j < C; ++j) diff = std::max(diff, std::abs(analytic[j] - numeric[j]));
    INFO("trial " << trial << " eps " << eps << " gamma " << gamma);
    REQUIRE(diff / std::max(max_abs(numeric), 1e-8) <= 1e-6);
  }
}

TEST_CASE("mean_loss averages per-sample losses", "[losses][batch]") {
  const DenseMatrix probs(2, 2, std::vector<double>{0.5, 0.5, 0.25, 0.75});
  const std::vector<std::size_t> labels{0, 1};
  const auto cfg = LossConfig::cross_entropy();
  REQUIRE(mean_loss(probs, labels, cfg) == Approx((std::log(2.0) - std::log(0.75)) / 2.0));
  REQUIRE_THROWS_AS(mean_loss(probs, std::vector<std::size_t>{0}, cfg), InvalidInput);
}
