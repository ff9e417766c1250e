#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "stepfuse/ensemble.hpp"

using Catch::Approx;
using namespace stepfuse;

namespace {

PredictionMatrix random_probs(Rng& rng, std::size_t n, std::size_t C) {
  PredictionMatrix m{DenseMatrix(n, C, 0.0), ScoreType::prob};
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> logits(C);
    for (double& v : logits) v = 2.0 * rng.gaussian();
    const auto p = softmax(logits);
    std::copy(p.begin(), p.end(), m.values.row(r).begin());
  }
  return m;
}

}  // namespace

TEST_CASE("fuse hand-computed weighted mean", "[ensemble][fuse]") {
  const std::vector<PredictionMatrix> members{
      {DenseMatrix(1, 2, std::vector<double>{0.6, 0.4}), ScoreType::prob},
      {DenseMatrix(1, 2, std::vector<double>{0.2, 0.8}), ScoreType::prob}};
  const std::vector<double> weights{0.5, 0.5};
  const auto fused = fuse(members, weights);
  REQUIRE(fused.values(0, 0) == Approx(0.4).margin(1e-15));
  REQUIRE(fused.values(0, 1) == Approx(0.6).margin(1e-15));
}

TEST_CASE("fuse is exact on unit weights and identical members", "[ensemble][fuse]") {
  Rng rng(17);
  std::vector<PredictionMatrix> members;
  for (int k = 0; k < 4; ++k) members.push_back(random_probs(rng, 30, 6));
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> unit(4, 0.0);
    unit[k] = 1.0;
    REQUIRE(fuse(members, unit).values == members[k].values);
  }
  const std::vector<PredictionMatrix> same(4, members[2]);
  for (const auto& w : {std::vector<double>{0.1, 0.4, 0.25, 0.25}, std::vector<double>{0.3, 0.3, 0.3, 0.1}}) {
    REQUIRE(fuse(same, w).values == members[2].values);
  }
}

TEST_CASE("fused rows stay distributions", "[ensemble][fuse]") {
  Rng rng(3);
  std::vector<PredictionMatrix> members;
  for (int k = 0; k < 4; ++k) members.push_back(random_probs(rng, 50, 44));
  const std::vector<double> weights{0.1, 0.4, 0.25, 0.25};
  const auto fused = fuse(members, weights);
  for (std::size_t r = 0; r < fused.rows(); ++r) {
    const auto row = fused.values.row(r);
    REQUIRE(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-9);
    for (double v : row) REQUIRE((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("fuse is permutation equivariant", "[ensemble][fuse]") {
  Rng rng(4);
  std::vector<PredictionMatrix> members;
  for (int k = 0; k < 3; ++k) members.push_back(random_probs(rng, 20, 5));
  const std::vector<double> weights{0.2, 0.5, 0.3};
  const std::vector<PredictionMatrix> permuted{members[2], members[0], members[1]};
  const std::vector<double> permuted_weights{0.3, 0.2, 0.5};
  const auto a = fuse(members, weights);
  const auto b = fuse(permuted, permuted_weights);
  for (std::size_t i = 0; i < a.values.data().size(); ++i) {
    REQUIRE(a.values.data()[i] == Approx(b.values.data()[i]).margin(1e-15));
  }
}

TEST_CASE("fuse converts logits through softmax", "[ensemble][fuse]") {
  const PredictionMatrix logits{DenseMatrix(1, 2, std::vector<double>{0.0, 0.0}), ScoreType::logit};
  const PredictionMatrix probs{DenseMatrix(1, 2, std::vector<double>{1.0, 0.0}), ScoreType::prob};
  const std::vector<PredictionMatrix> members{logits, probs};
  const std::vector<double> weights{0.5, 0.5};
  const auto fused = fuse(members, weights);
  REQUIRE(fused.score_type == ScoreType::prob);
  REQUIRE(fused.values(0, 0) == Approx(0.75));
}

TEST_CASE("fuse validates shapes and weights", "[ensemble][fuse]") {
  Rng rng(1);
  const std::vector<PredictionMatrix> mismatched{random_probs(rng, 3, 4), random_probs(rng, 4, 4)};
  REQUIRE_THROWS_AS(fuse(mismatched, std::vector<double>{0.5, 0.5}), InvalidInput);
  const std::vector<PredictionMatrix> members{random_probs(rng, 3, 4), random_probs(rng, 3, 4)};
  REQUIRE_THROWS_AS(fuse(members, std::vector<double>{0.6, 0.6}), InvalidInput);
  REQUIRE_THROWS_AS(fuse(members, std::vector<double>{1.2, -0.2}), InvalidInput);
  REQUIRE_THROWS_AS(fuse(members, std::vector<double>{1.0}), InvalidInput);
  REQUIRE_NOTHROW(fuse(members, std::vector<double>{0.5 + 5e-10, 0.5}));
}

TEST_CASE("sweep picks the dominant member", "[ensemble][sweep]") {
  // The good member is right by a small margin, the bad one confidently
  // wrong, so any mixture with weight < 10/11 on the good member fails.
  const std::vector<std::size_t> labels{0, 1, 0, 1};
  const PredictionMatrix good{
      DenseMatrix(4, 2, std::vector<double>{0.55, 0.45, 0.45, 0.55, 0.55, 0.45, 0.45, 0.55}), ScoreType::prob};
  const PredictionMatrix bad{DenseMatrix(4, 2, std::vector<double>{0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0}),
                             ScoreType::prob};
  const std::vector<PredictionMatrix> members{good, bad};
  const auto best = sweep_weights(members, labels, 10, Objective::top1);
  REQUIRE(best.weights == std::vector<double>{1.0, 0.0});
  REQUIRE(best.score == 1.0);
}

TEST_CASE("sweep result dominates every member and is reproducible", "[ensemble][sweep]") {
  Rng rng(77);
  std::vector<PredictionMatrix> members;
  for (int k = 0; k < 3; ++k) members.push_back(random_probs(rng, 40, 4));
  std::vector<std::size_t> labels(40);
  for (auto& y : labels) y = rng.below(4);
  for (auto objective : {Objective::top1, Objective::top5, Objective::mca, Objective::map, Objective::mauc}) {
    const auto best = sweep_weights(members, labels, 6, objective);
    for (const auto& m : members) REQUIRE(best.score >= evaluate(objective, m, labels));
    const auto again = sweep_weights(members, labels, 6, objective);
    REQUIRE(again.weights == best.weights);
    REQUIRE(again.score == best.score);
  }
}

TEST_CASE("sweep ties go to the lexicographically smallest weights", "[ensemble][sweep]") {
  Rng rng(5);
  const auto m = random_probs(rng, 10, 3);
  std::vector<std::size_t> labels(10, 0);
  labels[1] = 1;
  const std::vector<PredictionMatrix> members{m, m, m};
  const auto best = sweep_weights(members, labels, 4, Objective::top1);
  REQUIRE(best.weights == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("sweep enforces its size guards", "[ensemble][sweep]") {
  Rng rng(6);
  std::vector<PredictionMatrix> members(5, random_probs(rng, 4, 2));
  const std::vector<std::size_t> labels{0, 1, 0, 1};
  REQUIRE(simplex_grid_size(4, 20, 1'000'000) == 1771);
  REQUIRE_THROWS_AS(sweep_weights(members, labels, 100, Objective::top1), ResourceLimit);
  members.push_back(members.front());
  REQUIRE_THROWS_AS(sweep_weights(members, labels, 2, Objective::top1), ResourceLimit);
  const std::vector<PredictionMatrix> single{members.front()};
  REQUIRE_THROWS_AS(sweep_weights(single, labels, 2, Objective::top1), InvalidInput);
  REQUIRE_THROWS_AS(sweep_weights(std::vector<PredictionMatrix>(2, members.front()), labels, 0, Objective::top1),
                    InvalidInput);
}
