#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "masim/attention.hpp"
#include "masim/errors.hpp"
#include "masim/rng.hpp"

using namespace masim;

namespace {

AttentionParams random_params(std::size_t heads, std::size_t m, std::uint64_t seed) {
  AttentionParams p = AttentionParams::init(heads, m, seed);
  Rng rng(derive_seed(seed, 77));
  for (auto& head : p.heads) {
    for (double& v : head.weight.values) v = rng.uniform(-1.0, 1.0);
    for (double& v : head.bias.values) v = rng.uniform(-0.5, 0.5);
  }
  return p;
}

}  // namespace

TEST_CASE("zero weights and bias give uniform attention: z = s / m") {
  AttentionParams p;
  p.heads.push_back({ParamTensor(4, 4), ParamTensor(1, 4)});  // all zeros
  const std::vector<double> s{4.0, 8.0, 12.0, 16.0};
  const EnhancedState e = enhance_state(s, p);
  REQUIRE(e.per_head_weights.size() == 1);
  REQUIRE(e.combined.size() == 4);
  for (double b : e.per_head_weights[0]) CHECK(b == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(e.combined[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.combined[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(e.combined[2] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(e.combined[3] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("weight_features applies beta elementwise") {
  const std::vector<double> beta{0.75, 0.25};
  const std::vector<double> s{4.0, 8.0};
  const auto z = weight_features(beta, s);
  REQUIRE(z.size() == 2);
  CHECK(z[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(weight_features(beta, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("normalize_scores of [ln 3, 0] is [0.75, 0.25]") {
  const std::vector<double> alpha{std::log(3.0), 0.0};
  const auto beta = normalize_scores(alpha);
  CHECK(beta[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(beta[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("combined length is head_count times feature_dim") {
  const AttentionParams p = random_params(2, 4, 11);
  const std::vector<double> s{1.0, -0.5, 0.25, 2.0};
  const EnhancedState e = enhance_state(s, p);
  CHECK(e.per_head_weights.size() == 2);
  CHECK(e.combined.size() == 8);
}

TEST_CASE("head_scores matches a naive s*W + b oracle") {
  Rng rng(3);
  for (int it = 0; it < 50; ++it) {
    const std::size_t m = 1 + rng.uniform_index(6);
    AttentionParams p = random_params(1, m, rng.next_u64());
    std::vector<double> s(m);
    for (double& v : s) v = rng.uniform(-2.0, 2.0);

    const auto alpha = head_scores(s, p.heads[0]);
    REQUIRE(alpha.size() == m);
    for (std::size_t j = 0; j < m; ++j) {
      double expect = p.heads[0].bias.at(0, j);
      for (std::size_t i = 0; i < m; ++i) expect += s[i] * p.heads[0].weight.at(i, j);
      CHECK(alpha[j] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("per-head weights sum to 1 and combined is the concat of weighted features") {
  Rng rng(19);
  for (int it = 0; it < 50; ++it) {
    const std::size_t m = 1 + rng.uniform_index(8);
    const std::size_t H = 1 + rng.uniform_index(4);
    const AttentionParams p = random_params(H, m, rng.next_u64());
    std::vector<double> s(m);
    for (double& v : s) v = rng.uniform(-3.0, 3.0);

    const EnhancedState e = enhance_state(s, p);
    REQUIRE(e.per_head_weights.size() == H);
    REQUIRE(e.combined.size() == H * m);
    for (std::size_t h = 0; h < H; ++h) {
      double total = 0.0;
      for (double b : e.per_head_weights[h]) {
        CHECK(b > 0.0);
        total += b;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

      const auto alpha = head_scores(s, p.heads[h]);
      const auto beta = normalize_scores(alpha);
      const auto z = weight_features(beta, s);
      for (std::size_t j = 0; j < m; ++j) {
        CHECK(e.per_head_weights[h][j] == doctest::Approx(beta[j]).epsilon(1e-12));
        CHECK(e.combined[h * m + j] == doctest::Approx(z[j]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("perturbing one head changes only its own segment") {
  const std::vector<double> s{0.5, -1.0, 2.0, 0.25};
  AttentionParams p = random_params(3, 4, 41);
  const EnhancedState before = enhance_state(s, p);
  p.heads[1].weight.at(2, 3) += 0.7;
  p.heads[1].bias.at(0, 0) -= 0.3;
  const EnhancedState after = enhance_state(s, p);

  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(after.combined[0 * 4 + j] == before.combined[0 * 4 + j]);
    CHECK(after.combined[2 * 4 + j] == before.combined[2 * 4 + j]);
  }
  bool changed = false;
  for (std::size_t j = 0; j < 4; ++j)
    changed |= (after.combined[1 * 4 + j] != before.combined[1 * 4 + j]);
  CHECK(changed);
}

TEST_CASE("adding a constant to one head's scores leaves its weights unchanged") {
  Rng rng(53);
  for (int it = 0; it < 30; ++it) {
    const std::size_t m = 2 + rng.uniform_index(6);
    std::vector<double> alpha(m);
    for (double& v : alpha) v = rng.uniform(-5.0, 5.0);
    const auto beta = normalize_scores(alpha);
    for (double& v : alpha) v += 42.0;
    const auto shifted = normalize_scores(alpha);
    for (std::size_t j = 0; j < m; ++j)
      CHECK(shifted[j] == doctest::Approx(beta[j]).epsilon(1e-12));
  }
}

TEST_CASE("AttentionParams::init is deterministic and validates shapes") {
  const AttentionParams a = AttentionParams::init(4, 45, 7);
  const AttentionParams b = AttentionParams::init(4, 45, 7);
  REQUIRE(a.head_count() == 4);
  CHECK(a.feature_dim() == 45);
  for (std::size_t h = 0; h < 4; ++h) {
    CHECK(a.heads[h].weight.values == b.heads[h].weight.values);
    CHECK(a.heads[h].bias.values == b.heads[h].bias.values);
  }
  a.validate();

  AttentionParams bad = a;
  bad.heads[2].weight = ParamTensor(45, 44);  // not square
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("graph attention matches enhance_state") {
  Rng rng(61);
  AttentionParams p = random_params(2, 5, 67);
  std::vector<double> s(5);
  for (double& v : s) v = rng.uniform(-1.0, 1.0);

  const EnhancedState plain = enhance_state(s, p);
  Graph g;
  const AttentionBinding binding = bind_attention(g, p);
  const AttentionNodes nodes = attach_attention(g, g.input(s), binding);
  const auto& combined = g.value(nodes.combined);
  REQUIRE(combined.size() == plain.combined.size());
  for (std::size_t i = 0; i < combined.size(); ++i)
    CHECK(combined[i] == doctest::Approx(plain.combined[i]).epsilon(1e-12));
  for (std::size_t h = 0; h < 2; ++h) {
    const auto& beta = g.value(nodes.head_weights[h]);
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(beta[j] == doctest::Approx(plain.per_head_weights[h][j]).epsilon(1e-12));
  }
}

TEST_CASE("end-to-end gradient through attach_attention matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(2000, seed));
    AttentionParams p = random_params(2, 4, rng.next_u64());
    std::vector<double> s(4);
    for (double& v : s) v = rng.uniform(-1.5, 1.5);

    // Scalar objective: sum of squared combined features.
    auto eval = [&](Graph& g, Graph::NodeId* root_out) {
      const AttentionBinding binding = bind_attention(g, p);
      const AttentionNodes nodes = attach_attention(g, g.input(s), binding);
      auto sq = g.mul(nodes.combined, nodes.combined);
      auto root = g.sum(sq);
      if (root_out) *root_out = root;
      return g.value(root)[0];
    };

    Graph g;
    Graph::NodeId root = 0;
    eval(g, &root);
    g.backward(root);

    const double h = 1e-5;
    for (auto& head : p.heads) {
      for (ParamTensor* t : {&head.weight, &head.bias}) {
        for (std::size_t i = 0; i < t->size(); ++i) {
          const double orig = t->values[i];
          t->values[i] = orig + h;
          Graph gp;
          const double fp = eval(gp, nullptr);
          t->values[i] = orig - h;
          Graph gm;
          const double fm = eval(gm, nullptr);
          t->values[i] = orig;

          const double fd = (fp - fm) / (2.0 * h);
          const double an = t->grad[i];
          const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
          CHECK(std::abs(fd - an) / denom < 1e-4);
        }
      }
    }
  }
}
