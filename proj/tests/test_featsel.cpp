#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mavae/errors.hpp"
#include "mavae/featsel.hpp"
#include "mavae/rng.hpp"

using namespace mavae;

namespace {

// y = scale * x_target + noise, among standard-normal distractor columns.
void planted(Rng& rng, std::size_t n, std::size_t m, std::size_t target, double scale, double noise,
             Matrix& x, std::vector<double>& y) {
  x = gaussian_sample(rng, n, m);
  y.resize(n);
  for (std::size_t r = 0; r < n; ++r) y[r] = scale * x(r, target) + noise * rng.normal();
}

}  // namespace

TEST_CASE("two distinct samples are fit exactly by one split") {
  Matrix x{{0.0}, {1.0}};
  std::vector<double> y{10.0, 20.0};
  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.min_samples_leaf = 1;
  cfg.bootstrap = false;
  Forest f = fit_forest(x, y, cfg);
  REQUIRE(f.trees.size() == 1);
  const auto& nodes = f.trees[0].nodes;
  CHECK(nodes.size() == 3);
  CHECK(nodes[0].feature == 0);
  CHECK(nodes[0].threshold == 0.5);
  CHECK(f.predict(x) == std::vector<double>{10.0, 20.0});
}

TEST_CASE("constant target gives constant predictions and a flagged uniform report") {
  Rng rng(1);
  Matrix x = gaussian_sample(rng, 30, 4);
  std::vector<double> y(30, 42.0);
  ForestConfig cfg;
  cfg.n_trees = 5;
  Forest f = fit_forest(x, y, cfg);
  for (double p : f.predict(gaussian_sample(rng, 10, 4))) CHECK(p == 42.0);
  for (const auto& t : f.trees) CHECK(t.nodes.size() == 1);
  auto rep = importance(f);
  CHECK(rep.degenerate);
  for (double v : rep.importance) CHECK(v == 0.25);
}

TEST_CASE("depth-1 trees put the informative column first") {
  Rng rng(2);
  Matrix x;
  std::vector<double> y;
  planted(rng, 200, 12, 7, 1.0, 0.0, x, y);
  ForestConfig cfg;
  cfg.n_trees = 50;
  cfg.max_depth = 1;
  cfg.seed = 3;
  auto rep = importance(fit_forest(x, y, cfg));
  CHECK(rep.ranking.front() == 7);
  CHECK_FALSE(rep.degenerate);
}

TEST_CASE("importances are normalized and unused features score zero") {
  Rng rng(4);
  Matrix x;
  std::vector<double> y;
  planted(rng, 100, 5, 2, 2.0, 0.1, x, y);
  ForestConfig cfg;
  cfg.n_trees = 20;
  cfg.max_depth = 1;
  cfg.features_per_split = 5;  // every stump sees all columns and picks column 2
  auto rep = importance(fit_forest(x, y, cfg));
  const double total = std::accumulate(rep.importance.begin(), rep.importance.end(), 0.0);
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK(rep.importance[2] == 1.0);
  for (std::size_t j : {0, 1, 3, 4}) CHECK(rep.importance[j] == 0.0);
  auto sorted = rep.ranking;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("y = 3 x1 + noise among 20 distractors ranks x1 first in at least 95 of 100 seeds") {
  int first = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    Matrix x;
    std::vector<double> y;
    planted(rng, 100, 21, 1, 3.0, 1.0, x, y);
    ForestConfig cfg;
    cfg.n_trees = 30;
    cfg.seed = seed;
    first += importance(fit_forest(x, y, cfg)).ranking.front() == 1;
  }
  CAPTURE(first);
  CHECK(first >= 95);
}

TEST_CASE("select_top_k ordering, bounds and tie-break") {
  auto rep = make_report({0.1, 0.0, 0.3, 0.2, 0.15, 0.0, 0.0, 0.15, 0.1});
  CHECK(select_top_k(rep, 1) == std::vector<std::size_t>{2});
  CHECK(select_top_k(rep, 9) == std::vector<std::size_t>{2, 3, 4, 7, 0, 8, 1, 5, 6});
  CHECK_THROWS_AS(select_top_k(rep, 0), ConfigError);
  CHECK_THROWS_AS(select_top_k(rep, 10), ConfigError);

  std::vector<double> tied(10, 0.05);
  tied[4] = tied[7] = 0.3;
  CHECK(select_top_k(make_report(tied), 1) == std::vector<std::size_t>{4});
}

TEST_CASE("forest is invariant to training-row order") {
  Rng rng(5);
  Matrix x;
  std::vector<double> y;
  planted(rng, 60, 6, 0, 1.0, 0.5, x, y);
  std::vector<std::size_t> rows(60);
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<std::size_t> shuffled = rows;
  rng.shuffle(shuffled.begin(), shuffled.end());
  ForestConfig cfg;
  cfg.n_trees = 10;
  cfg.seed = 9;
  Forest a = fit_forest(x, y, cfg, rows), b = fit_forest(x, y, cfg, shuffled);
  Matrix probe = gaussian_sample(rng, 20, 6);
  CHECK(a.predict(probe) == b.predict(probe));
  CHECK(importance(a).importance == importance(b).importance);

  // Physically permuted rows give the same forest as well.
  Matrix xp = x.gather_rows(shuffled);
  std::vector<double> yp;
  for (std::size_t r : shuffled) yp.push_back(y[r]);
  CHECK(fit_forest(xp, yp, cfg).predict(probe) == a.predict(probe));
}

TEST_CASE("parallel and serial fits agree exactly") {
  Rng rng(6);
  Matrix x;
  std::vector<double> y;
  planted(rng, 80, 8, 3, 1.0, 0.3, x, y);
  ForestConfig cfg;
  cfg.n_trees = 12;
  Forest serial = fit_forest(x, y, cfg);
  cfg.n_threads = 3;
  Forest parallel = fit_forest(x, y, cfg);
  CHECK(importance(serial).importance == importance(parallel).importance);
  CHECK(serial.predict(x) == parallel.predict(x));
}

TEST_CASE("fit_forest input validation") {
  ForestConfig cfg;
  CHECK_THROWS_AS(fit_forest(Matrix{{1.0}}, std::vector<double>{1.0}, cfg), InputError);
  CHECK_THROWS_AS(fit_forest(Matrix{{1.0}, {2.0}}, std::vector<double>{1.0}, cfg), DimensionError);
  CHECK_THROWS_AS(fit_forest(Matrix{{1.0}, {std::nan("")}}, std::vector<double>{1.0, 2.0}, cfg), InputError);
  cfg.n_trees = 0;
  CHECK_THROWS_AS(fit_forest(Matrix{{1.0}, {2.0}}, std::vector<double>{1.0, 2.0}, cfg), ConfigError);
}

TEST_CASE("importance CSV and selection sidecar") {
  auto rep = make_report({0.2, 0.5, 0.3});
  std::string csv = importance_csv(rep, {"a", "b", "c"}, {{"seed", "7"}});
  CHECK(csv == "# seed: 7\nfeature_name,importance,rank\na,0.2,3\nb,0.5,1\nc,0.3,2\n");
  FeatureSelection sel{"m1", {1, 2}, {"b", "c"}};
  CHECK(selection_from_json(selection_to_json(sel)) == sel);
  CHECK_THROWS_AS(selection_from_json("{\"modality\": 1}"), LoadError);
}
