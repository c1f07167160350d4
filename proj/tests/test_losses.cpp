#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kl_oracle.hpp"
#include "mavae/errors.hpp"
#include "mavae/losses.hpp"
#include "mavae/optim.hpp"
#include "mavae/rng.hpp"

using namespace mavae;

namespace {

const double kLn2 = std::numbers::ln2;

std::vector<double> v(std::initializer_list<double> x) { return x; }

}  // namespace

TEST_CASE("adv_disc_loss at 0.5 is -ln 0.5 on each side") {
  auto l = adv_disc_loss(v({0.5, 0.5, 0.5}), v({0.5, 0.5}));
  CHECK(l.value == doctest::Approx(2 * kLn2).epsilon(1e-14));
  CHECK(l.value == doctest::Approx(1.3863).epsilon(1e-4));
}

TEST_CASE("adv_disc_loss of a perfect discriminator tends to zero") {
  auto l = adv_disc_loss(v({1.0, 1.0}), v({0.0, 0.0}));
  CHECK(l.value < 1e-6);
  CHECK(l.value >= 0.0);
}

TEST_CASE("adv_disc_loss is permutation invariant and honours the mask") {
  auto a = adv_disc_loss(v({0.9, 0.2, 0.6}), v({0.3, 0.7}));
  auto b = adv_disc_loss(v({0.6, 0.9, 0.2}), v({0.7, 0.3}));
  CHECK(a.value == doctest::Approx(b.value).epsilon(1e-15));

  auto masked = adv_disc_loss(v({0.9}), v({0.3, 0.999}), v({1.0, 0.0}));
  auto subset = adv_disc_loss(v({0.9}), v({0.3}));
  CHECK(masked.value == doctest::Approx(subset.value).epsilon(1e-15));
  CHECK(masked.grad_post[1] == 0.0);
  CHECK_THROWS_AS(adv_disc_loss({}, v({0.5})), InputError);
}

TEST_CASE("adv_gen_loss: fooled discriminator, 0.5, monotone") {
  CHECK(adv_gen_loss(v({1.0, 1.0})).value < 1e-6);
  CHECK(adv_gen_loss(v({0.5})).value == doctest::Approx(kLn2).epsilon(1e-14));
  double prev = INFINITY;
  for (int i = 1; i < 100; ++i) {
    const double p = i / 100.0;
    const double val = adv_gen_loss(std::vector<double>{p}).value;
    CHECK(val < prev);
    prev = val;
  }
}

TEST_CASE("var_loss closed form") {
  CHECK(var_loss(Matrix{{0.0, 0.0}}, Matrix{{0.0, 0.0}}).value == 0.0);
  CHECK(var_loss(Matrix{{1.0}}, Matrix{{0.0}}).value == doctest::Approx(0.5).epsilon(1e-15));
  // prior mean offset: KL(N(1,1) || N(1,1)) = 0
  CHECK(var_loss(Matrix{{1.0}}, Matrix{{0.0}}, {}, 1.0).value == 0.0);
  CHECK_THROWS_AS(var_loss(Matrix{{0.0}}, Matrix{{std::nan("")}}), NumericError);
}

TEST_CASE("var_loss agrees with a Monte-Carlo estimate") {
  Rng rng(8);
  const double mu = 1.3, sigma = 0.6;
  const double closed = var_loss(Matrix{{mu}}, Matrix{{std::log(sigma * sigma)}}).value;
  const double mc = testing::monte_carlo_kl(rng, mu, sigma, 1'000'000);
  CHECK(std::abs(mc - closed) / closed < 0.01);
}

TEST_CASE("dist_ratio_loss hand cases") {
  Matrix g{{1.0, 2.0}}, u1{{0.0, 0.0}}, u2{{3.0, 4.0}};
  CHECK(dist_ratio_loss(g, g, u1, u2).value == 0.0);

  // equal distances, eps -> 0
  Matrix ga{{0.0, 0.0}}, gb{{3.0, 4.0}};
  CHECK(dist_ratio_loss(ga, gb, u1, u2, {}, 0.0).value == doctest::Approx(1.0).epsilon(1e-15));

  // generic distance 2, unique distance 4
  Matrix gc{{0.0}}, gd{{2.0}}, uc{{0.0}}, ud{{4.0}};
  CHECK(dist_ratio_loss(gc, gd, uc, ud, {}, 0.0).value == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("dist_ratio_loss is scale covariant with eps = 0") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix g1 = gaussian_sample(rng, 5, 3), g2 = gaussian_sample(rng, 5, 3);
    Matrix u1 = gaussian_sample(rng, 5, 4), u2 = gaussian_sample(rng, 5, 4);
    const double c = std::exp(rng.uniform(-2.0, 2.0));
    const double base = dist_ratio_loss(g1, g2, u1, u2, {}, 0.0).value;
    const double scaled = dist_ratio_loss(g1 * c, g2 * c, u1 * c, u2 * c, {}, 0.0).value;
    CHECK(scaled == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("reg_loss hand cases") {
  CHECK(reg_loss(v({30, 40}), v({30, 40})).value == 0.0);
  CHECK(reg_loss(v({30}), v({32})).value == 2.0);
  CHECK(reg_loss(v({30, 40}), v({32, 44})).value == 3.0);
  CHECK_THROWS_AS(reg_loss({}, {}), InputError);
  CHECK_THROWS_AS(reg_loss(v({1}), v({1, 2})), DimensionError);
}

TEST_CASE("class_loss hand cases and symmetry") {
  CHECK(class_loss(v({1}), v({0.5})).value == doctest::Approx(kLn2).epsilon(1e-14));
  CHECK(class_loss(v({1}), v({1.0})).value < 1e-6);
  for (double p : {0.1, 0.37, 0.5, 0.93}) {
    CHECK(class_loss(v({1}), std::vector<double>{p}).value ==
          doctest::Approx(class_loss(v({0}), std::vector<double>{1 - p}).value).epsilon(1e-12));
  }
  CHECK_THROWS_AS(class_loss(v({2}), v({0.5})), InputError);
}

TEST_CASE("recon terms: perfect, one term off by a unit vector") {
  Matrix x{{1.0, 2.0}};
  Matrix exact{{1.0, 2.0}};
  Matrix off{{1.0, 3.0}};
  std::vector<ReconPair> pairs = {{&x, &exact, {}}, {&x, &exact, {}}, {&x, &exact, {}}, {&x, &exact, {}}};
  CHECK(recon_loss(pairs) == 0.0);
  pairs[3].x_hat = &off;
  CHECK(recon_loss(pairs) == 1.0);
}

TEST_CASE("recon_term with a mask equals recomputation on the present subset") {
  Rng rng(6);
  Matrix x = gaussian_sample(rng, 6, 3), xh = gaussian_sample(rng, 6, 3);
  std::vector<double> mask{1, 0, 1, 1, 0, 1};
  std::vector<std::size_t> keep{0, 2, 3, 5};
  const double masked = recon_term(x, xh, mask).value;
  const double subset = recon_term(x.gather_rows(keep), xh.gather_rows(keep)).value;
  CHECK(masked == doctest::Approx(subset).epsilon(1e-14));
  CHECK(recon_term(x, xh, std::vector<double>(6, 0.0)).value == 0.0);
}

TEST_CASE("every loss is non-negative on random inputs") {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(5), q(5), y(5), lab(5);
    for (int i = 0; i < 5; ++i) {
      p[i] = rng.uniform();
      q[i] = rng.uniform();
      y[i] = rng.normal();
      lab[i] = rng.bernoulli(0.5);
    }
    CHECK(adv_disc_loss(p, q).value >= 0.0);
    CHECK(adv_gen_loss(p).value >= 0.0);
    CHECK(class_loss(lab, p).value >= 0.0);
    CHECK(reg_loss(y, q).value >= 0.0);
    Matrix mu = gaussian_sample(rng, 5, 3), lv = gaussian_sample(rng, 5, 3);
    CHECK(var_loss(mu, lv).value >= 0.0);
    CHECK(dist_ratio_loss(mu, lv, lv, mu).value >= 0.0);
  }
}

TEST_CASE("total_objective: zero, projection, hand weighted sum, linearity") {
  LossBreakdown t;
  t.regression = 3.0;
  t.classification = 0.7;
  t.distance_ratio = 0.4;
  t.reconstruction = 2.5;
  t.adversarial = 0.69;
  t.variational = 12.0;
  t.discriminator = 1.38;

  LossWeights zero{0, 0, 0, 0, 0, 0};
  CHECK(total_objective(t, zero).total == 0.0);

  LossWeights only_recon{0, 0, 0, 1, 0, 0};
  CHECK(total_objective(t, only_recon).total == 2.5);

  // 1*3 + 0.5*0.7 + 0.1*0.4 + 1*2.5 + 0.1*0.69 + 0.01*12 = 6.079
  CHECK(total_objective(t, LossWeights{}).total == doctest::Approx(6.079).epsilon(1e-14));
  // the discriminator term is not part of the total
  CHECK(total_objective(t, LossWeights{}).discriminator == 1.38);

  LossWeights w1 = LossWeights{}, w2 = LossWeights{};
  w2.variational = 0.03;
  const double d = total_objective(t, w2).total - total_objective(t, w1).total;
  CHECK(d == doctest::Approx(0.02 * 12.0).epsilon(1e-12));

  LossWeights negative;
  negative.adversarial = -1.0;
  CHECK_THROWS_AS(total_objective(t, negative), ConfigError);
}

TEST_CASE("input gradients of each loss agree with central differences") {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 4;
    std::vector<double> probs(n), labels(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = rng.uniform(0.05, 0.95);
      labels[i] = rng.bernoulli(0.5);
      y[i] = rng.normal();
    }
    auto as_fn = [](auto f) -> FlatLossFn { return f; };

    auto gen = as_fn([&](std::span<const double> p, std::vector<double>* g) {
      auto l = adv_gen_loss(p);
      if (g) *g = l.grad;
      return l.value;
    });
    CHECK(gradcheck(gen, probs, 1e-6, 1e-6).pass);

    auto cls = as_fn([&](std::span<const double> p, std::vector<double>* g) {
      auto l = class_loss(labels, p);
      if (g) *g = l.grad;
      return l.value;
    });
    CHECK(gradcheck(cls, probs, 1e-6, 1e-6).pass);

    auto reg = as_fn([&](std::span<const double> p, std::vector<double>* g) {
      auto l = reg_loss(y, p);
      if (g) *g = l.grad;
      return l.value;
    });
    std::vector<double> pred(n);
    for (auto& p : pred) p = rng.normal();
    CHECK(gradcheck(reg, pred, 1e-6, 1e-6).pass);

    Matrix mu = gaussian_sample(rng, n, 3), lv = gaussian_sample(rng, n, 3);
    auto kl = as_fn([&](std::span<const double> p, std::vector<double>* g) {
      Matrix m(n, 3, std::vector<double>(p.begin(), p.begin() + 12));
      Matrix l(n, 3, std::vector<double>(p.begin() + 12, p.end()));
      auto r = var_loss(m, l, {}, 0.4);
      if (g) {
        *g = r.grad_mu.data();
        g->insert(g->end(), r.grad_logvar.data().begin(), r.grad_logvar.data().end());
      }
      return r.value;
    });
    std::vector<double> klp = mu.data();
    klp.insert(klp.end(), lv.data().begin(), lv.data().end());
    CHECK(gradcheck(kl, klp, 1e-6, 1e-6).pass);

    Matrix x = gaussian_sample(rng, n, 3);
    auto rec = as_fn([&](std::span<const double> p, std::vector<double>* g) {
      auto r = recon_term(x, Matrix(n, 3, std::vector<double>(p.begin(), p.end())));
      if (g) *g = r.grad.data();
      return r.value;
    });
    CHECK(gradcheck(rec, gaussian_sample(rng, n, 3).data(), 1e-6, 1e-6).pass);

    auto dist = as_fn([&](std::span<const double> p, std::vector<double>* g) {
      auto take = [&](std::size_t off, std::size_t cols) {
        return Matrix(n, cols, std::vector<double>(p.begin() + off, p.begin() + off + n * cols));
      };
      auto r = dist_ratio_loss(take(0, 2), take(8, 2), take(16, 3), take(28, 3));
      if (g) {
        g->clear();
        for (const Matrix* m : {&r.grad_gen1, &r.grad_gen2, &r.grad_unq1, &r.grad_unq2})
          g->insert(g->end(), m->data().begin(), m->data().end());
      }
      return r.value;
    });
    CHECK(gradcheck(dist, gaussian_sample(rng, 1, 40).data(), 1e-6, 1e-6).pass);

    auto disc = as_fn([&](std::span<const double> p, std::vector<double>* g) {
      auto r = adv_disc_loss(p.subspan(0, 2), p.subspan(2, 2));
      if (g) {
        *g = r.grad_prior;
        g->insert(g->end(), r.grad_post.begin(), r.grad_post.end());
      }
      return r.value;
    });
    CHECK(gradcheck(disc, probs, 1e-6, 1e-6).pass);
  }
}
