#pragma once

#include <cmath>
#include <cstddef>

#include <boost/math/special_functions/erf.hpp>

#include "mavae/rng.hpp"

namespace mavae::testing {

// Monte-Carlo estimate of KL(N(mu, sigma^2) || N(0, 1)) = E_q[log q(z) - log p(z)].
// Draws come in antithetic pairs (eps, -eps).
inline double monte_carlo_kl(Rng& rng, double mu, double sigma, std::size_t samples) {
  const double log_norm_q = -std::log(sigma);
  auto log_ratio = [&](double eps) {
    const double z = mu + sigma * eps;
    const double log_q = log_norm_q - 0.5 * eps * eps;
    const double log_p = -0.5 * z * z;
    return log_q - log_p;
  };
  double acc = 0.0;
  const std::size_t pairs = samples / 2;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double eps = rng.normal();
    acc += log_ratio(eps) + log_ratio(-eps);
  }
  return acc / static_cast<double>(2 * pairs);
}

// Same expectation with stratified draws: one uniform per equal-probability stratum,
// mapped through the inverse normal CDF.
inline double stratified_monte_carlo_kl(Rng& rng, double mu, double sigma, std::size_t samples) {
  const double log_norm_q = -std::log(sigma);
  double acc = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    double u = rng.uniform();
    while (u == 0.0) u = rng.uniform();
    const double p = (static_cast<double>(i) + u) / static_cast<double>(samples);
    const double eps = std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0);
    const double z = mu + sigma * eps;
    acc += (log_norm_q - 0.5 * eps * eps) + 0.5 * z * z;
  }
  return acc / static_cast<double>(samples);
}

}  // namespace mavae::testing
