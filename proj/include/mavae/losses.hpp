#pragma once

#include <span>
#include <string>
#include <vector>

#include "mavae/matrix.hpp"

namespace mavae {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDistRatioEps = 1e-8;

// Trade-off weights of the generator objective.
struct LossWeights {
  double regression = 1.0;      // lambda_1
  double classification = 0.5;  // lambda_2
  double distance_ratio = 0.1;  // lambda_3
  double reconstruction = 1.0;  // lambda_4
  double adversarial = 0.1;     // lambda_5
  double variational = 0.01;    // lambda_6

  void validate() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double regression = 0.0;
  double classification = 0.0;
  double distance_ratio = 0.0;
  double reconstruction = 0.0;
  double adversarial = 0.0;  // generator form
  double variational = 0.0;
  double total = 0.0;
  double discriminator = 0.0;  // reported separately, not part of total

  // Name of the first non-finite term, or empty.
  std::string first_non_finite() const;

  LossBreakdown& operator+=(const LossBreakdown& other);
  LossBreakdown& operator*=(double s);
};

// Weighted sum of the six generator terms; `terms.total` is ignored.
LossBreakdown total_objective(const LossBreakdown& terms, const LossWeights& weights);

// Value plus gradient with respect to a vector input.
struct VectorLoss {
  double value = 0.0;
  std::vector<double> grad;
};

// `mask` (optional, 0/1 per sample) selects which samples enter the batch mean.
// An empty mask means every sample counts.

// Discriminator BCE for one modality: prior samples labelled 1, posterior codes 0.
// mean(-ln d_prior) + masked mean(-ln(1 - d_post)).
struct DiscriminatorLoss {
  double value = 0.0;
  std::vector<double> grad_prior;
  std::vector<double> grad_post;
};
DiscriminatorLoss adv_disc_loss(std::span<const double> d_prior, std::span<const double> d_post,
                                std::span<const double> post_mask = {});

// Non-saturating generator loss for one modality: masked mean(-ln d_post).
VectorLoss adv_gen_loss(std::span<const double> d_post, std::span<const double> mask = {});

// KL(N(mu, exp(logvar)) || N(prior_mean, I)) summed over dimensions, masked mean over rows.
struct GaussianKl {
  double value = 0.0;
  Matrix grad_mu;
  Matrix grad_logvar;
};
GaussianKl var_loss(const Matrix& mu, const Matrix& logvar, std::span<const double> mask = {},
                    double prior_mean = 0.0);

// mean ||gen1 - gen2|| / (mean ||unq1 - unq2|| + eps) over masked rows.
struct DistRatioLoss {
  double value = 0.0;
  Matrix grad_gen1, grad_gen2, grad_unq1, grad_unq2;
};
DistRatioLoss dist_ratio_loss(const Matrix& gen1, const Matrix& gen2, const Matrix& unq1,
                              const Matrix& unq2, std::span<const double> mask = {},
                              double eps = kDistRatioEps);

// mean |y_true - y_pred|; gradient with respect to y_pred.
VectorLoss reg_loss(std::span<const double> y_true, std::span<const double> y_pred);

// mean BCE; labels must be 0 or 1; gradient with respect to p.
VectorLoss class_loss(std::span<const double> labels, std::span<const double> p);

// One reconstruction term: masked mean of ||x - x_hat||_2 per row. Zero when no row is present.
struct ReconTerm {
  double value = 0.0;
  Matrix grad;  // with respect to x_hat
};
ReconTerm recon_term(const Matrix& x, const Matrix& x_hat, std::span<const double> mask = {});

struct ReconPair {
  const Matrix* x = nullptr;
  const Matrix* x_hat = nullptr;
  std::vector<double> mask;
};

// Sum of recon_term over every (target, source) pair supplied.
double recon_loss(std::span<const ReconPair> pairs);

}  // namespace mavae
