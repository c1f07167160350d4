#include "mavae/losses.hpp"

#include <algorithm>
#include <cmath>

#include "mavae/errors.hpp"

namespace mavae {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

bool inside_clamp(double p) { return p > kProbClamp && p < 1.0 - kProbClamp; }

double weight_at(std::span<const double> mask, std::size_t i) { return mask.empty() ? 1.0 : mask[i]; }

void check_mask(std::span<const double> mask, std::size_t n, const char* what) {
  if (!mask.empty() && mask.size() != n) {
    throw DimensionError(std::string(what) + ": mask length does not match batch");
  }
}

double mask_count(std::span<const double> mask, std::size_t n) {
  if (mask.empty()) return static_cast<double>(n);
  double c = 0.0;
  for (double m : mask) c += m;
  return c;
}

double row_norm(const Matrix& a, const Matrix& b, std::size_t r) {
  double s = 0.0;
  auto ra = a.row_span(r);
  auto rb = b.row_span(r);
  for (std::size_t c = 0; c < ra.size(); ++c) {
    const double d = ra[c] - rb[c];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {regression, classification, distance_ratio, reconstruction, adversarial, variational}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
}

std::string LossBreakdown::first_non_finite() const {
  const std::pair<const char*, double> terms[] = {
      {"regression", regression},   {"classification", classification},
      {"distance_ratio", distance_ratio}, {"reconstruction", reconstruction},
      {"adversarial", adversarial}, {"variational", variational},
      {"total", total},             {"discriminator", discriminator}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) return name;
  }
  return {};
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  regression += o.regression;
  classification += o.classification;
  distance_ratio += o.distance_ratio;
  reconstruction += o.reconstruction;
  adversarial += o.adversarial;
  variational += o.variational;
  total += o.total;
  discriminator += o.discriminator;
  return *this;
}

LossBreakdown& LossBreakdown::operator*=(double s) {
  regression *= s;
  classification *= s;
  distance_ratio *= s;
  reconstruction *= s;
  adversarial *= s;
  variational *= s;
  total *= s;
  discriminator *= s;
  return *this;
}

LossBreakdown total_objective(const LossBreakdown& terms, const LossWeights& weights) {
  weights.validate();
  LossBreakdown out = terms;
  out.total = weights.regression * terms.regression + weights.classification * terms.classification +
              weights.distance_ratio * terms.distance_ratio +
              weights.reconstruction * terms.reconstruction + weights.adversarial * terms.adversarial +
              weights.variational * terms.variational;
  return out;
}

DiscriminatorLoss adv_disc_loss(std::span<const double> d_prior, std::span<const double> d_post,
                                std::span<const double> post_mask) {
  if (d_prior.empty() || d_post.empty()) throw InputError("adv_disc_loss: empty batch");
  check_mask(post_mask, d_post.size(), "adv_disc_loss");
  DiscriminatorLoss out;
  out.grad_prior.assign(d_prior.size(), 0.0);
  out.grad_post.assign(d_post.size(), 0.0);

  const double n_prior = static_cast<double>(d_prior.size());
  for (std::size_t i = 0; i < d_prior.size(); ++i) {
    const double p = clamp_prob(d_prior[i]);
    out.value -= std::log(p) / n_prior;
    if (inside_clamp(d_prior[i])) out.grad_prior[i] = -1.0 / (p * n_prior);
  }
  const double n_post = mask_count(post_mask, d_post.size());
  if (n_post > 0.0) {
    for (std::size_t i = 0; i < d_post.size(); ++i) {
      const double w = weight_at(post_mask, i);
      if (w == 0.0) continue;
      const double p = clamp_prob(d_post[i]);
      out.value -= w * std::log(1.0 - p) / n_post;
      if (inside_clamp(d_post[i])) out.grad_post[i] = w / ((1.0 - p) * n_post);
    }
  }
  return out;
}

VectorLoss adv_gen_loss(std::span<const double> d_post, std::span<const double> mask) {
  if (d_post.empty()) throw InputError("adv_gen_loss: empty batch");
  check_mask(mask, d_post.size(), "adv_gen_loss");
  VectorLoss out;
  out.grad.assign(d_post.size(), 0.0);
  const double n = mask_count(mask, d_post.size());
  if (n == 0.0) return out;
  for (std::size_t i = 0; i < d_post.size(); ++i) {
    const double w = weight_at(mask, i);
    if (w == 0.0) continue;
    const double p = clamp_prob(d_post[i]);
    out.value -= w * std::log(p) / n;
    if (inside_clamp(d_post[i])) out.grad[i] = -w / (p * n);
  }
  return out;
}

GaussianKl var_loss(const Matrix& mu, const Matrix& logvar, std::span<const double> mask,
                    double prior_mean) {
  require_same_shape(mu, logvar, "var_loss");
  check_mask(mask, mu.rows(), "var_loss");
  if (!logvar.all_finite()) throw NumericError("var_loss: non-finite log-variance");
  GaussianKl out;
  out.grad_mu = Matrix(mu.rows(), mu.cols());
  out.grad_logvar = Matrix(mu.rows(), mu.cols());
  const double n = mask_count(mask, mu.rows());
  if (n == 0.0) return out;
  for (std::size_t r = 0; r < mu.rows(); ++r) {
    const double w = weight_at(mask, r);
    if (w == 0.0) continue;
    double kl = 0.0;
    for (std::size_t c = 0; c < mu.cols(); ++c) {
      const double dm = mu(r, c) - prior_mean;
      const double lv = logvar(r, c);
      const double var = std::exp(lv);
      kl += 0.5 * (dm * dm + var - lv - 1.0);
      out.grad_mu(r, c) = w * dm / n;
      out.grad_logvar(r, c) = w * 0.5 * (var - 1.0) / n;
    }
    out.value += w * kl / n;
  }
  return out;
}

DistRatioLoss dist_ratio_loss(const Matrix& gen1, const Matrix& gen2, const Matrix& unq1,
                              const Matrix& unq2, std::span<const double> mask, double eps) {
  require_same_shape(gen1, gen2, "dist_ratio_loss generic");
  require_same_shape(unq1, unq2, "dist_ratio_loss unique");
  if (gen1.rows() != unq1.rows()) throw DimensionError("dist_ratio_loss: batch sizes differ");
  check_mask(mask, gen1.rows(), "dist_ratio_loss");

  DistRatioLoss out;
  out.grad_gen1 = Matrix(gen1.rows(), gen1.cols());
  out.grad_gen2 = Matrix(gen1.rows(), gen1.cols());
  out.grad_unq1 = Matrix(unq1.rows(), unq1.cols());
  out.grad_unq2 = Matrix(unq1.rows(), unq1.cols());
  const double n = mask_count(mask, gen1.rows());
  if (n == 0.0) return out;

  std::vector<double> gen_norm(gen1.rows()), unq_norm(gen1.rows());
  double num = 0.0, den = 0.0;
  for (std::size_t r = 0; r < gen1.rows(); ++r) {
    const double w = weight_at(mask, r);
    gen_norm[r] = row_norm(gen1, gen2, r);
    unq_norm[r] = row_norm(unq1, unq2, r);
    num += w * gen_norm[r] / n;
    den += w * unq_norm[r] / n;
  }
  den += eps;
  out.value = num / den;

  for (std::size_t r = 0; r < gen1.rows(); ++r) {
    const double w = weight_at(mask, r);
    if (w == 0.0) continue;
    if (gen_norm[r] > 0.0) {
      const double s = w / (n * den * gen_norm[r]);
      for (std::size_t c = 0; c < gen1.cols(); ++c) {
        const double g = s * (gen1(r, c) - gen2(r, c));
        out.grad_gen1(r, c) = g;
        out.grad_gen2(r, c) = -g;
      }
    }
    if (unq_norm[r] > 0.0) {
      const double s = -w * num / (n * den * den * unq_norm[r]);
      for (std::size_t c = 0; c < unq1.cols(); ++c) {
        const double g = s * (unq1(r, c) - unq2(r, c));
        out.grad_unq1(r, c) = g;
        out.grad_unq2(r, c) = -g;
      }
    }
  }
  return out;
}

VectorLoss reg_loss(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw DimensionError("reg_loss: length mismatch");
  if (y_true.empty()) throw InputError("reg_loss: empty batch");
  const double n = static_cast<double>(y_true.size());
  VectorLoss out;
  out.grad.assign(y_true.size(), 0.0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double d = y_pred[i] - y_true[i];
    out.value += std::abs(d) / n;
    out.grad[i] = d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
  }
  return out;
}

VectorLoss class_loss(std::span<const double> labels, std::span<const double> p) {
  if (labels.size() != p.size()) throw DimensionError("class_loss: length mismatch");
  if (labels.empty()) throw InputError("class_loss: empty batch");
  const double n = static_cast<double>(labels.size());
  VectorLoss out;
  out.grad.assign(labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw InputError("class_loss: labels must be 0 or 1");
    const double q = clamp_prob(p[i]);
    out.value -= (y * std::log(q) + (1.0 - y) * std::log(1.0 - q)) / n;
    if (inside_clamp(p[i])) out.grad[i] = (-y / q + (1.0 - y) / (1.0 - q)) / n;
  }
  return out;
}

ReconTerm recon_term(const Matrix& x, const Matrix& x_hat, std::span<const double> mask) {
  require_same_shape(x, x_hat, "recon_term");
  check_mask(mask, x.rows(), "recon_term");
  ReconTerm out;
  out.grad = Matrix(x.rows(), x.cols());
  const double n = mask_count(mask, x.rows());
  if (n == 0.0) return out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double w = weight_at(mask, r);
    if (w == 0.0) continue;
    const double norm = row_norm(x_hat, x, r);
    out.value += w * norm / n;
    if (norm > 0.0) {
      for (std::size_t c = 0; c < x.cols(); ++c) {
        out.grad(r, c) = w * (x_hat(r, c) - x(r, c)) / (n * norm);
      }
    }
  }
  return out;
}

double recon_loss(std::span<const ReconPair> pairs) {
  double total = 0.0;
  for (const auto& p : pairs) {
    if (p.x == nullptr || p.x_hat == nullptr) throw InputError("recon_loss: missing reconstruction");
    total += recon_term(*p.x, *p.x_hat, p.mask).value;
  }
  return total;
}

}  // namespace mavae
