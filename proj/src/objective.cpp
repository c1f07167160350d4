#include "mavae/objective.hpp"

#include <cmath>
#include <optional>

#include "mavae/errors.hpp"

namespace mavae {

namespace {

std::size_t slot(Role r) { return static_cast<std::size_t>(r); }

void accumulate(ModelGrads& grads, Role r, const MlpParams& g) {
  auto& dst = grads[slot(r)];
  if (dst) {
    *dst += g;
  } else {
    dst = g;
  }
}

std::vector<double> product(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Matrix scaled_column(std::span<const double> v, double s) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = s * v[i];
  return m;
}

// Adds `block` into columns [first, first + block.cols()) of `dst`.
void add_cols(Matrix& dst, std::size_t first, const Matrix& block, double scale = 1.0) {
  for (std::size_t r = 0; r < block.rows(); ++r)
    for (std::size_t c = 0; c < block.cols(); ++c) dst(r, first + c) += scale * block(r, c);
}

struct ModalityState {
  std::optional<EncoderPass> pass;
  Matrix generic;
  Matrix unique;
  Matrix d_z;       // dL/dz
  Matrix d_mu;      // direct dL/dmu (KL)
  Matrix d_logvar;  // direct dL/dlogvar (KL)
};

const Matrix* noise_for(const ForwardNoise& noise, int m) {
  const Matrix& e = m == 1 ? noise.eps1 : noise.eps2;
  return e.empty() ? nullptr : &e;
}

std::array<ModalityState, 2> encode_all(const ModelParams& params, const Batch& batch,
                                        const ForwardNoise& noise) {
  std::array<ModalityState, 2> states;
  for (int m : {1, 2}) {
    if (!modality_active(params.modality_mode, m)) continue;
    auto& s = states[m - 1];
    s.pass = encode_pass(params, m, m == 1 ? batch.x1 : batch.x2, noise_for(noise, m));
    s.generic = s.pass->code.generic();
    s.unique = s.pass->code.unique();
  }
  return states;
}

}  // namespace

ForwardNoise draw_noise(Rng& rng, const ModelParams& params, std::size_t batch_size) {
  ForwardNoise n;
  if (modality_active(params.modality_mode, 1)) n.eps1 = gaussian_sample(rng, batch_size, params.latent.total_dim);
  if (modality_active(params.modality_mode, 2)) n.eps2 = gaussian_sample(rng, batch_size, params.latent.total_dim);
  return n;
}

std::array<Matrix, 2> draw_prior(Rng& rng, const ModelParams& params, std::size_t batch_size) {
  std::array<Matrix, 2> p;
  for (int m : {1, 2}) {
    if (modality_active(params.modality_mode, m)) {
      p[m - 1] = gaussian_sample(rng, batch_size, params.latent.generic_dim);
    }
  }
  return p;
}

GeneratorResult generator_objective(const ModelParams& params, const Batch& batch,
                                    const ForwardNoise& noise, const ObjectiveSettings& settings,
                                    bool with_grads) {
  batch.validate(params);
  settings.weights.validate();
  const LossWeights& w = settings.weights;
  const LatentSpec& latent = params.latent;
  const std::size_t g_dim = latent.generic_dim;
  const std::size_t u_dim = latent.unique_dim;
  const std::size_t n = batch.size();
  const bool both = params.modality_mode == ModalityMode::both;

  auto states = encode_all(params, batch, noise);
  for (int m : {1, 2}) {
    auto& s = states[m - 1];
    if (!s.pass) continue;
    s.d_z = Matrix(n, latent.total_dim);
    s.d_mu = Matrix(n, latent.total_dim);
    s.d_logvar = Matrix(n, latent.total_dim);
  }
  auto mask_of = [&](int m) -> const std::vector<double>& { return m == 1 ? batch.mask1 : batch.mask2; };

  GeneratorResult result;
  LossBreakdown terms;

  // Heads on the fused code.
  const Matrix fused =
      fuse_rows(latent, params.modality_mode, states[0].pass ? &states[0].pass->code.z : nullptr,
                states[1].pass ? &states[1].pass->code.z : nullptr, batch.mask1, batch.mask2,
                settings.fusion_weights);
  const Network& reg_net = params.net(Role::regressor);
  const Network& cls_net = params.net(Role::classifier);
  auto reg_fwd = mlp_forward(reg_net.params, reg_net.spec, fused);
  auto cls_fwd = mlp_forward(cls_net.params, cls_net.spec, fused);
  const auto reg = reg_loss(batch.age, reg_fwd.output.data());
  const auto cls = class_loss(batch.sex, cls_fwd.output.data());
  terms.regression = reg.value;
  terms.classification = cls.value;

  Matrix d_fused(n, fused.cols());
  if (with_grads) {
    auto rg = mlp_backward(reg_fwd.cache, scaled_column(reg.grad, w.regression));
    accumulate(result.grads, Role::regressor, rg.params);
    d_fused += rg.input;
    auto cg = mlp_backward(cls_fwd.cache, scaled_column(cls.grad, w.classification));
    accumulate(result.grads, Role::classifier, cg.params);
    d_fused += cg.input;

    if (both) {
      const auto [w1, w2] = settings.fusion_weights;
      for (std::size_t r = 0; r < n; ++r) {
        const double m1 = batch.mask1[r], m2 = batch.mask2[r];
        double a1 = 0.0, a2 = 0.0;
        if (m1 > 0.0 && m2 > 0.0) {
          a1 = w1;
          a2 = w2;
        } else if (m1 > 0.0) {
          a1 = 1.0;
        } else {
          a2 = 1.0;
        }
        for (std::size_t c = 0; c < g_dim; ++c) {
          states[0].d_z(r, c) += a1 * d_fused(r, c);
          states[1].d_z(r, c) += a2 * d_fused(r, c);
        }
        for (std::size_t c = 0; c < u_dim; ++c) {
          states[0].d_z(r, g_dim + c) += m1 * d_fused(r, g_dim + c);
          states[1].d_z(r, g_dim + c) += m2 * d_fused(r, g_dim + u_dim + c);
        }
      }
    } else {
      auto& s = states[params.modality_mode == ModalityMode::smri_only ? 0 : 1];
      s.d_z += d_fused;
    }
  }

  // Generic/unique distance ratio across modalities, rows where both are present.
  if (both) {
    const auto joint = product(batch.mask1, batch.mask2);
    const auto dr = dist_ratio_loss(states[0].generic, states[1].generic, states[0].unique,
                                    states[1].unique, joint, settings.dist_eps);
    terms.distance_ratio = dr.value;
    if (with_grads && w.distance_ratio != 0.0) {
      add_cols(states[0].d_z, 0, dr.grad_gen1, w.distance_ratio);
      add_cols(states[1].d_z, 0, dr.grad_gen2, w.distance_ratio);
      add_cols(states[0].d_z, g_dim, dr.grad_unq1, w.distance_ratio);
      add_cols(states[1].d_z, g_dim, dr.grad_unq2, w.distance_ratio);
    }
  }

  // Own and cross reconstructions: Dec_i(Gen(z_j), Unq(z_i)).
  for (int i : {1, 2}) {
    if (!states[i - 1].pass) continue;
    const Network& dec = params.net(decoder_role(i));
    const Matrix& x = i == 1 ? batch.x1 : batch.x2;
    for (int j : {1, 2}) {
      if (!states[j - 1].pass) continue;
      auto dec_fwd = mlp_forward(dec.params, dec.spec, hconcat(states[j - 1].generic, states[i - 1].unique));
      const auto mask = product(mask_of(i), mask_of(j));
      const auto term = recon_term(x, dec_fwd.output, mask);
      terms.reconstruction += term.value;
      if (with_grads && w.reconstruction != 0.0) {
        auto dg = mlp_backward(dec_fwd.cache, term.grad * w.reconstruction);
        accumulate(result.grads, decoder_role(i), dg.params);
        add_cols(states[j - 1].d_z, 0, dg.input.col_block(0, g_dim));
        add_cols(states[i - 1].d_z, g_dim, dg.input.col_block(g_dim, u_dim));
      }
    }
  }

  // Adversarial (generator side) on the generic codes; the discriminator stays fixed.
  const Network& disc = params.net(Role::disc);
  for (int m : {1, 2}) {
    auto& s = states[m - 1];
    if (!s.pass) continue;
    auto d_fwd = mlp_forward(disc.params, disc.spec, s.generic);
    const auto adv = adv_gen_loss(d_fwd.output.data(), mask_of(m));
    terms.adversarial += adv.value;
    if (with_grads && w.adversarial != 0.0) {
      auto dg = mlp_backward(d_fwd.cache, scaled_column(adv.grad, w.adversarial));
      add_cols(s.d_z, 0, dg.input);
    }
  }

  // KL on the unique partition.
  for (int m : {1, 2}) {
    auto& s = states[m - 1];
    if (!s.pass) continue;
    const auto& code = s.pass->code;
    const auto kl = var_loss(code.mu.col_block(g_dim, u_dim), code.logvar.col_block(g_dim, u_dim),
                             mask_of(m), settings.unique_prior_means[m - 1]);
    terms.variational += kl.value;
    if (with_grads && w.variational != 0.0) {
      add_cols(s.d_mu, g_dim, kl.grad_mu, w.variational);
      add_cols(s.d_logvar, g_dim, kl.grad_logvar, w.variational);
    }
  }

  result.breakdown = total_objective(terms, w);
  if (!with_grads) return result;

  // Back through the reparameterization and the log-variance clamp into each encoder.
  for (int m : {1, 2}) {
    auto& s = states[m - 1];
    if (!s.pass) continue;
    const auto& code = s.pass->code;
    const std::size_t t = latent.total_dim;
    Matrix upstream(n, 2 * t);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < t; ++c) {
        const double dz = s.d_z(r, c);
        upstream(r, c) = dz + s.d_mu(r, c);
        double d_lv = s.d_logvar(r, c);
        if (!code.eps.empty()) d_lv += dz * code.eps(r, c) * 0.5 * std::exp(0.5 * code.logvar(r, c));
        const double raw = code.raw_logvar(r, c);
        upstream(r, t + c) = (raw > kLogvarMin && raw < kLogvarMax) ? d_lv : 0.0;
      }
    }
    auto eg = mlp_backward(s.pass->cache, upstream);
    accumulate(result.grads, encoder_role(m), eg.params);
  }
  for (Role r : {Role::enc1, Role::enc2, Role::dec1, Role::dec2, Role::regressor, Role::classifier}) {
    if (params.has(r) && !result.grads[slot(r)]) result.grads[slot(r)] = params.net(r).params.zeros_like();
  }
  return result;
}

DiscriminatorResult discriminator_objective(const ModelParams& params, const Batch& batch,
                                            const ForwardNoise& noise,
                                            const std::array<Matrix, 2>& prior, bool with_grads) {
  batch.validate(params);
  const Network& disc = params.net(Role::disc);
  auto states = encode_all(params, batch, noise);

  DiscriminatorResult result;
  result.grads = disc.params.zeros_like();
  for (int m : {1, 2}) {
    const auto& s = states[m - 1];
    if (!s.pass) continue;
    const Matrix& p = prior[m - 1];
    if (p.cols() != params.latent.generic_dim || p.rows() == 0) {
      throw DimensionError("prior samples for modality " + std::to_string(m) + " have the wrong shape");
    }
    auto prior_fwd = mlp_forward(disc.params, disc.spec, p);
    auto post_fwd = mlp_forward(disc.params, disc.spec, s.generic);
    const auto loss = adv_disc_loss(prior_fwd.output.data(), post_fwd.output.data(),
                                    m == 1 ? batch.mask1 : batch.mask2);
    result.loss += loss.value;
    if (with_grads) {
      result.grads += mlp_backward(prior_fwd.cache, scaled_column(loss.grad_prior, 1.0)).params;
      result.grads += mlp_backward(post_fwd.cache, scaled_column(loss.grad_post, 1.0)).params;
    }
  }
  if (!std::isfinite(result.loss)) throw NumericError("discriminator loss is not finite");
  return result;
}

}  // namespace mavae
