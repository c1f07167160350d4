#pragma once

#include <array>
#include <utility>

#include "mavae/losses.hpp"
#include "mavae/model.hpp"
#include "mavae/rng.hpp"

namespace mavae {

struct ObjectiveSettings {
  LossWeights weights;
  std::pair<double, double> fusion_weights{0.5, 0.5};
  // Mean of the N(m, I) prior on each modality's unique code.
  std::array<double, 2> unique_prior_means{0.0, 0.0};
  double dist_eps = kDistRatioEps;
};

// Reparameterization noise for each encoded modality; empty means z = mu.
struct ForwardNoise {
  Matrix eps1;
  Matrix eps2;
};

ForwardNoise draw_noise(Rng& rng, const ModelParams& params, std::size_t batch_size);

// Prior samples for the discriminator, one batch per active modality.
std::array<Matrix, 2> draw_prior(Rng& rng, const ModelParams& params, std::size_t batch_size);

struct GeneratorResult {
  LossBreakdown breakdown;
  ModelGrads grads;  // filled for encoders, decoders and both heads when requested
};

// Weighted generator objective (adversarial term in non-saturating form).
// The discriminator participates in the forward pass but receives no gradient.
GeneratorResult generator_objective(const ModelParams& params, const Batch& batch,
                                    const ForwardNoise& noise, const ObjectiveSettings& settings,
                                    bool with_grads);

struct DiscriminatorResult {
  double loss = 0.0;
  MlpParams grads;
};

// Sum over active modalities of adv_disc_loss(D(prior), D(Gen(z_i))).
DiscriminatorResult discriminator_objective(const ModelParams& params, const Batch& batch,
                                            const ForwardNoise& noise,
                                            const std::array<Matrix, 2>& prior, bool with_grads);

}  // namespace mavae
