#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mavae/mlp.hpp"

namespace mavae {

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

AdamState make_adam_state(const MlpParams& params, double learning_rate);

// One bias-corrected Adam update of `params` in place.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state);

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = false;
};

// Loss over a flat parameter vector. When `grad` is non-null the analytic
// gradient is written to it (same length as the parameters).
using FlatLossFn = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

// Central differences at every coordinate; rel err = |a - n| / max(|a|, |n|, 1e-8).
GradcheckReport gradcheck(const FlatLossFn& loss_fn, std::span<const double> params, double h,
                          double tol);

}  // namespace mavae
