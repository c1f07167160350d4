#include "mavae/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mavae/errors.hpp"

namespace mavae {

AdamState make_adam_state(const MlpParams& params, double learning_rate) {
  AdamState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.learning_rate = learning_rate;
  return s;
}

namespace {

void check_like(const MlpParams& a, const MlpParams& b) {
  if (a.weights.size() != b.weights.size()) throw DimensionError("Adam: layer count mismatch");
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    require_same_shape(a.weights[l], b.weights[l], "Adam weights");
    if (a.biases[l].size() != b.biases[l].size()) throw DimensionError("Adam: bias length mismatch");
  }
}

void update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
            const AdamState& s, double c1, double c2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

}  // namespace

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state) {
  check_like(params, grads);
  check_like(params, state.first_moment);
  check_like(params, state.second_moment);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(params.weights[l].data(), grads.weights[l].data(), state.first_moment.weights[l].data(),
           state.second_moment.weights[l].data(), state, c1, c2);
    update(params.biases[l], grads.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l], state, c1, c2);
  }
}

GradcheckReport gradcheck(const FlatLossFn& loss_fn, std::span<const double> params, double h,
                          double tol) {
  std::vector<double> analytic(params.size(), 0.0);
  const double base = loss_fn(params, &analytic);
  if (!std::isfinite(base)) throw NumericError("gradcheck: loss is not finite");
  if (analytic.size() != params.size()) throw DimensionError("gradcheck: gradient length mismatch");

  GradcheckReport report;
  std::vector<double> probe(params.begin(), params.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = loss_fn(probe, nullptr);
    probe[i] = orig - h;
    const double down = loss_fn(probe, nullptr);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("gradcheck: loss is not finite at coordinate " + std::to_string(i));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (i == 0 || rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  report.pass = tol == 0.0 ? report.max_rel_err == 0.0 : report.max_rel_err < tol;
  return report;
}

}  // namespace mavae
