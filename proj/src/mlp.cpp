#include "mavae/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mavae/errors.hpp"

namespace mavae {

std::string to_string(HiddenActivation a) { return a == HiddenActivation::relu ? "relu" : "tanh"; }

std::string to_string(OutputActivation a) {
  return a == OutputActivation::linear ? "linear" : "sigmoid";
}

HiddenActivation parse_hidden_activation(const std::string& s) {
  if (s == "relu") return HiddenActivation::relu;
  if (s == "tanh") return HiddenActivation::tanh;
  throw ConfigError("unknown hidden activation '" + s + "'");
}

OutputActivation parse_output_activation(const std::string& s) {
  if (s == "linear") return OutputActivation::linear;
  if (s == "sigmoid") return OutputActivation::sigmoid;
  throw ConfigError("unknown output activation '" + s + "'");
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  for (std::size_t s : layer_sizes) {
    if (s == 0) throw ConfigError("MLP layer sizes must be positive");
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.weights.emplace_back(weights[l].rows(), weights[l].cols());
    out.biases.emplace_back(biases[l].size(), 0.0);
  }
  return out;
}

MlpParams& MlpParams::operator+=(const MlpParams& other) {
  if (other.weights.size() != weights.size()) throw DimensionError("MLP layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    if (biases[l].size() != other.biases[l].size()) throw DimensionError("bias length mismatch");
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
  }
  return *this;
}

MlpParams& MlpParams::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases)
    for (double& v : b) v *= s;
  return *this;
}

MlpParams zero_params(const MlpSpec& spec) {
  spec.validate();
  MlpParams p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    p.weights.emplace_back(spec.layer_sizes[l + 1], spec.layer_sizes[l]);
    p.biases.emplace_back(spec.layer_sizes[l + 1], 0.0);
  }
  return p;
}

MlpParams init_params(const MlpSpec& spec, Rng& rng) {
  MlpParams p = zero_params(spec);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const double fan_in = static_cast<double>(spec.layer_sizes[l]);
    const double fan_out = static_cast<double>(spec.layer_sizes[l + 1]);
    const bool last = l + 1 == spec.num_layers();
    const double limit = (!last && spec.hidden == HiddenActivation::relu)
                             ? std::sqrt(6.0 / fan_in)
                             : std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : p.weights[l].data()) w = rng.uniform(-limit, limit);
  }
  return p;
}

void check_params(const MlpSpec& spec, const MlpParams& params) {
  if (params.weights.size() != spec.num_layers() || params.biases.size() != spec.num_layers()) {
    throw DimensionError("MLP parameters have the wrong number of layers");
  }
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    if (params.weights[l].rows() != spec.layer_sizes[l + 1] ||
        params.weights[l].cols() != spec.layer_sizes[l] ||
        params.biases[l].size() != spec.layer_sizes[l + 1]) {
      throw DimensionError("MLP layer " + std::to_string(l) + " shape disagrees with its spec");
    }
  }
}

namespace {

// Kept strictly inside (0, 1) for every finite input.
double sigmoid(double v) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  double s;
  if (v >= 0) {
    s = 1.0 / (1.0 + std::exp(-v));
  } else {
    const double e = std::exp(v);
    s = e / (1.0 + e);
  }
  return std::clamp(s, lo, hi);
}

}  // namespace

MlpForward mlp_forward(const MlpParams& params, const MlpSpec& spec, const Matrix& x) {
  spec.validate();
  check_params(spec, params);
  if (x.cols() != spec.input_size()) {
    throw DimensionError("MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                         std::to_string(spec.input_size()));
  }
  MlpForward fwd;
  fwd.cache.spec = spec;
  fwd.cache.params = &params;
  Matrix a = x;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    Matrix z = matmul_nt(a, params.weights[l]);
    const auto& b = params.biases[l];
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row_span(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
    const bool last = l + 1 == spec.num_layers();
    if (!last) {
      if (spec.hidden == HiddenActivation::relu) {
        for (double& v : z.data()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
      } else {
        for (double& v : z.data()) v = std::tanh(v);
      }
    } else if (spec.output == OutputActivation::sigmoid) {
      for (double& v : z.data()) v = sigmoid(v);
    }
    fwd.cache.inputs.push_back(std::move(a));
    a = z;
    fwd.cache.outputs.push_back(std::move(z));
  }
  fwd.output = std::move(a);
  return fwd;
}

MlpGradients mlp_backward(const MlpCache& cache, const Matrix& upstream) {
  if (!cache.valid()) throw StateError("mlp_backward called without a forward cache");
  const MlpSpec& spec = cache.spec;
  const MlpParams& params = *cache.params;
  const std::size_t n_layers = spec.num_layers();
  require_same_shape(upstream, cache.outputs.back(), "mlp_backward upstream");

  MlpGradients grads;
  grads.params = params.zeros_like();
  Matrix delta = upstream;
  for (std::size_t step = 0; step < n_layers; ++step) {
    const std::size_t l = n_layers - 1 - step;
    const Matrix& out = cache.outputs[l];
    const bool last = l + 1 == n_layers;
    // dL/d(pre-activation)
    if (!last) {
      if (spec.hidden == HiddenActivation::relu) {
        for (std::size_t i = 0; i < delta.size(); ++i) {
          if (out.data()[i] <= 0.0) delta.data()[i] = 0.0;
        }
      } else {
        for (std::size_t i = 0; i < delta.size(); ++i) {
          const double a = out.data()[i];
          delta.data()[i] *= 1.0 - a * a;
        }
      }
    } else if (spec.output == OutputActivation::sigmoid) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        const double a = out.data()[i];
        delta.data()[i] *= a * (1.0 - a);
      }
    }
    grads.params.weights[l] = matmul_tn(delta, cache.inputs[l]);
    grads.params.biases[l] = col_sums(delta);
    delta = matmul(delta, params.weights[l]);
  }
  grads.input = std::move(delta);
  return grads;
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    flat.insert(flat.end(), params.weights[l].data().begin(), params.weights[l].data().end());
    flat.insert(flat.end(), params.biases[l].begin(), params.biases[l].end());
  }
  return flat;
}

void unflatten(std::span<const double> flat, MlpParams& params) {
  if (flat.size() != params.parameter_count()) throw DimensionError("flat parameter length mismatch");
  std::size_t pos = 0;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    for (double& v : params.weights[l].data()) v = flat[pos++];
    for (double& v : params.biases[l]) v = flat[pos++];
  }
}

}  // namespace mavae
