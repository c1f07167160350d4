#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mavae/matrix.hpp"
#include "mavae/rng.hpp"

namespace mavae {

enum class HiddenActivation { relu, tanh };
enum class OutputActivation { linear, sigmoid };

std::string to_string(HiddenActivation a);
std::string to_string(OutputActivation a);
HiddenActivation parse_hidden_activation(const std::string& s);
OutputActivation parse_output_activation(const std::string& s);

// Fully connected network shape: layer_sizes = {input, hidden..., output}.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  HiddenActivation hidden = HiddenActivation::relu;
  OutputActivation output = OutputActivation::linear;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }

  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Per layer: weight (out x in) and bias (out).
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  std::size_t parameter_count() const;

  // Same shape, all zeros.
  MlpParams zeros_like() const;

  MlpParams& operator+=(const MlpParams& other);
  MlpParams& operator*=(double s);

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

MlpParams zero_params(const MlpSpec& spec);

// He-uniform for relu layers, Glorot-uniform otherwise; zero biases.
MlpParams init_params(const MlpSpec& spec, Rng& rng);

void check_params(const MlpSpec& spec, const MlpParams& params);

// Everything mlp_backward needs: each layer's input and post-activation output.
struct MlpCache {
  MlpSpec spec;
  const MlpParams* params = nullptr;
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;

  bool valid() const { return params != nullptr && !inputs.empty(); }
};

struct MlpForward {
  Matrix output;
  MlpCache cache;
};

struct MlpGradients {
  MlpParams params;
  Matrix input;
};

// The cache keeps a pointer to `params`; they must outlive the backward call.
MlpForward mlp_forward(const MlpParams& params, const MlpSpec& spec, const Matrix& x);

MlpGradients mlp_backward(const MlpCache& cache, const Matrix& upstream);

// Flat parameter view, layer by layer: weights row-major then biases.
std::vector<double> flatten(const MlpParams& params);
void unflatten(std::span<const double> flat, MlpParams& params);

}  // namespace mavae
