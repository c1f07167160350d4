#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mavae/matrix.hpp"
#include "mavae/mlp.hpp"
#include "mavae/rng.hpp"

namespace mavae {

// Log-variance outputs are clamped to this range before exponentiation.
inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

struct LatentSpec {
  std::size_t total_dim = 120;
  std::size_t generic_dim = 50;
  std::size_t unique_dim = 70;

  void validate() const;

  friend bool operator==(const LatentSpec&, const LatentSpec&) = default;
};

enum class ModalityMode { both, smri_only, fmri_only };
enum class TaskMode { multitask, single_task };

std::string to_string(ModalityMode m);
std::string to_string(TaskMode m);
ModalityMode parse_modality_mode(const std::string& s);
TaskMode parse_task_mode(const std::string& s);

// Modality 1 (structural) or 2 (functional) is encoded under this mode.
bool modality_active(ModalityMode mode, int modality);

enum class Role : std::size_t { enc1, enc2, dec1, dec2, disc, regressor, classifier };
inline constexpr std::size_t kNumRoles = 7;
inline constexpr std::array<Role, kNumRoles> kAllRoles = {Role::enc1, Role::enc2, Role::dec1,
                                                         Role::dec2, Role::disc, Role::regressor,
                                                         Role::classifier};

std::string to_string(Role r);
Role encoder_role(int modality);
Role decoder_role(int modality);

struct Network {
  MlpSpec spec;
  MlpParams params;

  friend bool operator==(const Network&, const Network&) = default;
};

// Hidden layer widths for every network.
struct Architecture {
  std::vector<std::size_t> encoder_hidden{256};
  std::vector<std::size_t> decoder_hidden{256};
  std::vector<std::size_t> regressor_hidden{64};
  std::size_t head_hidden = 64;  // classifier and discriminator
  HiddenActivation hidden_activation = HiddenActivation::relu;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ModelShape {
  LatentSpec latent;
  Architecture arch;
  std::size_t width1 = 0;  // modality-1 feature count
  std::size_t width2 = 0;
  ModalityMode modality_mode = ModalityMode::both;
};

std::size_t fused_dim(const LatentSpec& latent, ModalityMode mode);

struct ModelParams {
  LatentSpec latent;
  ModalityMode modality_mode = ModalityMode::both;
  std::array<std::optional<Network>, kNumRoles> nets;

  bool has(Role r) const { return nets[static_cast<std::size_t>(r)].has_value(); }
  Network& net(Role r);
  const Network& net(Role r) const;
  std::vector<Role> roles() const;

  std::size_t fused_dim() const { return mavae::fused_dim(latent, modality_mode); }
  std::size_t feature_width(int modality) const;
  std::size_t parameter_count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Architecture with freshly initialised weights.
ModelParams init_model(const ModelShape& shape, Rng& rng);

// Per-role gradients, shaped like ModelParams.
using ModelGrads = std::array<std::optional<MlpParams>, kNumRoles>;

std::vector<double> flatten(const ModelParams& params, std::span<const Role> roles);
void unflatten(std::span<const double> flat, ModelParams& params, std::span<const Role> roles);
std::vector<double> flatten(const ModelGrads& grads, const ModelParams& like,
                            std::span<const Role> roles);

enum class EncodeMode { sample, deterministic };

// Batched encoder output. z = mu + exp(logvar / 2) * eps, or z = mu in deterministic mode.
struct LatentCode {
  Matrix mu;
  Matrix raw_logvar;  // before clamping
  Matrix logvar;
  Matrix eps;  // empty in deterministic mode
  Matrix z;
  std::size_t generic_dim = 0;

  std::size_t batch() const { return z.rows(); }
  Matrix generic() const { return z.col_block(0, generic_dim); }
  Matrix unique() const { return z.col_block(generic_dim, z.cols() - generic_dim); }
};

struct EncoderPass {
  LatentCode code;
  MlpCache cache;
};

// Encoder forward with explicit noise (nullptr for deterministic mode).
EncoderPass encode_pass(const ModelParams& params, int modality, const Matrix& x, const Matrix* eps);

LatentCode encode(const ModelParams& params, int modality, const Matrix& x, Rng& rng, EncodeMode mode);

// Dec_i(generic, unique).
Matrix decode(const ModelParams& params, int modality, const Matrix& generic, const Matrix& unique);

// Dec_target(Gen(z_source), Unq(z_target)).
Matrix cross_decode(const ModelParams& params, int target, int source, const LatentCode& z_target,
                    const LatentCode& z_source);

struct FusedCode {
  Matrix generic_avg;
  Matrix unique1;
  Matrix unique2;
  double w1 = 0.5;
  double w2 = 0.5;

  // [generic_avg, unique1, unique2]
  Matrix concat() const;
};

FusedCode fuse(const LatentCode& z1, const LatentCode& z2, std::pair<double, double> weights = {0.5, 0.5});

void validate_fusion_weights(std::pair<double, double> weights);

// Fused rows honouring per-row presence. A row with one modality takes that
// modality's generic code and zeros for the absent unique block.
// Unimodal modes return [Gen(z_k), Unq(z_k)].
Matrix fuse_rows(const LatentSpec& latent, ModalityMode mode, const Matrix* z1, const Matrix* z2,
                 std::span<const double> mask1, std::span<const double> mask2,
                 std::pair<double, double> weights);

std::vector<double> predict_age(const ModelParams& params, const Matrix& fused);
std::vector<double> predict_age(const ModelParams& params, const FusedCode& fused);
std::vector<double> predict_sex(const ModelParams& params, const Matrix& fused);
std::vector<double> predict_sex(const ModelParams& params, const FusedCode& fused);
std::vector<double> discriminate(const ModelParams& params, const Matrix& codes);

// A minibatch in model space (standardized features, standardized age).
// Absent modalities have zero feature rows and mask 0.
struct Batch {
  Matrix x1;
  Matrix x2;
  std::vector<double> mask1;
  std::vector<double> mask2;
  std::vector<double> age;
  std::vector<double> sex;

  std::size_t size() const { return age.size(); }
  void validate(const ModelParams& params) const;
};

struct Inference {
  std::vector<double> age;  // model (standardized) scale
  std::vector<double> sex_prob;
  std::optional<LatentCode> code1;
  std::optional<LatentCode> code2;
  Matrix fused;
};

// Deterministic forward: encode with z = mu, fuse, run both heads.
Inference infer(const ModelParams& params, const Batch& batch,
                std::pair<double, double> fusion_weights = {0.5, 0.5});

}  // namespace mavae
