#include "mavae/model.hpp"

#include <algorithm>
#include <cmath>

#include "mavae/errors.hpp"

namespace mavae {

void LatentSpec::validate() const {
  if (generic_dim == 0 || unique_dim == 0) throw ConfigError("latent partitions must be non-empty");
  if (generic_dim + unique_dim != total_dim) {
    throw ConfigError("generic_dim + unique_dim must equal total_dim");
  }
}

std::string to_string(ModalityMode m) {
  switch (m) {
    case ModalityMode::both: return "both";
    case ModalityMode::smri_only: return "smri_only";
    case ModalityMode::fmri_only: return "fmri_only";
  }
  return "?";
}

std::string to_string(TaskMode m) { return m == TaskMode::multitask ? "multitask" : "single_task"; }

ModalityMode parse_modality_mode(const std::string& s) {
  if (s == "both") return ModalityMode::both;
  if (s == "smri_only") return ModalityMode::smri_only;
  if (s == "fmri_only") return ModalityMode::fmri_only;
  throw ConfigError("unknown modality mode '" + s + "'");
}

TaskMode parse_task_mode(const std::string& s) {
  if (s == "multitask") return TaskMode::multitask;
  if (s == "single_task") return TaskMode::single_task;
  throw ConfigError("unknown task mode '" + s + "'");
}

bool modality_active(ModalityMode mode, int modality) {
  if (modality != 1 && modality != 2) throw ConfigError("modality must be 1 or 2");
  if (mode == ModalityMode::both) return true;
  return (mode == ModalityMode::smri_only) == (modality == 1);
}

std::string to_string(Role r) {
  switch (r) {
    case Role::enc1: return "enc1";
    case Role::enc2: return "enc2";
    case Role::dec1: return "dec1";
    case Role::dec2: return "dec2";
    case Role::disc: return "disc";
    case Role::regressor: return "regressor";
    case Role::classifier: return "classifier";
  }
  return "?";
}

Role encoder_role(int modality) {
  if (modality != 1 && modality != 2) throw ConfigError("modality must be 1 or 2");
  return modality == 1 ? Role::enc1 : Role::enc2;
}

Role decoder_role(int modality) {
  if (modality != 1 && modality != 2) throw ConfigError("modality must be 1 or 2");
  return modality == 1 ? Role::dec1 : Role::dec2;
}

std::size_t fused_dim(const LatentSpec& latent, ModalityMode mode) {
  return mode == ModalityMode::both ? latent.generic_dim + 2 * latent.unique_dim : latent.total_dim;
}

Network& ModelParams::net(Role r) {
  auto& slot = nets[static_cast<std::size_t>(r)];
  if (!slot) throw StateError("network " + to_string(r) + " is not part of this model");
  return *slot;
}

const Network& ModelParams::net(Role r) const {
  const auto& slot = nets[static_cast<std::size_t>(r)];
  if (!slot) throw StateError("network " + to_string(r) + " is not part of this model");
  return *slot;
}

std::vector<Role> ModelParams::roles() const {
  std::vector<Role> out;
  for (Role r : kAllRoles)
    if (has(r)) out.push_back(r);
  return out;
}

std::size_t ModelParams::feature_width(int modality) const {
  return net(encoder_role(modality)).spec.input_size();
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& slot : nets)
    if (slot) n += slot->params.parameter_count();
  return n;
}

namespace {

std::vector<std::size_t> layers(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

Network make_network(MlpSpec spec, Rng& rng) {
  spec.validate();
  Network n{spec, init_params(spec, rng)};
  return n;
}

}  // namespace

ModelParams init_model(const ModelShape& shape, Rng& rng) {
  shape.latent.validate();
  const auto& arch = shape.arch;
  const auto& latent = shape.latent;
  ModelParams p;
  p.latent = latent;
  p.modality_mode = shape.modality_mode;
  for (int m : {1, 2}) {
    if (!modality_active(shape.modality_mode, m)) continue;
    const std::size_t width = m == 1 ? shape.width1 : shape.width2;
    if (width == 0) throw ConfigError("feature width of an active modality must be positive");
    p.nets[static_cast<std::size_t>(encoder_role(m))] = make_network(
        {layers(width, arch.encoder_hidden, 2 * latent.total_dim), arch.hidden_activation,
         OutputActivation::linear},
        rng);
    p.nets[static_cast<std::size_t>(decoder_role(m))] = make_network(
        {layers(latent.total_dim, arch.decoder_hidden, width), arch.hidden_activation,
         OutputActivation::linear},
        rng);
  }
  const std::size_t fused = fused_dim(latent, shape.modality_mode);
  p.nets[static_cast<std::size_t>(Role::disc)] = make_network(
      {{latent.generic_dim, arch.head_hidden, 1}, arch.hidden_activation, OutputActivation::sigmoid}, rng);
  p.nets[static_cast<std::size_t>(Role::regressor)] = make_network(
      {layers(fused, arch.regressor_hidden, 1), arch.hidden_activation, OutputActivation::linear}, rng);
  p.nets[static_cast<std::size_t>(Role::classifier)] = make_network(
      {{fused, arch.head_hidden, 1}, arch.hidden_activation, OutputActivation::sigmoid}, rng);
  return p;
}

std::vector<double> flatten(const ModelParams& params, std::span<const Role> roles) {
  std::vector<double> flat;
  for (Role r : roles) {
    auto part = flatten(params.net(r).params);
    flat.insert(flat.end(), part.begin(), part.end());
  }
  return flat;
}

void unflatten(std::span<const double> flat, ModelParams& params, std::span<const Role> roles) {
  std::size_t pos = 0;
  for (Role r : roles) {
    auto& p = params.net(r).params;
    const std::size_t n = p.parameter_count();
    if (pos + n > flat.size()) throw DimensionError("flat model parameters too short");
    unflatten(flat.subspan(pos, n), p);
    pos += n;
  }
  if (pos != flat.size()) throw DimensionError("flat model parameters too long");
}

std::vector<double> flatten(const ModelGrads& grads, const ModelParams& like, std::span<const Role> roles) {
  std::vector<double> flat;
  for (Role r : roles) {
    const auto& g = grads[static_cast<std::size_t>(r)];
    if (g) {
      auto part = flatten(*g);
      flat.insert(flat.end(), part.begin(), part.end());
    } else {
      flat.insert(flat.end(), like.net(r).params.parameter_count(), 0.0);
    }
  }
  return flat;
}

EncoderPass encode_pass(const ModelParams& params, int modality, const Matrix& x, const Matrix* eps) {
  if (!modality_active(params.modality_mode, modality)) {
    throw StateError("modality " + std::to_string(modality) + " is not encoded in this model");
  }
  const Network& enc = params.net(encoder_role(modality));
  const std::size_t t = params.latent.total_dim;
  auto fwd = mlp_forward(enc.params, enc.spec, x);

  EncoderPass pass;
  LatentCode& code = pass.code;
  code.generic_dim = params.latent.generic_dim;
  code.mu = fwd.output.col_block(0, t);
  code.raw_logvar = fwd.output.col_block(t, t);
  code.logvar = code.raw_logvar;
  for (double& v : code.logvar.data()) v = std::clamp(v, kLogvarMin, kLogvarMax);
  code.z = code.mu;
  if (eps != nullptr) {
    require_same_shape(*eps, code.mu, "reparameterization noise");
    code.eps = *eps;
    for (std::size_t i = 0; i < code.z.size(); ++i) {
      code.z.data()[i] += std::exp(0.5 * code.logvar.data()[i]) * eps->data()[i];
    }
  }
  pass.cache = std::move(fwd.cache);
  return pass;
}

LatentCode encode(const ModelParams& params, int modality, const Matrix& x, Rng& rng, EncodeMode mode) {
  if (mode == EncodeMode::deterministic) return encode_pass(params, modality, x, nullptr).code;
  const Matrix eps = gaussian_sample(rng, x.rows(), params.latent.total_dim);
  return encode_pass(params, modality, x, &eps).code;
}

Matrix decode(const ModelParams& params, int modality, const Matrix& generic, const Matrix& unique) {
  if (generic.cols() != params.latent.generic_dim || unique.cols() != params.latent.unique_dim) {
    throw DimensionError("decode: code widths disagree with the latent spec");
  }
  const Network& dec = params.net(decoder_role(modality));
  return mlp_forward(dec.params, dec.spec, hconcat(generic, unique)).output;
}

Matrix cross_decode(const ModelParams& params, int target, int source, const LatentCode& z_target,
                    const LatentCode& z_source) {
  if (!modality_active(params.modality_mode, source)) {
    throw StateError("cross_decode: source modality is not encoded in this model");
  }
  return decode(params, target, z_source.generic(), z_target.unique());
}

Matrix FusedCode::concat() const { return hconcat(hconcat(generic_avg, unique1), unique2); }

void validate_fusion_weights(std::pair<double, double> w) {
  if (w.first < 0.0 || w.second < 0.0 || std::abs(w.first + w.second - 1.0) > 1e-12) {
    throw ConfigError("fusion weights must be non-negative and sum to 1");
  }
}

FusedCode fuse(const LatentCode& z1, const LatentCode& z2, std::pair<double, double> weights) {
  validate_fusion_weights(weights);
  if (z1.generic_dim != z2.generic_dim) throw DimensionError("fuse: generic partitions differ");
  FusedCode f;
  f.w1 = weights.first;
  f.w2 = weights.second;
  f.generic_avg = z1.generic() * weights.first + z2.generic() * weights.second;
  f.unique1 = z1.unique();
  f.unique2 = z2.unique();
  return f;
}

Matrix fuse_rows(const LatentSpec& latent, ModalityMode mode, const Matrix* z1, const Matrix* z2,
                 std::span<const double> mask1, std::span<const double> mask2,
                 std::pair<double, double> weights) {
  validate_fusion_weights(weights);
  if (mode != ModalityMode::both) {
    const Matrix* z = mode == ModalityMode::smri_only ? z1 : z2;
    if (z == nullptr) throw StateError("fuse_rows: active modality code missing");
    return *z;
  }
  if (z1 == nullptr || z2 == nullptr) throw StateError("fuse_rows: both codes required");
  require_same_shape(*z1, *z2, "fuse_rows");
  const std::size_t g = latent.generic_dim;
  const std::size_t u = latent.unique_dim;
  Matrix out(z1->rows(), g + 2 * u);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double m1 = mask1.empty() ? 1.0 : mask1[r];
    const double m2 = mask2.empty() ? 1.0 : mask2[r];
    double a1 = 0.0, a2 = 0.0;
    if (m1 > 0.0 && m2 > 0.0) {
      a1 = weights.first;
      a2 = weights.second;
    } else if (m1 > 0.0) {
      a1 = 1.0;
    } else {
      a2 = 1.0;
    }
    for (std::size_t c = 0; c < g; ++c) out(r, c) = a1 * (*z1)(r, c) + a2 * (*z2)(r, c);
    for (std::size_t c = 0; c < u; ++c) {
      out(r, g + c) = m1 * (*z1)(r, g + c);
      out(r, g + u + c) = m2 * (*z2)(r, g + c);
    }
  }
  return out;
}

namespace {

std::vector<double> head(const ModelParams& params, Role role, const Matrix& input) {
  const Network& n = params.net(role);
  if (input.cols() != n.spec.input_size()) {
    throw DimensionError(to_string(role) + " expects width " + std::to_string(n.spec.input_size()) +
                         ", got " + std::to_string(input.cols()));
  }
  return mlp_forward(n.params, n.spec, input).output.data();
}

}  // namespace

std::vector<double> predict_age(const ModelParams& params, const Matrix& fused) {
  return head(params, Role::regressor, fused);
}

std::vector<double> predict_age(const ModelParams& params, const FusedCode& fused) {
  return predict_age(params, fused.concat());
}

std::vector<double> predict_sex(const ModelParams& params, const Matrix& fused) {
  return head(params, Role::classifier, fused);
}

std::vector<double> predict_sex(const ModelParams& params, const FusedCode& fused) {
  return predict_sex(params, fused.concat());
}

std::vector<double> discriminate(const ModelParams& params, const Matrix& codes) {
  return head(params, Role::disc, codes);
}

void Batch::validate(const ModelParams& params) const {
  const std::size_t n = size();
  if (n == 0) throw InputError("empty batch");
  if (sex.size() != n || mask1.size() != n || mask2.size() != n) {
    throw DimensionError("batch vectors have inconsistent lengths");
  }
  for (int m : {1, 2}) {
    if (!modality_active(params.modality_mode, m)) continue;
    const Matrix& x = m == 1 ? x1 : x2;
    if (x.rows() != n || x.cols() != params.feature_width(m)) {
      throw DimensionError("batch modality " + std::to_string(m) + " has shape " +
                           std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool p1 = mask1[i] > 0.0, p2 = mask2[i] > 0.0;
    switch (params.modality_mode) {
      case ModalityMode::both:
        if (!p1 && !p2) throw InputError("batch row without any modality");
        break;
      case ModalityMode::smri_only:
        if (!p1) throw InputError("unimodal batch row lacks modality 1");
        break;
      case ModalityMode::fmri_only:
        if (!p2) throw InputError("unimodal batch row lacks modality 2");
        break;
    }
  }
}

Inference infer(const ModelParams& params, const Batch& batch, std::pair<double, double> fusion_weights) {
  batch.validate(params);
  Inference out;
  if (modality_active(params.modality_mode, 1)) out.code1 = encode_pass(params, 1, batch.x1, nullptr).code;
  if (modality_active(params.modality_mode, 2)) out.code2 = encode_pass(params, 2, batch.x2, nullptr).code;
  out.fused = fuse_rows(params.latent, params.modality_mode, out.code1 ? &out.code1->z : nullptr,
                        out.code2 ? &out.code2->z : nullptr, batch.mask1, batch.mask2, fusion_weights);
  out.age = predict_age(params, out.fused);
  out.sex_prob = predict_sex(params, out.fused);
  return out;
}

}  // namespace mavae
