#include "mavae/serialize.hpp"

#include <algorithm>
#include <cmath>

#include "mavae/errors.hpp"

namespace mavae {

namespace {

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::type_error& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

void require_object(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
}

Role parse_role(const std::string& s) {
  for (Role r : kAllRoles)
    if (to_string(r) == s) return r;
  throw LoadError("unknown network role '" + s + "'");
}

}  // namespace

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  require_object(j, where);
  for (const auto& item : j.items()) {
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; });
    if (!ok) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

void to_json(Json& j, const Matrix& m) {
  j = Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

void from_json(const Json& j, Matrix& m) {
  m = Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
             j.at("data").get<std::vector<double>>());
}

void to_json(Json& j, const MlpSpec& s) {
  j = Json{{"layer_sizes", s.layer_sizes}, {"hidden", to_string(s.hidden)}, {"output", to_string(s.output)}};
}

void from_json(const Json& j, MlpSpec& s) {
  s.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  s.hidden = parse_hidden_activation(j.at("hidden").get<std::string>());
  s.output = parse_output_activation(j.at("output").get<std::string>());
}

void to_json(Json& j, const MlpParams& p) { j = Json{{"weights", p.weights}, {"biases", p.biases}}; }

void from_json(const Json& j, MlpParams& p) {
  p.weights = j.at("weights").get<std::vector<Matrix>>();
  p.biases = j.at("biases").get<std::vector<std::vector<double>>>();
}

void to_json(Json& j, const LatentSpec& s) {
  j = Json{{"total_dim", s.total_dim}, {"generic_dim", s.generic_dim}, {"unique_dim", s.unique_dim}};
}

void from_json(const Json& j, LatentSpec& s) {
  reject_unknown_keys(j, {"total_dim", "generic_dim", "unique_dim"}, "latent");
  read(j, "total_dim", s.total_dim);
  read(j, "generic_dim", s.generic_dim);
  read(j, "unique_dim", s.unique_dim);
}

void to_json(Json& j, const Architecture& a) {
  j = Json{{"encoder_hidden", a.encoder_hidden},
           {"decoder_hidden", a.decoder_hidden},
           {"regressor_hidden", a.regressor_hidden},
           {"head_hidden", a.head_hidden},
           {"hidden_activation", to_string(a.hidden_activation)}};
}

void from_json(const Json& j, Architecture& a) {
  reject_unknown_keys(j, {"encoder_hidden", "decoder_hidden", "regressor_hidden", "head_hidden", "hidden_activation"},
                      "arch");
  read(j, "encoder_hidden", a.encoder_hidden);
  read(j, "decoder_hidden", a.decoder_hidden);
  read(j, "regressor_hidden", a.regressor_hidden);
  read(j, "head_hidden", a.head_hidden);
  if (j.contains("hidden_activation")) a.hidden_activation = parse_hidden_activation(j.at("hidden_activation"));
}

void to_json(Json& j, const LossWeights& w) {
  j = Json{{"regression", w.regression},         {"classification", w.classification},
           {"distance_ratio", w.distance_ratio}, {"reconstruction", w.reconstruction},
           {"adversarial", w.adversarial},       {"variational", w.variational}};
}

void from_json(const Json& j, LossWeights& w) {
  reject_unknown_keys(
      j, {"regression", "classification", "distance_ratio", "reconstruction", "adversarial", "variational"},
      "weights");
  read(j, "regression", w.regression);
  read(j, "classification", w.classification);
  read(j, "distance_ratio", w.distance_ratio);
  read(j, "reconstruction", w.reconstruction);
  read(j, "adversarial", w.adversarial);
  read(j, "variational", w.variational);
}

void to_json(Json& j, const ModelParams& p) {
  Json nets = Json::object();
  for (Role r : p.roles()) nets[to_string(r)] = Json{{"spec", p.net(r).spec}, {"params", p.net(r).params}};
  j = Json{{"latent", p.latent}, {"modality_mode", to_string(p.modality_mode)}, {"nets", nets}};
}

void from_json(const Json& j, ModelParams& p) {
  p = ModelParams{};
  p.latent = j.at("latent").get<LatentSpec>();
  p.modality_mode = parse_modality_mode(j.at("modality_mode").get<std::string>());
  for (const auto& item : j.at("nets").items()) {
    const Role r = parse_role(item.key());
    Network n{item.value().at("spec").get<MlpSpec>(), item.value().at("params").get<MlpParams>()};
    check_params(n.spec, n.params);
    p.nets[static_cast<std::size_t>(r)] = std::move(n);
  }
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"latent", c.latent},
           {"arch", c.arch},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"lr_reduction_factor", c.lr_reduction_factor},
           {"patience_epochs", c.patience_epochs},
           {"early_stop_patience", c.early_stop_patience},
           {"max_epochs", c.max_epochs},
           {"min_improvement", c.min_improvement},
           {"weights", c.weights},
           {"mode", to_string(c.mode)},
           {"modality_mode", to_string(c.modality_mode)},
           {"fusion_weights", {c.fusion_weights.first, c.fusion_weights.second}},
           {"unique_prior_means", c.unique_prior_means},
           {"validation_fraction", c.validation_fraction},
           {"seed", c.seed}};
}

void from_json(const Json& j, TrainConfig& c) {
  reject_unknown_keys(j,
                      {"latent", "arch", "batch_size", "learning_rate", "lr_reduction_factor", "patience_epochs",
                       "early_stop_patience", "max_epochs", "min_improvement", "weights", "mode", "modality_mode",
                       "fusion_weights", "unique_prior_means", "validation_fraction", "seed"},
                      "train");
  read(j, "latent", c.latent);
  read(j, "arch", c.arch);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "lr_reduction_factor", c.lr_reduction_factor);
  read(j, "patience_epochs", c.patience_epochs);
  read(j, "early_stop_patience", c.early_stop_patience);
  read(j, "max_epochs", c.max_epochs);
  read(j, "min_improvement", c.min_improvement);
  read(j, "weights", c.weights);
  if (j.contains("mode")) c.mode = parse_task_mode(j.at("mode").get<std::string>());
  if (j.contains("modality_mode")) c.modality_mode = parse_modality_mode(j.at("modality_mode").get<std::string>());
  if (j.contains("fusion_weights")) {
    const auto w = j.at("fusion_weights").get<std::vector<double>>();
    if (w.size() != 2) throw ConfigError("fusion_weights must have two entries");
    c.fusion_weights = {w[0], w[1]};
  }
  read(j, "unique_prior_means", c.unique_prior_means);
  read(j, "validation_fraction", c.validation_fraction);
  read(j, "seed", c.seed);
}

void to_json(Json& j, const ForestConfig& c) {
  j = Json{{"n_trees", c.n_trees},
           {"max_depth", c.max_depth},
           {"features_per_split", c.features_per_split},
           {"min_samples_leaf", c.min_samples_leaf},
           {"bootstrap", c.bootstrap},
           {"seed", c.seed},
           {"n_threads", c.n_threads}};
}

void from_json(const Json& j, ForestConfig& c) {
  reject_unknown_keys(
      j, {"n_trees", "max_depth", "features_per_split", "min_samples_leaf", "bootstrap", "seed", "n_threads"},
      "forest");
  read(j, "n_trees", c.n_trees);
  read(j, "max_depth", c.max_depth);
  read(j, "features_per_split", c.features_per_split);
  read(j, "min_samples_leaf", c.min_samples_leaf);
  read(j, "bootstrap", c.bootstrap);
  read(j, "seed", c.seed);
  read(j, "n_threads", c.n_threads);
}

void to_json(Json& j, const SelectConfig& c) {
  j = Json{{"forest", c.forest}, {"k1", c.k1}, {"k2", c.k2}, {"enabled", c.enabled}};
}

void from_json(const Json& j, SelectConfig& c) {
  reject_unknown_keys(j, {"forest", "k1", "k2", "enabled"}, "select");
  read(j, "forest", c.forest);
  read(j, "k1", c.k1);
  read(j, "k2", c.k2);
  read(j, "enabled", c.enabled);
}

void to_json(Json& j, const SynthConfig& c) {
  j = Json{{"n_subjects", c.n_subjects},
           {"shared_dim", c.shared_dim},
           {"unique_dim1", c.unique_dim1},
           {"unique_dim2", c.unique_dim2},
           {"informative1", c.informative1},
           {"informative2", c.informative2},
           {"distractors1", c.distractors1},
           {"distractors2", c.distractors2},
           {"feature_noise", c.feature_noise},
           {"distractor_scale", c.distractor_scale},
           {"age_noise", c.age_noise},
           {"age_mean", c.age_mean},
           {"age_scale", c.age_scale},
           {"sex_scale", c.sex_scale},
           {"sex_aligned", c.sex_aligned},
           {"nonlinear", c.nonlinear},
           {"missing1", c.missing1},
           {"missing2", c.missing2},
           {"seed", c.seed}};
}

void from_json(const Json& j, SynthConfig& c) {
  reject_unknown_keys(j,
                      {"n_subjects", "shared_dim", "unique_dim1", "unique_dim2", "informative1", "informative2",
                       "distractors1", "distractors2", "feature_noise", "distractor_scale", "age_noise", "age_mean",
                       "age_scale", "sex_scale", "sex_aligned", "nonlinear", "missing1", "missing2", "seed"},
                      "synth");
  read(j, "n_subjects", c.n_subjects);
  read(j, "shared_dim", c.shared_dim);
  read(j, "unique_dim1", c.unique_dim1);
  read(j, "unique_dim2", c.unique_dim2);
  read(j, "informative1", c.informative1);
  read(j, "informative2", c.informative2);
  read(j, "distractors1", c.distractors1);
  read(j, "distractors2", c.distractors2);
  read(j, "feature_noise", c.feature_noise);
  read(j, "distractor_scale", c.distractor_scale);
  read(j, "age_noise", c.age_noise);
  read(j, "age_mean", c.age_mean);
  read(j, "age_scale", c.age_scale);
  read(j, "sex_scale", c.sex_scale);
  read(j, "sex_aligned", c.sex_aligned);
  read(j, "nonlinear", c.nonlinear);
  read(j, "missing1", c.missing1);
  read(j, "missing2", c.missing2);
  read(j, "seed", c.seed);
}

void to_json(Json& j, const FeatureSelection& s) {
  j = Json{{"modality", s.modality}, {"indices", s.indices}, {"columns", s.columns}};
}

void from_json(const Json& j, FeatureSelection& s) {
  s.modality = j.at("modality").get<std::string>();
  s.indices = j.at("indices").get<std::vector<std::size_t>>();
  s.columns = j.at("columns").get<std::vector<std::string>>();
}

void to_json(Json& j, const FeatureScaler& s) {
  j = Json{{"mean1", s.mean1}, {"scale1", s.scale1}, {"mean2", s.mean2}, {"scale2", s.scale2},
           {"warnings", s.warnings}};
}

void from_json(const Json& j, FeatureScaler& s) {
  s.mean1 = j.at("mean1").get<std::vector<double>>();
  s.scale1 = j.at("scale1").get<std::vector<double>>();
  s.mean2 = j.at("mean2").get<std::vector<double>>();
  s.scale2 = j.at("scale2").get<std::vector<double>>();
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
}

void to_json(Json& j, const AgeScaler& s) { j = Json{{"mean", s.mean}, {"scale", s.scale}}; }

void from_json(const Json& j, AgeScaler& s) {
  s.mean = j.at("mean").get<double>();
  s.scale = j.at("scale").get<double>();
}

void to_json(Json& j, const FeaturePipeline& p) {
  j = Json{{"selection1", p.selection1}, {"selection2", p.selection2}, {"scaler", p.scaler}, {"age", p.age}};
}

void from_json(const Json& j, FeaturePipeline& p) {
  p.selection1 = j.at("selection1").get<FeatureSelection>();
  p.selection2 = j.at("selection2").get<FeatureSelection>();
  p.scaler = j.at("scaler").get<FeatureScaler>();
  p.age = j.at("age").get<AgeScaler>();
}

void to_json(Json& j, const LossBreakdown& b) {
  j = Json{{"regression", b.regression},         {"classification", b.classification},
           {"distance_ratio", b.distance_ratio}, {"reconstruction", b.reconstruction},
           {"adversarial", b.adversarial},       {"variational", b.variational},
           {"total", b.total},                   {"discriminator", b.discriminator}};
  for (auto& item : j.items()) {
    if (!std::isfinite(item.value().get<double>())) item.value() = format_double(item.value().get<double>());
  }
}

}  // namespace mavae
