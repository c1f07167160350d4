#pragma once

// JSON mappings for configuration and model types. Reading a JSON object rejects
// keys it does not know (ConfigError) and keeps defaults for keys it omits.

#include <initializer_list>
#include <string>

#include "json.hpp"

#include "mavae/data.hpp"
#include "mavae/featsel.hpp"
#include "mavae/losses.hpp"
#include "mavae/matrix.hpp"
#include "mavae/mlp.hpp"
#include "mavae/model.hpp"
#include "mavae/train.hpp"

namespace mavae {

using Json = nlohmann::json;

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known, const std::string& where);

void to_json(Json& j, const Matrix& m);
void from_json(const Json& j, Matrix& m);
void to_json(Json& j, const MlpSpec& s);
void from_json(const Json& j, MlpSpec& s);
void to_json(Json& j, const MlpParams& p);
void from_json(const Json& j, MlpParams& p);
void to_json(Json& j, const LatentSpec& s);
void from_json(const Json& j, LatentSpec& s);
void to_json(Json& j, const Architecture& a);
void from_json(const Json& j, Architecture& a);
void to_json(Json& j, const LossWeights& w);
void from_json(const Json& j, LossWeights& w);
void to_json(Json& j, const ModelParams& p);
void from_json(const Json& j, ModelParams& p);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
void to_json(Json& j, const ForestConfig& c);
void from_json(const Json& j, ForestConfig& c);
void to_json(Json& j, const SelectConfig& c);
void from_json(const Json& j, SelectConfig& c);
void to_json(Json& j, const SynthConfig& c);
void from_json(const Json& j, SynthConfig& c);
void to_json(Json& j, const FeatureSelection& s);
void from_json(const Json& j, FeatureSelection& s);
void to_json(Json& j, const FeatureScaler& s);
void from_json(const Json& j, FeatureScaler& s);
void to_json(Json& j, const AgeScaler& s);
void from_json(const Json& j, AgeScaler& s);
void to_json(Json& j, const FeaturePipeline& p);
void from_json(const Json& j, FeaturePipeline& p);
void to_json(Json& j, const LossBreakdown& b);

}  // namespace mavae
