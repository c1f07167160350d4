#include "mavae/config.hpp"

#include "mavae/errors.hpp"
#include "mavae/serialize.hpp"

namespace mavae {

namespace {

void forbid_seed(const Json& j, const char* key, const std::string& where) {
  if (j.contains(key) && j.at(key).is_object() && j.at(key).contains("seed")) {
    throw ConfigError(where + ": seeds are set only at the top level");
  }
}

Json cv_to_json(const CvSettings& c) {
  return Json{{"folds", c.folds}, {"stratify", to_string(c.stratify)}, {"threads", c.threads}};
}

CvSettings cv_from_json(const Json& j) {
  reject_unknown_keys(j, {"folds", "stratify", "threads"}, "cv");
  CvSettings c;
  if (j.contains("folds")) c.folds = j.at("folds").get<std::size_t>();
  if (j.contains("stratify")) c.stratify = parse_stratify(j.at("stratify").get<std::string>());
  if (j.contains("threads")) c.threads = j.at("threads").get<std::size_t>();
  return c;
}

Json paths_to_json(const PathSettings& p) {
  return Json{{"dataset", p.dataset},       {"factors", p.factors},     {"checkpoint", p.checkpoint},
              {"split", p.split},           {"selection1", p.selection1}, {"selection2", p.selection2}};
}

PathSettings paths_from_json(const Json& j) {
  reject_unknown_keys(j, {"dataset", "factors", "checkpoint", "split", "selection1", "selection2"}, "paths");
  PathSettings p;
  auto read = [&](const char* key, std::string& out) {
    if (j.contains(key)) out = j.at(key).get<std::string>();
  };
  read("dataset", p.dataset);
  read("factors", p.factors);
  read("checkpoint", p.checkpoint);
  read("split", p.split);
  read("selection1", p.selection1);
  read("selection2", p.selection2);
  return p;
}

Json without_seed(Json j) {
  j.erase("seed");
  return j;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  synth.seed = s;
  train.seed = s;
  select.forest.seed = s;
}

void RunConfig::validate() const {
  synth.validate();
  select.forest.validate();
  train.validate();
  if (select.k1 == 0 || select.k2 == 0) throw ConfigError("select.k1 and select.k2 must be positive");
  if (cv.folds < 2) throw ConfigError("cv.folds must be at least 2");
  if (cv.threads == 0) throw ConfigError("cv.threads must be positive");
}

std::filesystem::path RunConfig::resolve(const std::string& p) const {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(j, {"seed", "synth", "select", "train", "cv", "paths"}, "config");
  forbid_seed(j, "synth", "synth");
  forbid_seed(j, "train", "train");
  if (j.contains("select") && j.at("select").is_object()) forbid_seed(j.at("select"), "forest", "select.forest");

  RunConfig cfg;
  cfg.base_dir = base_dir;
  try {
    if (j.contains("synth")) cfg.synth = j.at("synth").get<SynthConfig>();
    if (j.contains("select")) cfg.select = j.at("select").get<SelectConfig>();
    if (j.contains("train")) cfg.train = j.at("train").get<TrainConfig>();
    if (j.contains("cv")) cfg.cv = cv_from_json(j.at("cv"));
    if (j.contains("paths")) cfg.paths = paths_from_json(j.at("paths"));
    cfg.set_seed(j.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config has a value of the wrong type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_run_config(text, path.parent_path());
}

std::string resolved_config_json(const RunConfig& cfg) {
  Json select = cfg.select;
  select["forest"] = without_seed(select["forest"]);
  const Json j{{"seed", cfg.seed},
               {"synth", without_seed(cfg.synth)},
               {"select", select},
               {"train", without_seed(cfg.train)},
               {"cv", cv_to_json(cfg.cv)},
               {"paths", paths_to_json(cfg.paths)}};
  return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(resolved_config_json(cfg)); }

MetaHeader run_meta(const RunConfig& cfg) {
  return {{"seed", std::to_string(cfg.seed)}, {"config_hash", config_hash(cfg)}, {"version", kArtifactVersion}};
}

}  // namespace mavae
