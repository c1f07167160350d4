#pragma once

// One JSON file configures a whole run. The top-level seed drives every random
// stream; sub-sections may not carry their own seeds.

#include <cstdint>
#include <filesystem>
#include <string>

#include "mavae/data.hpp"
#include "mavae/io.hpp"
#include "mavae/train.hpp"

namespace mavae {

struct CvSettings {
  std::size_t folds = 10;
  Stratify stratify = Stratify::age_bin;
  std::size_t threads = 1;

  friend bool operator==(const CvSettings&, const CvSettings&) = default;
};

// Input locations, relative to the config file's directory unless absolute. Empty means unset.
struct PathSettings {
  std::string dataset;
  std::string factors;     // synthetic factor sidecar (probe)
  std::string checkpoint;  // eval input
  std::string split;       // train/validation rows written by `train`
  std::string selection1;  // sidecars written by `select`; selection is refit when unset
  std::string selection2;

  friend bool operator==(const PathSettings&, const PathSettings&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  SelectConfig select;
  TrainConfig train;
  CvSettings cv;
  PathSettings paths;
  std::filesystem::path base_dir;  // not serialized

  // Sets the master seed and every derived seed.
  void set_seed(std::uint64_t s);
  void validate() const;
  // Empty when the path is unset.
  std::filesystem::path resolve(const std::string& p) const;
};

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
// Missing or unreadable files raise ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical JSON with every default filled in.
std::string resolved_config_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);
// seed, config_hash, version
MetaHeader run_meta(const RunConfig& cfg);

}  // namespace mavae
