#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mavae/io.hpp"
#include "mavae/matrix.hpp"

namespace mavae {

struct SubjectRecord {
  std::string id;
  std::optional<std::vector<double>> x1;
  std::optional<std::vector<double>> x2;
  double age = 0.0;
  int sex = 0;

  bool has(int modality) const { return modality == 1 ? x1.has_value() : x2.has_value(); }
  const std::vector<double>& features(int modality) const { return modality == 1 ? *x1 : *x2; }

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

struct Dataset {
  std::vector<SubjectRecord> records;
  std::vector<std::string> names1;  // modality-1 column names
  std::vector<std::string> names2;

  std::size_t size() const { return records.size(); }
  std::size_t width(int modality) const { return modality == 1 ? names1.size() : names2.size(); }
  const std::vector<std::string>& names(int modality) const { return modality == 1 ? names1 : names2; }

  // Throws LoadError on any broken record invariant.
  void validate() const;

  // Feature rows for `rows` (all rows when empty); absent modality rows are zero.
  Matrix features(int modality, std::span<const std::size_t> rows = {}) const;
  std::vector<double> presence(int modality, std::span<const std::size_t> rows = {}) const;
  std::vector<double> ages(std::span<const std::size_t> rows = {}) const;
  std::vector<double> sexes(std::span<const std::size_t> rows = {}) const;
  // Indices of records that carry the modality.
  std::vector<std::size_t> rows_with(int modality, std::span<const std::size_t> among = {}) const;

  // Keeps only the listed columns of each modality, in the listed order.
  Dataset select_columns(std::span<const std::size_t> cols1, std::span<const std::size_t> cols2) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Comma-separated table: id,age,sex,<m1_ columns>,<m2_ columns>.
// Lines starting with '#' are metadata and skipped on load.
Dataset parse_table(const std::string& text);
Dataset load_table(const std::filesystem::path& path);
std::string format_table(const Dataset& ds, const MetaHeader& meta = {});
void save_table(const Dataset& ds, const std::filesystem::path& path, const MetaHeader& meta = {});

// Per-column z-scoring constants; columns with zero training variance pass through.
struct FeatureScaler {
  std::vector<double> mean1, scale1;
  std::vector<double> mean2, scale2;
  std::vector<std::string> warnings;

  Dataset apply(const Dataset& ds) const;

  friend bool operator==(const FeatureScaler&, const FeatureScaler&) = default;
};

FeatureScaler fit_scaler(const Dataset& ds, std::span<const std::size_t> train_rows);

// Convenience: fit on train_rows and apply to every row.
Dataset standardize(const Dataset& ds, std::span<const std::size_t> train_rows, FeatureScaler* scaler_out = nullptr);

struct AgeScaler {
  double mean = 0.0;
  double scale = 1.0;

  double to_model(double years) const { return (years - mean) / scale; }
  double to_years(double v) const { return v * scale + mean; }

  friend bool operator==(const AgeScaler&, const AgeScaler&) = default;
};

AgeScaler fit_age_scaler(const Dataset& ds, std::span<const std::size_t> train_rows);

struct SynthConfig {
  std::size_t n_subjects = 2000;
  std::size_t shared_dim = 8;
  std::size_t unique_dim1 = 4;
  std::size_t unique_dim2 = 4;
  std::size_t informative1 = 12;  // columns mixing [s; u1]
  std::size_t informative2 = 12;
  std::size_t distractors1 = 120;
  std::size_t distractors2 = 120;
  double feature_noise = 0.3;
  double distractor_scale = 1.0;
  double age_noise = 0.1;  // in units of the age factor's std
  double age_mean = 39.0;
  double age_scale = 7.0;
  double sex_scale = 2.0;   // logit scale
  bool sex_aligned = true;  // sex logit direction equals the age direction in s
  bool nonlinear = false;
  double missing1 = 0.0;  // probability a record lacks modality 1
  double missing2 = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Ground-truth factors per subject, in dataset row order.
struct SynthFactors {
  std::vector<std::string> ids;
  Matrix shared;   // n x shared_dim
  Matrix unique1;  // n x unique_dim1
  Matrix unique2;
  std::vector<std::size_t> informative1;  // column indices of planted features
  std::vector<std::size_t> informative2;
  std::vector<double> age_direction;  // w
  std::vector<double> sex_direction;  // v

  friend bool operator==(const SynthFactors&, const SynthFactors&) = default;
};

struct SynthResult {
  Dataset data;
  SynthFactors factors;
};

SynthResult synth_generate(const SynthConfig& cfg);

std::string factors_to_json(const SynthFactors& f);
SynthFactors factors_from_json(const std::string& text);

enum class Stratify { none, age_bin };

std::string to_string(Stratify s);
Stratify parse_stratify(const std::string& s);

// Age bins: 0 (<25), 1 [25,35), 2 [35,45), 3 [45,55), 4 other.
inline constexpr std::size_t kNumAgeBins = 5;
std::size_t age_bin(double years);
const char* age_bin_label(std::size_t bin);

struct FoldPlan {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  Stratify stratify = Stratify::none;
  std::vector<std::vector<std::size_t>> folds;  // each sorted ascending

  std::size_t k() const { return folds.size(); }
  // Every index not in fold `f`, ascending.
  std::vector<std::size_t> train_rows(std::size_t f) const;

  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

// `ages` is required when stratifying by age bin.
FoldPlan kfold_plan(std::size_t n, std::size_t k, std::uint64_t seed, Stratify stratify = Stratify::none,
                    std::span<const double> ages = {});

std::string fold_plan_to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const std::string& text);

}  // namespace mavae
