#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mavae/data.hpp"
#include "mavae/errors.hpp"
#include "mavae/featsel.hpp"
#include "mavae/io.hpp"
#include "mavae/losses.hpp"
#include "mavae/model.hpp"
#include "mavae/objective.hpp"
#include "mavae/optim.hpp"

namespace mavae {

struct TrainConfig {
  LatentSpec latent;
  Architecture arch;
  std::size_t batch_size = 20;
  double learning_rate = 1e-3;
  double lr_reduction_factor = 0.25;
  std::size_t patience_epochs = 9;
  std::size_t early_stop_patience = 20;
  std::size_t max_epochs = 300;
  double min_improvement = 1e-4;  // years of validation MAE
  LossWeights weights;
  TaskMode mode = TaskMode::multitask;
  ModalityMode modality_mode = ModalityMode::both;
  std::pair<double, double> fusion_weights{0.5, 0.5};
  std::array<double, 2> unique_prior_means{0.0, 0.0};
  double validation_fraction = 0.1;  // carved from training rows when no split is given
  std::uint64_t seed = 0;

  void validate() const;
  ObjectiveSettings objective_settings() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class Variant { single_task, smri_only, fmri_only };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

TrainConfig make_variant(const TrainConfig& base, Variant v);
// Any cell of the modality x task grid.
TrainConfig make_variant(const TrainConfig& base, ModalityMode modality, TaskMode task);

// Feature selection applied before training.
struct SelectConfig {
  ForestConfig forest;
  std::size_t k1 = 256;  // capped at the available width
  std::size_t k2 = 256;
  bool enabled = true;

  friend bool operator==(const SelectConfig&, const SelectConfig&) = default;
};

// Everything needed to map a raw record to model space.
struct FeaturePipeline {
  FeatureSelection selection1;
  FeatureSelection selection2;
  FeatureScaler scaler;
  AgeScaler age;

  Dataset prepare(const Dataset& raw) const;

  friend bool operator==(const FeaturePipeline&, const FeaturePipeline&) = default;
};

struct SelectionReports {
  ImportanceReport report1;
  ImportanceReport report2;
};

// Forest importance on the training rows of each modality, keeping the top-k columns.
SelectionReports run_selection(const Dataset& raw, std::span<const std::size_t> train_rows,
                               const SelectConfig& cfg, FeatureSelection& sel1, FeatureSelection& sel2);

FeaturePipeline fit_pipeline(const Dataset& raw, std::span<const std::size_t> train_rows,
                             const SelectConfig& cfg, SelectionReports* reports = nullptr);

// Pipeline with a given column selection; scalers fit on train_rows.
FeaturePipeline fit_pipeline(const Dataset& raw, std::span<const std::size_t> train_rows,
                             FeatureSelection sel1, FeatureSelection sel2);

// Rows usable under a modality mode (unimodal modes need the active modality).
std::vector<std::size_t> usable_rows(const Dataset& ds, ModalityMode mode, std::span<const std::size_t> rows);

// Model-space minibatch from prepared (selected, standardized) data.
Batch make_batch(const Dataset& prepared, std::span<const std::size_t> rows, const AgeScaler& age,
                 ModalityMode mode);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Deterministic hold-out of round(fraction * n) rows (at least 1) for validation.
Split carve_validation(std::span<const std::size_t> rows, double fraction, std::uint64_t seed);

struct Optimizers {
  std::array<std::optional<AdamState>, kNumRoles> states;

  void set_learning_rate(double lr);
};

struct TrainState {
  ModelParams params;
  Optimizers optim;
};

TrainState init_train_state(const TrainConfig& cfg, std::size_t width1, std::size_t width2);

// Raised when a loss term turns non-finite during training.
class NumericAbort : public NumericError {
 public:
  NumericAbort(const std::string& what, LossBreakdown breakdown, std::string term, int phase)
      : NumericError(what), breakdown_(breakdown), term_(std::move(term)), phase_(phase) {}
  const LossBreakdown& breakdown() const { return breakdown_; }
  const std::string& term() const { return term_; }
  int phase() const { return phase_; }

 private:
  LossBreakdown breakdown_;
  std::string term_;
  int phase_;
};

// Phase 1: discriminator update on fresh generic codes and prior draws. Returns its loss.
double discriminator_step(TrainState& st, const Batch& batch, const TrainConfig& cfg, Rng& rng);

// Phase 2: encoders, decoders, regressor and (multitask only) classifier on a fresh forward pass.
LossBreakdown generator_step(TrainState& st, const Batch& batch, const TrainConfig& cfg, Rng& rng);

// Observes parameters before the step, after phase 1 and after phase 2.
using StepObserver =
    std::function<void(const ModelParams& before, const ModelParams& after_disc, const ModelParams& after_gen)>;

// Both phases; breakdown.discriminator carries the phase-1 loss.
LossBreakdown train_step(TrainState& st, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                         const StepObserver* observer = nullptr);

// Roles updated in phase 2 under a configuration.
std::vector<Role> generator_update_roles(const ModelParams& params, const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown train;    // mean over minibatches
  double val_mae = 0.0;   // years
  double learning_rate = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<double> wall_seconds;  // not part of the CSV

  std::string to_csv(const MetaHeader& meta = {}) const;
};

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  FeaturePipeline pipeline;
  std::size_t epoch = 0;
  double val_mae = 0.0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> checkpoint_to_bytes(const Checkpoint& ck);
Checkpoint checkpoint_from_bytes(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct FitOptions {
  bool verbose = false;  // one progress line per epoch on stdout
  const StepObserver* observer = nullptr;
};

struct FitResult {
  Checkpoint best;
  TrainLog log;
  TrainState final_state;
};

// Trains on split.train (raw row indices into `raw`) with early stopping on split.validation.
FitResult fit(const Dataset& raw, const Split& split, const TrainConfig& cfg, const FeaturePipeline& pipeline,
              const FitOptions& opts = {});

// Predicted ages in years for raw rows.
std::vector<double> predict_years(const Checkpoint& ck, const Dataset& raw, std::span<const std::size_t> rows);
std::vector<double> predict_years(const ModelParams& params, const TrainConfig& cfg, const Dataset& prepared,
                                  const AgeScaler& age, std::span<const std::size_t> rows);

double mean_absolute_error(std::span<const double> a, std::span<const double> b);

}  // namespace mavae
