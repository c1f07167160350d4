#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mavae/data.hpp"
#include "mavae/io.hpp"
#include "mavae/train.hpp"

namespace mavae {

struct BinStats {
  std::size_t n = 0;
  double mae = 0.0;      // nan when the bin is empty
  double mae_std = 0.0;  // population std of absolute errors
  double rmse = 0.0;

  friend bool operator==(const BinStats&, const BinStats&) = default;
};

struct MetricsReport {
  std::size_t n = 0;
  double mae = 0.0;
  double mae_std = 0.0;
  double rmse = 0.0;
  double pcc = 0.0;  // population formula; nan when undefined
  bool pcc_defined = true;
  std::array<BinStats, kNumAgeBins> bins;  // by chronological age

  // scope,n,mae,mae_std,rmse,pcc: one "all" row then one row per age bin.
  std::string to_csv(const MetaHeader& meta = {}) const;
};

MetricsReport compute_metrics(std::span<const double> y_true, std::span<const double> y_pred);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_std(std::span<const double> v);

struct FoldResult {
  std::size_t fold = 0;
  bool skipped = false;
  std::vector<std::size_t> rows;  // evaluated raw rows
  std::vector<double> y_true;
  std::vector<double> y_pred;
  MetricsReport metrics;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

struct CvReport {
  std::vector<FoldResult> folds;  // one per plan fold, in order
  MetricsReport pooled;           // over every evaluated prediction
  MeanStd fold_mae, fold_rmse, fold_pcc;  // across non-skipped folds
  std::vector<std::string> warnings;

  // fold,n,mae,rmse,pcc: k fold rows then a "pooled" row.
  std::string to_csv(const MetaHeader& meta = {}) const;
  // Structured summary with per-fold metrics and mean +/- std across folds.
  std::string summary_json() const;
};

struct CvOptions {
  std::size_t n_threads = 1;  // folds trained concurrently
  bool verbose = false;
  // Per-fold pipelines fit beforehand (shared across ablation cells); fit here when empty.
  const std::vector<FeaturePipeline>* pipelines = nullptr;
};

// Selection and standardization fit on each fold's training rows only.
std::vector<FeaturePipeline> fit_fold_pipelines(const Dataset& ds, const FoldPlan& plan, const SelectConfig& select);

// Training seed used for a fold; shared by every configuration trained on the plan.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

CvReport run_cv(const Dataset& ds, const FoldPlan& plan, const TrainConfig& cfg, const SelectConfig& select,
                const CvOptions& opts = {});

struct AblationRow {
  ModalityMode modality = ModalityMode::both;
  TaskMode task = TaskMode::multitask;
  std::string fold_hash;
  CvReport cv;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // {both, smri_only, fmri_only} x {multitask, single_task}

  // modality,task,n,mae,rmse,pcc,fold_mae_mean,fold_mae_std,fold_hash
  std::string to_csv(const MetaHeader& meta = {}) const;
  const AblationRow& row(ModalityMode modality, TaskMode task) const;
};

// SHA-256 of the plan's canonical JSON.
std::string fold_plan_hash(const FoldPlan& plan);

AblationReport run_ablation(const Dataset& ds, const FoldPlan& plan, const TrainConfig& base,
                            const SelectConfig& select, const CvOptions& opts = {});

struct ScatterSummary {
  std::size_t n = 0;
  double slope = 0.0;  // least-squares line of predicted on chronological
  double intercept = 0.0;
  double residual_std = 0.0;  // about that line, n - 2 degrees of freedom
  double ci_half_width = 0.0;  // 1.96 * residual_std

  friend bool operator==(const ScatterSummary&, const ScatterSummary&) = default;
};

ScatterSummary scatter_summary(std::span<const double> y_true, std::span<const double> y_pred);

// chronological,predicted,residual with residual = predicted - chronological.
std::string scatter_csv(std::span<const double> y_true, std::span<const double> y_pred, const MetaHeader& meta = {});
// slope,intercept,residual_std,ci_half_width,n
std::string scatter_summary_csv(const ScatterSummary& s, const MetaHeader& meta = {});

// Writes `path` and a companion "<stem>_summary.csv" beside it.
ScatterSummary export_scatter(std::span<const double> y_true, std::span<const double> y_pred,
                              const std::filesystem::path& path, const MetaHeader& meta = {});

struct ProbeModality {
  int modality = 0;
  double r2_generic = 0.0;
  double r2_unique = 0.0;
  double gap() const { return r2_generic - r2_unique; }
};

struct ProbeReport {
  std::vector<ProbeModality> modalities;  // active modalities only
  double mean_gap() const;
  std::string to_json() const;
};

// Ridge-regression R^2 of the true shared factors from posterior-mean generic and unique
// codes, fit on even rows and scored on odd rows. `factors` must list the dataset's ids.
ProbeReport disentanglement_probe(const Checkpoint& ck, const Dataset& raw, const SynthFactors& factors);
ProbeReport disentanglement_probe(const ModelParams& params, const Dataset& prepared, const SynthFactors& factors,
                                  std::span<const std::size_t> rows);

// Ridge R^2 (mean over target columns) of y from x; fit on `train`, scored on `test` rows.
double ridge_r2(const Matrix& x, const Matrix& y, std::span<const std::size_t> train,
                std::span<const std::size_t> test, double lambda = 1.0);

// Mean per-row reconstruction error from posterior means, over rows carrying both modalities.
struct ReconErrors {
  std::array<double, 2> own{0.0, 0.0};    // Dec_i(Gen z_i, Unq z_i)
  std::array<double, 2> cross{0.0, 0.0};  // Dec_i(Gen z_j, Unq z_i)
  std::size_t n = 0;
};

ReconErrors reconstruction_errors(const ModelParams& params, const Dataset& prepared,
                                  std::span<const std::size_t> rows);

// Deterministic (z = mu) loss terms on the given rows.
LossBreakdown evaluate_terms(const ModelParams& params, const TrainConfig& cfg, const Dataset& prepared,
                             const AgeScaler& age, std::span<const std::size_t> rows);

}  // namespace mavae
