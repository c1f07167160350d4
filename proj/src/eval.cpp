#include "mavae/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mavae/errors.hpp"

namespace mavae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string cell(double v) { return format_double(v); }

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json metrics_json(const MetricsReport& m) {
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t b = 0; b < kNumAgeBins; ++b) {
    bins.push_back({{"bin", age_bin_label(b)},
                    {"n", m.bins[b].n},
                    {"mae", number_or_null(m.bins[b].mae)},
                    {"mae_std", number_or_null(m.bins[b].mae_std)},
                    {"rmse", number_or_null(m.bins[b].rmse)}});
  }
  return {{"n", m.n},
          {"mae", number_or_null(m.mae)},
          {"mae_std", number_or_null(m.mae_std)},
          {"rmse", number_or_null(m.rmse)},
          {"pcc", number_or_null(m.pcc)},
          {"pcc_defined", m.pcc_defined},
          {"bins", bins}};
}

nlohmann::json mean_std_json(const MeanStd& s) { return {{"mean", number_or_null(s.mean)}, {"std", number_or_null(s.std)}}; }

Eigen::MatrixXd to_eigen(const Matrix& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.cols()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < m.cols(); ++c) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = m(rows[i], c);
  return out;
}

double mean_row_norm(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "reconstruction error");
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
    total += std::sqrt(s);
  }
  return total / static_cast<double>(a.rows());
}

}  // namespace

MetricsReport compute_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw DimensionError("compute_metrics: length mismatch");
  if (y_true.empty()) throw InputError("compute_metrics: empty input");
  const std::size_t n = y_true.size();
  const double dn = static_cast<double>(n);

  MetricsReport r;
  r.n = n;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = y_pred[i] - y_true[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  r.mae = abs_sum / dn;
  r.rmse = std::sqrt(sq_sum / dn);
  double dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) dev += (std::abs(y_pred[i] - y_true[i]) - r.mae) * (std::abs(y_pred[i] - y_true[i]) - r.mae);
  r.mae_std = std::sqrt(dev / dn);

  double mt = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mt += y_true[i];
    mp += y_pred[i];
  }
  mt /= dn;
  mp /= dn;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = y_true[i] - mt, b = y_pred[i] - mp;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx > 0.0 && syy > 0.0) {
    r.pcc = std::clamp((sxy / dn) / (std::sqrt(sxx / dn) * std::sqrt(syy / dn)), -1.0, 1.0);
  } else {
    r.pcc = kNaN;
    r.pcc_defined = false;
  }

  std::array<std::vector<double>, kNumAgeBins> errs;
  for (std::size_t i = 0; i < n; ++i) errs[age_bin(y_true[i])].push_back(y_pred[i] - y_true[i]);
  for (std::size_t b = 0; b < kNumAgeBins; ++b) {
    BinStats& s = r.bins[b];
    s.n = errs[b].size();
    if (s.n == 0) {
      s.mae = s.mae_std = s.rmse = kNaN;
      continue;
    }
    double a = 0.0, q = 0.0;
    for (double e : errs[b]) {
      a += std::abs(e);
      q += e * e;
    }
    s.mae = a / static_cast<double>(s.n);
    s.rmse = std::sqrt(q / static_cast<double>(s.n));
    double v = 0.0;
    for (double e : errs[b]) v += (std::abs(e) - s.mae) * (std::abs(e) - s.mae);
    s.mae_std = std::sqrt(v / static_cast<double>(s.n));
  }
  return r;
}

std::string MetricsReport::to_csv(const MetaHeader& meta) const {
  MetaHeader full = meta;
  full.emplace_back("pcc_formula", "population");
  std::ostringstream out;
  out << render_meta(full) << "scope,n,mae,mae_std,rmse,pcc\n";
  out << "all," << n << ',' << cell(mae) << ',' << cell(mae_std) << ',' << cell(rmse) << ',' << cell(pcc) << '\n';
  for (std::size_t b = 0; b < kNumAgeBins; ++b) {
    out << age_bin_label(b) << ',' << bins[b].n << ',' << cell(bins[b].mae) << ',' << cell(bins[b].mae_std) << ','
        << cell(bins[b].rmse) << ",\n";
  }
  return out.str();
}

MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) return {kNaN, kNaN};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

std::string CvReport::to_csv(const MetaHeader& meta) const {
  std::ostringstream out;
  out << render_meta(meta) << "fold,n,mae,rmse,pcc,best_epoch,epochs\n";
  for (const auto& f : folds) {
    if (f.skipped) {
      out << f.fold << ",0,nan,nan,nan,,\n";
      continue;
    }
    out << f.fold << ',' << f.metrics.n << ',' << cell(f.metrics.mae) << ',' << cell(f.metrics.rmse) << ','
        << cell(f.metrics.pcc) << ',' << f.best_epoch << ',' << f.epochs_run << '\n';
  }
  out << "pooled," << pooled.n << ',' << cell(pooled.mae) << ',' << cell(pooled.rmse) << ',' << cell(pooled.pcc)
      << ",,\n";
  return out.str();
}

std::string CvReport::summary_json() const {
  nlohmann::json folds_j = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json j = {{"fold", f.fold}, {"skipped", f.skipped}};
    if (!f.skipped) {
      j["metrics"] = metrics_json(f.metrics);
      j["best_epoch"] = f.best_epoch;
      j["epochs_run"] = f.epochs_run;
    }
    folds_j.push_back(j);
  }
  const nlohmann::json j = {{"folds", folds_j},
                            {"pooled", metrics_json(pooled)},
                            {"across_folds",
                             {{"mae", mean_std_json(fold_mae)},
                              {"rmse", mean_std_json(fold_rmse)},
                              {"pcc", mean_std_json(fold_pcc)}}},
                            {"warnings", warnings}};
  return j.dump(2) + "\n";
}

std::vector<FeaturePipeline> fit_fold_pipelines(const Dataset& ds, const FoldPlan& plan, const SelectConfig& select) {
  if (plan.n != ds.size()) throw InputError("fold plan does not cover the dataset");
  std::vector<FeaturePipeline> out;
  out.reserve(plan.k());
  for (std::size_t f = 0; f < plan.k(); ++f) out.push_back(fit_pipeline(ds, plan.train_rows(f), select));
  return out;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) { return mix_seed(seed, 100 + fold); }

CvReport run_cv(const Dataset& ds, const FoldPlan& plan, const TrainConfig& cfg, const SelectConfig& select,
                const CvOptions& opts) {
  cfg.validate();
  if (plan.n != ds.size()) throw InputError("fold plan does not cover the dataset");
  if (plan.k() == 0) throw InputError("fold plan has no folds");
  std::vector<FeaturePipeline> own;
  const std::vector<FeaturePipeline>* pipelines = opts.pipelines;
  if (!pipelines) {
    own = fit_fold_pipelines(ds, plan, select);
    pipelines = &own;
  }
  if (pipelines->size() != plan.k()) throw InputError("one pipeline per fold is required");

  CvReport report;
  report.folds.resize(plan.k());
  std::vector<std::exception_ptr> errors(plan.k());
  std::mutex print_mu;

  auto run_fold = [&](std::size_t f) {
    FoldResult& out = report.folds[f];
    out.fold = f;
    const auto test = usable_rows(ds, cfg.modality_mode, plan.folds[f]);
    if (test.size() < 2) {
      out.skipped = true;
      return;
    }
    TrainConfig fcfg = cfg;
    fcfg.seed = fold_seed(cfg.seed, f);
    const auto train = usable_rows(ds, cfg.modality_mode, plan.train_rows(f));
    const Split split = carve_validation(train, cfg.validation_fraction, fcfg.seed);
    const FitResult res = fit(ds, split, fcfg, (*pipelines)[f]);
    out.rows = test;
    out.y_true = ds.ages(test);
    out.y_pred = predict_years(res.best, ds, test);
    out.metrics = compute_metrics(out.y_true, out.y_pred);
    out.best_epoch = res.best.epoch;
    out.epochs_run = res.log.epochs.size();
    if (opts.verbose) {
      std::lock_guard lock(print_mu);
      std::printf("fold %zu  n %zu  mae %.4f  best_epoch %zu  epochs %zu\n", f, test.size(), out.metrics.mae,
                  out.best_epoch, out.epochs_run);
      std::fflush(stdout);
    }
  };

  const std::size_t n_threads = std::clamp<std::size_t>(opts.n_threads, 1, plan.k());
  if (n_threads == 1) {
    for (std::size_t f = 0; f < plan.k(); ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < n_threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t f = next++; f < plan.k(); f = next++) {
          try {
            run_fold(f);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<double> all_true, all_pred, maes, rmses, pccs;
  for (const auto& f : report.folds) {
    if (f.skipped) {
      report.warnings.push_back("fold " + std::to_string(f.fold) + " skipped: fewer than 2 held-out rows");
      continue;
    }
    all_true.insert(all_true.end(), f.y_true.begin(), f.y_true.end());
    all_pred.insert(all_pred.end(), f.y_pred.begin(), f.y_pred.end());
    maes.push_back(f.metrics.mae);
    rmses.push_back(f.metrics.rmse);
    if (f.metrics.pcc_defined) pccs.push_back(f.metrics.pcc);
  }
  if (all_true.empty()) throw InputError("every fold was skipped");
  report.pooled = compute_metrics(all_true, all_pred);
  report.fold_mae = mean_std(maes);
  report.fold_rmse = mean_std(rmses);
  report.fold_pcc = mean_std(pccs);
  return report;
}

std::string fold_plan_hash(const FoldPlan& plan) { return sha256_hex(fold_plan_to_json(plan)); }

AblationReport run_ablation(const Dataset& ds, const FoldPlan& plan, const TrainConfig& base,
                            const SelectConfig& select, const CvOptions& opts) {
  if (ds.width(1) == 0 || ds.width(2) == 0) throw InputError("ablation needs both modalities");
  std::vector<FeaturePipeline> own;
  CvOptions shared = opts;
  if (!shared.pipelines) {
    own = fit_fold_pipelines(ds, plan, select);
    shared.pipelines = &own;
  }
  AblationReport report;
  for (ModalityMode m : {ModalityMode::both, ModalityMode::smri_only, ModalityMode::fmri_only}) {
    for (TaskMode t : {TaskMode::multitask, TaskMode::single_task}) {
      AblationRow row;
      row.modality = m;
      row.task = t;
      row.fold_hash = fold_plan_hash(plan);
      if (opts.verbose) std::printf("ablation %s / %s\n", to_string(m).c_str(), to_string(t).c_str());
      row.cv = run_cv(ds, plan, make_variant(base, m, t), select, shared);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

std::string AblationReport::to_csv(const MetaHeader& meta) const {
  std::ostringstream out;
  out << render_meta(meta) << "modality,task,n,mae,rmse,pcc,fold_mae_mean,fold_mae_std,fold_hash\n";
  for (const auto& r : rows) {
    const auto& p = r.cv.pooled;
    out << to_string(r.modality) << ',' << to_string(r.task) << ',' << p.n << ',' << cell(p.mae) << ','
        << cell(p.rmse) << ',' << cell(p.pcc) << ',' << cell(r.cv.fold_mae.mean) << ',' << cell(r.cv.fold_mae.std)
        << ',' << r.fold_hash << '\n';
  }
  return out.str();
}

const AblationRow& AblationReport::row(ModalityMode modality, TaskMode task) const {
  for (const auto& r : rows)
    if (r.modality == modality && r.task == task) return r;
  throw InputError("ablation report has no row for " + to_string(modality) + "/" + to_string(task));
}

ScatterSummary scatter_summary(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw DimensionError("scatter: length mismatch");
  const std::size_t n = y_true.size();
  if (n < 3) throw InputError("scatter summary needs at least 3 points");
  const double dn = static_cast<double>(n);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += y_true[i];
    my += y_pred[i];
  }
  mx /= dn;
  my /= dn;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (y_true[i] - mx) * (y_true[i] - mx);
    sxy += (y_true[i] - mx) * (y_pred[i] - my);
  }
  if (!(sxx > 0.0)) throw InputError("scatter summary needs varying chronological ages");
  ScatterSummary s;
  s.n = n;
  s.slope = sxy / sxx;
  s.intercept = my - s.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y_pred[i] - (s.intercept + s.slope * y_true[i]);
    sse += e * e;
  }
  s.residual_std = std::sqrt(sse / (dn - 2.0));
  s.ci_half_width = 1.96 * s.residual_std;
  return s;
}

std::string scatter_csv(std::span<const double> y_true, std::span<const double> y_pred, const MetaHeader& meta) {
  if (y_true.size() != y_pred.size()) throw DimensionError("scatter: length mismatch");
  std::ostringstream out;
  out << render_meta(meta) << "chronological,predicted,residual\n";
  for (std::size_t i = 0; i < y_true.size(); ++i)
    out << cell(y_true[i]) << ',' << cell(y_pred[i]) << ',' << cell(y_pred[i] - y_true[i]) << '\n';
  return out.str();
}

std::string scatter_summary_csv(const ScatterSummary& s, const MetaHeader& meta) {
  std::ostringstream out;
  out << render_meta(meta) << "slope,intercept,residual_std,ci_half_width,n\n"
      << cell(s.slope) << ',' << cell(s.intercept) << ',' << cell(s.residual_std) << ',' << cell(s.ci_half_width)
      << ',' << s.n << '\n';
  return out.str();
}

ScatterSummary export_scatter(std::span<const double> y_true, std::span<const double> y_pred,
                              const std::filesystem::path& path, const MetaHeader& meta) {
  const ScatterSummary s = scatter_summary(y_true, y_pred);
  write_text_file(path, scatter_csv(y_true, y_pred, meta));
  auto summary_path = path;
  summary_path.replace_filename(path.stem().string() + "_summary.csv");
  write_text_file(summary_path, scatter_summary_csv(s, meta));
  return s;
}

double ridge_r2(const Matrix& x, const Matrix& y, std::span<const std::size_t> train,
                std::span<const std::size_t> test, double lambda) {
  if (train.empty() || test.size() < 2) throw InputError("ridge_r2 needs training rows and two test rows");
  if (x.rows() != y.rows()) throw DimensionError("ridge_r2: row mismatch");
  Eigen::MatrixXd xt = to_eigen(x, train), xs = to_eigen(x, test);
  Eigen::MatrixXd yt = to_eigen(y, train), ys = to_eigen(y, test);
  const Eigen::RowVectorXd xm = xt.colwise().mean();
  Eigen::RowVectorXd xsd = ((xt.rowwise() - xm).array().square().colwise().mean()).sqrt();
  for (Eigen::Index c = 0; c < xsd.size(); ++c)
    if (!(xsd(c) > 0.0)) xsd(c) = 1.0;
  xt = (xt.rowwise() - xm).array().rowwise() / xsd.array();
  xs = (xs.rowwise() - xm).array().rowwise() / xsd.array();
  const Eigen::RowVectorXd ym = yt.colwise().mean();
  yt = yt.rowwise() - ym;

  Eigen::MatrixXd gram = xt.transpose() * xt;
  gram.diagonal().array() += lambda;
  const Eigen::MatrixXd beta = gram.ldlt().solve(xt.transpose() * yt);
  const Eigen::MatrixXd pred = (xs * beta).rowwise() + ym;

  double total = 0.0;
  std::size_t counted = 0;
  for (Eigen::Index c = 0; c < ys.cols(); ++c) {
    const double mean = ys.col(c).mean();
    const double sst = (ys.col(c).array() - mean).square().sum();
    if (!(sst > 0.0)) continue;
    const double sse = (ys.col(c) - pred.col(c)).squaredNorm();
    total += 1.0 - sse / sst;
    ++counted;
  }
  if (counted == 0) throw InputError("ridge_r2: targets are constant on the test rows");
  return total / static_cast<double>(counted);
}

double ProbeReport::mean_gap() const {
  if (modalities.empty()) return kNaN;
  double s = 0.0;
  for (const auto& m : modalities) s += m.gap();
  return s / static_cast<double>(modalities.size());
}

std::string ProbeReport::to_json() const {
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : modalities) {
    mods.push_back({{"modality", m.modality},
                    {"r2_generic", number_or_null(m.r2_generic)},
                    {"r2_unique", number_or_null(m.r2_unique)},
                    {"gap", number_or_null(m.gap())}});
  }
  return nlohmann::json{{"modalities", mods}, {"mean_gap", number_or_null(mean_gap())}}.dump(2) + "\n";
}

ProbeReport disentanglement_probe(const ModelParams& params, const Dataset& prepared, const SynthFactors& factors,
                                  std::span<const std::size_t> rows) {
  if (factors.ids.size() != prepared.size()) throw InputError("factor sidecar does not match the dataset");
  for (std::size_t i = 0; i < prepared.size(); ++i)
    if (factors.ids[i] != prepared.records[i].id) throw InputError("factor sidecar ids do not match the dataset");
  ProbeReport report;
  for (int m : {1, 2}) {
    if (!modality_active(params.modality_mode, m)) continue;
    const auto use = prepared.rows_with(m, rows);
    std::vector<std::size_t> even, odd;
    for (std::size_t i = 0; i < use.size(); ++i) (i % 2 == 0 ? even : odd).push_back(i);
    const LatentCode code = encode_pass(params, m, prepared.features(m, use), nullptr).code;
    const Matrix generic = code.mu.col_block(0, params.latent.generic_dim);
    const Matrix unique = code.mu.col_block(params.latent.generic_dim, params.latent.unique_dim);
    const Matrix target = factors.shared.gather_rows(use);
    ProbeModality pm;
    pm.modality = m;
    pm.r2_generic = ridge_r2(generic, target, even, odd);
    pm.r2_unique = ridge_r2(unique, target, even, odd);
    report.modalities.push_back(pm);
  }
  return report;
}

ProbeReport disentanglement_probe(const Checkpoint& ck, const Dataset& raw, const SynthFactors& factors) {
  const Dataset prepared = ck.pipeline.prepare(raw);
  return disentanglement_probe(ck.params, prepared, factors, usable_rows(prepared, ck.config.modality_mode, {}));
}

ReconErrors reconstruction_errors(const ModelParams& params, const Dataset& prepared,
                                  std::span<const std::size_t> rows) {
  if (params.modality_mode != ModalityMode::both) throw ConfigError("cross-reconstruction needs both modalities");
  const auto both = prepared.rows_with(2, prepared.rows_with(1, rows));
  if (both.empty()) throw InputError("no rows carry both modalities");
  const Matrix x1 = prepared.features(1, both), x2 = prepared.features(2, both);
  const LatentCode c1 = encode_pass(params, 1, x1, nullptr).code;
  const LatentCode c2 = encode_pass(params, 2, x2, nullptr).code;
  ReconErrors out;
  out.n = both.size();
  out.own[0] = mean_row_norm(x1, decode(params, 1, c1.generic(), c1.unique()));
  out.own[1] = mean_row_norm(x2, decode(params, 2, c2.generic(), c2.unique()));
  out.cross[0] = mean_row_norm(x1, cross_decode(params, 1, 2, c1, c2));
  out.cross[1] = mean_row_norm(x2, cross_decode(params, 2, 1, c2, c1));
  return out;
}

LossBreakdown evaluate_terms(const ModelParams& params, const TrainConfig& cfg, const Dataset& prepared,
                             const AgeScaler& age, std::span<const std::size_t> rows) {
  const Batch batch = make_batch(prepared, rows, age, cfg.modality_mode);
  return generator_objective(params, batch, ForwardNoise{}, cfg.objective_settings(), false).breakdown;
}

}  // namespace mavae
