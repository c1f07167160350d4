#include "mavae/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "mavae/serialize.hpp"

namespace mavae {

namespace {

constexpr const char* kCheckpointMagic = "mavae-checkpoint";
constexpr int kCheckpointFormat = 1;

constexpr std::size_t slot(Role r) { return static_cast<std::size_t>(r); }

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void check_arch(const Architecture& a) {
  auto positive = [](const std::vector<std::size_t>& v, const char* what) {
    for (std::size_t w : v)
      if (w == 0) throw ConfigError(std::string(what) + " widths must be positive");
  };
  positive(a.encoder_hidden, "encoder_hidden");
  positive(a.decoder_hidden, "decoder_hidden");
  positive(a.regressor_hidden, "regressor_hidden");
  if (a.head_hidden == 0) throw ConfigError("head_hidden must be positive");
}

}  // namespace

void TrainConfig::validate() const {
  latent.validate();
  weights.validate();
  check_arch(arch);
  validate_fusion_weights(fusion_weights);
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(lr_reduction_factor > 0.0 && lr_reduction_factor < 1.0)) {
    throw ConfigError("lr_reduction_factor must lie in (0, 1)");
  }
  if (patience_epochs == 0) throw ConfigError("patience_epochs must be positive");
  if (early_stop_patience == 0) throw ConfigError("early_stop_patience must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (!(min_improvement >= 0.0)) throw ConfigError("min_improvement must be non-negative");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  for (double m : unique_prior_means)
    if (!std::isfinite(m)) throw ConfigError("unique_prior_means must be finite");
}

ObjectiveSettings TrainConfig::objective_settings() const {
  ObjectiveSettings s;
  s.weights = weights;
  s.fusion_weights = fusion_weights;
  s.unique_prior_means = unique_prior_means;
  return s;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::single_task: return "single_task";
    case Variant::smri_only: return "smri_only";
    case Variant::fmri_only: return "fmri_only";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "single_task") return Variant::single_task;
  if (s == "smri_only") return Variant::smri_only;
  if (s == "fmri_only") return Variant::fmri_only;
  throw ConfigError("unknown variant '" + s + "'");
}

TrainConfig make_variant(const TrainConfig& base, ModalityMode modality, TaskMode task) {
  TrainConfig c = base;
  c.modality_mode = modality;
  c.mode = task;
  if (task == TaskMode::single_task) c.weights.classification = 0.0;
  return c;
}

TrainConfig make_variant(const TrainConfig& base, Variant v) {
  switch (v) {
    case Variant::single_task: return make_variant(base, base.modality_mode, TaskMode::single_task);
    case Variant::smri_only: return make_variant(base, ModalityMode::smri_only, base.mode);
    case Variant::fmri_only: return make_variant(base, ModalityMode::fmri_only, base.mode);
  }
  return base;
}

Dataset FeaturePipeline::prepare(const Dataset& raw) const {
  return scaler.apply(raw.select_columns(selection1.indices, selection2.indices));
}

SelectionReports run_selection(const Dataset& raw, std::span<const std::size_t> train_rows,
                               const SelectConfig& cfg, FeatureSelection& sel1, FeatureSelection& sel2) {
  SelectionReports reports;
  for (int m : {1, 2}) {
    FeatureSelection& sel = m == 1 ? sel1 : sel2;
    ImportanceReport& report = m == 1 ? reports.report1 : reports.report2;
    const std::size_t width = raw.width(m);
    const std::size_t k = std::min(m == 1 ? cfg.k1 : cfg.k2, width);
    sel = FeatureSelection{};
    sel.modality = m == 1 ? "smri" : "fmri";
    if (width == 0) continue;
    const auto rows = raw.rows_with(m, train_rows);
    if (cfg.enabled && rows.size() >= 2) {
      ForestConfig fc = cfg.forest;
      fc.seed = mix_seed(cfg.forest.seed, static_cast<std::uint64_t>(m));
      const Matrix x = raw.features(m, rows);
      const auto y = raw.ages(rows);
      report = importance(fit_forest(x, y, fc));
      sel.indices = select_top_k(report, k);
    } else {
      report = make_report(std::vector<double>(width, 1.0));
      sel.indices = iota_indices(k);
    }
    for (std::size_t i : sel.indices) sel.columns.push_back(raw.names(m)[i]);
  }
  return reports;
}

FeaturePipeline fit_pipeline(const Dataset& raw, std::span<const std::size_t> train_rows, FeatureSelection sel1,
                             FeatureSelection sel2) {
  FeaturePipeline p;
  const Dataset selected = raw.select_columns(sel1.indices, sel2.indices);
  p.scaler = fit_scaler(selected, train_rows);
  p.age = fit_age_scaler(raw, train_rows);
  p.selection1 = std::move(sel1);
  p.selection2 = std::move(sel2);
  return p;
}

FeaturePipeline fit_pipeline(const Dataset& raw, std::span<const std::size_t> train_rows, const SelectConfig& cfg,
                             SelectionReports* reports) {
  FeatureSelection sel1, sel2;
  auto r = run_selection(raw, train_rows, cfg, sel1, sel2);
  if (reports) *reports = std::move(r);
  return fit_pipeline(raw, train_rows, std::move(sel1), std::move(sel2));
}

std::vector<std::size_t> usable_rows(const Dataset& ds, ModalityMode mode, std::span<const std::size_t> rows) {
  switch (mode) {
    case ModalityMode::smri_only: return ds.rows_with(1, rows);
    case ModalityMode::fmri_only: return ds.rows_with(2, rows);
    case ModalityMode::both: break;
  }
  std::vector<std::size_t> out;
  const auto all = rows.empty() ? iota_indices(ds.size()) : std::vector<std::size_t>(rows.begin(), rows.end());
  for (std::size_t r : all)
    if (ds.records.at(r).has(1) || ds.records.at(r).has(2)) out.push_back(r);
  return out;
}

Batch make_batch(const Dataset& prepared, std::span<const std::size_t> rows, const AgeScaler& age,
                 ModalityMode mode) {
  if (rows.empty()) throw InputError("batch needs at least one row");
  Batch b;
  for (int m : {1, 2}) {
    Matrix& x = m == 1 ? b.x1 : b.x2;
    std::vector<double>& mask = m == 1 ? b.mask1 : b.mask2;
    if (modality_active(mode, m)) {
      x = prepared.features(m, rows);
      mask = prepared.presence(m, rows);
    } else {
      mask.assign(rows.size(), 0.0);
    }
  }
  for (double y : prepared.ages(rows)) b.age.push_back(age.to_model(y));
  b.sex = prepared.sexes(rows);
  return b;
}

Split carve_validation(std::span<const std::size_t> rows, double fraction, std::uint64_t seed) {
  if (rows.size() < 2) throw InputError("need at least two rows to carve a validation set");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
  std::vector<std::size_t> order(rows.begin(), rows.end());
  Rng rng = Rng(seed).split(2);
  rng.shuffle(order.begin(), order.end());
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(order.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 1);
  Split s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

void Optimizers::set_learning_rate(double lr) {
  for (auto& s : states)
    if (s) s->learning_rate = lr;
}

TrainState init_train_state(const TrainConfig& cfg, std::size_t width1, std::size_t width2) {
  cfg.validate();
  ModelShape shape;
  shape.latent = cfg.latent;
  shape.arch = cfg.arch;
  shape.width1 = width1;
  shape.width2 = width2;
  shape.modality_mode = cfg.modality_mode;
  Rng rng = Rng(cfg.seed).split(1);
  TrainState st;
  st.params = init_model(shape, rng);
  for (Role r : st.params.roles()) st.optim.states[slot(r)] = make_adam_state(st.params.net(r).params, cfg.learning_rate);
  return st;
}

std::vector<Role> generator_update_roles(const ModelParams& params, const TrainConfig& cfg) {
  std::vector<Role> roles;
  for (Role r : {Role::enc1, Role::enc2, Role::dec1, Role::dec2, Role::regressor, Role::classifier}) {
    if (!params.has(r)) continue;
    if (r == Role::classifier && cfg.mode == TaskMode::single_task) continue;
    roles.push_back(r);
  }
  return roles;
}

double discriminator_step(TrainState& st, const Batch& batch, const TrainConfig& cfg, Rng& rng) {
  (void)cfg;
  const auto noise = draw_noise(rng, st.params, batch.size());
  const auto prior = draw_prior(rng, st.params, batch.size());
  DiscriminatorResult res;
  try {
    res = discriminator_objective(st.params, batch, noise, prior, true);
  } catch (const NumericError& e) {
    LossBreakdown bd;
    bd.discriminator = std::numeric_limits<double>::quiet_NaN();
    throw NumericAbort(e.what(), bd, "discriminator", 1);
  }
  auto& state = st.optim.states[slot(Role::disc)];
  if (!state) throw StateError("no optimizer state for the discriminator");
  adam_step(st.params.net(Role::disc).params, res.grads, *state);
  return res.loss;
}

LossBreakdown generator_step(TrainState& st, const Batch& batch, const TrainConfig& cfg, Rng& rng) {
  const auto noise = draw_noise(rng, st.params, batch.size());
  GeneratorResult res;
  try {
    res = generator_objective(st.params, batch, noise, cfg.objective_settings(), true);
  } catch (const NumericError& e) {
    LossBreakdown bd;
    bd.total = std::numeric_limits<double>::quiet_NaN();
    throw NumericAbort(e.what(), bd, "forward", 2);
  }
  const std::string bad = res.breakdown.first_non_finite();
  if (!bad.empty()) throw NumericAbort("loss term '" + bad + "' is not finite", res.breakdown, bad, 2);
  for (Role r : generator_update_roles(st.params, cfg)) {
    auto& state = st.optim.states[slot(r)];
    if (!state || !res.grads[slot(r)]) throw StateError("missing optimizer state or gradient for " + to_string(r));
    adam_step(st.params.net(r).params, *res.grads[slot(r)], *state);
  }
  return res.breakdown;
}

LossBreakdown train_step(TrainState& st, const Batch& batch, const TrainConfig& cfg, Rng& rng,
                         const StepObserver* observer) {
  std::optional<ModelParams> before, after_disc;
  if (observer) before = st.params;
  const double d = discriminator_step(st, batch, cfg, rng);
  if (observer) after_disc = st.params;
  LossBreakdown bd = generator_step(st, batch, cfg, rng);
  bd.discriminator = d;
  if (observer) (*observer)(*before, *after_disc, st.params);
  return bd;
}

std::string TrainLog::to_csv(const MetaHeader& meta) const {
  std::ostringstream out;
  out << render_meta(meta);
  out << "epoch,regression,classification,distance_ratio,reconstruction,adversarial,variational,total,"
         "discriminator,val_mae,lr\n";
  for (const auto& e : epochs) {
    const auto& t = e.train;
    out << e.epoch;
    for (double v : {t.regression, t.classification, t.distance_ratio, t.reconstruction, t.adversarial,
                     t.variational, t.total, t.discriminator, e.val_mae, e.learning_rate}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::uint8_t> checkpoint_to_bytes(const Checkpoint& ck) {
  Json j{{"magic", kCheckpointMagic},
         {"format_version", kCheckpointFormat},
         {"artifact_version", kArtifactVersion},
         {"config", ck.config},
         {"params", ck.params},
         {"pipeline", ck.pipeline},
         {"epoch", ck.epoch},
         {"val_mae", ck.val_mae}};
  return Json::to_cbor(j);
}

Checkpoint checkpoint_from_bytes(std::span<const std::uint8_t> bytes) {
  Json j;
  try {
    j = Json::from_cbor(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint is not valid CBOR: ") + e.what());
  }
  if (!j.is_object() || j.value("magic", "") != kCheckpointMagic) throw LoadError("not a checkpoint file");
  if (j.value("format_version", -1) != kCheckpointFormat) throw LoadError("unsupported checkpoint format version");
  try {
    Checkpoint ck;
    ck.config = j.at("config").get<TrainConfig>();
    ck.params = j.at("params").get<ModelParams>();
    ck.pipeline = j.at("pipeline").get<FeaturePipeline>();
    ck.epoch = j.at("epoch").get<std::size_t>();
    ck.val_mae = j.at("val_mae").get<double>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = checkpoint_to_bytes(ck);
  write_text_file(path, std::string(bytes.begin(), bytes.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  const std::vector<std::uint8_t> bytes(text.begin(), text.end());
  return checkpoint_from_bytes(bytes);
}

double mean_absolute_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("mean_absolute_error: length mismatch");
  if (a.empty()) throw InputError("mean_absolute_error: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

std::vector<double> predict_years(const ModelParams& params, const TrainConfig& cfg, const Dataset& prepared,
                                  const AgeScaler& age, std::span<const std::size_t> rows) {
  const Batch batch = make_batch(prepared, rows, age, cfg.modality_mode);
  const Inference inf = infer(params, batch, cfg.fusion_weights);
  std::vector<double> out;
  out.reserve(inf.age.size());
  for (double v : inf.age) out.push_back(age.to_years(v));
  return out;
}

std::vector<double> predict_years(const Checkpoint& ck, const Dataset& raw, std::span<const std::size_t> rows) {
  Dataset subset;
  subset.names1 = raw.names1;
  subset.names2 = raw.names2;
  for (std::size_t r : rows) subset.records.push_back(raw.records.at(r));
  const Dataset prepared = ck.pipeline.prepare(subset);
  return predict_years(ck.params, ck.config, prepared, ck.pipeline.age, iota_indices(subset.size()));
}

FitResult fit(const Dataset& raw, const Split& split, const TrainConfig& cfg, const FeaturePipeline& pipeline,
              const FitOptions& opts) {
  cfg.validate();
  const Dataset prepared = pipeline.prepare(raw);
  const auto train_rows = usable_rows(prepared, cfg.modality_mode, split.train);
  const auto val_rows = usable_rows(prepared, cfg.modality_mode, split.validation);
  if (train_rows.empty()) throw InputError("no usable training rows");
  if (val_rows.empty()) throw InputError("no usable validation rows");
  const auto val_truth = prepared.ages(val_rows);

  FitResult result;
  result.final_state = init_train_state(cfg, prepared.width(1), prepared.width(2));
  TrainState& st = result.final_state;
  result.best.config = cfg;
  result.best.pipeline = pipeline;

  const Rng root(cfg.seed);
  double lr = cfg.learning_rate;
  double best_val = std::numeric_limits<double>::infinity();   // checkpoint selection
  double plateau_ref = std::numeric_limits<double>::infinity();  // schedule reference
  std::size_t plateau = 0, since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = root.split(1000 + epoch);
    std::vector<std::size_t> order = train_rows;
    rng.shuffle(order.begin(), order.end());

    LossBreakdown sum;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      const Batch batch = make_batch(prepared, rows, pipeline.age, cfg.modality_mode);
      sum += train_step(st, batch, cfg, rng, opts.observer);
      ++n_batches;
    }
    sum *= 1.0 / static_cast<double>(n_batches);

    const auto pred = predict_years(st.params, cfg, prepared, pipeline.age, val_rows);
    const double val = mean_absolute_error(val_truth, pred);
    if (!std::isfinite(val)) throw NumericAbort("validation MAE is not finite", sum, "val_mae", 2);

    result.log.epochs.push_back(EpochLog{epoch, sum, val, lr});
    result.log.wall_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (opts.verbose) {
      std::printf("epoch %zu  loss %.6g  disc %.6g  val_mae %.4f  lr %.3g\n", epoch, sum.total, sum.discriminator,
                  val, lr);
      std::fflush(stdout);
    }

    if (val < best_val) {
      best_val = val;
      result.best.params = st.params;
      result.best.epoch = epoch;
      result.best.val_mae = val;
    }
    if (val < plateau_ref - cfg.min_improvement) {
      plateau_ref = val;
      plateau = 0;
      since_best = 0;
    } else {
      ++plateau;
      ++since_best;
      if (since_best >= cfg.early_stop_patience) break;
      if (plateau >= cfg.patience_epochs) {
        lr *= cfg.lr_reduction_factor;
        st.optim.set_learning_rate(lr);
        plateau = 0;
      }
    }
  }
  return result;
}

}  // namespace mavae
