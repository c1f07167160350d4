#include "mavae/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mavae/config.hpp"
#include "mavae/errors.hpp"
#include "mavae/eval.hpp"
#include "mavae/serialize.hpp"

namespace mavae {

namespace {

namespace fs = std::filesystem;

struct Artifact {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::size_t bytes = 0;
};

// Writes files under the output directory and remembers their hashes for the manifest.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  fs::path write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    write_text_file(p, content);
    artifacts_.push_back({name, sha256_hex(content), content.size()});
    return p;
  }

  void write_manifest(const std::string& command, const RunConfig& cfg) {
    std::sort(artifacts_.begin(), artifacts_.end(), [](const Artifact& a, const Artifact& b) { return a.path < b.path; });
    Json list = Json::array();
    for (const auto& a : artifacts_) list.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
    const Json m{{"command", command},
                 {"version", kArtifactVersion},
                 {"seed", cfg.seed},
                 {"config_hash", config_hash(cfg)},
                 {"artifacts", list}};
    write_text_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::vector<Artifact> artifacts_;
};

struct Context {
  std::string command;
  RunConfig cfg;
  MetaHeader meta;
  Outputs* outputs = nullptr;
  std::ostream* out = nullptr;
};

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

fs::path required_path(const RunConfig& cfg, const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string("paths.") + key + " is required for this command");
  return cfg.resolve(value);
}

Dataset load_dataset(const RunConfig& cfg) { return load_table(required_path(cfg, cfg.paths.dataset, "dataset")); }

MetaHeader with(MetaHeader meta, const std::string& key, const std::string& value) {
  meta.emplace_back(key, value);
  return meta;
}

std::string split_json(const Split& s) { return Json{{"train", s.train}, {"validation", s.validation}}.dump() + "\n"; }

Split split_from_json(const std::string& text, std::size_t n) {
  try {
    const Json j = Json::parse(text);
    Split s{j.at("train").get<std::vector<std::size_t>>(), j.at("validation").get<std::vector<std::size_t>>()};
    for (auto* v : {&s.train, &s.validation})
      for (std::size_t r : *v)
        if (r >= n) throw LoadError("split refers to row " + std::to_string(r) + " beyond the dataset");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed split file: ") + e.what());
  }
}

std::string predictions_csv(const Dataset& ds, std::span<const std::size_t> rows, std::span<const double> pred,
                            const MetaHeader& meta, std::span<const std::size_t> folds = {}) {
  std::ostringstream o;
  o << render_meta(meta) << (folds.empty() ? "" : "fold,") << "id,chronological,predicted\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!folds.empty()) o << folds[i] << ',';
    o << ds.records[rows[i]].id << ',' << format_double(ds.records[rows[i]].age) << ',' << format_double(pred[i])
      << '\n';
  }
  return o.str();
}

void maybe_scatter(Context& c, std::span<const double> y_true, std::span<const double> y_pred) {
  try {
    const ScatterSummary s = scatter_summary(y_true, y_pred);
    c.outputs->write("scatter.csv", scatter_csv(y_true, y_pred, c.meta));
    c.outputs->write("scatter_summary.csv", scatter_summary_csv(s, c.meta));
  } catch (const InputError& e) {
    *c.out << "scatter export skipped: " << e.what() << "\n";
  }
}

void cmd_synth(Context& c) {
  const SynthResult r = synth_generate(c.cfg.synth);
  c.outputs->write("dataset.csv", format_table(r.data, c.meta));
  c.outputs->write("factors.json", factors_to_json(r.factors));
  *c.out << "synth: n=" << r.data.size() << " smri_columns=" << r.data.width(1)
         << " fmri_columns=" << r.data.width(2) << " seed=" << c.cfg.seed << "\n";
}

void cmd_select(Context& c) {
  const Dataset ds = load_dataset(c.cfg);
  FeatureSelection s1, s2;
  const SelectionReports reports = run_selection(ds, all_rows(ds.size()), c.cfg.select, s1, s2);
  c.outputs->write("selection_smri.json", selection_to_json(s1));
  c.outputs->write("selection_fmri.json", selection_to_json(s2));
  if (ds.width(1) > 0) c.outputs->write("importance_smri.csv", importance_csv(reports.report1, ds.names1, c.meta));
  if (ds.width(2) > 0) c.outputs->write("importance_fmri.csv", importance_csv(reports.report2, ds.names2, c.meta));
  *c.out << "select: kept " << s1.indices.size() << " of " << ds.width(1) << " smri and " << s2.indices.size()
         << " of " << ds.width(2) << " fmri columns\n";
}

FeatureSelection load_selection(const RunConfig& cfg, const std::string& path, const char* key, const Dataset& ds,
                                int m) {
  FeatureSelection s = selection_from_json(read_text_file(required_path(cfg, path, key)));
  for (std::size_t i = 0; i < s.indices.size(); ++i) {
    if (s.indices[i] >= ds.width(m)) throw LoadError("selection index beyond the dataset width");
    if (i < s.columns.size() && s.columns[i] != ds.names(m)[s.indices[i]]) {
      throw LoadError("selection column '" + s.columns[i] + "' does not match the dataset");
    }
  }
  return s;
}

void cmd_train(Context& c) {
  const Dataset ds = load_dataset(c.cfg);
  const TrainConfig& tc = c.cfg.train;
  const Split split = carve_validation(usable_rows(ds, tc.modality_mode, {}), tc.validation_fraction, c.cfg.seed);
  FeaturePipeline pipeline;
  if (!c.cfg.paths.selection1.empty() || !c.cfg.paths.selection2.empty()) {
    FeatureSelection s1 = load_selection(c.cfg, c.cfg.paths.selection1, "selection1", ds, 1);
    FeatureSelection s2 = load_selection(c.cfg, c.cfg.paths.selection2, "selection2", ds, 2);
    pipeline = fit_pipeline(ds, split.train, std::move(s1), std::move(s2));
  } else {
    pipeline = fit_pipeline(ds, split.train, c.cfg.select);
  }
  FitOptions opts;
  opts.verbose = true;
  const FitResult res = fit(ds, split, tc, pipeline, opts);

  const auto bytes = checkpoint_to_bytes(res.best);
  c.outputs->write("checkpoint.ckpt", std::string(bytes.begin(), bytes.end()));
  c.outputs->write("train_log.csv", res.log.to_csv(c.meta));
  c.outputs->write("split.json", split_json(split));
  c.outputs->write("selection_smri.json", selection_to_json(pipeline.selection1));
  c.outputs->write("selection_fmri.json", selection_to_json(pipeline.selection2));
  const auto val = usable_rows(ds, tc.modality_mode, split.validation);
  const auto pred = predict_years(res.best, ds, val);
  const auto metrics = compute_metrics(ds.ages(val), pred);
  c.outputs->write("metrics_validation.csv", metrics.to_csv(c.meta));
  *c.out << "train: best epoch " << res.best.epoch << " of " << res.log.epochs.size() << ", validation MAE "
         << format_double(res.best.val_mae) << "\n";
}

void cmd_eval(Context& c) {
  const Checkpoint ck = load_checkpoint(required_path(c.cfg, c.cfg.paths.checkpoint, "checkpoint"));
  const Dataset ds = load_dataset(c.cfg);
  std::vector<std::size_t> rows;
  if (!c.cfg.paths.split.empty()) {
    rows = split_from_json(read_text_file(c.cfg.resolve(c.cfg.paths.split)), ds.size()).validation;
  }
  rows = usable_rows(ds, ck.config.modality_mode, rows);
  if (rows.empty()) throw InputError("no rows to evaluate");
  const auto y_true = ds.ages(rows);
  const auto y_pred = predict_years(ck, ds, rows);
  const auto metrics = compute_metrics(y_true, y_pred);
  c.outputs->write("metrics.csv", metrics.to_csv(c.meta));
  c.outputs->write("predictions.csv", predictions_csv(ds, rows, y_pred, c.meta));
  maybe_scatter(c, y_true, y_pred);
  if (!c.cfg.paths.factors.empty()) {
    const SynthFactors factors = factors_from_json(read_text_file(c.cfg.resolve(c.cfg.paths.factors)));
    c.outputs->write("probe.json", disentanglement_probe(ck, ds, factors).to_json());
  }
  *c.out << "eval: n=" << metrics.n << " MAE " << format_double(metrics.mae) << " RMSE "
         << format_double(metrics.rmse) << " PCC " << format_double(metrics.pcc) << "\n";
}

FoldPlan make_plan(const RunConfig& cfg, const Dataset& ds) {
  return kfold_plan(ds.size(), cfg.cv.folds, cfg.seed, cfg.cv.stratify, ds.ages());
}

void cmd_cv(Context& c) {
  const Dataset ds = load_dataset(c.cfg);
  const FoldPlan plan = make_plan(c.cfg, ds);
  c.outputs->write("folds.json", fold_plan_to_json(plan));
  CvOptions opts;
  opts.n_threads = c.cfg.cv.threads;
  opts.verbose = true;
  const CvReport r = run_cv(ds, plan, c.cfg.train, c.cfg.select, opts);
  const MetaHeader meta = with(c.meta, "fold_hash", fold_plan_hash(plan));
  c.outputs->write("cv.csv", r.to_csv(meta));
  c.outputs->write("cv_summary.json", r.summary_json());
  c.outputs->write("metrics.csv", r.pooled.to_csv(meta));
  std::vector<std::size_t> rows, folds;
  std::vector<double> y_true, y_pred;
  for (const auto& f : r.folds) {
    rows.insert(rows.end(), f.rows.begin(), f.rows.end());
    folds.insert(folds.end(), f.rows.size(), f.fold);
    y_true.insert(y_true.end(), f.y_true.begin(), f.y_true.end());
    y_pred.insert(y_pred.end(), f.y_pred.begin(), f.y_pred.end());
  }
  c.outputs->write("predictions.csv", predictions_csv(ds, rows, y_pred, meta, folds));
  maybe_scatter(c, y_true, y_pred);
  for (const auto& w : r.warnings) *c.out << "warning: " << w << "\n";
  *c.out << "cv: " << plan.k() << " folds, pooled MAE " << format_double(r.pooled.mae) << " (fold mean "
         << format_double(r.fold_mae.mean) << " +/- " << format_double(r.fold_mae.std) << ")\n";
}

void cmd_ablate(Context& c) {
  const Dataset ds = load_dataset(c.cfg);
  const FoldPlan plan = make_plan(c.cfg, ds);
  c.outputs->write("folds.json", fold_plan_to_json(plan));
  CvOptions opts;
  opts.n_threads = c.cfg.cv.threads;
  opts.verbose = true;
  const AblationReport r = run_ablation(ds, plan, c.cfg.train, c.cfg.select, opts);
  c.outputs->write("ablation.csv", r.to_csv(c.meta));
  Json summary = Json::array();
  for (const auto& row : r.rows) {
    summary.push_back({{"modality", to_string(row.modality)},
                       {"task", to_string(row.task)},
                       {"fold_hash", row.fold_hash},
                       {"cv", Json::parse(row.cv.summary_json())}});
  }
  c.outputs->write("ablation_summary.json", summary.dump(2) + "\n");
  for (const auto& row : r.rows) {
    *c.out << "ablate: " << to_string(row.modality) << " / " << to_string(row.task) << " pooled MAE "
           << format_double(row.cv.pooled.mae) << "\n";
  }
}

void write_numeric_dump(const fs::path& path, const NumericError& e) {
  Json j{{"error", e.what()}};
  if (const auto* a = dynamic_cast<const NumericAbort*>(&e)) {
    j["term"] = a->term();
    j["phase"] = a->phase();
    j["breakdown"] = a->breakdown();
  }
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal adversarial variational autoencoder for brain-age estimation"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "generate a synthetic two-modality dataset"},
      {"select", "rank features with a random forest and keep the top k"},
      {"train", "train one model with early stopping"},
      {"eval", "evaluate a checkpoint"},
      {"cv", "k-fold cross-validation"},
      {"ablate", "modality x task ablation under shared folds"}};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    seed_opts.push_back(sub->add_option("--seed", seed, "override the configured seed"));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::size_t which = 0;
  while (!subs[which]->parsed()) ++which;
  const std::string command = commands[which].first;

  Context c;
  c.command = command;
  c.out = &out;
  Outputs outputs{fs::path(out_dir)};
  c.outputs = &outputs;
  try {
    c.cfg = load_run_config(config_path);
    if (seed_opts[which]->count() > 0) c.cfg.set_seed(seed);
    c.cfg.validate();
    c.meta = run_meta(c.cfg);

    static const std::map<std::string, std::function<void(Context&)>> handlers = {
        {"synth", cmd_synth}, {"select", cmd_select}, {"train", cmd_train},
        {"eval", cmd_eval},   {"cv", cmd_cv},         {"ablate", cmd_ablate}};
    handlers.at(command)(c);
    outputs.write("resolved_config.json", resolved_config_json(c.cfg));
    outputs.write_manifest(command, c.cfg);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const LoadError& e) {
    err << "load error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    const fs::path dump = fs::path(out_dir) / "numeric_abort.json";
    try {
      write_numeric_dump(dump, e);
      err << "numeric abort: " << e.what() << "\ndiagnostic dump: " << dump.string() << "\n";
    } catch (const std::exception& w) {
      err << "numeric abort: " << e.what() << "\n(dump not written: " << w.what() << ")\n";
    }
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace mavae
