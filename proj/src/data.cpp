#include "mavae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "mavae/errors.hpp"
#include "mavae/rng.hpp"

namespace mavae {

namespace {

std::vector<std::size_t> all_rows(std::size_t n, std::span<const std::size_t> rows) {
  if (!rows.empty()) return {rows.begin(), rows.end()};
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

void Dataset::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = "record " + std::to_string(i) + " (" + r.id + ")";
    if (!r.x1 && !r.x2) throw LoadError(where + ": no modality present");
    if (r.x1 && r.x1->size() != names1.size()) throw LoadError(where + ": modality-1 width mismatch");
    if (r.x2 && r.x2->size() != names2.size()) throw LoadError(where + ": modality-2 width mismatch");
    if (!(r.age > 0.0 && r.age < 120.0)) throw LoadError(where + ": age outside (0, 120)");
    if (r.sex != 0 && r.sex != 1) throw LoadError(where + ": sex must be 0 or 1");
  }
}

Matrix Dataset::features(int modality, std::span<const std::size_t> rows) const {
  const auto idx = all_rows(size(), rows);
  Matrix out(idx.size(), width(modality));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& rec = records.at(idx[i]);
    if (!rec.has(modality)) continue;
    const auto& f = rec.features(modality);
    std::copy(f.begin(), f.end(), out.row_span(i).begin());
  }
  return out;
}

std::vector<double> Dataset::presence(int modality, std::span<const std::size_t> rows) const {
  std::vector<double> out;
  for (std::size_t i : all_rows(size(), rows)) out.push_back(records.at(i).has(modality) ? 1.0 : 0.0);
  return out;
}

std::vector<double> Dataset::ages(std::span<const std::size_t> rows) const {
  std::vector<double> out;
  for (std::size_t i : all_rows(size(), rows)) out.push_back(records.at(i).age);
  return out;
}

std::vector<double> Dataset::sexes(std::span<const std::size_t> rows) const {
  std::vector<double> out;
  for (std::size_t i : all_rows(size(), rows)) out.push_back(records.at(i).sex);
  return out;
}

std::vector<std::size_t> Dataset::rows_with(int modality, std::span<const std::size_t> among) const {
  std::vector<std::size_t> out;
  for (std::size_t i : all_rows(size(), among))
    if (records.at(i).has(modality)) out.push_back(i);
  return out;
}

Dataset Dataset::select_columns(std::span<const std::size_t> cols1, std::span<const std::size_t> cols2) const {
  Dataset out;
  for (std::size_t c : cols1) out.names1.push_back(names1.at(c));
  for (std::size_t c : cols2) out.names2.push_back(names2.at(c));
  out.records.reserve(records.size());
  for (const auto& r : records) {
    SubjectRecord s{r.id, std::nullopt, std::nullopt, r.age, r.sex};
    if (r.x1) {
      s.x1.emplace();
      for (std::size_t c : cols1) s.x1->push_back(r.x1->at(c));
    }
    if (r.x2) {
      s.x2.emplace();
      for (std::size_t c : cols2) s.x2->push_back(r.x2->at(c));
    }
    out.records.push_back(std::move(s));
  }
  return out;
}

Dataset parse_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  Dataset ds;
  std::vector<std::size_t> cols1, cols2;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_commas(line);
    if (header.empty()) {
      header = cells;
      if (header.size() < 3 || header[0] != "id" || header[1] != "age" || header[2] != "sex") {
        throw LoadError("header must start with id,age,sex");
      }
      for (std::size_t c = 3; c < header.size(); ++c) {
        if (starts_with(header[c], "m1_")) {
          if (!cols2.empty()) throw LoadError("header: modality-1 columns must precede modality-2 columns");
          cols1.push_back(c);
          ds.names1.push_back(header[c]);
        } else if (starts_with(header[c], "m2_")) {
          cols2.push_back(c);
          ds.names2.push_back(header[c]);
        } else {
          throw LoadError("header: column '" + header[c] + "' has neither the m1_ nor the m2_ prefix");
        }
      }
      continue;
    }
    ++row;
    const std::string where = "row " + std::to_string(row);
    if (cells.size() != header.size()) {
      throw LoadError(where + ": expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    SubjectRecord rec;
    rec.id = cells[0];
    if (rec.id.empty()) throw LoadError(where + ": empty id");
    if (!parse_double(cells[1], rec.age) || !(rec.age > 0.0 && rec.age < 120.0)) {
      throw LoadError(where + ": age '" + cells[1] + "' is not a number in (0, 120)");
    }
    if (cells[2] == "0") rec.sex = 0;
    else if (cells[2] == "1") rec.sex = 1;
    else throw LoadError(where + ": sex '" + cells[2] + "' is not 0 or 1");

    auto read_block = [&](const std::vector<std::size_t>& cols, int m) -> std::optional<std::vector<double>> {
      if (cols.empty()) return std::nullopt;
      std::size_t blank = 0;
      for (std::size_t c : cols) blank += cells[c].empty();
      if (blank == cols.size()) return std::nullopt;
      if (blank != 0) throw LoadError(where + ": modality-" + std::to_string(m) + " block is partially empty");
      std::vector<double> v;
      v.reserve(cols.size());
      for (std::size_t c : cols) {
        double d = 0.0;
        if (!parse_double(cells[c], d) || !std::isfinite(d)) {
          throw LoadError(where + ": column " + header[c] + " value '" + cells[c] + "' is not a finite number");
        }
        v.push_back(d);
      }
      return v;
    };
    rec.x1 = read_block(cols1, 1);
    rec.x2 = read_block(cols2, 2);
    if (!rec.x1 && !rec.x2) throw LoadError(where + ": both modality blocks are empty");
    ds.records.push_back(std::move(rec));
  }
  if (header.empty()) throw LoadError("table is empty");
  return ds;
}

Dataset load_table(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("dataset file not found: " + path.string());
  try {
    return parse_table(read_text_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

std::string format_table(const Dataset& ds, const MetaHeader& meta) {
  std::string out = render_meta(meta);
  out += "id,age,sex";
  for (const auto& n : ds.names1) out += "," + n;
  for (const auto& n : ds.names2) out += "," + n;
  out += "\n";
  for (const auto& r : ds.records) {
    out += r.id + "," + format_double(r.age) + "," + std::to_string(r.sex);
    for (std::size_t c = 0; c < ds.names1.size(); ++c) out += "," + (r.x1 ? format_double((*r.x1)[c]) : "");
    for (std::size_t c = 0; c < ds.names2.size(); ++c) out += "," + (r.x2 ? format_double((*r.x2)[c]) : "");
    out += "\n";
  }
  return out;
}

void save_table(const Dataset& ds, const std::filesystem::path& path, const MetaHeader& meta) {
  write_text_file(path, format_table(ds, meta));
}

FeatureScaler fit_scaler(const Dataset& ds, std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw InputError("standardization needs at least one training row");
  FeatureScaler sc;
  for (int m : {1, 2}) {
    const std::size_t w = ds.width(m);
    std::vector<double> mean(w, 0.0), scale(w, 1.0);
    const auto rows = ds.rows_with(m, train_rows);
    if (!rows.empty()) {
      for (std::size_t r : rows) {
        const auto& f = ds.records[r].features(m);
        for (std::size_t c = 0; c < w; ++c) mean[c] += f[c];
      }
      for (double& v : mean) v /= static_cast<double>(rows.size());
      std::vector<double> var(w, 0.0);
      for (std::size_t r : rows) {
        const auto& f = ds.records[r].features(m);
        for (std::size_t c = 0; c < w; ++c) var[c] += (f[c] - mean[c]) * (f[c] - mean[c]);
      }
      for (std::size_t c = 0; c < w; ++c) {
        const double sd = std::sqrt(var[c] / static_cast<double>(rows.size()));
        if (sd > 0.0) {
          scale[c] = sd;
        } else {
          mean[c] = 0.0;
          sc.warnings.push_back("column " + ds.names(m)[c] + " has zero training variance; left unscaled");
        }
      }
    }
    (m == 1 ? sc.mean1 : sc.mean2) = std::move(mean);
    (m == 1 ? sc.scale1 : sc.scale2) = std::move(scale);
  }
  return sc;
}

Dataset FeatureScaler::apply(const Dataset& ds) const {
  if (ds.width(1) != mean1.size() || ds.width(2) != mean2.size()) {
    throw DimensionError("scaler widths disagree with the dataset");
  }
  Dataset out = ds;
  for (auto& r : out.records) {
    if (r.x1)
      for (std::size_t c = 0; c < r.x1->size(); ++c) (*r.x1)[c] = ((*r.x1)[c] - mean1[c]) / scale1[c];
    if (r.x2)
      for (std::size_t c = 0; c < r.x2->size(); ++c) (*r.x2)[c] = ((*r.x2)[c] - mean2[c]) / scale2[c];
  }
  return out;
}

Dataset standardize(const Dataset& ds, std::span<const std::size_t> train_rows, FeatureScaler* scaler_out) {
  FeatureScaler sc = fit_scaler(ds, train_rows);
  Dataset out = sc.apply(ds);
  if (scaler_out) *scaler_out = std::move(sc);
  return out;
}

AgeScaler fit_age_scaler(const Dataset& ds, std::span<const std::size_t> train_rows) {
  if (train_rows.empty()) throw InputError("age scaler needs at least one training row");
  double mean = 0.0;
  for (std::size_t r : train_rows) mean += ds.records.at(r).age;
  mean /= static_cast<double>(train_rows.size());
  double var = 0.0;
  for (std::size_t r : train_rows) var += (ds.records[r].age - mean) * (ds.records[r].age - mean);
  const double sd = std::sqrt(var / static_cast<double>(train_rows.size()));
  return {mean, sd > 0.0 ? sd : 1.0};
}

void SynthConfig::validate() const {
  if (n_subjects < 2) throw ConfigError("synth: n_subjects must be at least 2");
  if (shared_dim == 0 || unique_dim1 == 0 || unique_dim2 == 0) throw ConfigError("synth: factor dims must be >= 1");
  if (informative1 == 0 || informative2 == 0) throw ConfigError("synth: informative column counts must be >= 1");
  for (double v : {feature_noise, distractor_scale, age_noise, age_scale, sex_scale}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("synth: noise and scale values must be finite and >= 0");
  }
  if (!(missing1 >= 0.0 && missing1 < 1.0 && missing2 >= 0.0 && missing2 < 1.0)) {
    throw ConfigError("synth: missing rates must lie in [0, 1)");
  }
}

SynthResult synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const Rng master(cfg.seed);
  Rng mix_rng = master.split(1);
  Rng factor_rng = master.split(2);
  Rng noise_rng = master.split(3);
  Rng layout_rng = master.split(4);
  Rng miss_rng = master.split(5);

  const std::size_t n = cfg.n_subjects, ds_dim = cfg.shared_dim;
  SynthFactors fac;

  // Age and sex directions in shared-factor space.
  auto unit = [&](Rng& rng) {
    std::vector<double> v(ds_dim);
    double norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };
  fac.age_direction = unit(mix_rng);
  fac.sex_direction = cfg.sex_aligned ? fac.age_direction : unit(mix_rng);

  // Mixing matrices A_i: informative_i x (shared + unique_i).
  auto mixing = [&](std::size_t rows, std::size_t unique_dim) {
    Matrix a = gaussian_sample(mix_rng, rows, ds_dim + unique_dim);
    a *= 1.0 / std::sqrt(static_cast<double>(ds_dim + unique_dim));
    return a;
  };
  const Matrix a1 = mixing(cfg.informative1, cfg.unique_dim1);
  const Matrix a2 = mixing(cfg.informative2, cfg.unique_dim2);

  fac.shared = gaussian_sample(factor_rng, n, ds_dim);
  fac.unique1 = gaussian_sample(factor_rng, n, cfg.unique_dim1);
  fac.unique2 = gaussian_sample(factor_rng, n, cfg.unique_dim2);

  // Column layouts: informative columns scattered among distractors.
  auto layout = [&](std::size_t informative, std::size_t distractors, std::vector<std::size_t>& planted) {
    std::vector<std::size_t> perm(informative + distractors);
    std::iota(perm.begin(), perm.end(), 0);
    layout_rng.shuffle(perm.begin(), perm.end());
    // perm[j] = output column of source column j; sources [0, informative) are planted.
    planted.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(informative));
    std::sort(planted.begin(), planted.end());
    return perm;
  };
  const auto perm1 = layout(cfg.informative1, cfg.distractors1, fac.informative1);
  const auto perm2 = layout(cfg.informative2, cfg.distractors2, fac.informative2);

  auto modality_row = [&](const Matrix& a, const std::vector<std::size_t>& perm, std::size_t informative,
                          std::size_t distractors, std::span<const double> s, std::span<const double> u) {
    std::vector<double> latent(s.begin(), s.end());
    latent.insert(latent.end(), u.begin(), u.end());
    std::vector<double> row(informative + distractors);
    for (std::size_t j = 0; j < informative; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < latent.size(); ++k) v += a(j, k) * latent[k];
      if (cfg.nonlinear) v = std::tanh(v);
      row[perm[j]] = v + cfg.feature_noise * noise_rng.normal();
    }
    for (std::size_t j = informative; j < informative + distractors; ++j) {
      row[perm[j]] = cfg.distractor_scale * noise_rng.normal();
    }
    return row;
  };

  Dataset data;
  const std::size_t width = std::to_string(std::max(cfg.informative1 + cfg.distractors1,
                                                    cfg.informative2 + cfg.distractors2)).size();
  auto col_name = [&](const char* prefix, std::size_t j) {
    std::string num = std::to_string(j);
    return std::string(prefix) + std::string(width - num.size(), '0') + num;
  };
  for (std::size_t j = 0; j < cfg.informative1 + cfg.distractors1; ++j) data.names1.push_back(col_name("m1_c", j));
  for (std::size_t j = 0; j < cfg.informative2 + cfg.distractors2; ++j) data.names2.push_back(col_name("m2_c", j));

  const std::size_t id_width = std::to_string(n).size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = fac.shared.row_span(i);
    SubjectRecord rec;
    std::string num = std::to_string(i);
    rec.id = "s" + std::string(id_width - num.size(), '0') + num;

    double proj = 0.0, sex_logit = 0.0;
    for (std::size_t k = 0; k < ds_dim; ++k) {
      proj += fac.age_direction[k] * s[k];
      sex_logit += fac.sex_direction[k] * s[k];
    }
    const double age = cfg.age_mean + cfg.age_scale * (proj + cfg.age_noise * noise_rng.normal());
    rec.age = std::clamp(age, 18.0, 60.0);
    const double p = 1.0 / (1.0 + std::exp(-cfg.sex_scale * sex_logit));
    rec.sex = noise_rng.uniform() < p ? 1 : 0;

    rec.x1 = modality_row(a1, perm1, cfg.informative1, cfg.distractors1, s, fac.unique1.row_span(i));
    rec.x2 = modality_row(a2, perm2, cfg.informative2, cfg.distractors2, s, fac.unique2.row_span(i));
    const bool drop1 = miss_rng.uniform() < cfg.missing1;
    const bool drop2 = miss_rng.uniform() < cfg.missing2;
    if (drop1 && !drop2) rec.x1.reset();
    else if (drop2 && !drop1) rec.x2.reset();
    fac.ids.push_back(rec.id);
    data.records.push_back(std::move(rec));
  }
  SynthResult out{std::move(data), std::move(fac)};
  return out;
}

namespace {

nlohmann::json row_json(const Matrix& m, std::size_t r) {
  const auto row = m.row_span(r);
  return nlohmann::json(std::vector<double>(row.begin(), row.end()));
}

Matrix rows_from_json(const std::vector<nlohmann::json>& rows, const char* key, std::size_t cols) {
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto v = rows[r].at(key).get<std::vector<double>>();
    if (v.size() != cols) throw LoadError(std::string("factor sidecar: ragged ") + key);
    std::copy(v.begin(), v.end(), m.row_span(r).begin());
  }
  return m;
}

}  // namespace

std::string factors_to_json(const SynthFactors& f) {
  nlohmann::json j;
  j["informative"] = {{"m1", f.informative1}, {"m2", f.informative2}};
  j["age_direction"] = f.age_direction;
  j["sex_direction"] = f.sex_direction;
  j["order"] = f.ids;
  nlohmann::json subjects = nlohmann::json::object();
  for (std::size_t i = 0; i < f.ids.size(); ++i) {
    subjects[f.ids[i]] = {{"shared", row_json(f.shared, i)},
                          {"unique1", row_json(f.unique1, i)},
                          {"unique2", row_json(f.unique2, i)}};
  }
  j["subjects"] = std::move(subjects);
  return j.dump() + "\n";
}

SynthFactors factors_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SynthFactors f;
    f.informative1 = j.at("informative").at("m1").get<std::vector<std::size_t>>();
    f.informative2 = j.at("informative").at("m2").get<std::vector<std::size_t>>();
    f.age_direction = j.at("age_direction").get<std::vector<double>>();
    f.sex_direction = j.at("sex_direction").get<std::vector<double>>();
    f.ids = j.at("order").get<std::vector<std::string>>();
    std::vector<nlohmann::json> rows;
    for (const auto& id : f.ids) rows.push_back(j.at("subjects").at(id));
    if (rows.empty()) throw LoadError("factor sidecar has no subjects");
    f.shared = rows_from_json(rows, "shared", rows[0].at("shared").size());
    f.unique1 = rows_from_json(rows, "unique1", rows[0].at("unique1").size());
    f.unique2 = rows_from_json(rows, "unique2", rows[0].at("unique2").size());
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("factor sidecar: ") + e.what());
  }
}

std::string to_string(Stratify s) { return s == Stratify::none ? "none" : "age_bin"; }

Stratify parse_stratify(const std::string& s) {
  if (s == "none") return Stratify::none;
  if (s == "age_bin") return Stratify::age_bin;
  throw ConfigError("unknown stratification '" + s + "'");
}

std::size_t age_bin(double years) {
  if (years < 25.0) return 0;
  if (years < 35.0) return 1;
  if (years < 45.0) return 2;
  if (years < 55.0) return 3;
  return 4;
}

const char* age_bin_label(std::size_t bin) {
  static const char* labels[] = {"<25", "25-35", "35-45", "45-55", "other"};
  return bin < kNumAgeBins ? labels[bin] : "?";
}

std::vector<std::size_t> FoldPlan::train_rows(std::size_t f) const {
  std::vector<char> held(n, 0);
  for (std::size_t i : folds.at(f)) held[i] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!held[i]) out.push_back(i);
  return out;
}

FoldPlan kfold_plan(std::size_t n, std::size_t k, std::uint64_t seed, Stratify stratify,
                    std::span<const double> ages) {
  if (k < 2) throw ConfigError("kfold_plan: k must be at least 2");
  if (k > n) throw ConfigError("kfold_plan: k = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
  if (stratify == Stratify::age_bin && ages.size() != n) {
    throw InputError("kfold_plan: age stratification needs one age per sample");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  if (stratify == Stratify::age_bin) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return age_bin(ages[a]) < age_bin(ages[b]); });
  }
  FoldPlan plan;
  plan.n = n;
  plan.seed = seed;
  plan.stratify = stratify;
  plan.folds.assign(k, {});
  for (std::size_t i = 0; i < n; ++i) plan.folds[i % k].push_back(order[i]);
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

std::string fold_plan_to_json(const FoldPlan& plan) {
  nlohmann::json j;
  j["n"] = plan.n;
  j["seed"] = plan.seed;
  j["stratify"] = to_string(plan.stratify);
  j["folds"] = plan.folds;
  return j.dump() + "\n";
}

FoldPlan fold_plan_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FoldPlan p;
    p.n = j.at("n").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.stratify = parse_stratify(j.at("stratify").get<std::string>());
    p.folds = j.at("folds").get<std::vector<std::vector<std::size_t>>>();
    std::vector<char> seen(p.n, 0);
    std::size_t total = 0;
    for (const auto& f : p.folds) {
      for (std::size_t i : f) {
        if (i >= p.n || seen[i]) throw LoadError("fold plan: folds do not partition 0..n-1");
        seen[i] = 1;
        ++total;
      }
    }
    if (total != p.n) throw LoadError("fold plan: folds do not cover 0..n-1");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("fold plan: ") + e.what());
  }
}

}  // namespace mavae
