#include "mavae/featsel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "json.hpp"

#include "mavae/errors.hpp"
#include "mavae/rng.hpp"

namespace mavae {

void ForestConfig::validate() const {
  if (n_trees == 0) throw ConfigError("forest needs at least one tree");
  if (min_samples_leaf == 0) throw ConfigError("min_samples_leaf must be at least 1");
  if (n_threads == 0) throw ConfigError("n_threads must be at least 1");
}

double RegressionTree::predict(std::span<const double> row) const {
  if (nodes.empty()) throw StateError("predict on an empty tree");
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

std::vector<double> Forest::predict(const Matrix& x) const {
  if (x.cols() != n_features) throw DimensionError("forest input width mismatch");
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row_span(r);
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(row);
    out[r] = s / static_cast<double>(trees.size());
  }
  return out;
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

class TreeBuilder {
 public:
  // `xt` is feature-major (features x samples).
  TreeBuilder(const Matrix& xt, const std::vector<double>& y, const ForestConfig& cfg, std::size_t mtry,
              Rng rng)
      : xt_(xt), y_(y), cfg_(cfg), mtry_(mtry), rng_(std::move(rng)) {}

  RegressionTree build(std::vector<std::size_t> samples) {
    grow(samples, 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<std::size_t>& idx, std::size_t depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sum = 0.0;
    for (std::size_t i : idx) sum += y_[i];
    const double mean = sum / static_cast<double>(idx.size());
    tree_.nodes[id].value = mean;
    tree_.nodes[id].n_samples = idx.size();

    if (depth >= cfg_.max_depth || idx.size() < 2 * cfg_.min_samples_leaf) return id;
    const Split best = find_split(idx, mean);
    if (best.feature < 0 || !(best.gain > 0.0)) return id;

    std::vector<std::size_t> left, right;
    const auto xb = xt_.row_span(static_cast<std::size_t>(best.feature));
    for (std::size_t i : idx) (xb[i] <= best.threshold ? left : right).push_back(i);
    tree_.nodes[id].feature = best.feature;
    tree_.nodes[id].threshold = best.threshold;
    tree_.nodes[id].impurity_decrease = best.gain;
    idx.clear();
    idx.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  Split find_split(const std::vector<std::size_t>& idx, double mean) {
    const std::size_t n = idx.size();
    const std::size_t min_leaf = cfg_.min_samples_leaf;
    double sse = 0.0;
    for (std::size_t i : idx) sse += (y_[i] - mean) * (y_[i] - mean);
    Split best;
    if (sse <= 0.0) return best;

    auto features = rng_.sample_without_replacement(xt_.rows(), mtry_);
    std::vector<std::pair<double, double>> col(n);  // (feature value, centred target)
    for (std::size_t f : features) {
      const auto xf = xt_.row_span(f);
      for (std::size_t k = 0; k < n; ++k) col[k] = {xf[idx[k]], y_[idx[k]] - mean};
      std::sort(col.begin(), col.end());
      double s_left = 0.0, q_left = 0.0;
      double s_total = 0.0, q_total = 0.0;
      for (const auto& [v, t] : col) {
        s_total += t;
        q_total += t * t;
      }
      for (std::size_t k = 0; k + 1 < n; ++k) {
        s_left += col[k].second;
        q_left += col[k].second * col[k].second;
        const std::size_t n_left = k + 1, n_right = n - n_left;
        if (n_left < min_leaf) continue;
        if (n_right < min_leaf) break;
        if (!(col[k].first < col[k + 1].first)) continue;
        const double s_right = s_total - s_left, q_right = q_total - q_left;
        const double sse_left = q_left - s_left * s_left / static_cast<double>(n_left);
        const double sse_right = q_right - s_right * s_right / static_cast<double>(n_right);
        const double gain = sse - sse_left - sse_right;
        const int fi = static_cast<int>(f);
        if (gain > best.gain || (gain == best.gain && best.feature >= 0 && fi < best.feature)) {
          double thr = 0.5 * (col[k].first + col[k + 1].first);
          if (!(thr < col[k + 1].first)) thr = col[k].first;
          best = {fi, thr, gain};
        }
      }
    }
    return best;
  }

  const Matrix& xt_;
  const std::vector<double>& y_;
  const ForestConfig& cfg_;
  std::size_t mtry_;
  Rng rng_;
  RegressionTree tree_;
};

bool row_less(const Matrix& x, const std::vector<double>& y, std::size_t a, std::size_t b) {
  if (y[a] != y[b]) return y[a] < y[b];
  const auto ra = x.row_span(a), rb = x.row_span(b);
  return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
}

}  // namespace

Forest fit_forest(const Matrix& x, std::span<const double> y, const ForestConfig& cfg,
                  std::span<const std::size_t> rows) {
  cfg.validate();
  if (y.size() != x.rows()) throw DimensionError("fit_forest: target length differs from row count");
  std::vector<std::size_t> use;
  if (rows.empty()) {
    use.resize(x.rows());
    std::iota(use.begin(), use.end(), 0);
  } else {
    use.assign(rows.begin(), rows.end());
  }
  if (use.size() < 2) throw InputError("fit_forest needs at least two samples");
  if (x.cols() == 0) throw InputError("fit_forest needs at least one feature");
  for (std::size_t r : use) {
    if (r >= x.rows()) throw DimensionError("fit_forest: row index out of range");
    if (!std::isfinite(y[r])) throw InputError("fit_forest: non-finite target");
    for (double v : x.row_span(r))
      if (!std::isfinite(v)) throw InputError("fit_forest: non-finite feature value");
  }

  // Canonical row order: by target, then feature values.
  std::vector<double> y_all(y.begin(), y.end());
  std::sort(use.begin(), use.end(),
            [&](std::size_t a, std::size_t b) { return row_less(x, y_all, a, b); });
  const Matrix xt = transpose(x.gather_rows(use));
  std::vector<double> yc(use.size());
  for (std::size_t i = 0; i < use.size(); ++i) yc[i] = y_all[use[i]];

  const std::size_t m = x.cols();
  const std::size_t mtry =
      cfg.features_per_split == 0 ? (m + 2) / 3 : std::min(cfg.features_per_split, m);

  Forest forest;
  forest.n_features = m;
  forest.config = cfg;
  forest.trees.resize(cfg.n_trees);
  const Rng master(cfg.seed);
  auto fit_tree = [&](std::size_t t) {
    Rng rng = master.split(t);
    const std::size_t n = yc.size();
    std::vector<std::size_t> sample(n);
    if (cfg.bootstrap) {
      for (auto& s : sample) s = rng.uniform_index(n);
      std::sort(sample.begin(), sample.end());
    } else {
      std::iota(sample.begin(), sample.end(), 0);
    }
    forest.trees[t] = TreeBuilder(xt, yc, cfg, mtry, rng.split(1)).build(std::move(sample));
  };

  const std::size_t workers = std::min(cfg.n_threads, cfg.n_trees);
  if (workers <= 1) {
    for (std::size_t t = 0; t < cfg.n_trees; ++t) fit_tree(t);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < cfg.n_trees; t += workers) fit_tree(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  return forest;
}

ImportanceReport make_report(std::vector<double> raw) {
  ImportanceReport rep;
  const std::size_t m = raw.size();
  double total = 0.0;
  for (double v : raw) {
    if (v < 0.0 || !std::isfinite(v)) throw InputError("importance scores must be finite and non-negative");
    total += v;
  }
  if (total > 0.0) {
    for (double& v : raw) v /= total;
  } else {
    rep.degenerate = true;
    raw.assign(m, m == 0 ? 0.0 : 1.0 / static_cast<double>(m));
  }
  rep.importance = std::move(raw);
  rep.ranking.resize(m);
  std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(), [&](std::size_t a, std::size_t b) {
    return rep.importance[a] > rep.importance[b];
  });
  return rep;
}

ImportanceReport importance(const Forest& forest) {
  if (forest.trees.empty()) throw StateError("importance of an unfitted forest");
  std::vector<double> raw(forest.n_features, 0.0);
  for (const auto& tree : forest.trees) {
    const double n_root = static_cast<double>(tree.nodes.front().n_samples);
    for (const auto& node : tree.nodes) {
      if (!node.is_leaf()) raw[static_cast<std::size_t>(node.feature)] += node.impurity_decrease / n_root;
    }
  }
  for (double& v : raw) v /= static_cast<double>(forest.trees.size());
  return make_report(std::move(raw));
}

std::vector<std::size_t> select_top_k(const ImportanceReport& report, std::size_t k) {
  if (k == 0 || k > report.ranking.size()) {
    throw ConfigError("select_top_k: k must lie in [1, " + std::to_string(report.ranking.size()) + "]");
  }
  return {report.ranking.begin(), report.ranking.begin() + static_cast<std::ptrdiff_t>(k)};
}

std::string importance_csv(const ImportanceReport& report, const std::vector<std::string>& names,
                           const MetaHeader& meta) {
  if (names.size() != report.importance.size()) throw DimensionError("importance_csv: name count mismatch");
  std::vector<std::size_t> rank(names.size());
  for (std::size_t r = 0; r < report.ranking.size(); ++r) rank[report.ranking[r]] = r + 1;
  std::string out = render_meta(meta);
  out += "feature_name,importance,rank\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    out += names[i] + "," + format_double(report.importance[i]) + "," + std::to_string(rank[i]) + "\n";
  }
  return out;
}

std::string selection_to_json(const FeatureSelection& sel) {
  nlohmann::json j;
  j["modality"] = sel.modality;
  j["indices"] = sel.indices;
  j["columns"] = sel.columns;
  return j.dump(2) + "\n";
}

FeatureSelection selection_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FeatureSelection sel;
    sel.modality = j.at("modality").get<std::string>();
    sel.indices = j.at("indices").get<std::vector<std::size_t>>();
    sel.columns = j.at("columns").get<std::vector<std::string>>();
    if (sel.indices.size() != sel.columns.size()) throw LoadError("selection sidecar: length mismatch");
    return sel;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("selection sidecar: ") + e.what());
  }
}

}  // namespace mavae
