#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mavae/io.hpp"
#include "mavae/matrix.hpp"

namespace mavae {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 12;
  std::size_t features_per_split = 0;  // 0 means ceil(m / 3)
  std::size_t min_samples_leaf = 2;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  std::size_t n_threads = 1;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean target of the node's samples
  double impurity_decrease = 0.0;
  std::size_t n_samples = 0;

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const;
};

struct Forest {
  std::vector<RegressionTree> trees;
  std::size_t n_features = 0;
  ForestConfig config;

  std::vector<double> predict(const Matrix& x) const;
};

// Fits on the given rows of (x, y); all rows when `rows` is empty.
// Rows are put in a canonical order first, so the fit does not depend on row order.
Forest fit_forest(const Matrix& x, std::span<const double> y, const ForestConfig& cfg,
                  std::span<const std::size_t> rows = {});

struct ImportanceReport {
  std::vector<double> importance;  // sums to 1
  std::vector<std::size_t> ranking;  // feature indices, most important first
  bool degenerate = false;  // every split gain was zero; importances set uniform
};

ImportanceReport importance(const Forest& forest);

// Report from raw per-feature scores (normalized here; ranking by descending score, ties by index).
ImportanceReport make_report(std::vector<double> raw_scores);

// k indices by descending importance, ties to the lower index.
std::vector<std::size_t> select_top_k(const ImportanceReport& report, std::size_t k);

// feature_name,importance,rank
std::string importance_csv(const ImportanceReport& report, const std::vector<std::string>& names,
                           const MetaHeader& meta = {});

struct FeatureSelection {
  std::string modality;
  std::vector<std::size_t> indices;  // into the modality's raw columns
  std::vector<std::string> columns;  // names of the selected columns, same order

  friend bool operator==(const FeatureSelection&, const FeatureSelection&) = default;
};

std::string selection_to_json(const FeatureSelection& sel);
FeatureSelection selection_from_json(const std::string& text);

}  // namespace mavae
