#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "mavae/data.hpp"
#include "mavae/errors.hpp"

using namespace mavae;

namespace {

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

// Least-squares residual norm of y regressed on [1, x].
Eigen::MatrixXd lstsq_residual(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(y);
  return y - design * coef;
}

const char* kSmallTable =
    "# version: test\n"
    "id,age,sex,m1_a,m1_b,m2_a\n"
    "a,30,1,1.5,2,3\n"
    "b,41.25,0,,,7\n"
    "c,22,1,0,-1,\n";

}  // namespace

TEST_CASE("load_table: well-formed rows, missing blocks and metadata lines") {
  Dataset ds = parse_table(kSmallTable);
  REQUIRE(ds.size() == 3);
  CHECK(ds.names1 == std::vector<std::string>{"m1_a", "m1_b"});
  CHECK(ds.names2 == std::vector<std::string>{"m2_a"});
  CHECK(ds.records[0].x1 == std::vector<double>{1.5, 2.0});
  CHECK_FALSE(ds.records[1].x1.has_value());
  CHECK(ds.records[1].age == 41.25);
  CHECK_FALSE(ds.records[2].x2.has_value());
  CHECK(ds.presence(2) == std::vector<double>{1, 1, 0});
  CHECK(ds.features(1) == Matrix{{1.5, 2}, {0, 0}, {0, -1}});
  CHECK_NOTHROW(ds.validate());
  CHECK(parse_table(format_table(ds)) == ds);
}

TEST_CASE("load_table: errors name the offending row") {
  CHECK_THROWS_AS(parse_table(""), LoadError);
  CHECK_THROWS_AS(parse_table("# only metadata\n"), LoadError);
  auto message = [](const std::string& text) {
    try {
      parse_table(text);
    } catch (const LoadError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const std::string head = "id,age,sex,m1_a,m2_a\n";
  CHECK(message(head + "a,30,1,1,2\nb,30,1,1\n").find("row 2") != std::string::npos);
  CHECK(message(head + "a,30,1,x,2\n").find("row 1") != std::string::npos);
  CHECK(message(head + "a,130,1,1,2\n").find("age") != std::string::npos);
  CHECK(message(head + "a,30,2,1,2\n").find("sex") != std::string::npos);
  CHECK(message(head + "a,30,1,,\n").find("row 1") != std::string::npos);
  CHECK(message("id,age,sex,zz\n").find("prefix") != std::string::npos);
  CHECK(message("id,age,sex,m1_a,m1_b,m2_a\na,30,1,1,,2\n").find("partially") != std::string::npos);
  CHECK_THROWS_AS(load_table("/nonexistent/table.csv"), IoError);
}

TEST_CASE("standardize uses training rows only and passes constant columns through") {
  Dataset ds = parse_table(
      "id,age,sex,m1_a,m1_b\n"
      "a,30,1,1,5\n"
      "b,31,0,3,5\n"
      "c,32,1,100,5\n");
  const std::vector<std::size_t> train{0, 1};
  FeatureScaler sc;
  Dataset z = standardize(ds, train, &sc);
  CHECK(sc.mean1 == std::vector<double>{2.0, 0.0});
  CHECK(sc.scale1 == std::vector<double>{1.0, 1.0});
  CHECK(sc.warnings.size() == 1);
  CHECK(z.records[0].x1 == std::vector<double>{-1.0, 5.0});
  CHECK(z.records[1].x1 == std::vector<double>{1.0, 5.0});
  CHECK(z.records[2].x1 == std::vector<double>{98.0, 5.0});
  CHECK(sc.apply(ds) == z);
  CHECK_THROWS_AS(fit_scaler(ds, {}), InputError);
}

TEST_CASE("standardized training columns have zero mean") {
  SynthConfig cfg;
  cfg.n_subjects = 200;
  cfg.seed = 3;
  Dataset ds = synth_generate(cfg).data;
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < ds.size(); i += 2) train.push_back(i);
  Dataset z = standardize(ds, train);
  Matrix x = z.features(1, train);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
    CHECK(std::abs(mean / static_cast<double>(x.rows())) < 1e-12);
  }
}

TEST_CASE("synth_generate: deterministic, clamped and correctly shaped") {
  SynthConfig cfg;
  cfg.n_subjects = 300;
  cfg.seed = 11;
  SynthResult a = synth_generate(cfg), b = synth_generate(cfg);
  CHECK(a.data == b.data);
  CHECK(a.factors == b.factors);
  CHECK(format_table(a.data) == format_table(b.data));
  CHECK(a.data.size() == 300);
  CHECK(a.data.width(1) == cfg.informative1 + cfg.distractors1);
  CHECK(a.factors.informative1.size() == cfg.informative1);
  for (const auto& r : a.data.records) {
    CHECK(r.age >= 18.0);
    CHECK(r.age <= 60.0);
  }
  cfg.seed = 12;
  CHECK_FALSE(synth_generate(cfg).data == a.data);
  CHECK_NOTHROW(a.data.validate());
}

TEST_CASE("synth_generate: noiseless linear features lie in the factor span") {
  SynthConfig cfg;
  cfg.n_subjects = 100;
  cfg.feature_noise = 0.0;
  cfg.nonlinear = false;
  cfg.seed = 5;
  SynthResult res = synth_generate(cfg);
  const auto& f = res.factors;
  for (int m : {1, 2}) {
    const auto& planted = m == 1 ? f.informative1 : f.informative2;
    const Matrix& u = m == 1 ? f.unique1 : f.unique2;
    Eigen::MatrixXd x = to_eigen(res.data.features(m));
    Eigen::MatrixXd inf(x.rows(), static_cast<Eigen::Index>(planted.size()));
    for (std::size_t j = 0; j < planted.size(); ++j) inf.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(planted[j]));
    Eigen::MatrixXd latent(x.rows(), static_cast<Eigen::Index>(cfg.shared_dim + u.cols()));
    latent << to_eigen(f.shared), to_eigen(u);
    CHECK(lstsq_residual(latent, inf).cwiseAbs().maxCoeff() < 1e-10);
    // Rank of the planted block equals the factor dimension.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(inf);
    lu.setThreshold(1e-9);
    CHECK(lu.rank() == static_cast<Eigen::Index>(cfg.shared_dim + u.cols()));
  }
  // With noise the residual is no longer zero.
  cfg.feature_noise = 0.1;
  SynthResult noisy = synth_generate(cfg);
  Eigen::MatrixXd x = to_eigen(noisy.data.features(1));
  Eigen::MatrixXd col = x.col(static_cast<Eigen::Index>(noisy.factors.informative1[0]));
  Eigen::MatrixXd latent(x.rows(), static_cast<Eigen::Index>(cfg.shared_dim + cfg.unique_dim1));
  latent << to_eigen(noisy.factors.shared), to_eigen(noisy.factors.unique1);
  CHECK(lstsq_residual(latent, col).norm() > 1e-3);
}

TEST_CASE("synth_generate: shared factors explain age when age noise is small") {
  SynthConfig cfg;
  cfg.n_subjects = 1000;
  cfg.age_noise = 0.1;
  cfg.seed = 8;
  SynthResult res = synth_generate(cfg);
  Eigen::MatrixXd age(static_cast<Eigen::Index>(res.data.size()), 1);
  for (std::size_t i = 0; i < res.data.size(); ++i) age(static_cast<Eigen::Index>(i), 0) = res.data.records[i].age;
  const Eigen::MatrixXd resid = lstsq_residual(to_eigen(res.factors.shared), age);
  const double ss_tot = (age.array() - age.mean()).square().sum();
  const double r2 = 1.0 - resid.squaredNorm() / ss_tot;
  CAPTURE(r2);
  CHECK(r2 >= 0.9);
}

TEST_CASE("synth_generate: missing modality rates and factor sidecar round-trip") {
  SynthConfig cfg;
  cfg.n_subjects = 400;
  cfg.missing1 = 0.2;
  cfg.missing2 = 0.2;
  cfg.seed = 2;
  SynthResult res = synth_generate(cfg);
  std::size_t miss1 = 0, miss2 = 0;
  for (const auto& r : res.data.records) {
    CHECK((r.x1 || r.x2));
    miss1 += !r.x1;
    miss2 += !r.x2;
  }
  CHECK(miss1 > 40);
  CHECK(miss2 > 40);
  CHECK(factors_from_json(factors_to_json(res.factors)) == res.factors);
  cfg.missing1 = 1.0;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
}

TEST_CASE("kfold_plan: partition, sizes and serialization") {
  FoldPlan ten = kfold_plan(10, 10, 1);
  for (const auto& f : ten.folds) CHECK(f.size() == 1);

  FoldPlan p = kfold_plan(381, 10, 42);
  std::vector<std::size_t> sizes;
  std::set<std::size_t> all;
  std::size_t total = 0;
  for (const auto& f : p.folds) {
    sizes.push_back(f.size());
    total += f.size();
    all.insert(f.begin(), f.end());
  }
  CHECK(total == 381);
  CHECK(all.size() == 381);
  CHECK(*all.rbegin() == 380);
  CHECK(std::count(sizes.begin(), sizes.end(), 38) == 9);
  CHECK(std::count(sizes.begin(), sizes.end(), 39) == 1);
  CHECK(fold_plan_from_json(fold_plan_to_json(p)) == p);
  CHECK(p.train_rows(0).size() + p.folds[0].size() == 381);

  CHECK(kfold_plan(381, 10, 42) == p);
  CHECK_THROWS_AS(kfold_plan(5, 6, 0), ConfigError);
  CHECK_THROWS_AS(kfold_plan(5, 1, 0), ConfigError);
  CHECK_THROWS_AS(fold_plan_from_json("{\"n\":3,\"seed\":0,\"stratify\":\"none\",\"folds\":[[0,1],[1,2]]}"),
                  LoadError);
}

TEST_CASE("kfold_plan: age-bin stratification balances bins") {
  std::vector<double> ages;
  for (int i = 0; i < 200; ++i) ages.push_back(i < 40 ? 20.0 : (i < 100 ? 30.0 : (i < 170 ? 40.0 : 50.0)));
  FoldPlan p = kfold_plan(ages.size(), 10, 3, Stratify::age_bin, ages);
  for (const auto& fold : p.folds) {
    std::array<int, kNumAgeBins> counts{};
    for (std::size_t i : fold) ++counts[age_bin(ages[i])];
    CHECK(counts[0] == 4);
    CHECK(counts[1] == 6);
    CHECK(counts[2] == 7);
    CHECK(counts[3] == 3);
  }
  CHECK_THROWS_AS(kfold_plan(10, 2, 0, Stratify::age_bin), InputError);
}

TEST_CASE("age bins") {
  CHECK(age_bin(18.0) == 0);
  CHECK(age_bin(24.999) == 0);
  CHECK(age_bin(25.0) == 1);
  CHECK(age_bin(44.0) == 2);
  CHECK(age_bin(54.9) == 3);
  CHECK(age_bin(55.0) == 4);
  CHECK(std::string(age_bin_label(4)) == "other");
}
