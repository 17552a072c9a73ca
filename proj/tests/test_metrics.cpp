#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ossl/metrics.hpp"
#include "ossl/stats.hpp"

namespace ossl {
namespace {

IntervalDataset sample(const Schema& s, std::size_t n, std::uint64_t seed) {
  auto ds = make_random_dataset(s, n, seed, 4);
  return ds;
}

AutoencoderParams zero_decoder(const Schema& s, std::uint64_t seed) {
  auto p = ae_init(s, {}, seed);
  auto& last = p.decoder.layers.back();
  std::fill(last.weights.begin(), last.weights.end(), 0.0);
  std::fill(last.biases.begin(), last.biases.end(), 0.0);
  return p;
}

// A model nudged away from `p` by a few training steps.
AutoencoderParams perturbed(const Schema& s, AutoencoderParams p, std::uint64_t seed) {
  OptimizerState opt(0.05, 0.9);
  for (const auto& e : sample(s, 50, seed).events) ae_train_step(p, e, opt);
  return p;
}

TEST(RecLoss, ZeroDecoderIsUniformLoss) {
  const Schema s = Schema::default_schema();
  const auto p = zero_decoder(s, 1);
  EXPECT_NEAR(eval_recloss(p, sample(s, 100, 2)), p.uniform_recloss(), 1e-12);
}

TEST(RecLoss, SingleEventAndPairAverage) {
  const Schema s = Schema::default_schema();
  const auto p = ae_init(s, {}, 2);
  const auto ds = sample(s, 2, 3);
  const double a = ae_forward(p, ds.events[0]).recloss, b = ae_forward(p, ds.events[1]).recloss;
  EXPECT_EQ(eval_recloss(p, IntervalDataset{4, {ds.events[0]}}), a);
  EXPECT_DOUBLE_EQ(eval_recloss(p, ds), (a + b) / 2.0);
}

TEST(RecLoss, EmptyDatasetIsError) {
  const Schema s = Schema::default_schema();
  const auto p = ae_init(s, {}, 2);
  EXPECT_THROW(eval_recloss(p, IntervalDataset{}), DataError);
  EXPECT_THROW(eval_diff(p, p, IntervalDataset{}), DataError);
  EXPECT_THROW(eval_randratio(p, IntervalDataset{}, s, 1), DataError);
}

TEST(Diff, IdenticalModelsGiveZero) {
  const Schema s = Schema::default_schema();
  const auto p = ae_init(s, {}, 3);
  EXPECT_EQ(eval_diff(p, p, sample(s, 100, 1)), 0.0);
}

TEST(Diff, SymmetricAndBounded) {
  const Schema s = Schema::default_schema();
  const auto a = ae_init(s, {}, 3), b = ae_init(s, {}, 4);
  const auto ds = sample(s, 200, 1);
  const double ab = eval_diff(a, b, ds);
  EXPECT_EQ(ab, eval_diff(b, a, ds));
  EXPECT_GT(ab, 0.0);
  EXPECT_LE(ab, 2.0 * std::sqrt(12.0));
}

TEST(Diff, MismatchedCodeDimensionIsError) {
  const Schema s = Schema::default_schema();
  AutoencoderDims d;
  d.code_dim = 5;
  EXPECT_THROW(eval_diff(ae_init(s, {}, 1), ae_init(s, d, 1), sample(s, 10, 1)), DataError);
}

TEST(Gen, IdenticalModelsGiveOne) {
  const Schema s = Schema::default_schema();
  const auto p = ae_init(s, {}, 5);
  EXPECT_EQ(eval_gen(p, p, sample(s, 100, 1)), 1.0);
}

TEST(Gen, RatioOfMeansAndOrderInvariant) {
  const Schema s = Schema::default_schema();
  const auto prev = ae_init(s, {}, 5);
  const auto cur = perturbed(s, prev, 9);
  auto ds = sample(s, 300, 1);
  const double g = eval_gen(cur, prev, ds);
  EXPECT_DOUBLE_EQ(g, eval_recloss(cur, ds) / eval_recloss(prev, ds));
  std::reverse(ds.events.begin(), ds.events.end());
  EXPECT_NEAR(eval_gen(cur, prev, ds), g, 1e-12);
  EXPECT_GT(g, 0.0);
}

TEST(RandRatio, ZeroDecoderGivesOne) {
  const Schema s = Schema::default_schema();
  const auto p = zero_decoder(s, 6);
  EXPECT_NEAR(eval_randratio(p, sample(s, 100, 2), s, 99), 1.0, 1e-12);
}

TEST(RandRatio, StrictlyPositive) {
  const Schema s = Schema::default_schema();
  const auto p = perturbed(s, ae_init(s, {}, 6), 1);
  EXPECT_GT(eval_randratio(p, sample(s, 100, 2), s, 99), 0.0);
}

TEST(IntervalMetrics, AgreesWithSeparateEvaluations) {
  const Schema s = Schema::default_schema();
  const auto prev = ae_init(s, {}, 5);
  const auto cur = perturbed(s, prev, 3);
  const auto ds = sample(s, 150, 8);
  const auto r = interval_metrics(cur, prev, ds, s, 77);
  EXPECT_NEAR(r.recloss, eval_recloss(cur, ds), 1e-12);
  EXPECT_NEAR(r.gen, eval_gen(cur, prev, ds), 1e-12);
  EXPECT_NEAR(r.diff, eval_diff(cur, prev, ds), 1e-12);
  EXPECT_NEAR(r.randratio, eval_randratio(cur, ds, s, random_set_seed(77, ds.interval_id)), 1e-12);
  EXPECT_DOUBLE_EQ(r.randratio, r.recloss / r.recloss_rand);
  EXPECT_GE(r.recloss, 0.0);
  EXPECT_GE(r.diff, 0.0);
}

TEST(Metrics, EvaluationNeverChangesParameters) {
  const Schema s = Schema::default_schema();
  const auto prev = ae_init(s, {}, 5);
  const auto cur = perturbed(s, prev, 3);
  const auto h_cur = parameter_hash(cur), h_prev = parameter_hash(prev);
  const auto ds = sample(s, 100, 8);
  eval_recloss(cur, ds);
  eval_diff(cur, prev, ds);
  eval_gen(cur, prev, ds);
  eval_randratio(cur, ds, s, 1);
  interval_metrics(cur, prev, ds, s, 1);
  EXPECT_EQ(parameter_hash(cur), h_cur);
  EXPECT_EQ(parameter_hash(prev), h_prev);
}

TEST(MetricsCsv, HeaderAndRows) {
  std::ostringstream out;
  write_metrics_csv_header(out);
  MetricsReport r{3, 0.5, 0.6, 4.0, 0.8, 0.25, 0.125};
  write_metrics_csv_row(out, 3, r);
  write_metrics_csv_row(out, 4, std::nullopt);
  EXPECT_EQ(out.str(), "interval,recloss,recloss_rand,gen,diff,randratio\n3,0.5,4,0.80000000000000004,0.25,0.125\n4,,,,,\n");
}

TEST(Stats, AucWithTies) {
  const std::vector<double> s{0.1, 0.4, 0.4, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  // Pairs: (0.4,0.1) win, (0.4,0.4) tie, (0.8,*) two wins -> 3.5 / 4.
  EXPECT_DOUBLE_EQ(auc(s, y), 0.875);
  EXPECT_TRUE(std::isnan(auc(s, std::vector<int>{1, 1, 1, 1})));
}

TEST(Stats, SpearmanAndPercentiles) {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 9, 16, 100};
  EXPECT_DOUBLE_EQ(spearman(x, y), 1.0);
  std::vector<double> rev(y.rbegin(), y.rend());
  EXPECT_DOUBLE_EQ(spearman(x, rev), -1.0);
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 2, 3}), 2.5);
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i + 1;
  EXPECT_DOUBLE_EQ(percentile(v, 99.0), 99.0);
  EXPECT_DOUBLE_EQ(percentile(v, 50.0), 50.0);
}

TEST(Stats, CompensatedSumKeepsSmallTerms) {
  CompensatedSum s;
  for (double x : {1e16, 1.0, -1e16}) s.add(x);
  EXPECT_EQ(s.value(), 1.0);
  CompensatedSum m;
  for (int i = 0; i < 20000; ++i) m.add(3.3096214988877);
  EXPECT_NEAR(m.value() / 20000, 3.3096214988877, 1e-15);
}

}  // namespace
}  // namespace ossl
