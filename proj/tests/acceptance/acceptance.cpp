// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Tolerances are pinned below; do not tune them to
// the observed numbers.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ossl/auction.hpp"
#include "ossl/autoencoder.hpp"
#include "ossl/checkpoint.hpp"
#include "ossl/cvr_model.hpp"
#include "ossl/generator.hpp"
#include "ossl/metrics.hpp"
#include "ossl/rff.hpp"
#include "ossl/stats.hpp"
#include "ossl/trainer.hpp"

using namespace ossl;

namespace {

constexpr double kGradStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradFloor = 1e-6;  // denominator floor of the relative error
constexpr int kGradInstances = 100;
constexpr double kGradSeconds = 60.0;

constexpr double kUniformTol = 1e-12;

constexpr double kRecLossFraction = 0.5;
constexpr double kRandRatioMax = 1e-2;
constexpr double kLearningSeconds = 600.0;

constexpr double kGenLow = 0.8, kGenHigh = 1.0;
constexpr double kSpearmanMin = 0.3;
constexpr std::uint32_t kCouplingIntervals = 16;  // intervals 2..16 enter the correlation

constexpr double kRffLoglossLift = 0.05;
constexpr double kRffAucLift = 0.01;
constexpr double kMonotoneSlack = 0.005;  // relative logloss noise allowed between D steps

constexpr double kKernelRmse = 0.08;
constexpr std::size_t kKernelPairs = 1000;

constexpr double kContaminationLift = 0.01;
constexpr double kCalibrationLow = 0.95, kCalibrationHigh = 1.05;

constexpr int kAuctions = 100;
constexpr double kSpeedupMin = 10.0;

constexpr std::uint64_t kDataSeed = 7;

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s C%d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kGradFloor});
}

// Central difference of `loss` with respect to `param`.
double numeric(double& param, const std::function<double()>& loss) {
  const double keep = param;
  param = keep + kGradStep;
  const double fp = loss();
  param = keep - kGradStep;
  const double fm = loss();
  param = keep;
  return (fp - fm) / (2 * kGradStep);
}

Schema random_small_schema(Rng& r) {
  std::vector<ColumnSchema> cols;
  const std::size_t users = 1 + r.below(3);
  for (std::size_t i = 0; i < users; ++i) {
    const auto n = static_cast<std::uint32_t>(2 + r.below(5));
    cols.push_back({"u" + std::to_string(i), n, n - 1, ColumnSide::user});
  }
  const auto top = static_cast<std::uint32_t>(2 + r.below(3));
  const auto low = static_cast<std::uint32_t>(2 + r.below(5));
  cols.push_back({"top", top, top - 1, ColumnSide::taxonomy_top});
  cols.push_back({"low", low, low - 1, ColumnSide::taxonomy_low});
  return Schema(std::move(cols));
}

Event random_event(const Schema& s, Rng& r) {
  Event e;
  for (const auto& c : s) e.values.push_back(static_cast<std::uint32_t>(r.below(c.cardinality)));
  return e;
}

void c1_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng r(0x6772616473);
  double worst_ae = 0.0, worst_cvr = 0.0;
  for (int inst = 0; inst < kGradInstances; ++inst) {
    const Schema s = random_small_schema(r);
    const AutoencoderDims dims{2 + r.below(3), 1 + r.below(3), {2 + r.below(5)}, {2 + r.below(5)}};
    auto p = ae_init(s, dims, r.next_u64());
    const Event e = random_event(s, r);
    AeWorkspace ws, probe;
    AeGradients g;
    ae_gradients(p, e, ws, g);
    const auto loss = [&] { return ae_recloss(p, e, probe); };
    for (std::size_t c = 0; c < p.columns.size(); ++c) {
      const std::size_t row = e.values[p.columns[c]];
      for (std::size_t j = 0; j < p.embedding_dim; ++j)
        worst_ae = std::max(worst_ae, rel_error(g.embedding_rows[c][j],
                                                numeric(p.embeddings[c][row * p.embedding_dim + j], loss)));
    }
    for (auto [net, grads] : {std::pair{&p.encoder, &g.encoder}, std::pair{&p.decoder, &g.decoder}}) {
      for (std::size_t l = 0; l < net->layers.size(); ++l) {
        for (std::size_t i = 0; i < net->layers[l].weights.size(); ++i)
          worst_ae = std::max(worst_ae, rel_error(grads->layers[l].weights[i], numeric(net->layers[l].weights[i], loss)));
        for (std::size_t i = 0; i < net->layers[l].biases.size(); ++i)
          worst_ae = std::max(worst_ae, rel_error(grads->layers[l].biases[i], numeric(net->layers[l].biases[i], loss)));
      }
    }

    CvrModelConfig cfg;
    cfg.latent_dim = 1 + r.below(4);
    cfg.aux_linear = r.below(2) == 1;
    cfg.init_scale = 0.5;
    const std::size_t fdim = r.below(6);
    auto m = cvr_init(s, cfg, fdim, r.next_u64());
    for (auto& t : m.aux_weights)
      for (double& w : t) w = r.uniform(-0.5, 0.5);
    for (double& w : m.code_weights) w = r.uniform(-0.5, 0.5);
    m.bias = r.uniform(-1, 1);
    std::vector<double> f(fdim);
    for (double& v : f) v = r.uniform(-1, 1);
    Event ce = random_event(s, r);
    const int y = static_cast<int>(r.below(2));
    ce.kind = y ? EventKind::click_conversion : EventKind::click_negative;
    const auto cg = cvr_dense_gradient(m, ce, f, y);
    const auto closs = [&] { return cvr_logloss(cvr_score(m, ce, f), y); };
    auto tensors = m.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t)
      for (std::size_t i = 0; i < tensors[t].size(); ++i)
        worst_cvr = std::max(worst_cvr, rel_error(cg[t][i], numeric(tensors[t][i], closs)));
  }
  const double secs = seconds_since(t0);
  report(1, "gradient oracles",
         worst_ae < kGradRelTol && worst_cvr < kGradRelTol && secs < kGradSeconds,
         fmt("max rel err ae %.2e cvr %.2e over %d instances each (tol %.0e), %.1f s", worst_ae, worst_cvr,
             kGradInstances, kGradRelTol, secs));
}

void c2_uniform(const Schema& schema, const IntervalDataset& conversions) {
  auto p = ae_init(schema, {}, 1);
  auto& last = p.decoder.layers.back();
  std::fill(last.weights.begin(), last.weights.end(), 0.0);
  std::fill(last.biases.begin(), last.biases.end(), 0.0);
  double expected = 0.0;
  for (const auto& c : schema) expected += std::log(static_cast<double>(c.cardinality));
  expected /= static_cast<double>(schema.size());
  const double got = eval_recloss(p, conversions);
  report(2, "uniform-logit identity", std::abs(got - expected) <= kUniformTol,
         fmt("RecLoss %.15f vs (1/C) sum ln n_i %.15f, |diff| %.1e", got, expected, std::abs(got - expected)));
}

IntervalDataset conversions_of(const IntervalDataset& ds) {
  IntervalDataset out{ds.interval_id, {}};
  for (const auto& e : ds.events)
    if (is_conversion(e.kind)) out.events.push_back(e);
  return out;
}

struct Run {
  std::vector<IntervalSummary> rows;
  Checkpoint final_state;
  std::optional<Checkpoint> at10;
  double seconds_first10 = 0.0;
};

Run train(const Schema& schema, std::span<const IntervalDataset> intervals, const ModelOptions& opt) {
  Run run;
  run.final_state = initial_checkpoint(schema, opt);
  const auto t0 = std::chrono::steady_clock::now();
  run.rows = train_stream(run.final_state, intervals, schema, [&](const Checkpoint& ck, const IntervalSummary& s) {
    if (s.interval_id != 10) return;
    run.seconds_first10 = seconds_since(t0);
    run.at10 = ck;
  });
  return run;
}

// Count-weighted progressive click logloss and mean AUC over intervals [from, to].
struct CvrSummary {
  double logloss = 0.0;
  double auc = 0.0;
};

CvrSummary pooled(const Run& run, std::uint32_t from, std::uint32_t to) {
  double ll = 0.0, auc = 0.0, n = 0.0;
  int k = 0;
  for (const auto& row : run.rows) {
    if (row.interval_id < from || row.interval_id > to) continue;
    ll += row.cvr_eval.logloss * static_cast<double>(row.cvr_eval.count);
    n += static_cast<double>(row.cvr_eval.count);
    auc += row.cvr_eval.auc;
    ++k;
  }
  return {ll / n, auc / k};
}

const IntervalSummary& row_of(const Run& run, std::uint32_t interval) {
  for (const auto& r : run.rows)
    if (r.interval_id == interval) return r;
  throw std::logic_error("missing interval row");
}

void c3_learning(const Schema& schema, const Run& run) {
  double uniform = 0.0;
  for (const auto& c : schema) uniform += std::log(static_cast<double>(c.cardinality));
  uniform /= static_cast<double>(schema.size());
  const auto& m = *row_of(run, 10).metrics;
  const bool pass = m.recloss < kRecLossFraction * uniform && m.randratio < kRandRatioMax &&
                    run.seconds_first10 < kLearningSeconds;
  report(3, "auto-encoder learning", pass,
         fmt("RecLoss_10 %.4f (limit %.4f), RandRatio_10 %.5f (limit %.0e), %zu conversions in interval 10, "
             "%.0f s for 10 intervals",
             m.recloss, kRecLossFraction * uniform, m.randratio, kRandRatioMax, row_of(run, 10).counts.ae_trained,
             run.seconds_first10));
}

void c4_stability(const Run& run) {
  std::vector<double> gens, one_minus_gen, diffs;
  std::string series;
  for (const auto& r : run.rows) {
    if (!r.metrics) continue;
    if (r.interval_id >= 3 && r.interval_id <= 10) {
      gens.push_back(r.metrics->gen);
      series += fmt("%s%.3f", series.empty() ? "" : " ", r.metrics->gen);
    }
    if (r.interval_id >= 2 && r.interval_id <= kCouplingIntervals) {
      one_minus_gen.push_back(1.0 - r.metrics->gen);
      diffs.push_back(r.metrics->diff);
    }
  }
  const double med = median(gens);
  const double rho = spearman(one_minus_gen, diffs);
  const bool pass = med >= kGenLow && med <= kGenHigh && rho > kSpearmanMin && one_minus_gen.size() >= 15;
  report(4, "stability and generalization", pass,
         fmt("median Gen_3..10 %.3f (want [%.1f, %.1f]; series %s), Spearman(1-Gen, Diff) %.3f over %zu intervals "
             "(want > %.1f)",
             med, kGenLow, kGenHigh, series.c_str(), rho, one_minus_gen.size(), kSpearmanMin));
}

void c5_rff_lift(const Schema& schema, std::span<const IntervalDataset> intervals) {
  ModelOptions base;
  base.cvr.use_latents = false;
  base.settings.compute_metrics = false;
  ModelOptions raw = base;
  raw.cvr.code_features = CodeFeatureMode::raw;
  const auto linear = pooled(train(schema, intervals, raw), 2, 10);
  std::vector<CvrSummary> by_rows;
  std::string detail;
  for (std::size_t d : {25, 100, 200}) {
    ModelOptions o = base;
    o.rff_rows = d;
    by_rows.push_back(pooled(train(schema, intervals, o), 2, 10));
    detail += fmt(" D=%zu %.5f/%.4f", d, by_rows.back().logloss, by_rows.back().auc);
  }
  const auto& full = by_rows.back();
  const double lift = (linear.logloss - full.logloss) / linear.logloss;
  const double auc_gain = full.auc - linear.auc;
  bool monotone = true;
  for (std::size_t i = 1; i < by_rows.size(); ++i)
    monotone = monotone && by_rows[i].logloss <= by_rows[i - 1].logloss * (1.0 + kMonotoneSlack);
  report(5, "RFF lift", lift >= kRffLoglossLift && auc_gain >= kRffAucLift && monotone,
         fmt("code-linear logloss/AUC %.5f/%.4f;%s; lift %.2f%% (want >= %.0f%%), AUC gain %.4f (want >= %.2f), "
             "monotone in D %s",
             linear.logloss, linear.auc, detail.c_str(), 100 * lift, 100 * kRffLoglossLift, auc_gain, kRffAucLift,
             monotone ? "yes" : "no"));
}

void c6_kernel() {
  const std::size_t k = 12, d = 200;
  const double sigma = 1.0;
  const auto t = rff_init(k, d, sigma, 0x4B45524E);
  Rng r(0x50414952);
  double sq = 0.0;
  std::vector<double> a(k), b(k), fa, fb;
  for (std::size_t i = 0; i < kKernelPairs; ++i) {
    for (auto& v : a) v = r.uniform(-0.5, 0.5);
    for (auto& v : b) v = r.uniform(-0.5, 0.5);
    fa = rff_transform(t, a);
    fb = rff_transform(t, b);
    double dot = 0.0, dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += fa[j] * fb[j];
    for (std::size_t j = 0; j < k; ++j) dist2 += (a[j] - b[j]) * (a[j] - b[j]);
    const double approx = 2.0 / static_cast<double>(d) * dot;
    const double exact = std::exp(-dist2 / (2 * sigma * sigma));
    sq += (approx - exact) * (approx - exact);
  }
  const double rmse = std::sqrt(sq / static_cast<double>(kKernelPairs));
  report(6, "kernel approximation", rmse < kKernelRmse,
         fmt("RMSE %.4f over %zu pairs at D=%zu (want < %.2f)", rmse, kKernelPairs, d, kKernelRmse));
}

void c7_c8_contamination(const Schema& schema, std::span<const IntervalDataset> first10, const Run& clean) {
  ModelOptions o;
  o.settings.contaminate = true;
  o.settings.compute_metrics = false;
  const Run dirty = train(schema, first10, o);
  const auto c = pooled(clean, 2, 10), x = pooled(dirty, 2, 10);
  const double lift = (x.logloss - c.logloss) / c.logloss;
  report(7, "contamination direction", lift >= kContaminationLift,
         fmt("click-only logloss clean %.5f, contaminated %.5f, relative excess %.2f%% (want >= %.0f%%)", c.logloss,
             x.logloss, 100 * lift, 100 * kContaminationLift));

  const double cal_clean = row_of(clean, 10).cvr_eval.calibration.value_or(NAN);
  const double cal_dirty = row_of(dirty, 10).cvr_eval.calibration.value_or(NAN);
  const bool pass = cal_clean >= kCalibrationLow && cal_clean <= kCalibrationHigh &&
                    std::abs(cal_dirty - 1.0) > std::abs(cal_clean - 1.0);
  report(8, "calibration", pass,
         fmt("interval 10 mean pCVR / empirical CVR: clean %.4f (want [%.2f, %.2f]), contaminated %.4f", cal_clean,
             kCalibrationLow, kCalibrationHigh, cal_dirty));
}

void c9_c10_auction(const Schema& schema, const Checkpoint& ck) {
  const auto ad_cols = schema.ad_side_columns();
  const auto pos = [&](std::size_t col) {
    return static_cast<std::size_t>(std::find(ad_cols.begin(), ad_cols.end(), col) - ad_cols.begin());
  };
  const std::size_t top = pos(schema.taxonomy_top()), low = pos(schema.taxonomy_low());
  Rng rng(0x41554354);
  bool identical = true, counts = true;
  std::size_t compared = 0;
  for (int a = 0; a < kAuctions; ++a) {
    const auto catalog = make_catalog(schema, 100 + rng.below(400), 1 + rng.below(48), rng.next_u64());
    const auto user = make_user(schema, rng);
    const auto cached = rank_auction(schema, ck.cvr, ck.autoencoder, ck.rff, user, catalog, RankMode::cached);
    const auto naive = rank_auction(schema, ck.cvr, ck.autoencoder, ck.rff, user, catalog, RankMode::naive);
    identical = identical && cached.ranking.size() == naive.ranking.size();
    for (std::size_t i = 0; identical && i < cached.ranking.size(); ++i) {
      identical = cached.ranking[i].ad_id == naive.ranking[i].ad_id &&
                  cached.ranking[i].score == naive.ranking[i].score && cached.ranking[i].bid == naive.ranking[i].bid;
      ++compared;
    }
    std::set<std::pair<std::uint32_t, std::uint32_t>> cats;
    for (const auto& ad : catalog) cats.insert({ad.values[top], ad.values[low]});
    counts = counts && cached.encoder_invocations == cats.size();
  }
  report(9, "cache equivalence", identical && counts,
         fmt("%d auctions, %zu scores compared, bit-identical %s, invocations = distinct categories %s", kAuctions,
             compared, identical ? "yes" : "no", counts ? "yes" : "no"));

  const BenchScenario scenario;  // 10^4 ads over 48 categories
  const auto bench = latency_bench(schema, ck.cvr, ck.autoencoder, ck.rff, scenario);
  report(10, "auction latency", bench.speedup >= kSpeedupMin && bench.identical_rankings,
         fmt("%zu ads / %zu categories: cached median %.3f ms (p99 %.3f, %zu encodes), naive median %.3f ms "
             "(p99 %.3f, %zu encodes), speedup %.1fx (want >= %.0fx)",
             scenario.catalog_size, scenario.category_count, bench.rows[0].median_ns / 1e6,
             bench.rows[0].p99_ns / 1e6, bench.rows[0].invocations, bench.rows[1].median_ns / 1e6,
             bench.rows[1].p99_ns / 1e6, bench.rows[1].invocations, bench.speedup, kSpeedupMin));
}

void c11_persistence(const Schema& schema) {
  GeneratorConfig cfg;
  cfg.intervals = 4;
  cfg.events_per_interval = 3000;
  const auto stream = gen_synthetic(schema, cfg, kDataSeed);
  const std::span<const IntervalDataset> all(stream.intervals);

  Checkpoint straight = initial_checkpoint(schema, {});
  train_stream(straight, all, schema);

  Checkpoint first = initial_checkpoint(schema, {});
  train_stream(first, all.first(2), schema);
  const auto bytes = serialize_checkpoint(first);
  const bool round_trip = serialize_checkpoint(deserialize_checkpoint(bytes, schema.fingerprint())) == bytes;
  Checkpoint resumed = deserialize_checkpoint(bytes, schema.fingerprint());
  train_stream(resumed, all.subspan(2), schema);
  const bool resume = serialize_checkpoint(resumed) == serialize_checkpoint(straight) && resumed == straight;
  report(11, "determinism and persistence", round_trip && resume,
         fmt("round trip bit-exact %s (%zu bytes), resume after interval 2 equals uninterrupted run %s",
             round_trip ? "yes" : "no", bytes.size(), resume ? "yes" : "no"));
}

}  // namespace

int main() {
  const Schema schema = Schema::default_schema();

  c1_gradients();

  GeneratorConfig gen;
  gen.intervals = kCouplingIntervals;
  const auto stream = gen_synthetic(schema, gen, kDataSeed);
  const std::span<const IntervalDataset> all(stream.intervals);
  const auto first10 = all.first(10);

  c2_uniform(schema, conversions_of(stream.intervals[0]));

  const Run base = train(schema, all, {});
  c3_learning(schema, base);
  c4_stability(base);
  c5_rff_lift(schema, first10);
  c6_kernel();

  Run clean10;
  clean10.rows.assign(base.rows.begin(), base.rows.begin() + 10);
  c7_c8_contamination(schema, first10, clean10);

  c9_c10_auction(schema, *base.at10);
  c11_persistence(schema);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
