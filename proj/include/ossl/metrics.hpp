#pragma once

// Auto-encoder quality metrics for interval t:
//   RecLoss_t   mean reconstruction loss of M_t on D_t
//   Diff_t      mean ||code(M_t) - code(M_{t-1})|| on D_t
//   Gen_t       RecLoss(M_t, D_t) / RecLoss(M_{t-1}, D_t)
//   RandRatio_t RecLoss_t / RecLoss(M_t, R_t), R_t uniform random, |R_t| = |D_t|

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "ossl/autoencoder.hpp"
#include "ossl/errors.hpp"
#include "ossl/events.hpp"
#include "ossl/stats.hpp"

namespace ossl {

struct MetricsReport {
  std::uint32_t interval_id = 0;
  double recloss = 0.0;       // M_t on D_t
  double recloss_prev = 0.0;  // M_{t-1} on D_t
  double recloss_rand = 0.0;  // M_t on R_t
  double gen = 0.0;
  double diff = 0.0;
  double randratio = 0.0;
};

inline double eval_recloss(const AutoencoderParams& p, const IntervalDataset& ds) {
  if (ds.empty()) throw DataError("eval_recloss: empty dataset");
  AeWorkspace ws;
  CompensatedSum sum;
  for (const auto& e : ds.events) sum.add(ae_recloss(p, e, ws));
  return sum.value() / static_cast<double>(ds.size());
}

inline double code_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::sqrt(s);
}

inline double eval_diff(const AutoencoderParams& current, const AutoencoderParams& previous,
                        const IntervalDataset& ds) {
  if (ds.empty()) throw DataError("eval_diff: empty dataset");
  if (current.code_dim() != previous.code_dim() || current.columns != previous.columns ||
      current.block_sizes != previous.block_sizes)
    throw DataError("eval_diff: models differ in schema or code dimension");
  AeWorkspace ws_a, ws_b;
  CompensatedSum sum;
  for (const auto& e : ds.events)
    sum.add(code_distance(ae_encode_into(current, e, ws_a), ae_encode_into(previous, e, ws_b)));
  return sum.value() / static_cast<double>(ds.size());
}

inline double eval_gen(const AutoencoderParams& current, const AutoencoderParams& previous,
                       const IntervalDataset& ds) {
  const double denom = eval_recloss(previous, ds);
  if (!(denom > 0.0)) throw DataError("eval_gen: previous model has zero loss on the interval");
  return eval_recloss(current, ds) / denom;
}

inline double eval_randratio(const AutoencoderParams& p, const IntervalDataset& real,
                             const Schema& schema, std::uint64_t seed) {
  if (real.empty()) throw DataError("eval_randratio: empty dataset");
  const auto random = make_random_dataset(schema, real.size(), seed, real.interval_id);
  return eval_recloss(p, real) / eval_recloss(p, random);
}

// Seed of the random reference set for an interval.
inline std::uint64_t random_set_seed(std::uint64_t metrics_seed, std::uint32_t interval_id) {
  return mix64(metrics_seed ^ mix64(interval_id));
}

// All four metrics in one sweep over D_t.
inline MetricsReport interval_metrics(const AutoencoderParams& current,
                                      const AutoencoderParams& previous,
                                      const IntervalDataset& ds, const Schema& schema,
                                      std::uint64_t metrics_seed) {
  if (ds.empty()) throw DataError("interval_metrics: empty dataset");
  MetricsReport r;
  r.interval_id = ds.interval_id;
  AeWorkspace ws_cur, ws_prev;
  double cur = 0.0, prev = 0.0, diff = 0.0;
  for (const auto& e : ds.events) {
    const auto code_cur = ae_encode_into(current, e, ws_cur);
    cur += ae_decode_loss(current, e, ws_cur);
    const auto code_prev = ae_encode_into(previous, e, ws_prev);
    prev += ae_decode_loss(previous, e, ws_prev);
    diff += code_distance(code_cur, code_prev);
  }
  const double n = static_cast<double>(ds.size());
  r.recloss = cur / n;
  r.recloss_prev = prev / n;
  r.diff = diff / n;
  if (!(r.recloss_prev > 0.0)) throw DataError("interval_metrics: zero previous loss");
  r.gen = r.recloss / r.recloss_prev;
  const auto random = make_random_dataset(schema, ds.size(), random_set_seed(metrics_seed, ds.interval_id),
                                          ds.interval_id);
  r.recloss_rand = eval_recloss(current, random);
  r.randratio = r.recloss / r.recloss_rand;
  return r;
}

inline void write_metrics_csv_header(std::ostream& out) {
  out << "interval,recloss,recloss_rand,gen,diff,randratio\n";
}

// Intervals without conversions produce a row with empty metric fields.
inline void write_metrics_csv_row(std::ostream& out, std::uint32_t interval_id,
                                  const std::optional<MetricsReport>& r) {
  out << interval_id;
  if (r) {
    out.precision(17);
    out << ',' << r->recloss << ',' << r->recloss_rand << ',' << r->gen << ',' << r->diff << ','
        << r->randratio;
  } else {
    out << ",,,,,";
  }
  out << '\n';
}

}  // namespace ossl
