#pragma once

// Per-interval training. For interval t, starting from checkpoint t-1:
//   * every event's code comes from the frozen encoder Enc_{t-1};
//   * click events are scored, then trained on, by the CVR model;
//   * conversion events (click- or view-attributed) are scored, then
//     trained on, by the auto-encoder, producing Enc_t;
//   * after the pass the auto-encoder metrics compare M_t with M_{t-1}.
// A single pass in arrival order handles both models.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ossl/autoencoder.hpp"
#include "ossl/cvr_model.hpp"
#include "ossl/errors.hpp"
#include "ossl/events.hpp"
#include "ossl/metrics.hpp"
#include "ossl/nn.hpp"
#include "ossl/rff.hpp"
#include "ossl/schema.hpp"

namespace ossl {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct TrainingSettings {
  bool contaminate = false;  // view conversions become CVR positives
  bool compute_metrics = true;
  std::uint64_t metrics_seed = 0x4D45545249435300ull;

  bool operator==(const TrainingSettings&) const = default;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointFormatVersion;
  std::int64_t interval_id = -1;  // last interval trained on, -1 when fresh
  std::uint64_t schema_fingerprint = 0;
  TrainingSettings settings;
  AutoencoderParams autoencoder;
  OptimizerState ae_optimizer;
  CvrModel cvr;
  CvrOptimizer cvr_optimizer;
  RffTransform rff;

  bool operator==(const Checkpoint& o) const {
    return format_version == o.format_version && interval_id == o.interval_id &&
           schema_fingerprint == o.schema_fingerprint && settings == o.settings &&
           autoencoder.same_parameters(o.autoencoder) && ae_optimizer == o.ae_optimizer &&
           cvr == o.cvr && cvr_optimizer == o.cvr_optimizer && rff == o.rff;
  }
};

struct ModelOptions {
  AutoencoderDims ae_dims;
  double ae_learning_rate = 0.005;
  double ae_momentum = 0.9;
  CvrModelConfig cvr;
  double latent_learning_rate = 0.05;
  double linear_learning_rate = 0.002;
  std::size_t rff_rows = 200;
  double rff_sigma = 1.0;
  std::uint64_t seed = 1;
  TrainingSettings settings;
};

inline Checkpoint initial_checkpoint(const Schema& schema, const ModelOptions& opt) {
  Checkpoint ck;
  ck.schema_fingerprint = schema.fingerprint();
  ck.settings = opt.settings;
  ck.autoencoder = ae_init(schema, opt.ae_dims, opt.seed);
  ck.ae_optimizer = OptimizerState(opt.ae_learning_rate, opt.ae_momentum);
  ck.ae_optimizer.attach(ck.autoencoder.tensors());
  ck.rff = rff_init(opt.ae_dims.code_dim, opt.rff_rows, opt.rff_sigma, mix64(opt.seed ^ 0x524646));
  ck.cvr = cvr_init(schema, opt.cvr,
                    code_feature_dim(opt.cvr.code_features, opt.ae_dims.code_dim, opt.rff_rows),
                    opt.seed);
  ck.cvr_optimizer.latent_learning_rate = opt.latent_learning_rate;
  ck.cvr_optimizer.linear_learning_rate = opt.linear_learning_rate;
  ck.cvr_optimizer.validate();
  return ck;
}

struct IntervalCounts {
  std::size_t events = 0;
  std::size_t cvr_trained = 0;
  std::size_t cvr_evaluated = 0;
  std::size_t ae_trained = 0;
};

struct IntervalResult {
  Checkpoint checkpoint;
  std::optional<MetricsReport> metrics;  // absent when the interval has no conversions
  CvrEvalSummary cvr_eval;               // progressive validation over click events
  double ae_progressive_loss = 0.0;      // evaluate-then-train loss over conversions
  IntervalCounts counts;
};

// Called once per event with the code fed to the CVR model (empty when the
// model uses no code features or the event is not a CVR sample).
using CodeObserver = std::function<void(const Event&, std::span<const double> code)>;

inline IntervalResult run_interval(const Checkpoint& previous, const IntervalDataset& ds,
                                   const Schema& schema, const CodeObserver& observer = {}) {
  if (previous.schema_fingerprint != schema.fingerprint())
    throw DataError("run_interval: checkpoint schema fingerprint does not match");
  if (previous.interval_id >= 0 && static_cast<std::int64_t>(ds.interval_id) <= previous.interval_id)
    throw DataError("run_interval: interval " + std::to_string(ds.interval_id) +
                    " does not follow checkpoint interval " + std::to_string(previous.interval_id));

  IntervalResult result;
  result.checkpoint = previous;
  Checkpoint& next = result.checkpoint;
  next.interval_id = ds.interval_id;
  if (ds.empty()) return result;

  const AutoencoderParams& frozen = previous.autoencoder;
  const bool contaminate = previous.settings.contaminate;
  const bool needs_code = next.cvr.config.code_features != CodeFeatureMode::none;
  const std::size_t top = schema.taxonomy_top();

  AeWorkspace frozen_ws, train_ws;
  AeGradients grads;
  CvrEvaluator evaluator;
  std::vector<double> features;
  IntervalDataset conversions;
  conversions.interval_id = ds.interval_id;
  double ae_loss_sum = 0.0;

  for (const auto& e : ds.events) {
    check_conforms(schema, e);
    if (e.interval_id != ds.interval_id)
      throw DataError("run_interval: event interval id differs from its dataset");
    ++result.counts.events;
    const bool cvr_sample = is_click(e.kind) || contaminate;
    std::span<const double> code;
    if (cvr_sample && needs_code) code = ae_encode_into(frozen, e, frozen_ws);
    if (observer) observer(e, cvr_sample ? code : std::span<const double>{});
    if (cvr_sample) {
      code_features(next.cvr, next.rff, code, features);
      const Prediction pred = cvr_train_step(next.cvr, e, features, next.cvr_optimizer, contaminate);
      ++result.counts.cvr_trained;
      if (is_click(e.kind)) {
        evaluator.add(pred, e.label(), e.values[top]);
        ++result.counts.cvr_evaluated;
      }
    }
    if (is_conversion(e.kind)) {
      ae_loss_sum += ae_train_step(next.autoencoder, e, next.ae_optimizer, train_ws, grads).recloss;
      ++result.counts.ae_trained;
      conversions.events.push_back(e);
    }
  }

  result.cvr_eval = evaluator.summary();
  if (!conversions.empty()) {
    next.autoencoder.interval_tag = ds.interval_id;
    result.ae_progressive_loss = ae_loss_sum / static_cast<double>(conversions.size());
    if (previous.settings.compute_metrics)
      result.metrics = interval_metrics(next.autoencoder, frozen, conversions, schema,
                                        previous.settings.metrics_seed);
  }
  return result;
}

// One row per interval, without the checkpoints.
struct IntervalSummary {
  std::uint32_t interval_id = 0;
  std::optional<MetricsReport> metrics;
  CvrEvalSummary cvr_eval;
  double ae_progressive_loss = 0.0;
  IntervalCounts counts;
};

// Runs consecutive intervals. `on_checkpoint` sees every checkpoint as it
// is produced.
inline std::vector<IntervalSummary> train_stream(
    Checkpoint& state, std::span<const IntervalDataset> intervals, const Schema& schema,
    const std::function<void(const Checkpoint&, const IntervalSummary&)>& on_checkpoint = {}) {
  std::vector<IntervalSummary> rows;
  for (const auto& ds : intervals) {
    IntervalResult r = run_interval(state, ds, schema);
    state = std::move(r.checkpoint);
    rows.push_back({ds.interval_id, r.metrics, std::move(r.cvr_eval), r.ae_progressive_loss, r.counts});
    if (on_checkpoint) on_checkpoint(state, rows.back());
  }
  return rows;
}

inline void write_cvr_eval_csv_header(std::ostream& out) {
  out << "interval,count,positives,logloss,auc,mean_pcvr,empirical_cvr,calibration\n";
}

inline void write_cvr_eval_csv_row(std::ostream& out, std::uint32_t interval_id,
                                   const CvrEvalSummary& s) {
  out.precision(17);
  out << interval_id << ',' << s.count << ',' << s.positives << ',';
  if (s.count > 0) out << s.logloss << ',' << s.auc << ',' << s.mean_pcvr << ',' << s.empirical_cvr;
  else out << ",,,";
  out << ',';
  if (s.calibration) out << *s.calibration;
  out << '\n';
}

inline void write_segment_csv_header(std::ostream& out) {
  out << "interval,segment,count,positives,mean_pcvr,calibration\n";
}

inline void write_segment_csv_rows(std::ostream& out, std::uint32_t interval_id,
                                   const CvrEvalSummary& s) {
  out.precision(17);
  for (const auto& seg : s.segments) {
    out << interval_id << ',' << seg.segment << ',' << seg.count << ',' << seg.positives << ','
        << seg.mean_pcvr << ',';
    if (seg.ratio) out << *seg.ratio;
    out << '\n';
  }
}

}  // namespace ossl
