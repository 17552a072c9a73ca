#pragma once

// Factorization-machine CVR model:
//   f = <U, A> + sum_{i in S} w_i + b + <W, features(code)>
//   pCVR = sigmoid(f)
// U sums the latent vectors of the event's user-column values and A those
// of its ad-side values (taxonomy included). S is the set of aux indicator
// columns, empty unless enabled.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ossl/autoencoder.hpp"
#include "ossl/errors.hpp"
#include "ossl/events.hpp"
#include "ossl/nn.hpp"
#include "ossl/rff.hpp"
#include "ossl/rng.hpp"
#include "ossl/schema.hpp"
#include "ossl/stats.hpp"

namespace ossl {

// What the code contributes to the score: RFF features, the raw code, or
// nothing at all.
enum class CodeFeatureMode : std::uint8_t { rff, raw, none };

inline std::string_view to_string(CodeFeatureMode m) {
  switch (m) {
    case CodeFeatureMode::rff: return "rff";
    case CodeFeatureMode::raw: return "raw";
    case CodeFeatureMode::none: return "none";
  }
  return "?";
}

struct CvrModelConfig {
  std::size_t latent_dim = 16;
  bool use_latents = true;  // false: code features (plus bias) only
  bool aux_linear = false;  // per-value indicator weights on every column
  CodeFeatureMode code_features = CodeFeatureMode::rff;
  double init_scale = 0.1;

  bool operator==(const CvrModelConfig&) const = default;
};

struct CvrModel {
  CvrModelConfig config;
  std::vector<std::uint32_t> cardinalities;  // per schema column
  std::vector<std::uint32_t> oov_index;
  std::vector<std::size_t> user_columns;
  std::vector<std::size_t> ad_columns;
  std::vector<std::vector<double>> latents;      // per column, n_i x r; empty when unused
  std::vector<std::vector<double>> aux_weights;  // per column, n_i; empty when not in S
  double bias = 0.0;
  std::vector<double> code_weights;  // W

  std::size_t latent_dim() const { return config.latent_dim; }
  std::size_t feature_dim() const { return code_weights.size(); }

  std::size_t resolve(std::size_t column, std::uint32_t value) const {
    return value < cardinalities[column] ? value : oov_index[column];
  }

  std::vector<std::span<double>> tensors() {
    std::vector<std::span<double>> v;
    for (auto& t : latents) v.emplace_back(t);
    for (auto& t : aux_weights) v.emplace_back(t);
    v.emplace_back(&bias, 1);
    v.emplace_back(code_weights);
    return v;
  }

  bool operator==(const CvrModel&) const = default;
};

inline std::size_t code_feature_dim(CodeFeatureMode mode, std::size_t code_dim,
                                    std::size_t rff_rows) {
  switch (mode) {
    case CodeFeatureMode::rff: return rff_rows;
    case CodeFeatureMode::raw: return code_dim;
    case CodeFeatureMode::none: return 0;
  }
  return 0;
}

inline CvrModel cvr_init(const Schema& schema, const CvrModelConfig& config,
                         std::size_t feature_dim, std::uint64_t seed) {
  if (config.use_latents && config.latent_dim == 0)
    throw ConfigError("cvr model: latent_dim must be >= 1");
  CvrModel m;
  m.config = config;
  m.user_columns = schema.user_columns();
  m.ad_columns = schema.ad_side_columns();
  Rng rng = Rng(seed).split(0x435652);  // "CVR"
  for (const auto& col : schema) {
    m.cardinalities.push_back(col.cardinality);
    m.oov_index.push_back(col.oov_index);
    std::vector<double> table;
    if (config.use_latents) {
      table.resize(std::size_t{col.cardinality} * config.latent_dim);
      for (double& w : table) w = rng.uniform(-config.init_scale, config.init_scale);
    }
    m.latents.push_back(std::move(table));
    m.aux_weights.emplace_back(config.aux_linear ? col.cardinality : 0, 0.0);
  }
  m.code_weights.assign(feature_dim, 0.0);
  return m;
}

// Maps a code to the model's feature block.
inline void code_features(const CvrModel& m, const RffTransform& rff, std::span<const double> code,
                          std::vector<double>& out) {
  switch (m.config.code_features) {
    case CodeFeatureMode::rff:
      out.resize(rff.rows);
      rff_transform(rff, code, out);
      break;
    case CodeFeatureMode::raw: out.assign(code.begin(), code.end()); break;
    case CodeFeatureMode::none: out.clear(); break;
  }
  require(out.size() == m.code_weights.size(), "code_features: feature size differs from W");
}

inline void side_vector(const CvrModel& m, std::span<const std::size_t> columns,
                        std::span<const std::uint32_t> values, std::vector<double>& out) {
  const std::size_t r = m.latent_dim();
  out.assign(r, 0.0);
  for (auto c : columns) {
    const double* row = &m.latents[c][m.resolve(c, values[c]) * r];
    for (std::size_t j = 0; j < r; ++j) out[j] += row[j];
  }
}

struct ScoreTerms {
  double interaction = 0.0;  // <U, A>
  double aux = 0.0;
  double bias = 0.0;
  double code = 0.0;  // <W, features>

  double total() const { return ((interaction + aux) + bias) + code; }
};

inline double aux_term(const CvrModel& m, std::span<const std::uint32_t> values) {
  double s = 0.0;
  for (std::size_t c = 0; c < m.aux_weights.size(); ++c)
    if (!m.aux_weights[c].empty()) s += m.aux_weights[c][m.resolve(c, values[c])];
  return s;
}

inline double interaction_term(const CvrModel& m, std::span<const std::uint32_t> values,
                               std::vector<double>& u, std::vector<double>& a) {
  if (!m.config.use_latents) return 0.0;
  side_vector(m, m.user_columns, values, u);
  side_vector(m, m.ad_columns, values, a);
  return dot(u, a);
}

inline ScoreTerms score_terms(const CvrModel& m, std::span<const std::uint32_t> values,
                              std::span<const double> features) {
  require(values.size() == m.cardinalities.size(), "cvr_score: event has wrong column count");
  require(features.size() == m.code_weights.size(), "cvr_score: code feature length mismatch");
  std::vector<double> u, a;
  ScoreTerms t;
  t.interaction = interaction_term(m, values, u, a);
  t.aux = aux_term(m, values);
  t.bias = m.bias;
  t.code = features.empty() ? 0.0 : dot(m.code_weights, features);
  return t;
}

struct Prediction {
  double score = 0.0;
  double pcvr = 0.5;
};

inline Prediction make_prediction(double score) { return {score, sigmoid(score)}; }

inline Prediction cvr_score(const CvrModel& m, const Event& e, std::span<const double> features) {
  return make_prediction(score_terms(m, e.values, features).total());
}

// Binary cross-entropy from the score, capped at -ln(1e-15).
inline double cvr_logloss(const Prediction& p, int y) {
  require(y == 0 || y == 1, "cvr_logloss: label must be 0 or 1");
  const double margin = y ? p.score : -p.score;  // loss = softplus(-margin)
  const double loss = margin > 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  return std::min(loss, -std::log(1e-15));
}

struct CvrOptimizer {
  double latent_learning_rate = 0.05;
  double linear_learning_rate = 0.002;  // bias, aux weights and W
  std::uint64_t skipped_steps = 0;

  void validate() const {
    if (!(latent_learning_rate > 0.0) || !(linear_learning_rate > 0.0))
      throw ConfigError("cvr optimizer: learning rates must be positive");
  }
  bool operator==(const CvrOptimizer&) const = default;
};

// Dense gradient of the logloss, laid out like CvrModel::tensors().
inline std::vector<std::vector<double>> cvr_dense_gradient(const CvrModel& m, const Event& e,
                                                           std::span<const double> features, int y) {
  CvrModel copy = m;
  std::vector<std::vector<double>> g;
  for (auto t : copy.tensors()) g.emplace_back(t.size(), 0.0);
  const double dl = cvr_score(m, e, features).pcvr - y;
  const std::size_t r = m.latent_dim();
  const std::size_t C = m.cardinalities.size();
  if (m.config.use_latents) {
    std::vector<double> u, a;
    side_vector(m, m.user_columns, e.values, u);
    side_vector(m, m.ad_columns, e.values, a);
    for (auto c : m.user_columns)
      for (std::size_t j = 0; j < r; ++j) g[c][m.resolve(c, e.values[c]) * r + j] += dl * a[j];
    for (auto c : m.ad_columns)
      for (std::size_t j = 0; j < r; ++j) g[c][m.resolve(c, e.values[c]) * r + j] += dl * u[j];
  }
  for (std::size_t c = 0; c < C; ++c)
    if (!m.aux_weights[c].empty()) g[C + c][m.resolve(c, e.values[c])] += dl;
  g[2 * C][0] = dl;
  for (std::size_t j = 0; j < features.size(); ++j) g[2 * C + 1][j] = dl * features[j];
  return g;
}

// Plain SGD on the logloss of one click event. Code features are inputs;
// nothing flows back into the encoder. View conversions are refused unless
// `train_on_views` is set, in which case they count as positives.
inline Prediction cvr_train_step(CvrModel& m, const Event& e, std::span<const double> features,
                                 CvrOptimizer& opt, bool train_on_views = false) {
  if (e.kind == EventKind::view_conversion && !train_on_views)
    throw ContractViolation("cvr_train_step: view-attributed conversions are not CVR samples");
  const int y = e.kind == EventKind::click_negative ? 0 : 1;
  std::vector<double> u, a;
  ScoreTerms t;
  t.interaction = interaction_term(m, e.values, u, a);
  t.aux = aux_term(m, e.values);
  t.bias = m.bias;
  require(features.size() == m.code_weights.size(), "cvr_train_step: code feature length mismatch");
  t.code = features.empty() ? 0.0 : dot(m.code_weights, features);
  const Prediction pred = make_prediction(t.total());
  const double dl = pred.pcvr - y;
  if (!std::isfinite(dl) || !all_finite(features)) {
    ++opt.skipped_steps;
    return pred;
  }

  const double lr_lat = opt.latent_learning_rate * dl;
  const double lr_lin = opt.linear_learning_rate * dl;
  if (m.config.use_latents) {
    const std::size_t r = m.latent_dim();
    for (auto c : m.user_columns) {
      double* row = &m.latents[c][m.resolve(c, e.values[c]) * r];
      for (std::size_t j = 0; j < r; ++j) row[j] -= lr_lat * a[j];
    }
    for (auto c : m.ad_columns) {
      double* row = &m.latents[c][m.resolve(c, e.values[c]) * r];
      for (std::size_t j = 0; j < r; ++j) row[j] -= lr_lat * u[j];
    }
  }
  for (std::size_t c = 0; c < m.aux_weights.size(); ++c)
    if (!m.aux_weights[c].empty()) m.aux_weights[c][m.resolve(c, e.values[c])] -= lr_lin;
  m.bias -= lr_lin;
  for (std::size_t j = 0; j < features.size(); ++j) m.code_weights[j] -= lr_lin * features[j];
  return pred;
}

inline std::uint64_t parameter_hash(const CvrModel& m) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& t : m.latents) h = hash_doubles(t, h);
  for (const auto& t : m.aux_weights) h = hash_doubles(t, h);
  h = hash_doubles(std::span<const double>(&m.bias, 1), h);
  return hash_doubles(m.code_weights, h);
}

struct SegmentCalibration {
  std::uint32_t segment = 0;
  std::size_t count = 0;
  std::size_t positives = 0;
  double mean_pcvr = 0.0;
  std::optional<double> ratio;  // undefined without positives
};

struct CvrEvalSummary {
  std::size_t count = 0;
  std::size_t positives = 0;
  double logloss = 0.0;
  double auc = 0.0;
  double mean_pcvr = 0.0;
  double empirical_cvr = 0.0;
  std::optional<double> calibration;  // mean pCVR / empirical CVR
  std::vector<SegmentCalibration> segments;
};

// Collects (pCVR, label, segment) triples; used both for progressive
// validation inside training and for standalone evaluation.
class CvrEvaluator {
 public:
  void add(const Prediction& p, int y, std::uint32_t segment) {
    scores_.push_back(p.pcvr);
    labels_.push_back(y);
    segments_.push_back(segment);
    loss_sum_ += cvr_logloss(p, y);
  }

  std::size_t size() const { return scores_.size(); }

  CvrEvalSummary summary() const {
    CvrEvalSummary s;
    s.count = scores_.size();
    if (s.count == 0) {
      s.logloss = s.auc = s.mean_pcvr = s.empirical_cvr = std::numeric_limits<double>::quiet_NaN();
      return s;
    }
    const double n = static_cast<double>(s.count);
    double pcvr_sum = 0.0;
    std::map<std::uint32_t, SegmentCalibration> seg;
    for (std::size_t i = 0; i < s.count; ++i) {
      pcvr_sum += scores_[i];
      s.positives += static_cast<std::size_t>(labels_[i]);
      auto& sc = seg[segments_[i]];
      sc.segment = segments_[i];
      ++sc.count;
      sc.positives += static_cast<std::size_t>(labels_[i]);
      sc.mean_pcvr += scores_[i];
    }
    s.logloss = loss_sum_ / n;
    s.auc = auc(scores_, labels_);
    s.mean_pcvr = pcvr_sum / n;
    s.empirical_cvr = static_cast<double>(s.positives) / n;
    if (s.positives > 0) s.calibration = s.mean_pcvr / s.empirical_cvr;
    for (auto& [_, sc] : seg) {
      const double cn = static_cast<double>(sc.count);
      sc.mean_pcvr /= cn;
      if (sc.positives > 0) sc.ratio = sc.mean_pcvr / (static_cast<double>(sc.positives) / cn);
      s.segments.push_back(sc);
    }
    return s;
  }

 private:
  std::vector<double> scores_;
  std::vector<int> labels_;
  std::vector<std::uint32_t> segments_;
  double loss_sum_ = 0.0;
};

// Scores every click event of `dataset` with no training. Segments are the
// taxonomy-top categories.
inline CvrEvalSummary cvr_evaluate(const CvrModel& m, const AutoencoderParams& encoder,
                                   const RffTransform& rff, const IntervalDataset& dataset,
                                   std::size_t segment_column) {
  CvrEvaluator ev;
  AeWorkspace ws;
  std::vector<double> feats;
  for (const auto& e : dataset.events) {
    if (!is_click(e.kind)) continue;
    code_features(m, rff, ae_encode_into(encoder, e, ws), feats);
    ev.add(cvr_score(m, e, feats), e.label(), e.values[segment_column]);
  }
  return ev.summary();
}

}  // namespace ossl
