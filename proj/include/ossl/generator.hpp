#pragma once

// Synthetic event streams with planted conversion structure.
//
// Every event belongs to a latent cluster z. Each column value is drawn from
// a cluster-conditional categorical distribution. Click events convert with
// probability sigmoid(base +/- amplitude), the sign given by the XOR of the
// cluster parity and the parity of the taxonomy-low category. Every cluster
// spreads its taxonomy-low mass evenly over equally many even and odd
// categories, so neither parity alone carries label information and the
// conversion boundary is nonlinear in any embedding of (cluster, category).
// View conversions draw their cluster from a prior shifted by a fixed total
// variation distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ossl/errors.hpp"
#include "ossl/events.hpp"
#include "ossl/nn.hpp"
#include "ossl/rng.hpp"
#include "ossl/schema.hpp"

namespace ossl {

struct GeneratorConfig {
  std::size_t clusters = 16;
  std::size_t intervals = 10;
  std::size_t events_per_interval = 40000;
  std::uint32_t first_interval = 1;
  double click_conversion_rate = 0.1;  // mean CVR over click events
  double view_conversion_share = 0.45;
  double view_shift_tv = 0.3;          // TV distance of the view-conversion cluster prior
  double drift_rate = 0.0;             // per-interval log-drift of the cluster prior
  double concentration = 0.97;         // mass of a cluster's home value within its support
  std::size_t support = 2;             // values per (cluster, column), taxonomy-low excluded
  double noise = 0.005;                // uniform mass over the whole dictionary, taxonomy-low excluded
  std::size_t low_support = 8;         // taxonomy-low categories per cluster, half of each parity
  double xor_amplitude = 2.0;

  void validate(const Schema& schema) const {
    const auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (clusters < 1) throw ConfigError("generator: clusters must be >= 1");
    if (events_per_interval < 1) throw ConfigError("generator: events_per_interval must be >= 1");
    if (!unit(click_conversion_rate) || !unit(view_conversion_share) || !unit(view_shift_tv) ||
        !unit(concentration) || !unit(noise))
      throw ConfigError("generator: rates must lie in [0, 1]");
    if (!std::isfinite(drift_rate) || !std::isfinite(xor_amplitude))
      throw ConfigError("generator: drift_rate and xor_amplitude must be finite");
    if (support < 1) throw ConfigError("generator: support must be >= 1");
    if (low_support < 2 || low_support % 2 != 0)
      throw ConfigError("generator: low_support must be a positive even number");
    const auto& low = schema[schema.taxonomy_low()];
    std::size_t odd = 0, even = 0;
    for (std::uint32_t v = 0; v < low.cardinality; ++v)
      if (v != low.oov_index) (v % 2 ? odd : even)++;
    if (low_support / 2 > std::min(odd, even))
      throw ConfigError("generator: low_support exceeds available taxonomy_low categories");
    if (clusters < 2 && view_shift_tv > 0.0)
      throw ConfigError("generator: view_shift_tv needs at least two clusters");
  }
};

// Ground truth for one generated event (debug channel).
struct EventTruth {
  std::uint32_t cluster = 0;
  std::uint8_t xor_bit = 0;  // cluster parity XOR taxonomy-low parity
  double logit = 0.0;        // conversion logit of a click event
};

struct SyntheticStream {
  std::vector<IntervalDataset> intervals;
  std::vector<std::vector<EventTruth>> truth;  // parallel to intervals[i].events
};

class SyntheticGenerator {
 public:
  SyntheticGenerator(Schema schema, GeneratorConfig config, std::uint64_t seed)
      : schema_(std::move(schema)), config_(config), seed_(seed) {
    config_.validate(schema_);
    build_structure();
  }

  const Schema& schema() const { return schema_; }
  const GeneratorConfig& config() const { return config_; }
  double label_bias() const { return label_bias_; }

  // Cluster prior for the interval at position `index` (0-based).
  std::vector<double> click_prior(std::size_t index) const {
    std::vector<double> p(config_.clusters);
    for (std::size_t z = 0; z < p.size(); ++z)
      p[z] = base_prior_[z] * std::exp(config_.drift_rate * static_cast<double>(index) * drift_dir_[z]);
    normalize(p);
    return p;
  }

  // Moves `view_shift_tv` of mass from the first half of the clusters to the
  // second half, proportionally within each half; the TV distance to the
  // input prior is exactly the shift.
  std::vector<double> view_prior(std::size_t index) const {
    auto p = click_prior(index);
    const double shift = config_.view_shift_tv;
    if (shift == 0.0) return p;
    const std::size_t half = p.size() / 2;
    const double donors = std::accumulate(p.begin(), p.begin() + half, 0.0);
    const double receivers = 1.0 - donors;
    if (shift > donors)
      throw ConfigError("generator: view_shift_tv larger than the donor cluster mass");
    for (std::size_t z = 0; z < p.size(); ++z)
      p[z] *= z < half ? 1.0 - shift / donors : 1.0 + shift / receivers;
    return p;
  }

  const std::vector<double>& column_distribution(std::size_t cluster, std::size_t column) const {
    return conditionals_[cluster * schema_.size() + column];
  }

  SyntheticStream generate() const {
    SyntheticStream out;
    for (std::size_t j = 0; j < config_.intervals; ++j) {
      auto [ds, truth] = generate_interval(j);
      out.intervals.push_back(std::move(ds));
      out.truth.push_back(std::move(truth));
    }
    return out;
  }

  std::pair<IntervalDataset, std::vector<EventTruth>> generate_interval(std::size_t index) const {
    const auto interval_id = static_cast<std::uint32_t>(config_.first_interval + index);
    Rng rng = Rng(seed_).split(0x1000 + interval_id);
    const auto click_cdf = cumulative(click_prior(index));
    const auto view_cdf = cumulative(view_prior(index));
    const std::size_t low = schema_.taxonomy_low();

    IntervalDataset ds;
    ds.interval_id = interval_id;
    std::vector<EventTruth> truth;
    ds.events.reserve(config_.events_per_interval);
    truth.reserve(config_.events_per_interval);
    for (std::size_t n = 0; n < config_.events_per_interval; ++n) {
      const bool view = rng.bernoulli(config_.view_conversion_share);
      const auto z = static_cast<std::uint32_t>(rng.categorical(view ? view_cdf : click_cdf));
      Event e;
      e.interval_id = interval_id;
      e.values.resize(schema_.size());
      for (std::size_t i = 0; i < schema_.size(); ++i) {
        const auto& c = conditional_cdfs_[z * schema_.size() + i];
        e.values[i] = support_values_[z * schema_.size() + i][rng.categorical(c)];
      }
      EventTruth t;
      t.cluster = z;
      t.xor_bit = static_cast<std::uint8_t>((z & 1u) ^ (e.values[low] & 1u));
      t.logit = label_bias_ + (t.xor_bit ? config_.xor_amplitude : -config_.xor_amplitude);
      if (view) {
        e.kind = EventKind::view_conversion;
      } else {
        e.kind = rng.bernoulli(conversion_probability(t.logit)) ? EventKind::click_conversion
                                                                : EventKind::click_negative;
      }
      ds.events.push_back(std::move(e));
      truth.push_back(t);
    }
    return {std::move(ds), std::move(truth)};
  }

 private:
  static void normalize(std::vector<double>& p) {
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& x : p) x /= total;
  }

  static std::vector<double> cumulative(const std::vector<double>& p) {
    std::vector<double> c(p.size());
    std::partial_sum(p.begin(), p.end(), c.begin());
    return c;
  }

  double conversion_probability(double logit) const {
    if (config_.click_conversion_rate <= 0.0) return 0.0;
    if (config_.click_conversion_rate >= 1.0) return 1.0;
    return sigmoid(logit);
  }

  // Picks `count` distinct values from `pool` (consumed in place).
  static std::vector<std::uint32_t> draw_distinct(std::vector<std::uint32_t>& pool,
                                                  std::size_t count, Rng& rng) {
    count = std::min(count, pool.size());
    for (std::size_t i = 0; i < count; ++i)
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    return {pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count)};
  }

  void build_structure() {
    Rng rng = Rng(seed_).split(0x5354);  // structure stream
    const std::size_t Z = config_.clusters;
    const std::size_t C = schema_.size();

    base_prior_.resize(Z);
    drift_dir_.resize(Z);
    for (std::size_t z = 0; z < Z; ++z) base_prior_[z] = 0.5 + rng.uniform();
    normalize(base_prior_);
    for (std::size_t z = 0; z < Z; ++z) drift_dir_[z] = rng.normal();

    support_values_.resize(Z * C);
    conditionals_.resize(Z * C);
    conditional_cdfs_.resize(Z * C);
    for (std::size_t z = 0; z < Z; ++z) {
      for (std::size_t i = 0; i < C; ++i) {
        const auto& col = schema_[i];
        std::vector<std::uint32_t> chosen;
        std::vector<double> probs;
        if (col.side == ColumnSide::taxonomy_low) {
          std::vector<std::uint32_t> even, odd;
          for (std::uint32_t v = 0; v < col.cardinality; ++v)
            if (v != col.oov_index) (v % 2 ? odd : even).push_back(v);
          chosen = draw_distinct(even, config_.low_support / 2, rng);
          const auto odds = draw_distinct(odd, config_.low_support / 2, rng);
          chosen.insert(chosen.end(), odds.begin(), odds.end());
          probs.assign(chosen.size(), 1.0 / static_cast<double>(chosen.size()));
        } else {
          std::vector<std::uint32_t> pool;
          for (std::uint32_t v = 0; v < col.cardinality; ++v)
            if (v != col.oov_index) pool.push_back(v);
          const auto home = draw_distinct(pool, config_.support, rng);
          std::vector<double> home_probs(home.size(), 1.0);
          if (home.size() > 1) {
            const double rest = (1.0 - config_.concentration) / static_cast<double>(home.size() - 1);
            home_probs.assign(home.size(), rest);
            home_probs[0] = config_.concentration;
          }
          // Support is the whole dictionary (OOV excluded) once noise is added.
          std::sort(pool.begin(), pool.end());
          chosen = pool;
          probs.assign(pool.size(), config_.noise / static_cast<double>(pool.size()));
          for (std::size_t s = 0; s < home.size(); ++s) {
            const auto pos = std::lower_bound(pool.begin(), pool.end(), home[s]) - pool.begin();
            probs[static_cast<std::size_t>(pos)] += (1.0 - config_.noise) * home_probs[s];
          }
        }
        support_values_[z * C + i] = std::move(chosen);
        conditional_cdfs_[z * C + i] = cumulative(probs);
        conditionals_[z * C + i] = std::vector<double>(col.cardinality, 0.0);
        for (std::size_t s = 0; s < probs.size(); ++s)
          conditionals_[z * C + i][support_values_[z * C + i][s]] += probs[s];
      }
    }

    // Bias such that the mean click CVR hits the configured rate; the XOR
    // sign is balanced within every cluster.
    const double target = config_.click_conversion_rate;
    const double a = config_.xor_amplitude;
    if (target > 0.0 && target < 1.0) {
      double lo = -60.0, hi = 60.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double mean = 0.5 * (sigmoid(mid + a) + sigmoid(mid - a));
        (mean < target ? lo : hi) = mid;
      }
      label_bias_ = 0.5 * (lo + hi);
    }
  }

  Schema schema_;
  GeneratorConfig config_;
  std::uint64_t seed_;
  std::vector<double> base_prior_;
  std::vector<double> drift_dir_;
  std::vector<std::vector<std::uint32_t>> support_values_;
  std::vector<std::vector<double>> conditional_cdfs_;
  std::vector<std::vector<double>> conditionals_;
  double label_bias_ = 0.0;
};

inline SyntheticStream gen_synthetic(const Schema& schema, const GeneratorConfig& config,
                                     std::uint64_t seed) {
  return SyntheticGenerator(schema, config, seed).generate();
}

}  // namespace ossl
