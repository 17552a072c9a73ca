#pragma once

// Auction ranking under the code-augmented score. The auto-encoder reads
// only user columns and the two taxonomy levels, so within one auction the
// code term <W, features(code)> depends on the ad only through its
// taxonomy. Cached mode computes that term once per (top, low) category and
// reuses it for every ad in the category; naive mode runs the encoder for
// every ad. Both perform the same floating-point operations per score.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ossl/autoencoder.hpp"
#include "ossl/cvr_model.hpp"
#include "ossl/errors.hpp"
#include "ossl/rff.hpp"
#include "ossl/rng.hpp"
#include "ossl/schema.hpp"
#include "ossl/stats.hpp"

namespace ossl {

struct Ad {
  std::uint64_t ad_id = 0;
  std::vector<std::uint32_t> values;  // one per Schema::ad_side_columns(), in order
  double tcpa = 1.0;
};

struct UserContext {
  std::vector<std::uint32_t> values;  // one per Schema::user_columns(), in order
};

enum class RankMode { cached, naive };

inline std::string_view to_string(RankMode m) { return m == RankMode::cached ? "cached" : "naive"; }

struct AuctionEntry {
  std::uint64_t ad_id = 0;
  double score = 0.0;
  double pcvr = 0.0;
  double bid = 0.0;
};

struct AuctionTiming {
  std::int64_t encode_ns = 0;  // code terms (per category or per ad)
  std::int64_t score_ns = 0;   // per-ad factorization terms
  std::int64_t sort_ns = 0;
  std::int64_t total_ns = 0;
};

struct AuctionResult {
  std::vector<AuctionEntry> ranking;  // bid descending, ties by ad_id ascending
  AuctionTiming timing;
  std::size_t encoder_invocations = 0;
  std::size_t unknown_categories = 0;  // ads whose taxonomy-low value is outside the dictionary
};

inline double compute_bid(double pcvr, double tcpa) {
  require(tcpa > 0.0, "compute_bid: tcpa must be positive");
  return pcvr * tcpa;
}

class AuctionScorer {
 public:
  AuctionScorer(const Schema& schema, const CvrModel& model, const AutoencoderParams& encoder,
                const RffTransform& rff)
      : schema_(schema),
        model_(model),
        encoder_(encoder),
        rff_(rff),
        user_cols_(schema.user_columns()),
        ad_cols_(schema.ad_side_columns()),
        top_(schema.taxonomy_top()),
        low_(schema.taxonomy_low()) {
    require(model.cardinalities.size() == schema.size(), "AuctionScorer: model/schema mismatch");
    top_pos_ = static_cast<std::size_t>(std::find(ad_cols_.begin(), ad_cols_.end(), top_) - ad_cols_.begin());
    low_pos_ = static_cast<std::size_t>(std::find(ad_cols_.begin(), ad_cols_.end(), low_) - ad_cols_.begin());
  }

  AuctionResult rank(const UserContext& user, std::span<const Ad> catalog, RankMode mode) {
    require(!catalog.empty(), "rank_auction: empty catalog");
    require(user.values.size() == user_cols_.size(), "rank_auction: user context has wrong length");
    using Clock = std::chrono::steady_clock;
    const auto ns = [](Clock::duration d) {
      return std::chrono::duration_cast<std::chrono::nanoseconds>(d).count();
    };
    AuctionResult res;
    const auto t0 = Clock::now();

    Event event;
    event.values.assign(schema_.size(), 0);
    for (std::size_t i = 0; i < user_cols_.size(); ++i)
      event.values[user_cols_[i]] = clamp(user_cols_[i], user.values[i]);

    code_terms_.assign(catalog.size(), 0.0);
    if (mode == RankMode::cached) {
      const std::size_t n_low = schema_[low_].cardinality;
      cache_.assign(std::size_t{schema_[top_].cardinality} * n_low, 0.0);
      filled_.assign(cache_.size(), 0);
      for (std::size_t a = 0; a < catalog.size(); ++a) {
        const Ad& ad = checked(catalog[a]);
        if (ad.values[low_pos_] >= n_low) ++res.unknown_categories;
        const std::size_t key = clamp(top_, ad.values[top_pos_]) * n_low + clamp(low_, ad.values[low_pos_]);
        if (!filled_[key]) {
          set_ad(event, ad);
          cache_[key] = code_term(event);
          filled_[key] = 1;
          ++res.encoder_invocations;
        }
        code_terms_[a] = cache_[key];
      }
    } else {
      for (std::size_t a = 0; a < catalog.size(); ++a) {
        const Ad& ad = checked(catalog[a]);
        if (ad.values[low_pos_] >= schema_[low_].cardinality) ++res.unknown_categories;
        set_ad(event, ad);
        code_terms_[a] = code_term(event);
        ++res.encoder_invocations;
      }
    }
    const auto t1 = Clock::now();

    res.ranking.resize(catalog.size());
    if (mode == RankMode::cached && model_.config.use_latents)
      side_vector(model_, user_cols_, event.values, user_vec_);
    for (std::size_t a = 0; a < catalog.size(); ++a) {
      set_ad(event, catalog[a]);
      ScoreTerms t;
      if (model_.config.use_latents) {
        if (mode == RankMode::naive) side_vector(model_, user_cols_, event.values, user_vec_);
        side_vector(model_, ad_cols_, event.values, ad_vec_);
        t.interaction = dot(user_vec_, ad_vec_);
      }
      t.aux = aux_term(model_, event.values);
      t.bias = model_.bias;
      t.code = code_terms_[a];
      const Prediction p = make_prediction(t.total());
      res.ranking[a] = {catalog[a].ad_id, p.score, p.pcvr, compute_bid(p.pcvr, catalog[a].tcpa)};
    }
    const auto t2 = Clock::now();

    std::sort(res.ranking.begin(), res.ranking.end(), [](const AuctionEntry& x, const AuctionEntry& y) {
      if (x.bid != y.bid) return x.bid > y.bid;
      return x.ad_id < y.ad_id;
    });
    const auto t3 = Clock::now();
    res.timing = {ns(t1 - t0), ns(t2 - t1), ns(t3 - t2), ns(t3 - t0)};
    return res;
  }

 private:
  std::uint32_t clamp(std::size_t column, std::uint32_t v) const {
    return v < schema_[column].cardinality ? v : schema_[column].oov_index;
  }

  const Ad& checked(const Ad& ad) const {
    require(ad.values.size() == ad_cols_.size(), "rank_auction: ad has wrong number of values");
    require(ad.tcpa > 0.0, "rank_auction: tcpa must be positive");
    return ad;
  }

  void set_ad(Event& e, const Ad& ad) const {
    for (std::size_t i = 0; i < ad_cols_.size(); ++i) e.values[ad_cols_[i]] = clamp(ad_cols_[i], ad.values[i]);
  }

  double code_term(const Event& e) {
    if (model_.config.code_features == CodeFeatureMode::none) return 0.0;
    code_features(model_, rff_, ae_encode_into(encoder_, e, ws_), features_);
    return dot(model_.code_weights, features_);
  }

  const Schema& schema_;
  const CvrModel& model_;
  const AutoencoderParams& encoder_;
  const RffTransform& rff_;
  std::vector<std::size_t> user_cols_, ad_cols_;
  std::size_t top_, low_, top_pos_ = 0, low_pos_ = 0;
  AeWorkspace ws_;
  std::vector<double> features_, user_vec_, ad_vec_, code_terms_, cache_;
  std::vector<std::uint8_t> filled_;
};

inline AuctionResult rank_auction(const Schema& schema, const CvrModel& model,
                                  const AutoencoderParams& encoder, const RffTransform& rff,
                                  const UserContext& user, std::span<const Ad> catalog, RankMode mode) {
  AuctionScorer scorer(schema, model, encoder, rff);
  return scorer.rank(user, catalog, mode);
}

// Catalog over `category_count` taxonomy-low categories (round robin). The
// top level is a fixed function of the low level, contiguous blocks of low
// categories sharing one top category.
inline std::vector<Ad> make_catalog(const Schema& schema, std::size_t size, std::size_t category_count,
                                    std::uint64_t seed) {
  require(size >= 1 && category_count >= 1, "make_catalog: empty catalog");
  const auto ad_cols = schema.ad_side_columns();
  const std::size_t n_top = schema[schema.taxonomy_top()].cardinality;
  Rng rng(seed, 0x434154);  // "CAT"
  std::vector<Ad> out(size);
  for (std::size_t a = 0; a < size; ++a) {
    Ad& ad = out[a];
    ad.ad_id = a;
    const auto low = static_cast<std::uint32_t>(a % category_count);
    for (auto c : ad_cols) {
      if (c == schema.taxonomy_low()) ad.values.push_back(low);
      else if (c == schema.taxonomy_top())
        ad.values.push_back(static_cast<std::uint32_t>(low * n_top / std::max(category_count, n_top)));
      else ad.values.push_back(static_cast<std::uint32_t>(rng.below(schema[c].cardinality)));
    }
    ad.tcpa = rng.uniform(1.0, 50.0);
  }
  return out;
}

inline UserContext make_user(const Schema& schema, Rng& rng) {
  UserContext u;
  for (auto c : schema.user_columns()) u.values.push_back(static_cast<std::uint32_t>(rng.below(schema[c].cardinality)));
  return u;
}

struct BenchScenario {
  std::size_t catalog_size = 10000;
  std::size_t category_count = 48;
  std::size_t repetitions = 10;
  std::size_t warmup = 2;
  std::uint64_t seed = 1;

  static BenchScenario from_json(const nlohmann::json& doc) {
    BenchScenario s;
    if (!doc.is_object()) throw ConfigError("scenario: expected a JSON object");
    for (const auto& [key, value] : doc.items()) {
      if (!value.is_number_unsigned()) throw ConfigError("scenario: '" + key + "' must be a non-negative integer");
      const auto v = value.get<std::uint64_t>();
      if (key == "catalog_size") s.catalog_size = v;
      else if (key == "category_count") s.category_count = v;
      else if (key == "repetitions") s.repetitions = v;
      else if (key == "warmup") s.warmup = v;
      else if (key == "seed") s.seed = v;
      else throw ConfigError("scenario: unknown key '" + key + "'");
    }
    if (s.catalog_size < 1 || s.category_count < 1 || s.repetitions < 1)
      throw ConfigError("scenario: catalog_size, category_count and repetitions must be >= 1");
    return s;
  }

  static BenchScenario load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario: cannot open '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("scenario: ") + e.what());
    }
  }
};

struct BenchRow {
  RankMode mode = RankMode::cached;
  double median_ns = 0.0;
  double p99_ns = 0.0;
  std::size_t invocations = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;  // cached, naive
  double speedup = 0.0;        // naive median / cached median
  bool identical_rankings = true;
};

inline BenchReport latency_bench(const Schema& schema, const CvrModel& model,
                                 const AutoencoderParams& encoder, const RffTransform& rff,
                                 const BenchScenario& scenario) {
  const auto catalog = make_catalog(schema, scenario.catalog_size, scenario.category_count, scenario.seed);
  Rng rng(scenario.seed, 0x55534552);  // "USER"
  const UserContext user = make_user(schema, rng);
  AuctionScorer scorer(schema, model, encoder, rff);

  BenchReport report;
  std::vector<AuctionEntry> reference;
  for (RankMode mode : {RankMode::cached, RankMode::naive}) {
    for (std::size_t w = 0; w < scenario.warmup; ++w) scorer.rank(user, catalog, mode);
    std::vector<double> samples;
    BenchRow row;
    row.mode = mode;
    for (std::size_t r = 0; r < scenario.repetitions; ++r) {
      const AuctionResult res = scorer.rank(user, catalog, mode);
      samples.push_back(static_cast<double>(res.timing.total_ns));
      row.invocations = res.encoder_invocations;
      if (r == 0) {
        if (mode == RankMode::cached) reference = res.ranking;
        else {
          report.identical_rankings = reference.size() == res.ranking.size() &&
                                      std::equal(reference.begin(), reference.end(), res.ranking.begin(),
                                                 [](const AuctionEntry& a, const AuctionEntry& b) {
                                                   return a.ad_id == b.ad_id && a.score == b.score;
                                                 });
        }
      }
    }
    row.median_ns = median(samples);
    row.p99_ns = percentile(samples, 99.0);
    report.rows.push_back(row);
  }
  report.speedup = report.rows[1].median_ns / report.rows[0].median_ns;
  return report;
}

inline void write_bench_csv(std::ostream& out, const BenchReport& r) {
  out << "mode,median_ns,p99_ns,invocations\n";
  for (const auto& row : r.rows)
    out << to_string(row.mode) << ',' << static_cast<std::int64_t>(row.median_ns) << ','
        << static_cast<std::int64_t>(row.p99_ns) << ',' << row.invocations << '\n';
}

}  // namespace ossl
