#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "ossl/auction.hpp"
#include "ossl/generator.hpp"
#include "ossl/trainer.hpp"

namespace ossl {
namespace {

// A briefly trained model so that code weights and latents are non-trivial.
struct Trained {
  Schema schema = Schema::default_schema();
  Checkpoint ck;
  Trained() {
    GeneratorConfig cfg;
    cfg.intervals = 2;
    cfg.events_per_interval = 2000;
    const auto st = gen_synthetic(schema, cfg, 3);
    ck = initial_checkpoint(schema, {});
    train_stream(ck, st.intervals, schema);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

TEST(Bid, Product) {
  EXPECT_EQ(compute_bid(0.5, 10.0), 5.0);
  EXPECT_EQ(compute_bid(0.0, 10.0), 0.0);
  EXPECT_LT(compute_bid(0.2, 3.0), compute_bid(0.3, 3.0));
  EXPECT_THROW(compute_bid(0.5, 0.0), ContractViolation);
}

TEST(Auction, CachedAndNaiveAgreeBitForBit) {
  const auto& t = trained();
  Rng rng(77);
  for (int draw = 0; draw < 100; ++draw) {
    const auto catalog = make_catalog(t.schema, 200 + rng.below(200), 1 + rng.below(48), rng.next_u64());
    const auto user = make_user(t.schema, rng);
    const auto cached = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::cached);
    const auto naive = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::naive);
    ASSERT_EQ(cached.ranking.size(), naive.ranking.size());
    for (std::size_t i = 0; i < cached.ranking.size(); ++i) {
      ASSERT_EQ(cached.ranking[i].ad_id, naive.ranking[i].ad_id);
      ASSERT_EQ(cached.ranking[i].score, naive.ranking[i].score);
      ASSERT_EQ(cached.ranking[i].bid, naive.ranking[i].bid);
    }
    std::set<std::pair<std::uint32_t, std::uint32_t>> categories;
    for (const auto& ad : catalog) categories.insert({ad.values[ad.values.size() - 2], ad.values.back()});
    EXPECT_EQ(cached.encoder_invocations, categories.size());
    EXPECT_EQ(naive.encoder_invocations, catalog.size());
  }
}

TEST(Auction, ScoresMatchTheModel) {
  const auto& t = trained();
  Rng rng(5);
  const auto catalog = make_catalog(t.schema, 50, 10, 9);
  const auto user = make_user(t.schema, rng);
  const auto res = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::cached);
  const auto users = t.schema.user_columns(), ads = t.schema.ad_side_columns();
  for (const auto& entry : res.ranking) {
    Event e;
    e.values.assign(t.schema.size(), 0);
    for (std::size_t i = 0; i < users.size(); ++i) e.values[users[i]] = user.values[i];
    for (std::size_t i = 0; i < ads.size(); ++i) e.values[ads[i]] = catalog[entry.ad_id].values[i];
    const auto feats = rff_transform(t.ck.rff, ae_encode(t.ck.autoencoder, e));
    EXPECT_EQ(cvr_score(t.ck.cvr, e, feats).score, entry.score);
  }
}

TEST(Auction, DefaultCatalogUsesFortyEightEncoderCalls) {
  const auto& t = trained();
  Rng rng(1);
  const auto catalog = make_catalog(t.schema, 10000, 48, 1);
  const auto user = make_user(t.schema, rng);
  const auto res = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::cached);
  EXPECT_EQ(res.encoder_invocations, 48u);
}

TEST(Auction, RankingOrderAndTieBreak) {
  const auto& t = trained();
  Rng rng(2);
  auto catalog = make_catalog(t.schema, 300, 12, 4);
  // Duplicate ads with identical features and tcpa force ties.
  for (std::size_t i = 0; i < 20; ++i) {
    Ad copy = catalog[i];
    copy.ad_id = 1000 + i;
    catalog.push_back(copy);
  }
  const auto user = make_user(t.schema, rng);
  const auto res = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::cached);
  for (std::size_t i = 1; i < res.ranking.size(); ++i) {
    const auto& a = res.ranking[i - 1];
    const auto& b = res.ranking[i];
    EXPECT_TRUE(a.bid > b.bid || (a.bid == b.bid && a.ad_id < b.ad_id));
  }
}

TEST(Auction, SingleAdCatalog) {
  const auto& t = trained();
  Rng rng(3);
  const auto catalog = make_catalog(t.schema, 1, 1, 4);
  const auto user = make_user(t.schema, rng);
  const auto c = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::cached);
  const auto n = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::naive);
  EXPECT_EQ(c.encoder_invocations, 1u);
  EXPECT_EQ(n.encoder_invocations, 1u);
  EXPECT_EQ(c.ranking[0].score, n.ranking[0].score);
}

TEST(Auction, UnknownCategoryUsesOovAndIsCounted) {
  const auto& t = trained();
  Rng rng(3);
  auto catalog = make_catalog(t.schema, 10, 5, 4);
  catalog[3].values.back() = 500;
  const auto user = make_user(t.schema, rng);
  const auto c = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::cached);
  const auto n = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, catalog, RankMode::naive);
  EXPECT_EQ(c.unknown_categories, 1u);
  EXPECT_EQ(n.unknown_categories, 1u);
  for (std::size_t i = 0; i < c.ranking.size(); ++i) EXPECT_EQ(c.ranking[i].score, n.ranking[i].score);
}

TEST(Auction, EmptyCatalogIsContractViolation) {
  const auto& t = trained();
  Rng rng(3);
  const auto user = make_user(t.schema, rng);
  EXPECT_THROW(rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, user, {}, RankMode::cached),
               ContractViolation);
}

TEST(Auction, DeterministicRanking) {
  const auto& t = trained();
  const auto catalog = make_catalog(t.schema, 500, 20, 8);
  Rng r1(4), r2(4);
  const auto a = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, make_user(t.schema, r1), catalog,
                              RankMode::cached);
  const auto b = rank_auction(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, make_user(t.schema, r2), catalog,
                              RankMode::cached);
  for (std::size_t i = 0; i < a.ranking.size(); ++i) {
    EXPECT_EQ(a.ranking[i].ad_id, b.ranking[i].ad_id);
    EXPECT_EQ(a.ranking[i].score, b.ranking[i].score);
  }
}

TEST(Bench, InvocationRatioAndCsv) {
  const auto& t = trained();
  BenchScenario sc;
  sc.catalog_size = 960;
  sc.category_count = 48;
  sc.repetitions = 3;
  sc.warmup = 1;
  const auto report = latency_bench(t.schema, t.ck.cvr, t.ck.autoencoder, t.ck.rff, sc);
  ASSERT_EQ(report.rows.size(), 2u);
  EXPECT_EQ(report.rows[1].invocations / report.rows[0].invocations, 960u / 48u);
  EXPECT_EQ(report.rows[1].invocations % report.rows[0].invocations, 0u);
  EXPECT_TRUE(report.identical_rankings);
  std::ostringstream out;
  write_bench_csv(out, report);
  EXPECT_EQ(out.str().substr(0, 41), "mode,median_ns,p99_ns,invocations\ncached,");
}

TEST(Bench, ScenarioParsing) {
  const auto s = BenchScenario::from_json(nlohmann::json::parse(R"({"catalog_size": 100, "seed": 4})"));
  EXPECT_EQ(s.catalog_size, 100u);
  EXPECT_EQ(s.category_count, 48u);
  EXPECT_EQ(s.seed, 4u);
  EXPECT_THROW(BenchScenario::from_json(nlohmann::json::parse(R"({"ads": 100})")), ConfigError);
  EXPECT_THROW(BenchScenario::from_json(nlohmann::json::parse(R"({"repetitions": 0})")), ConfigError);
  EXPECT_THROW(BenchScenario::from_json(nlohmann::json::parse(R"({"seed": -1})")), ConfigError);
}

}  // namespace
}  // namespace ossl
