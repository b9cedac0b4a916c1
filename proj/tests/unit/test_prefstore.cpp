#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "prefforge/prefstore.hpp"

using namespace prefforge;
using namespace prefforge::prefstore;
namespace fs = std::filesystem;

namespace {

Episode make_episode(std::size_t len, std::mt19937_64& rng, int h = 6, int w = 6, bool with_rewards = true) {
  Episode e;
  std::uniform_real_distribution<double> r(-1.0, 1.0);
  for (std::size_t t = 0; t < len; ++t) {
    e.frames.push_back(fixture::random_frame(h, w, rng));
    e.actions.push_back(r(rng));
    if (with_rewards) e.true_rewards.push_back(r(rng));
  }
  return e;
}

Episode with_returns(double total, std::size_t len) {
  Episode e;
  for (std::size_t t = 0; t < len; ++t) {
    e.frames.emplace_back(4, 4, static_cast<std::uint8_t>(t));
    e.actions.push_back(0.0);
    e.true_rewards.push_back(t == 0 ? total : 0.0);
  }
  return e;
}

class TempDir : public ::testing::Test {
 protected:
  fs::path dir = fs::temp_directory_path() / ("prefforge_store_" + std::to_string(::getpid()) + "_" +
                                              ::testing::UnitTest::GetInstance()->current_test_info()->name());
  void SetUp() override { fs::remove_all(dir); }
  void TearDown() override { fs::remove_all(dir); }
};

PreferenceStore populated(std::uint64_t seed, std::size_t cap = 1000) {
  PreferenceStore store({5, cap, seed});
  std::mt19937_64 rng(seed);
  for (int e = 0; e < 4; ++e) store.ingest_rollout(make_episode(23, rng));
  store.ingest_rollout(make_episode(12, rng), SegmentPool::heldout);
  store.ingest_rollout(make_episode(12, rng), SegmentPool::heldout);
  store.make_heldout_pairs(5);
  const auto tickets = store.schedule_queries(6);
  for (std::size_t i = 0; i < 4; ++i) {
    store.answer_ticket(tickets[i].ticket_id, store.oracle_label(tickets[i].seg0, tickets[i].seg1), LabelSource::oracle);
  }
  store.expire_ticket(tickets[4].ticket_id);
  return store;
}

}  // namespace

TEST(Ingest, WindowCounts) {
  std::mt19937_64 rng(1);
  PreferenceStore store({50, 1000, 0});
  EXPECT_EQ(store.ingest_rollout(make_episode(500, rng)).size(), 10u);
  EXPECT_EQ(store.ingest_rollout(make_episode(49, rng)).size(), 0u);
  EXPECT_EQ(store.ingest_rollout(make_episode(120, rng)).size(), 2u);
}

TEST(Ingest, WindowsAlignToEpisodeEnd) {
  std::mt19937_64 rng(2);
  PreferenceStore store({4, 1000, 0});
  const Episode e = make_episode(10, rng);
  const auto ids = store.ingest_rollout(e);
  ASSERT_EQ(ids.size(), 2u);
  const auto last = store.segment(ids[1]);
  EXPECT_EQ(last->start_index, 6u);
  EXPECT_EQ(last->frames.back(), e.frames.back());
  EXPECT_EQ(last->true_rewards.back(), e.true_rewards.back());
}

TEST(Ingest, IdsStrictlyIncrease) {
  std::mt19937_64 rng(3);
  PreferenceStore store({3, 1000, 0});
  std::uint64_t last = 0;
  for (int i = 0; i < 5; ++i) {
    for (auto id : store.ingest_rollout(make_episode(10, rng))) {
      EXPECT_GT(id, last);
      last = id;
    }
  }
}

TEST(Ingest, RejectsInconsistentEpisodes) {
  std::mt19937_64 rng(4);
  PreferenceStore store({3, 1000, 0});
  Episode e = make_episode(6, rng);
  e.actions.pop_back();
  EXPECT_THROW(store.ingest_rollout(e), StoreError);
  store.ingest_rollout(make_episode(6, rng, 6, 6));
  EXPECT_THROW(store.ingest_rollout(make_episode(6, rng, 7, 6)), ShapeError);
}

TEST(OracleLabel, LargerReturnWins) {
  PreferenceStore store({3, 1000, 0});
  const auto a = store.ingest_rollout(with_returns(10, 3))[0];
  const auto b = store.ingest_rollout(with_returns(2, 3))[0];
  EXPECT_EQ(store.oracle_label(a, b), 0);
  EXPECT_EQ(store.oracle_label(b, a), 1);
}

TEST(OracleLabel, TiesFollowSeededGenerator) {
  for (std::uint64_t seed : {0ull, 1ull, 77ull}) {
    PreferenceStore store({3, 1000, seed});
    const auto a = store.ingest_rollout(with_returns(5, 3))[0];
    const auto b = store.ingest_rollout(with_returns(5, 3))[0];
    std::mt19937_64 ref(seed);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(store.oracle_label(a, b), static_cast<int>(ref() >> 63));
  }
}

TEST(OracleLabel, AgreesWithBruteForceOnRandomPairs) {
  std::mt19937_64 rng(5);
  PreferenceStore store({7, 100000, 3});
  std::vector<std::uint64_t> ids;
  for (int e = 0; e < 40; ++e)
    for (auto id : store.ingest_rollout(make_episode(35, rng, 2, 2))) ids.push_back(id);
  std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
  for (int i = 0; i < 500; ++i) {
    const auto a = store.segment(ids[pick(rng)]), b = store.segment(ids[pick(rng)]);
    const int want = oracle::brute_force_label(a->true_rewards, b->true_rewards);
    if (want < 0) continue;
    EXPECT_EQ(store.oracle_label(a->id, b->id), want);
  }
}

TEST(OracleLabel, RefusesSegmentsWithoutTrueRewards) {
  std::mt19937_64 rng(6);
  PreferenceStore store({3, 1000, 0});
  const auto a = store.ingest_rollout(make_episode(3, rng, 4, 4, false))[0];
  const auto b = store.ingest_rollout(make_episode(3, rng, 4, 4))[0];
  EXPECT_THROW(store.oracle_label(a, b), StoreError);
  EXPECT_THROW(store.oracle_label(a, 999), StoreError);
}

TEST(Schedule, TwoSegmentsGiveTheOnlyPair) {
  PreferenceStore store({3, 1000, 0});
  const auto a = store.ingest_rollout(with_returns(1, 3))[0];
  const auto b = store.ingest_rollout(with_returns(2, 3))[0];
  const auto t = store.schedule_queries(1);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(std::min(t[0].seg0, t[0].seg1), a);
  EXPECT_EQ(std::max(t[0].seg0, t[0].seg1), b);
  EXPECT_TRUE(store.schedule_queries(0).empty());
}

TEST(Schedule, NeedsTwoSegments) {
  PreferenceStore store({3, 1000, 0});
  EXPECT_THROW(store.schedule_queries(1), StoreError);
  store.ingest_rollout(with_returns(1, 3));
  EXPECT_THROW(store.schedule_queries(1), StoreError);
}

TEST(Schedule, DeterministicForSeed) {
  auto run = [] {
    std::mt19937_64 rng(7);
    PreferenceStore store({4, 1000, 11});
    for (int e = 0; e < 5; ++e) store.ingest_rollout(make_episode(20, rng));
    return store.schedule_queries(8);
  };
  EXPECT_EQ(run(), run());
}

TEST(Schedule, PendingPairsAreDistinctAndTrainOnly) {
  std::mt19937_64 rng(8);
  PreferenceStore store({4, 1000, 2});
  for (int e = 0; e < 3; ++e) store.ingest_rollout(make_episode(20, rng));
  const auto heldout = store.ingest_rollout(make_episode(20, rng), SegmentPool::heldout);
  const auto tickets = store.schedule_queries(30);
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  for (const auto& t : tickets) {
    EXPECT_NE(t.seg0, t.seg1);
    EXPECT_TRUE(seen.insert({std::min(t.seg0, t.seg1), std::max(t.seg0, t.seg1)}).second);
    for (auto h : heldout) {
      EXPECT_NE(t.seg0, h);
      EXPECT_NE(t.seg1, h);
    }
  }
}

TEST(Schedule, DisagreementPicksHighestScores) {
  std::mt19937_64 rng(9);
  PreferenceStore store({2, 1000, 4});
  for (int e = 0; e < 5; ++e) store.ingest_rollout(make_episode(10, rng));
  auto score = [](const SegmentView& a, const SegmentView& b) { return static_cast<double>(a.id + b.id); };
  const auto tickets = store.schedule_queries(3, QueryStrategy::ensemble_disagreement, score);
  ASSERT_EQ(tickets.size(), 3u);
  // 25 segments: the 30-pair candidate pool almost surely contains high-id pairs.
  for (const auto& t : tickets) EXPECT_GT(t.seg0 + t.seg1, 25u);
}

TEST(Budget, CapAndExhaustion) {
  PreferenceStore store({3, 2, 0});
  for (int i = 0; i < 4; ++i) store.ingest_rollout(with_returns(i, 3));
  EXPECT_EQ(store.feedback_budget_remaining(), 2u);
  const auto t = store.schedule_queries(5);
  ASSERT_EQ(t.size(), 2u);  // limited by the remaining budget
  EXPECT_TRUE(store.schedule_queries(5).empty());
  store.answer_ticket(t[0].ticket_id, 0, LabelSource::oracle);
  store.answer_ticket(t[1].ticket_id, 1, LabelSource::human);
  EXPECT_TRUE(store.budget_exhausted());
  EXPECT_TRUE(store.schedule_queries(5).empty());
}

TEST(Budget, DefaultCapIsOneThousand) {
  PreferenceStore store(StoreConfig{});
  EXPECT_EQ(store.feedback_budget_remaining(), 1000u);
}

TEST(Tickets, StateMachine) {
  PreferenceStore store({3, 10, 0});
  for (int i = 0; i < 3; ++i) store.ingest_rollout(with_returns(i, 3));
  const auto t = store.schedule_queries(3);
  const auto tuple = store.answer_ticket(t[0].ticket_id, 1, LabelSource::human);
  EXPECT_EQ(tuple.label, 1);
  EXPECT_EQ(tuple.source, LabelSource::human);
  EXPECT_EQ(store.answered_count(), 1u);

  auto kind_of = [&](auto&& fn) {
    try {
      fn();
    } catch (const TicketError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no TicketError";
    return TicketError::Kind::unknown;
  };
  using K = TicketError::Kind;
  EXPECT_EQ(kind_of([&] { store.answer_ticket(t[0].ticket_id, 0, LabelSource::human); }), K::already_answered);
  EXPECT_EQ(kind_of([&] { store.answer_ticket(12345, 0, LabelSource::human); }), K::unknown);
  EXPECT_EQ(kind_of([&] { store.answer_ticket(t[1].ticket_id, 2, LabelSource::human); }), K::bad_label);
  store.expire_ticket(t[1].ticket_id);
  EXPECT_EQ(kind_of([&] { store.answer_ticket(t[1].ticket_id, 0, LabelSource::human); }), K::expired);
  EXPECT_EQ(store.answered_count(), 1u);
  EXPECT_EQ(store.next_pending()->ticket_id, t[2].ticket_id);
}

TEST(Snapshot, IsolatedFromLaterLabels) {
  PreferenceStore store({3, 10, 0});
  for (int i = 0; i < 3; ++i) store.ingest_rollout(with_returns(i, 3));
  const auto t = store.schedule_queries(2);
  store.answer_ticket(t[0].ticket_id, 0, LabelSource::oracle);
  const StoreSnapshot snap = store.snapshot();
  store.answer_ticket(t[1].ticket_id, 1, LabelSource::oracle);
  EXPECT_EQ(snap.pair_count(), 1u);
  EXPECT_EQ(store.snapshot().pair_count(), 2u);
  const LabeledPair p = snap.pair(0);
  EXPECT_EQ(p.first.id, t[0].seg0);
  EXPECT_EQ(p.first.length(), 3u);
}

TEST(Snapshot, ConcurrentReadersSeeConsistentCounts) {
  PreferenceStore store({2, 400, 0});
  for (int i = 0; i < 40; ++i) store.ingest_rollout(with_returns(i, 2));
  const auto t = store.schedule_queries(400);
  std::atomic<bool> done{false};
  std::thread reader([&] {
    std::size_t last = 0;
    while (!done) {
      const auto snap = store.snapshot();
      EXPECT_GE(snap.pair_count(), last);
      last = snap.pair_count();
      for (std::size_t i = 0; i < snap.pair_count(); ++i) EXPECT_EQ(snap.pair(i).first.length(), 2u);
    }
  });
  for (const auto& ticket : t) store.answer_ticket(ticket.ticket_id, 0, LabelSource::oracle);
  done = true;
  reader.join();
  EXPECT_EQ(store.answered_count(), t.size());
}

TEST(Heldout, PairsSkipTiesAndStayOutOfTraining) {
  PreferenceStore store({3, 10, 0});
  for (int i = 0; i < 6; ++i) store.ingest_rollout(with_returns(i % 3, 3), SegmentPool::heldout);
  const auto pairs = store.make_heldout_pairs(50);
  EXPECT_FALSE(pairs.empty());
  for (const auto& p : pairs) {
    const auto a = store.segment(p.seg0), b = store.segment(p.seg1);
    EXPECT_EQ(p.label, oracle::brute_force_label(a->true_rewards, b->true_rewards));
  }
  EXPECT_EQ(store.snapshot().pair_count(), 0u);
  EXPECT_EQ(store.heldout_snapshot().pair_count(), pairs.size());
  EXPECT_EQ(store.feedback_budget_remaining(), 10u);
}

TEST_F(TempDir, SaveLoadDeepEquality) {
  PreferenceStore store = populated(21);
  store.save(dir);
  PreferenceStore loaded = PreferenceStore::load(dir);
  EXPECT_TRUE(loaded == store);
  // Generator state survives: both continue identically.
  const auto a = store.schedule_queries(3);
  const auto b = loaded.schedule_queries(3);
  EXPECT_EQ(a, b);
}

TEST_F(TempDir, EmptyStoreRoundTrip) {
  PreferenceStore store({7, 5, 3});
  store.save(dir);
  PreferenceStore loaded = PreferenceStore::load(dir);
  EXPECT_TRUE(loaded == store);
  EXPECT_EQ(loaded.segment_count(), 0u);
}

TEST_F(TempDir, SaveIsByteStable) {
  populated(5).save(dir / "a");
  populated(5).save(dir / "b");
  for (const char* name : {"store.jsonl", "frames.bin"}) {
    std::ifstream x(dir / "a" / name, std::ios::binary), y(dir / "b" / name, std::ios::binary);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(x), {}), std::string(std::istreambuf_iterator<char>(y), {}));
  }
}

TEST_F(TempDir, CorruptionIsDetected) {
  populated(6).save(dir);
  auto flip = [&](const char* name, std::size_t at) {
    std::fstream f(dir / name, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<std::streamoff>(at));
    char c;
    f.get(c);
    f.seekp(static_cast<std::streamoff>(at));
    f.put(static_cast<char>(c ^ 0x20));
  };
  const fs::path backup = dir.string() + "_bak";
  fs::remove_all(backup);
  fs::copy(dir, backup);

  flip("frames.bin", 100);
  EXPECT_THROW(PreferenceStore::load(dir), StoreError);
  fs::remove_all(dir);
  fs::copy(backup, dir);

  flip("store.jsonl", 40);
  EXPECT_THROW(PreferenceStore::load(dir), StoreError);
  fs::remove_all(dir);
  fs::copy(backup, dir);

  fs::resize_file(dir / "store.jsonl", fs::file_size(dir / "store.jsonl") - 10);
  EXPECT_THROW(PreferenceStore::load(dir), StoreError);
  fs::remove_all(dir);
  fs::copy(backup, dir);

  fs::resize_file(dir / "frames.bin", fs::file_size(dir / "frames.bin") - 3);
  EXPECT_THROW(PreferenceStore::load(dir), StoreError);
  fs::remove_all(backup);
}

TEST_F(TempDir, MissingDirectoryFails) { EXPECT_THROW(PreferenceStore::load(dir / "nope"), StoreError); }

TEST(Enums, RoundTripNames) {
  EXPECT_EQ(parse_query_strategy(to_string(QueryStrategy::uniform)), QueryStrategy::uniform);
  EXPECT_EQ(parse_query_strategy("ensemble_disagreement"), QueryStrategy::ensemble_disagreement);
  EXPECT_THROW(parse_query_strategy("random"), std::invalid_argument);
}
