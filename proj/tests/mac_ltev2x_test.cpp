#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "coexsim/mac_ltev2x.hpp"

using namespace coexsim;

namespace {

const double kNoiseMw = std::pow(10.0, -9.8);

double chi2(const std::vector<int>& counts) {
  double total = 0;
  for (int c : counts) total += c;
  const double e = total / static_cast<double>(counts.size());
  double x = 0;
  for (int c : counts) x += (c - e) * (c - e) / e;
  return x;
}

// Fills the full 1000-TTI window before `now_tti` with noise.
void fill_quiet(SpsState& s, std::int64_t now_tti) {
  for (std::int64_t t = now_tti - 1000; t < now_tti; ++t) s.record_rssi(t, kNoiseMw);
}

}  // namespace

TEST(TtiGrid, Timing) {
  EXPECT_EQ(TtiGrid::occupied_us + TtiGrid::guard_us, TtiGrid::tti_us);
  EXPECT_EQ(TtiGrid::occupied_us, 929);
  EXPECT_EQ(TtiGrid::first_at_or_after(0), 0);
  EXPECT_EQ(TtiGrid::first_at_or_after(1), 1);
  EXPECT_EQ(TtiGrid::first_at_or_after(1000), 1);
  EXPECT_EQ(TtiGrid::first_at_or_after(1001), 2);
}

TEST(Rssi, Examples) {
  EXPECT_NEAR(measure_tti_rssi_dbm(5, {}, kNoiseMw), -98.0, 1e-9);
  const std::vector<PowerInterval> lte{{5000, 5929, std::pow(10.0, -7.1)}};
  EXPECT_NEAR(measure_tti_rssi_dbm(5, lte, kNoiseMw), -71.0, 0.01);
  const std::vector<PowerInterval> its{{5100, 5612, std::pow(10.0, -7.1)}};
  const double oracle =
      10.0 * std::log10(512.0 / 929.0 * std::pow(10.0, -7.1) + std::pow(10.0, -9.8));
  EXPECT_NEAR(measure_tti_rssi_dbm(5, its, kNoiseMw), oracle, 1e-9);
  EXPECT_NEAR(oracle, -73.6, 0.05);
  // energy in the guard gap is not measured
  const std::vector<PowerInterval> gap{{5929, 6000, 1.0}};
  EXPECT_NEAR(measure_tti_rssi_dbm(5, gap, kNoiseMw), -98.0, 1e-9);
}

TEST(Selection, ExactlyTwentySurvivorsWhenAllEqual) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  fill_quiet(s, 2000);
  RandomStream rng(1);
  const auto sel = s.select_resource(2000, rng);
  EXPECT_EQ(sel.survivors.size(), 20u);
  EXPECT_EQ(sel.ranked.size(), 100u);
  EXPECT_FALSE(sel.fallback);
  EXPECT_NE(std::find(sel.survivors.begin(), sel.survivors.end(), sel.tti), sel.survivors.end());
  EXPECT_EQ(sel.offset, sel.tti % 100);
  EXPECT_GE(sel.tti, 2000);
  EXPECT_LT(sel.tti, 2100);
}

TEST(Selection, UniformOverTies) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  fill_quiet(s, 2000);
  RandomStream rng(2);
  std::vector<int> by_offset(100, 0);
  std::vector<int> by_rank(20, 0);
  for (int k = 0; k < 10000; ++k) {
    const auto sel = s.select_resource(2000, rng);
    ++by_offset[static_cast<std::size_t>(sel.offset)];
    const auto pos = std::find(sel.survivors.begin(), sel.survivors.end(), sel.tti);
    ++by_rank[static_cast<std::size_t>(pos - sel.survivors.begin())];
  }
  EXPECT_LT(chi2(by_offset), 134.642);  // chi2(99) at 1%
  EXPECT_LT(chi2(by_rank), 36.191);     // chi2(19) at 1%
}

TEST(Selection, LoudCandidateNeverChosen) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  fill_quiet(s, 2000);
  for (int j = 1; j <= 10; ++j) s.record_rssi(2042 - 100 * j, std::pow(10.0, -6.0));
  RandomStream rng(3);
  for (int k = 0; k < 5000; ++k) ASSERT_NE(s.select_resource(2000, rng).offset, 42);
}

TEST(Selection, PicksFromTheBestTwenty) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  RandomStream gen(4);
  std::vector<double> recorded(1000);
  for (std::int64_t t = 1000; t < 2000; ++t) {
    recorded[static_cast<std::size_t>(t - 1000)] = kNoiseMw * (1.0 + gen.uniform(0.0, 100.0));
    s.record_rssi(t, recorded[static_cast<std::size_t>(t - 1000)]);
  }
  std::vector<std::pair<double, int>> scores;
  for (int i = 0; i < 100; ++i) {
    double sum = 0;
    for (int j = 0; j < 10; ++j) sum += recorded[static_cast<std::size_t>(i + 100 * j)];
    scores.emplace_back(sum / 10.0, i);
  }
  std::sort(scores.begin(), scores.end());
  std::set<int> best;
  for (int i = 0; i < 20; ++i) best.insert(scores[static_cast<std::size_t>(i)].second);
  RandomStream rng(5);
  std::set<int> seen;
  for (int k = 0; k < 3000; ++k) {
    const int off = s.select_resource(2000, rng).offset;
    ASSERT_TRUE(best.count(off)) << off;
    seen.insert(off);
  }
  EXPECT_EQ(seen, best);
}

TEST(Selection, ScoreIsLinearMeanOverLags) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  s.record_rssi(1950, 1e-7);
  s.record_rssi(1850, 3e-7);
  EXPECT_DOUBLE_EQ(s.candidate_score_mw(2050), 2e-7);
  EXPECT_DOUBLE_EQ(s.candidate_score_mw(2051), kNoiseMw);
}

TEST(Selection, ExclusionAndExpiry) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  fill_quiet(s, 2000);
  s.decode_reservation(3, 1907, -71.0);
  s.decode_reservation(4, 1908, -115.0);
  EXPECT_TRUE(s.reservation_active(3, 2000));
  EXPECT_FALSE(s.reservation_active(4, 2000));
  RandomStream rng(6);
  bool saw8 = false;
  for (int k = 0; k < 5000; ++k) {
    const auto sel = s.select_resource(2000, rng);
    ASSERT_NE(sel.offset, 7);
    ASSERT_EQ(sel.ranked.size(), 99u);
    saw8 = saw8 || sel.offset == 8;
  }
  EXPECT_TRUE(saw8);
  // unrenewed for a full second
  EXPECT_FALSE(s.reservation_active(3, 2907));
  EXPECT_TRUE(s.reservation_active(3, 2906));
  // a newer decode from the same source moves its reservation
  s.decode_reservation(3, 2010, -80.0);
  EXPECT_FALSE(s.reserved_offsets(2100)[7]);
  EXPECT_TRUE(s.reserved_offsets(2100)[10]);
}

TEST(Selection, BlindHistoryExcluded) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  fill_quiet(s, 2000);
  s.record_blind(1555);
  EXPECT_TRUE(s.candidate_blind(2055));
  EXPECT_FALSE(s.candidate_blind(2056));
  RandomStream rng(7);
  for (int k = 0; k < 3000; ++k) ASSERT_NE(s.select_resource(2000, rng).offset, 55);
}

TEST(Selection, FallbackWhenEverythingReserved) {
  SpsState s(SpsConfig{}, 100, kNoiseMw);
  fill_quiet(s, 2000);
  for (int src = 0; src < 100; ++src) s.decode_reservation(src, 1900 + src, -80.0);
  s.record_blind(1912);
  RandomStream rng(8);
  const auto sel = s.select_resource(2000, rng);
  EXPECT_TRUE(sel.fallback);
  EXPECT_EQ(sel.ranked.size(), 99u);
  EXPECT_EQ(sel.survivors.size(), 20u);
  for (int k = 0; k < 2000; ++k) ASSERT_NE(s.select_resource(2000, rng).offset, 12);
}

TEST(Sps, CounterDecrementsWithoutReselection) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  s.set_resource(37, 3);
  RandomStream rng(9);
  EXPECT_FALSE(s.on_period_boundary(100, rng));
  EXPECT_EQ(s.reselection_counter(), 2);
  EXPECT_EQ(s.selected_offset(), 37);
  EXPECT_EQ(s.next_tx_tti(100), 137);
  EXPECT_EQ(s.next_tx_tti(137), 137);
  EXPECT_EQ(s.next_tx_tti(138), 237);
}

TEST(Sps, KeepDrawsFreshCounter) {
  SpsConfig cfg;
  cfg.keep_probability = 1.0;
  SpsState s(cfg, 10, kNoiseMw);
  s.set_resource(37, 1);
  RandomStream rng(10);
  EXPECT_FALSE(s.on_period_boundary(100, rng));
  EXPECT_EQ(s.selected_offset(), 37);
  EXPECT_GE(s.reselection_counter(), 5);
  EXPECT_LE(s.reselection_counter(), 15);
  EXPECT_EQ(s.counter_expiries(), 1);
}

TEST(Sps, ZeroKeepReselectsAtEveryExpiry) {
  SpsConfig cfg;
  cfg.keep_probability = 0.0;
  SpsState s(cfg, 10, kNoiseMw);
  RandomStream rng(11);
  for (std::int64_t p = 0; p < 2000; ++p) s.on_period_boundary(p * 100, rng);
  EXPECT_EQ(s.reselections(), s.counter_expiries() + 1);
}

TEST(Sps, MeanPeriodsBetweenReselections) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  RandomStream rng(12);
  std::int64_t period = 0;
  std::int64_t last = -1;
  double sum = 0;
  int gaps = 0;
  while (s.counter_expiries() < 10000) {
    if (s.on_period_boundary(period * 100, rng)) {
      if (last >= 0) {
        sum += static_cast<double>(period - last);
        ++gaps;
      }
      last = period;
    }
    ++period;
  }
  EXPECT_NEAR(sum / gaps, 20.0, 2.0);
}

TEST(Sps, AccessDelayBounded) {
  SpsState s(SpsConfig{}, 10, kNoiseMw);
  for (int off = 0; off < 100; ++off) {
    s.set_resource(off, 5);
    for (std::int64_t first = 0; first < 300; ++first) {
      const auto t = s.next_tx_tti(first);
      ASSERT_GE(t, first);
      ASSERT_LE(t - first, 99);
      ASSERT_EQ(t % 100, off);
    }
  }
}
