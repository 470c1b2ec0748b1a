#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "coexsim/channel.hpp"

using namespace coexsim;

namespace {

// Independent B1 evaluation with the textbook constants spelled out.
double b1_oracle(double d) {
  const double f_ghz = 5.9;
  const double h = 0.5;
  const double d_bp = 4.0 * h * h * f_ghz * 1e9 / 3.0e8;
  d = std::max(d, 3.0);
  if (d <= d_bp) return 22.7 * std::log10(d) + 41.0 + 20.0 * std::log10(f_ghz / 5.0);
  return 40.0 * std::log10(d) + 9.45 - 2.0 * 17.3 * std::log10(h) +
         2.7 * std::log10(f_ghz / 5.0);
}

}  // namespace

TEST(PathLoss, GoldenValues) {
  const LinkBudgetConfig cfg;
  EXPECT_NEAR(path_loss_db(10.0, cfg), 65.14, 0.01);
  EXPECT_NEAR(path_loss_db(100.0, cfg), 100.06, 0.01);
  EXPECT_DOUBLE_EQ(path_loss_db(1.0, cfg), path_loss_db(3.0, cfg));
}

TEST(PathLoss, MatchesOracleAcrossRange) {
  const LinkBudgetConfig cfg;
  for (double d = 0.5; d < 2000.0; d *= 1.07) {
    ASSERT_NEAR(path_loss_db(d, cfg), b1_oracle(d), 1e-9) << d;
  }
}

TEST(PathLoss, MonotoneWithSmallBreakpointJump) {
  const LinkBudgetConfig cfg;
  const double bp = breakpoint_distance_m(cfg);
  EXPECT_NEAR(bp, 4.0 * 0.25 * 5.9e9 / 3e8, 1e-9);
  EXPECT_LT(std::abs(path_loss_db(bp + 1e-9, cfg) - path_loss_db(bp, cfg)), 1.5);
  double prev = path_loss_db(3.0, cfg);
  for (double d = 3.0; d < 3000.0; d += 0.25) {
    const double pl = path_loss_db(d, cfg);
    ASSERT_GE(pl, prev - 1e-12) << d;
    prev = pl;
  }
}

TEST(LinkBudget, ReceivedPower) {
  const LinkBudgetConfig cfg;
  EXPECT_NEAR(rx_power_dbm(100.0, 0.0, cfg), -71.06, 0.01);
  EXPECT_NEAR(rx_power_dbm(100.0, 3.0, cfg), -74.06, 0.01);
  EXPECT_NEAR(rx_power_dbm(10.0, 0.0, cfg), -36.14, 0.01);
}

TEST(LinkBudget, ReceivedPowerBetweenVehicles) {
  const LinkBudgetConfig cfg;
  const RoadConfig road;
  RandomStream rng(1);
  ShadowingField field(2, 3.0, 25.0, rng);
  field.set(0, 1, 3.0);
  Vehicle a{0, 0, 100.0, Direction::Forward, Tech::ItsG5};
  Vehicle b{1, 0, 200.0, Direction::Forward, Tech::ItsG5};
  EXPECT_NEAR(rx_power_dbm(a, b, road, cfg, field), -74.06, 0.01);
  EXPECT_DOUBLE_EQ(rx_power_dbm(a, b, road, cfg, field), rx_power_dbm(b, a, road, cfg, field));
}

TEST(Noise, Floor) {
  LinkBudgetConfig cfg;
  EXPECT_DOUBLE_EQ(noise_floor_dbm(cfg), -98.0);
  cfg.noise_figure_db = 0.0;
  EXPECT_DOUBLE_EQ(noise_floor_dbm(cfg), -104.0);
  cfg.noise_figure_db = 6.0;
  cfg.bandwidth_hz = 2.0e7;
  EXPECT_NEAR(noise_floor_dbm(cfg), -98.0 + 10.0 * std::log10(2.0), 1e-9);
}

TEST(Shadowing, StepExamples) {
  RandomStream rng(2);
  EXPECT_DOUBLE_EQ(shadowing_step(2.5, 0.0, 3.0, 25.0, rng), 2.5);
  // far displacement: fresh draw, no memory of the previous value
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += shadowing_step(100.0, 1e6, 3.0, 25.0, rng);
  EXPECT_NEAR(sum / n, 0.0, 0.1);
}

TEST(Shadowing, Lag25Autocorrelation) {
  RandomStream rng(3);
  const int n = 10000;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(0.0, 3.0);
    const double y = shadowing_step(x, 25.0, 3.0, 25.0, rng);
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  EXPECT_NEAR(sxy / std::sqrt(sxx * syy), std::exp(-1.0), 0.05);
}

TEST(Shadowing, FieldMarginalAndSymmetry) {
  RandomStream rng(4);
  ShadowingField field(448, 3.0, 25.0, rng);  // ~10^5 pairs
  double s = 0, ss = 0;
  int n = 0;
  for (int a = 0; a < 448; ++a) {
    for (int b = a + 1; b < 448; ++b) {
      ASSERT_EQ(field.value(a, b), field.value(b, a));
      s += field.value(a, b);
      ss += field.value(a, b) * field.value(a, b);
      ++n;
    }
  }
  EXPECT_GE(n, 100000);
  const double mean = s / n;
  EXPECT_NEAR(std::sqrt(ss / n - mean * mean), 3.0, 0.1);
  EXPECT_EQ(field.value(5, 5), 0.0);
}

TEST(Shadowing, FieldStepKeepsStationaryStd) {
  RandomStream rng(5);
  ShadowingField field(200, 3.0, 25.0, rng);
  for (int k = 0; k < 20; ++k) field.step([](int, int) { return 7.778; }, rng);
  double ss = 0;
  int n = 0;
  for (int a = 0; a < 200; ++a) {
    for (int b = a + 1; b < 200; ++b, ++n) ss += field.value(a, b) * field.value(a, b);
  }
  EXPECT_NEAR(std::sqrt(ss / n), 3.0, 0.1);
}

TEST(Sinr, Examples) {
  EXPECT_NEAR(average_sinr_db(-71.0, {}, -98.0), 27.0, 1e-9);
  const std::vector<Interferer> one{{-71.0, 1.0}};
  const double oracle =
      10.0 * std::log10(std::pow(10.0, -7.1) / (std::pow(10.0, -7.1) + std::pow(10.0, -9.8)));
  EXPECT_NEAR(average_sinr_db(-71.0, one, -98.0), oracle, 1e-9);
  EXPECT_LT(oracle, 0.0);
  EXPECT_GT(oracle, -0.02);
  const std::vector<Interferer> none{{-20.0, 0.0}};
  EXPECT_DOUBLE_EQ(average_sinr_db(-71.0, none, -98.0), average_sinr_db(-71.0, {}, -98.0));
}

TEST(Sinr, MonotoneInOverlapAndPower) {
  RandomStream rng(6);
  for (int k = 0; k < 5000; ++k) {
    const double p = rng.uniform(-110.0, -40.0);
    const double f = rng.uniform(0.0, 1.0);
    const std::vector<Interferer> base{{p, f}, {-80.0, 0.3}};
    const std::vector<Interferer> more_overlap{{p, std::min(1.0, f + 0.05)}, {-80.0, 0.3}};
    const std::vector<Interferer> more_power{{p + 1.0, f}, {-80.0, 0.3}};
    const double s = average_sinr_db(-70.0, base, -98.0);
    ASSERT_LE(average_sinr_db(-70.0, more_overlap, -98.0), s);
    ASSERT_LE(average_sinr_db(-70.0, more_power, -98.0), s);
  }
}

TEST(PerCurve, Defaults) {
  EXPECT_DOUBLE_EQ(PerCurve::itsg5_default().lookup(3.1), 0.1);
  EXPECT_DOUBLE_EQ(PerCurve::ltev2x_default().lookup(0.1), 0.1);
  EXPECT_DOUBLE_EQ(PerCurve::itsg5_default().lookup(60.0), 0.0);
  EXPECT_DOUBLE_EQ(PerCurve::itsg5_default().lookup(-60.0), 1.0);
  EXPECT_NEAR(PerCurve::itsg5_default().lookup(2.1), 0.5, 1e-12);
}

TEST(PerCurve, RejectsInvalidTables) {
  using P = PerCurve::Point;
  EXPECT_THROW(PerCurve(std::vector<P>{}), std::invalid_argument);
  EXPECT_THROW(PerCurve({{0, 0.5}, {0, 0.4}}), std::invalid_argument);
  EXPECT_THROW(PerCurve({{0, 0.5}, {1, 0.6}}), std::invalid_argument);
  EXPECT_THROW(PerCurve({{0, 1.5}}), std::invalid_argument);
}

TEST(PerCurve, MonotoneOnRandomCurves) {
  RandomStream rng(7);
  for (int c = 0; c < 200; ++c) {
    std::vector<PerCurve::Point> pts;
    double x = rng.uniform(-10, 0);
    double y = 1.0;
    const int n = static_cast<int>(rng.uniform_int(1, 8));
    for (int i = 0; i < n; ++i) {
      y = rng.uniform(0.0, y);
      pts.push_back({x, y});
      x += rng.uniform(0.1, 3.0);
    }
    const PerCurve curve(pts);
    double prev = 1.0;
    for (double s = -15; s < 30; s += 0.05) {
      const double per = curve.lookup(s);
      ASSERT_GE(per, 0.0);
      ASSERT_LE(per, 1.0);
      ASSERT_LE(per, prev + 1e-12);
      prev = per;
    }
  }
}

TEST(PerCurve, CsvParsing) {
  std::istringstream good("sinr_db,per\n-1,0.9\n1,0.1\r\n2,0.01\n");
  const PerCurve c = parse_per_curve_csv(good);
  EXPECT_EQ(c.points().size(), 3u);
  EXPECT_DOUBLE_EQ(c.lookup(1.0), 0.1);

  std::istringstream no_header("-1,0.9\n");
  EXPECT_THROW(parse_per_curve_csv(no_header), std::runtime_error);
  std::istringstream bad_number("sinr_db,per\n1,abc\n");
  EXPECT_THROW(parse_per_curve_csv(bad_number), std::runtime_error);
  std::istringstream increasing("sinr_db,per\n1,0.1\n2,0.5\n");
  EXPECT_THROW(parse_per_curve_csv(increasing), std::runtime_error);
  EXPECT_THROW(load_per_curve_csv("/nonexistent/curve.csv"), std::runtime_error);

  const PerCurve from_file = load_per_curve_csv(COEXSIM_TEST_DATA "/itsg5_curve.csv");
  EXPECT_DOUBLE_EQ(from_file.lookup(3.1), 0.1);
}

TEST(Reception, Draws) {
  RandomStream rng(8);
  int ok0 = 0, ok1 = 0, ok3 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    ok0 += decide_reception(0.0, rng);
    ok1 += decide_reception(1.0, rng);
    ok3 += decide_reception(0.3, rng);
  }
  EXPECT_EQ(ok0, n);
  EXPECT_EQ(ok1, 0);
  EXPECT_NEAR(static_cast<double>(ok3) / n, 0.7, 0.02);
}

TEST(Random, SubstreamsAreIndependentAndStable) {
  RandomStream a = RandomStream::substream(42, "traffic");
  RandomStream b = RandomStream::substream(42, "traffic");
  RandomStream c = RandomStream::substream(42, "backoff");
  const auto va = a.uniform_int(0, 1'000'000'000);
  EXPECT_EQ(va, b.uniform_int(0, 1'000'000'000));
  EXPECT_NE(va, c.uniform_int(0, 1'000'000'000));
}
