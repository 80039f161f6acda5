#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "metaexp/experiment.hpp"
#include "metaexp/rng.hpp"

using namespace metaexp;

namespace {

ExperimentConfig underpowered() {
    ExperimentConfig c;
    c.baseline_rate = 0.08;
    c.daily_traffic_per_arm = 800;
    c.planned_runtime_days = 14;
    c.target_mde_abs = 0.01;
    c.max_extension_days = 365;
    return c;
}

ExperimentState run_to_completion(const ExperimentConfig& c, Stream& rng) {
    auto s = initial_state(c);
    while (s.status == Status::running) s = simulate_day(c, s, rng);
    return s;
}

}  // namespace

TEST(SimulateDay, ZeroBaselineNeverConverts) {
    ExperimentConfig c;
    c.baseline_rate = 0.0;
    c.planned_runtime_days = 30;
    validate(c);
    Stream rng(1);
    auto s = initial_state(c);
    while (s.status == Status::running) s = simulate_day(c, s, rng);
    EXPECT_EQ(s.x_control, 0);
    EXPECT_EQ(s.x_treatment, 0);
    EXPECT_EQ(s.n_control, 30 * c.daily_traffic_per_arm);
}

TEST(SimulateDay, SeedDeterminesTrajectory) {
    const auto c = underpowered();
    Stream a(42), b(42);
    auto sa = initial_state(c), sb = initial_state(c);
    while (sa.status == Status::running) {
        sa = simulate_day(c, sa, a);
        sb = simulate_day(c, sb, b);
        EXPECT_EQ(sa.x_control, sb.x_control);
        EXPECT_EQ(sa.x_treatment, sb.x_treatment);
        EXPECT_EQ(sa.day, sb.day);
    }
}

TEST(SimulateDay, BinomialMean) {
    ExperimentConfig c;
    c.baseline_rate = 0.10;
    c.daily_traffic_per_arm = 1000;
    c.planned_runtime_days = 30;
    const int reps = 10000;
    double total = 0.0;
    for (int r = 0; r < reps; ++r) {
        Stream rng(derive(3, StreamTag::traffic, static_cast<std::uint64_t>(r)));
        total += static_cast<double>(run_to_completion(c, rng).x_control);
    }
    EXPECT_NEAR(total / (reps * 30.0), 100.0, 1.0);
}

TEST(SimulateDay, MonotoneAccrual) {
    auto c = underpowered();
    c.true_lift_abs = 0.02;
    Stream rng(8);
    auto s = initial_state(c);
    while (s.status == Status::running) {
        const auto next = simulate_day(c, s, rng);
        EXPECT_GE(next.n_control, s.n_control);
        EXPECT_GE(next.n_treatment, s.n_treatment);
        EXPECT_LE(next.x_control, next.n_control);
        EXPECT_LE(next.x_treatment, next.n_treatment);
        s = next;
    }
    EXPECT_EQ(s.day, c.planned_runtime_days);
    EXPECT_THROW(simulate_day(c, s, rng), std::logic_error);
}

TEST(SimulateDay, IndependentOfEvaluationOrder) {
    auto a = underpowered(), b = underpowered();
    b.id = 1;
    b.baseline_rate = 0.2;
    auto stream = [](Id id) { return Stream(derive(5, StreamTag::traffic, static_cast<std::uint64_t>(id))); };

    Stream ra = stream(0), rb = stream(1);
    auto sa = initial_state(a), sb = initial_state(b);
    for (int d = 0; d < 10; ++d) {
        sa = simulate_day(a, sa, ra);
        sb = simulate_day(b, sb, rb);
    }
    Stream ra2 = stream(0), rb2 = stream(1);
    auto ta = initial_state(a), tb = initial_state(b);
    for (int d = 0; d < 10; ++d) tb = simulate_day(b, tb, rb2);
    for (int d = 0; d < 10; ++d) ta = simulate_day(a, ta, ra2);
    EXPECT_EQ(sa.x_control, ta.x_control);
    EXPECT_EQ(sb.x_treatment, tb.x_treatment);
}

TEST(AssessPower, HugeEffectIsSufficient) {
    ExperimentConfig c;
    c.baseline_rate = 0.3;
    c.target_mde_abs = 0.5;
    c.daily_traffic_per_arm = 50;
    EXPECT_TRUE(assess_power(c, initial_state(c), 7).is_sufficient);
}

TEST(AssessPower, RoundTripAtRequiredN) {
    ExperimentConfig c;
    c.baseline_rate = 0.1;
    c.target_mde_abs = 0.02;
    const Count n = required_sample_size({0.1, 0.02, 0.05, 0.8, 1});
    c.daily_traffic_per_arm = n;  // one day of traffic is exactly n
    auto s = initial_state(c);
    s.runtime_days_current = 1;
    const auto a = assess_power(c, s, 1);
    EXPECT_NEAR(a.achieved_power, power_two_proportions({0.1, 0.02, 0.05, 0.8, n}), 1e-9);
    EXPECT_GE(a.achieved_power, 0.8);
    EXPECT_TRUE(a.is_sufficient);
}

TEST(AssessPower, UnderpoweredMatchesMonteCarlo) {
    ExperimentConfig c;
    c.baseline_rate = 0.05;
    c.target_mde_abs = 0.002;
    c.daily_traffic_per_arm = 200;
    c.planned_runtime_days = 21;
    const auto a = assess_power(c, initial_state(c), 7);
    EXPECT_FALSE(a.is_sufficient);

    const Count n = 200 * 21;
    std::mt19937_64 gen(17);
    std::binomial_distribution<Count> x1(n, 0.05), x2(n, 0.052);
    const int trials = 40000;
    int rejected = 0;
    for (int t = 0; t < trials; ++t)
        if (two_proportion_ztest(x1(gen), n, x2(gen), n, 0.05).significant()) ++rejected;
    EXPECT_NEAR(a.achieved_power, double(rejected) / trials, 0.02);
}

TEST(AssessPower, SufficientIffThreshold) {
    for (int days = 7; days < 80; days += 3) {
        auto c = underpowered();
        c.planned_runtime_days = days;
        const auto a = assess_power(c, initial_state(c), 1);
        EXPECT_EQ(a.is_sufficient, a.achieved_power >= c.power_threshold);
    }
    EXPECT_THROW(assess_power(underpowered(), initial_state(underpowered()), 0), std::invalid_argument);
}

TEST(OneClickFix, AlreadySufficientIsNoOp) {
    auto c = underpowered();
    c.target_mde_abs = 0.2;
    const auto s = initial_state(c);
    const auto r = apply_one_click_fix(c, s);
    EXPECT_EQ(r.status, FixStatus::already_sufficient);
    EXPECT_FALSE(r.state.settings_changed);
    EXPECT_EQ(r.state.runtime_days_current, s.runtime_days_current);
}

TEST(OneClickFix, MinimalExtensionByLinearScan) {
    const auto c = underpowered();
    auto s = initial_state(c);
    ASSERT_FALSE(s.sufficiently_powered_today);

    int scanned = c.planned_runtime_days;
    for (;; ++scanned) {
        auto probe = s;
        probe.runtime_days_current = scanned;
        if (assess_power(c, probe, 7).is_sufficient) break;
    }
    const auto r = apply_one_click_fix(c, s);
    ASSERT_EQ(r.status, FixStatus::fixed);
    EXPECT_EQ(r.state.runtime_days_current, scanned);
    EXPECT_EQ(r.extension_days, scanned - c.planned_runtime_days);
    EXPECT_TRUE(r.state.settings_changed);
    EXPECT_TRUE(assess_power(c, r.state, 7).is_sufficient);
}

TEST(OneClickFix, MinimalityAcrossConfigs) {
    Stream rng(12);
    for (int i = 0; i < 300; ++i) {
        ExperimentConfig c;
        c.baseline_rate = 0.02 + 0.3 * rng.uniform();
        c.target_mde_abs = 0.003 + 0.03 * rng.uniform();
        c.daily_traffic_per_arm = rng.uniform_int(50, 5000);
        c.planned_runtime_days = static_cast<int>(rng.uniform_int(7, 40));
        c.max_extension_days = 100000;
        const auto r = apply_one_click_fix(c, initial_state(c));
        if (r.status != FixStatus::fixed) continue;
        EXPECT_TRUE(r.state.sufficiently_powered_today);
        auto shorter = r.state;
        --shorter.runtime_days_current;
        EXPECT_FALSE(assess_power(c, shorter, 7).is_sufficient);
    }
}

TEST(OneClickFix, ZeroCapIsUnfixable) {
    auto c = underpowered();
    c.max_extension_days = 0;
    const auto s = initial_state(c);
    const auto r = apply_one_click_fix(c, s);
    EXPECT_EQ(r.status, FixStatus::unfixable);
    EXPECT_EQ(r.state.runtime_days_current, s.runtime_days_current);
    EXPECT_FALSE(r.state.settings_changed);
}

TEST(ExtendToCap, ExtendsWithoutReachingSufficiency) {
    auto c = underpowered();
    c.daily_traffic_per_arm = 200;
    c.max_extension_days = 3;
    const auto r = extend_to_cap(c, initial_state(c));
    EXPECT_EQ(r.state.runtime_days_current, c.planned_runtime_days + 3);
    EXPECT_TRUE(r.state.settings_changed);
    EXPECT_FALSE(r.state.sufficiently_powered_today);
    EXPECT_EQ(extend_to_cap(c, r.state).extension_days, 0);
}

TEST(DecideShip, NullShipRateIsHalfAlpha) {
    ExperimentConfig c;
    c.baseline_rate = 0.1;
    c.daily_traffic_per_arm = 300;
    c.planned_runtime_days = 10;
    const int reps = 10000;
    int shipped = 0;
    for (int r = 0; r < reps; ++r) {
        Stream rng(derive(21, StreamTag::traffic, static_cast<std::uint64_t>(r)));
        if (decide_ship(c, run_to_completion(c, rng))) ++shipped;
    }
    EXPECT_NEAR(double(shipped) / reps, 0.025, 3 * std::sqrt(0.025 * 0.975 / reps));
}

TEST(DecideShip, NoTrafficNotShipped) {
    ExperimentConfig c;
    ExperimentState s;
    s.status = Status::completed;
    EXPECT_FALSE(decide_ship(c, s));
}

TEST(DecideShip, RequiresCompletion) {
    ExperimentConfig c;
    EXPECT_THROW(decide_ship(c, initial_state(c)), std::logic_error);
}

TEST(DecideShip, LargeLiftShipsAtPowerRate) {
    ExperimentConfig c;
    c.baseline_rate = 0.10;
    c.true_lift_abs = 0.05;
    c.target_mde_abs = 0.05;
    c.daily_traffic_per_arm = 60;
    c.planned_runtime_days = 7;
    c.planned_runtime_days = std::max(7, required_runtime_days(c));
    const double power = assess_power(c, initial_state(c), 1).achieved_power;
    ASSERT_GE(power, 0.8);
    const int reps = 4000;
    int shipped = 0;
    for (int r = 0; r < reps; ++r) {
        Stream rng(derive(22, StreamTag::traffic, static_cast<std::uint64_t>(r)));
        if (decide_ship(c, run_to_completion(c, rng))) ++shipped;
    }
    EXPECT_GE(double(shipped) / reps, power - 0.05);
}

TEST(ExperimentConfig, Validation) {
    ExperimentConfig c;
    EXPECT_NO_THROW(validate(c));
    c.baseline_rate = 1.5;
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = {};
    c.planned_runtime_days = 3;
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = {};
    c.max_extension_days = -1;
    EXPECT_THROW(validate(c), std::invalid_argument);
}
