#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "metaexp/fleet.hpp"

using namespace metaexp;

namespace {

auto always = [](const FleetMember&) { return true; };

}  // namespace

TEST(Distribution, SamplesStayInBounds) {
    Stream rng(1);
    const auto u = Distribution::uniform(0.2, 0.3);
    const auto lu = Distribution::log_uniform(10, 1000);
    const auto iu = Distribution::int_uniform(-3, 4);
    for (int i = 0; i < 5000; ++i) {
        const double a = u.sample(rng), b = lu.sample(rng);
        const auto c = iu.sample_int(rng);
        EXPECT_TRUE(a >= 0.2 && a < 0.3);
        EXPECT_TRUE(b >= 10 && b <= 1000);
        EXPECT_TRUE(c >= -3 && c <= 4);
    }
    EXPECT_EQ(Distribution::constant(7).sample(rng), 7.0);
}

TEST(Distribution, LogUniformMedianIsGeometricMean) {
    Stream rng(2);
    const auto lu = Distribution::log_uniform(10, 1000);
    int below = 0;
    for (int i = 0; i < 20000; ++i) below += lu.sample(rng) < 100.0;
    EXPECT_NEAR(below / 20000.0, 0.5, 0.015);
}

TEST(Distribution, ChoiceFollowsWeights) {
    Stream rng(3);
    const auto d = Distribution::categorical({"a", "b", "c"}, {0.7, 0.2, 0.1});
    std::map<std::string, int> seen;
    const int n = 40000;
    for (int i = 0; i < n; ++i) ++seen[d.sample_label(rng)];
    EXPECT_NEAR(seen["a"] / double(n), 0.7, 0.01);
    EXPECT_NEAR(seen["b"] / double(n), 0.2, 0.01);
    EXPECT_NEAR(seen["c"] / double(n), 0.1, 0.01);
    EXPECT_THROW(d.sample(rng), std::logic_error);
}

TEST(GenerateFleet, CountIsExactAndIdsAreDense) {
    FleetSpec s;
    s.count = 57;
    const auto f = generate_fleet(s, 0.05, 0.8, 9, always);
    ASSERT_EQ(f.size(), 57u);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i].config.id, static_cast<Id>(i));
}

TEST(GenerateFleet, Deterministic) {
    FleetSpec s;
    s.count = 30;
    s.experiment_type = Distribution::categorical({"x", "y"});
    const auto a = generate_fleet(s, 0.05, 0.8, 4, always);
    const auto b = generate_fleet(s, 0.05, 0.8, 4, always);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].config.baseline_rate, b[i].config.baseline_rate);
        EXPECT_EQ(a[i].config.experiment_type, b[i].config.experiment_type);
        EXPECT_EQ(a[i].start_day, b[i].start_day);
    }
}

TEST(GenerateFleet, OwnersInGroups) {
    FleetSpec s;
    s.count = 23;
    s.owner_multiplicity = Distribution::constant(5);
    const auto f = generate_fleet(s, 0.05, 0.8, 1, always);
    for (const auto& m : f) EXPECT_EQ(m.config.owner_id, m.config.id / 5);
}

TEST(GenerateFleet, EligibleTargetStopsAtTarget) {
    FleetSpec s;
    s.eligible_target = 25;
    auto pred = [](const FleetMember& m) { return m.config.baseline_rate < 0.08; };
    const auto f = generate_fleet(s, 0.05, 0.8, 6, pred);
    int eligible = 0;
    for (const auto& m : f) eligible += pred(m);
    EXPECT_EQ(eligible, 25);
    EXPECT_TRUE(pred(f.back()));
}

TEST(GenerateFleet, UnreachableTargetThrows) {
    FleetSpec s;
    s.eligible_target = 3;
    EXPECT_THROW(generate_fleet(s, 0.05, 0.8, 1, [](const FleetMember&) { return false; }), std::runtime_error);
}

TEST(GenerateFleet, NeedsExactlyOneSizeMode) {
    FleetSpec s;
    EXPECT_THROW(generate_fleet(s, 0.05, 0.8, 1, always), std::invalid_argument);
    s.count = 3;
    s.eligible_target = 3;
    EXPECT_THROW(generate_fleet(s, 0.05, 0.8, 1, always), std::invalid_argument);
}
