#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <random>
#include <unordered_set>

#include "metaexp/runner.hpp"

using namespace metaexp;

namespace {

Scenario small() { return load_scenario(std::string(METAEXP_PRESETS_DIR) + "/small.json"); }

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST(Report, ByteIdenticalForSameInputs) {
    const auto s = small();
    const auto a = run_replications(s, {7, 3, 1, false});
    const auto b = run_replications(s, {7, 3, 1, false});
    EXPECT_EQ(report_markdown(summarize(s, 7, a)), report_markdown(summarize(s, 7, b)));
    EXPECT_EQ(report_json_text(summarize(s, 7, a)), report_json_text(summarize(s, 7, b)));
    EXPECT_EQ(metrics_csv(a), metrics_csv(b));
    EXPECT_EQ(timeline_csv(a), timeline_csv(b));
}

TEST(Report, TableHasTableOneLayout) {
    const auto s = small();
    const auto md = report_markdown(summarize(s, 1, run_replications(s, {1, 2, 1, false})));
    const auto lines = lines_of(md);
    const auto header = std::find(lines.begin(), lines.end(), "| Metric type | Metric | Absolute effect | Significance |");
    ASSERT_NE(header, lines.end());
    ASSERT_GE(lines.end() - header, 6);
    auto cells = [](const std::string& row) {
        std::vector<std::string> out;
        std::size_t pos = 1;
        while (pos < row.size()) {
            const auto next = row.find(" |", pos);
            if (next == std::string::npos) break;
            out.push_back(row.substr(pos + 1, next - pos - 1));
            pos = next + 2;
        }
        return out;
    };
    const std::vector<std::pair<std::string, std::string_view>> expected{
        {"Success metric (KPI component)", metric_names::powered},
        {"Supporting behavioral metric", metric_names::clicked},
        {"Supporting behavioral metric", metric_names::settings_changed},
        {"Monitoring metric", metric_names::not_shipped}};
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const auto c = cells(*(header + 2 + static_cast<long>(i)));
        ASSERT_EQ(c.size(), 4u);
        EXPECT_EQ(c[0], expected[i].first);
        EXPECT_EQ(c[1], expected[i].second);
        EXPECT_NE(c[2].find('%'), std::string::npos);
    }
    EXPECT_EQ(cells(*(header + 3))[3], "N/A");
    for (auto heading : {"## Population", "## Intervention / comparison", "## Outcome", "## Time"})
        EXPECT_NE(md.find(heading), std::string::npos) << heading;
}

TEST(Report, JsonTwinCarriesSameNumbers) {
    const auto s = small();
    const auto rep = summarize(s, 5, run_replications(s, {5, 3, 1, false}));
    const auto j = nlohmann::json::parse(report_json_text(rep));
    ASSERT_EQ(j.at("metrics").size(), rep.metrics.size());
    for (std::size_t i = 0; i < rep.metrics.size(); ++i) {
        EXPECT_EQ(j["metrics"][i]["name"], rep.metrics[i].name);
        EXPECT_EQ(j["metrics"][i]["mean_effect"].get<double>(), rep.metrics[i].mean_effect);
        EXPECT_EQ(j["metrics"][i]["detection_rate"].get<double>(), rep.metrics[i].detection_rate);
    }
    EXPECT_EQ(j["table"].size(), 4u);
    EXPECT_EQ(j["metadata"]["config_digest"], s.digest);
    EXPECT_EQ(j["metadata"]["seed"].get<std::uint64_t>(), 5u);
    EXPECT_EQ(j["metadata"]["measurement_day"].get<int>(), 14);
}

TEST(Report, AggregationIgnoresReplicationOrder) {
    const auto s = small();
    auto results = run_replications(s, {11, 8, 1, false});
    const auto md = report_markdown(summarize(s, 11, results));
    const auto js = report_json_text(summarize(s, 11, results));
    std::mt19937 gen(3);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(results.begin(), results.end(), gen);
        EXPECT_EQ(report_markdown(summarize(s, 11, results)), md);
        EXPECT_EQ(report_json_text(summarize(s, 11, results)), js);
    }
}

TEST(Report, StableMeanIsOrderFree) {
    std::vector<double> v{1e16, 1.0, -1e16, 3.0, 0.1, 0.2, 0.3};
    const double m = stable_mean(v);
    std::mt19937 gen(1);
    for (int k = 0; k < 20; ++k) {
        std::shuffle(v.begin(), v.end(), gen);
        EXPECT_EQ(stable_mean(v), m);
    }
}

TEST(Runner, ParallelismDoesNotChangeResults) {
    const auto s = small();
    const auto one = run_replications(s, {3, 6, 1, false});
    const auto eight = run_replications(s, {3, 6, 8, false});
    EXPECT_EQ(metrics_csv(one), metrics_csv(eight));
    EXPECT_EQ(report_json_text(summarize(s, 3, one)), report_json_text(summarize(s, 3, eight)));
}

TEST(Runner, ReplicationSeedsAreDistinct) {
    std::unordered_set<std::uint64_t> seen;
    for (std::int64_t i = 0; i < 200000; ++i) EXPECT_TRUE(seen.insert(replication_seed(42, i)).second);
    EXPECT_NE(replication_seed(1, 0), replication_seed(2, 0));
}

TEST(Runner, SeedPrecedence) {
    auto s = small();
    s.seed = 10;
    ::unsetenv("METAEXP_SEED");
    EXPECT_EQ(resolve_seed(s, std::nullopt), 10u);
    ::setenv("METAEXP_SEED", "20", 1);
    EXPECT_EQ(resolve_seed(s, std::nullopt), 20u);
    EXPECT_EQ(resolve_seed(s, 30u), 30u);
    ::setenv("METAEXP_SEED", "abc", 1);
    EXPECT_THROW(resolve_seed(s, std::nullopt), std::invalid_argument);
    ::unsetenv("METAEXP_SEED");
}

TEST(Runner, RejectsBadOptions) {
    const auto s = small();
    EXPECT_THROW(run_replications(s, {1, 0, 1, false}), std::invalid_argument);
    EXPECT_THROW(run_replications(s, {1, 1, 0, false}), std::invalid_argument);
}
