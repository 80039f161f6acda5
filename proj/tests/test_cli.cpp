#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "metaexp/runner.hpp"
#include "metaexp/stats.hpp"

using namespace metaexp;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + std::string(METAEXP_CLI) + " " + args + " 2>/dev/null";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string preset(const std::string& name) { return std::string(METAEXP_PRESETS_DIR) + "/" + name; }

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("metaexp-cli-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    return p;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
    return files;
}

std::string field(const std::string& out, const std::string& key) {
    std::smatch m;
    if (!std::regex_search(out, m, std::regex(key + R"(\s+(\S+))"))) return "";
    return m[1];
}

}  // namespace

TEST(CliPower, PrintsLibraryRequiredN) {
    const auto r = cli("power --baseline 0.10 --mde 0.02 --alpha 0.05 --power 0.80");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(std::stoll(field(r.out, "n_per_arm")), required_sample_size({0.10, 0.02, 0.05, 0.80, 1}));
}

TEST(CliPower, RoundTrip) {
    for (auto args : {"--baseline 0.10 --mde 0.02", "--baseline 0.05 --mde 0.01", "--baseline 0.3 --mde 0.05"}) {
        const auto r = cli(std::string("power ") + args + " --power 0.8");
        ASSERT_EQ(r.code, 0);
        const auto n = field(r.out, "n_per_arm");
        const auto back = cli(std::string("power ") + args + " --n " + n);
        ASSERT_EQ(back.code, 0);
        EXPECT_GE(std::stod(field(back.out, "power")), 0.80) << args;
    }
}

TEST(CliPower, IncoherentFlags) {
    EXPECT_EQ(cli("power --baseline 0.1 --mde 0").code, 2);
    EXPECT_EQ(cli("power --baseline 0.1 --mde 0.02 --power 0.8 --n 100").code, 2);
    EXPECT_EQ(cli("power --baseline 0.1").code, 2);
    EXPECT_EQ(cli("").code, 2);
}

TEST(CliRun, RepeatedRunsAreByteIdentical) {
    const auto a = scratch("rep-a"), b = scratch("rep-b");
    const std::string base = "run --config " + preset("small.json") + " --seed 99 --replications 1 --emit-events ";
    ASSERT_EQ(cli(base + "--out " + a.string()).code, 0);
    ASSERT_EQ(cli(base + "--out " + b.string()).code, 0);
    const auto ta = tree(a);
    EXPECT_EQ(ta, tree(b));
    for (auto f : {"scenario.json", "metadata.json", "metrics.csv", "subgroups.csv", "timeline.csv", "report.md",
                   "report.json", "events/rep-0000-events.csv", "events/rep-0000-snapshots.csv"})
        EXPECT_TRUE(ta.count(f)) << f;
    EXPECT_EQ(ta.at("scenario.json"), read_file(preset("small.json")));
}

TEST(CliRun, ParallelismDoesNotChangeOutputs) {
    const auto a = scratch("par-1"), b = scratch("par-8");
    const std::string base = "run --config " + preset("small.json") + " --seed 5 --replications 6 ";
    ASSERT_EQ(cli(base + "--parallelism 1 --out " + a.string()).code, 0);
    ASSERT_EQ(cli(base + "--parallelism 8 --out " + b.string()).code, 0);
    EXPECT_EQ(tree(a), tree(b));
}

TEST(CliRun, SeedFromEnvironmentAndFlag) {
    const auto a = scratch("env"), b = scratch("flag");
    const std::string base = "run --config " + preset("small.json") + " --replications 1 --format json ";
    const auto ra = cli(base + "--out " + a.string(), "METAEXP_SEED=321");
    const auto rb = cli(base + "--seed 321 --out " + b.string(), "METAEXP_SEED=1");
    ASSERT_EQ(ra.code, 0);
    ASSERT_EQ(rb.code, 0);
    EXPECT_EQ(ra.out, rb.out);
    EXPECT_EQ(nlohmann::json::parse(ra.out)["metadata"]["seed"].get<std::uint64_t>(), 321u);
}

TEST(CliReport, ReplayReproducesReport) {
    const auto dir = scratch("replay");
    ASSERT_EQ(cli("run --config " + preset("small.json") + " --seed 8 --replications 3 --out " + dir.string()).code, 0);
    const auto md = cli("report --out " + dir.string());
    const auto js = cli("report --out " + dir.string() + " --format json");
    const auto csv = cli("report --out " + dir.string() + " --format csv");
    ASSERT_EQ(md.code, 0);
    EXPECT_EQ(md.out, read_file(dir / "report.md"));
    EXPECT_EQ(js.out, read_file(dir / "report.json"));
    EXPECT_EQ(csv.out, read_file(dir / "metrics.csv"));
}

TEST(CliReport, TamperedScenarioRejected) {
    const auto dir = scratch("tamper");
    ASSERT_EQ(cli("run --config " + preset("small.json") + " --seed 8 --replications 1 --out " + dir.string()).code, 0);
    std::ofstream(dir / "scenario.json", std::ios::app) << " ";
    EXPECT_EQ(cli("report --out " + dir.string()).code, 2);
    EXPECT_EQ(cli("report --out " + scratch("missing").string()).code, 2);
}

TEST(CliRun, ExitCodes) {
    const auto bad = scratch("bad.json");
    fs::create_directories(bad.parent_path());
    auto j = nlohmann::json::parse(read_file(preset("small.json")));
    j["design"]["variant_spit"] = 0.5;
    std::ofstream(bad) << j.dump();
    EXPECT_EQ(cli("run --config " + bad.string() + " --out " + scratch("x").string()).code, 2);
    EXPECT_EQ(cli("run --config " + preset("small.json") + " --out " + scratch("y").string() + " --format xml").code, 2);
    EXPECT_EQ(cli("run --config " + preset("small.json") + " --replications 0 --out " + scratch("z").string()).code, 2);

    const auto blocker = scratch("blocker");
    std::ofstream(blocker) << "file";
    EXPECT_EQ(cli("run --config " + preset("small.json") + " --replications 1 --out " + (blocker / "sub").string()).code,
              3);
}
