// metaexp: run meta-experiment scenarios, replay reports, size experiments.
//
// Exit codes: 0 success, 2 invalid input (flags or scenario), 3 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "metaexp/runner.hpp"
#include "metaexp/stats.hpp"

namespace {

using namespace metaexp;

constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

struct InvalidInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void print_report(const AnalysisReport& report, const std::vector<ReplicationResult>* results, const std::string& format) {
    if (format == "md") std::cout << report_markdown(report);
    else if (format == "json") std::cout << report_json_text(report);
    else if (results) std::cout << metrics_csv(*results);
    else std::cout << subgroups_csv(report);
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, std::optional<std::int64_t> reps,
            const std::string& out, const std::string& format, int parallelism, bool emit_events) {
    const auto scenario = load_scenario(config);
    RunOptions opt;
    try {
        opt.seed = resolve_seed(scenario, seed);
    } catch (const std::exception& e) {
        throw InvalidInput(e.what());
    }
    opt.replications = reps ? *reps : scenario.replications;
    opt.parallelism = parallelism;
    opt.emit_events = emit_events;
    if (opt.replications < 1) throw InvalidInput("--replications must be >= 1");
    if (emit_events && opt.replications > kMaxEventLogReplications)
        std::cerr << "note: event logs written for the first " << kMaxEventLogReplications << " replications only\n";

    const auto report = run_to_directory(scenario, opt, out);
    if (format == "csv") std::cout << read_file(std::filesystem::path(out) / "metrics.csv");
    else print_report(report, nullptr, format);
    return 0;
}

/// Re-runs the scenario recorded in an output directory and prints the report.
int cmd_report(const std::string& dir, const std::string& format, int parallelism) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (!fs::exists(root / "metadata.json") || !fs::exists(root / "scenario.json"))
        throw InvalidInput(dir + ": not a run directory (metadata.json / scenario.json missing)");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(root / "metadata.json"));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("metadata.json: ") + e.what());
    }
    for (auto key : {"seed", "replications", "config_digest"})
        if (!meta.contains(key)) throw InvalidInput(std::string("metadata.json: missing ") + key);

    const auto scenario = parse_scenario(read_file(root / "scenario.json"));
    if (scenario.digest != meta.at("config_digest").get<std::string>())
        throw InvalidInput("scenario.json does not match the digest recorded in metadata.json");

    RunOptions opt;
    opt.seed = meta.at("seed").get<std::uint64_t>();
    opt.replications = meta.at("replications").get<std::int64_t>();
    opt.parallelism = parallelism;
    const auto results = run_replications(scenario, opt);
    print_report(summarize(scenario, opt.seed, results), &results, format);
    return 0;
}

int cmd_power(double baseline, double mde, double alpha, std::optional<double> power, std::optional<std::int64_t> n) {
    if (power && n) throw InvalidInput("give either --power or --n, not both");
    PowerSpec spec;
    spec.baseline_rate = baseline;
    spec.mde_abs = mde;
    spec.alpha = alpha;
    spec.target_power = power.value_or(0.8);
    if (n) spec.n_per_arm = *n;
    try {
        validate(spec);
    } catch (const std::exception& e) {
        throw InvalidInput(e.what());
    }
    if (!n) spec.n_per_arm = required_sample_size(spec);
    const double achieved = power_two_proportions(spec);

    std::printf("%-14s %s\n", "baseline_rate", format_number(baseline).c_str());
    std::printf("%-14s %s\n", "mde_abs", format_number(mde).c_str());
    std::printf("%-14s %s\n", "alpha", format_number(alpha).c_str());
    if (!n) std::printf("%-14s %s\n", "target_power", format_number(spec.target_power).c_str());
    std::printf("%-14s %lld\n", "n_per_arm", static_cast<long long>(spec.n_per_arm));
    std::printf("%-14s %.6f\n", "power", achieved);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulate and analyse low-power alert meta-experiments"};
    app.require_subcommand(1);

    const int default_parallelism = std::max(1u, std::thread::hardware_concurrency());

    std::string config, out, format = "md";
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> reps;
    int parallelism = default_parallelism;
    bool emit_events = false;

    auto* run = app.add_subcommand("run", "Run a scenario and write an output directory");
    run->add_option("--config", config, "Scenario JSON file")->required();
    run->add_option("--seed", seed, "Master seed (overrides METAEXP_SEED and the scenario seed)");
    run->add_option("--replications", reps, "Number of replications (default: from the scenario)");
    run->add_option("--out", out, "Output directory")->required();
    run->add_option("--format", format, "Report printed to stdout")->check(CLI::IsMember({"md", "csv", "json"}));
    run->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::PositiveNumber);
    run->add_flag("--emit-events", emit_events, "Write event and snapshot logs (first 100 replications)");

    std::string report_dir, report_format = "md";
    int report_parallelism = default_parallelism;
    auto* report = app.add_subcommand("report", "Replay a run directory and print its report");
    report->add_option("--out", report_dir, "Run directory written by 'run'")->required();
    report->add_option("--format", report_format, "Output format")->check(CLI::IsMember({"md", "csv", "json"}));
    report->add_option("--parallelism", report_parallelism, "Worker threads")->check(CLI::PositiveNumber);

    double baseline = 0.0, mde = 0.0, alpha = 0.05;
    std::optional<double> target_power;
    std::optional<std::int64_t> n;
    auto* power = app.add_subcommand("power", "Required sample size or achieved power for two proportions");
    power->add_option("--baseline", baseline, "Baseline conversion rate")->required();
    power->add_option("--mde", mde, "Minimum detectable effect (absolute)")->required();
    power->add_option("--alpha", alpha, "Two-sided significance level");
    power->add_option("--power", target_power, "Target power (prints required n per arm)");
    power->add_option("--n", n, "Sample size per arm (prints achieved power)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInvalid;
    }

    try {
        if (*run) return cmd_run(config, seed, reps, out, format, parallelism, emit_events);
        if (*report) return cmd_report(report_dir, report_format, report_parallelism);
        return cmd_power(baseline, mde, alpha, target_power, n);
    } catch (const ScenarioError& e) {
        std::cerr << e.what() << "\n";
        return kExitInvalid;
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
