#pragma once

// Replication fan-out and the artifact directory.
//
// Replication i runs on seed mix(master_seed, i) (see rng.hpp), and results
// are stored by index, so the schedule never affects any output.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "metaexp/report.hpp"
#include "metaexp/scenario.hpp"

namespace metaexp {

/// Event and snapshot logs are written for at most this many replications.
inline constexpr std::int64_t kMaxEventLogReplications = 100;

struct RunOptions {
    std::uint64_t seed = 0;
    std::int64_t replications = 1;
    int parallelism = 1;
    bool emit_events = false;
};

/// --seed wins over METAEXP_SEED, which wins over the scenario's own seed.
inline std::uint64_t resolve_seed(const Scenario& s, std::optional<std::uint64_t> flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("METAEXP_SEED"); env && *env) {
        std::size_t used = 0;
        const auto v = std::stoull(env, &used, 10);
        if (used != std::string_view(env).size()) throw std::invalid_argument("METAEXP_SEED is not an unsigned integer");
        return v;
    }
    return s.seed;
}

/// Per-replication callback for raw logs; called from worker threads.
using RawSink = std::function<void(std::int64_t index, const RunOutput&)>;

inline std::vector<ReplicationResult> run_replications(const Scenario& scenario, const RunOptions& opt,
                                                       const RawSink& sink = {}) {
    if (opt.replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (opt.parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");

    std::vector<ReplicationResult> results(static_cast<std::size_t>(opt.replications));
    std::atomic<std::int64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= opt.replications) return;
            try {
                RunOutput raw;
                const bool want_raw = sink && i < kMaxEventLogReplications;
                results[static_cast<std::size_t>(i)] =
                    analyze_replication(scenario, opt.seed, i, want_raw ? &raw : nullptr);
                if (want_raw) sink(i, raw);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = opt.replications;
                return;
            }
        }
    };

    const auto n_threads = static_cast<std::int64_t>(std::min<std::int64_t>(opt.parallelism, opt.replications));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::int64_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

inline void write_file(const std::filesystem::path& p, std::string_view bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + p.string());
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Contents of metadata.json: enough to replay the run.
inline std::string run_metadata_json(const Scenario& s, const RunOptions& opt) {
    nlohmann::ordered_json m;
    m["tool"] = kToolVersion;
    m["scenario"] = s.name;
    m["config_digest"] = s.digest;
    m["config_file"] = "scenario.json";
    m["seed"] = opt.seed;
    m["replications"] = opt.replications;
    m["emit_events"] = opt.emit_events;
    m["seed_derivation"] = "replication i uses fmix64(seed + 0x9E3779B97F4A7C15 * (i + 1))";
    return m.dump(2) + "\n";
}

/// Output directory layout:
///   scenario.json   exact bytes of the input scenario
///   metadata.json   seed, replication count, digest
///   metrics.csv     one row per metric (and subgroup metric) per replication
///   subgroups.csv   aggregated subgroup table
///   timeline.csv    weekly powered fraction per replication and world
///   report.md       Markdown report
///   report.json     the same numbers as JSON
///   events/         rep-NNNN-events.csv, rep-NNNN-snapshots.csv (with --emit-events)
inline AnalysisReport run_to_directory(const Scenario& scenario, const RunOptions& opt, const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output directory " + out.string());
    if (opt.emit_events) {
        fs::create_directories(out / "events", ec);
        if (ec) throw std::runtime_error("cannot create " + (out / "events").string());
    }

    RawSink sink;
    if (opt.emit_events)
        sink = [&](std::int64_t i, const RunOutput& raw) {
            char stem[32];
            std::snprintf(stem, sizeof stem, "rep-%04lld", static_cast<long long>(i));
            write_file(out / "events" / (std::string(stem) + "-events.csv"), events_csv(raw.events));
            write_file(out / "events" / (std::string(stem) + "-snapshots.csv"), snapshots_csv(raw.snapshots));
        };

    const auto results = run_replications(scenario, opt, sink);
    const auto report = summarize(scenario, opt.seed, results);

    write_file(out / "scenario.json", scenario.source_bytes);
    write_file(out / "metadata.json", run_metadata_json(scenario, opt));
    write_file(out / "metrics.csv", metrics_csv(results));
    write_file(out / "subgroups.csv", subgroups_csv(report));
    write_file(out / "timeline.csv", timeline_csv(results));
    write_file(out / "report.md", report_markdown(report));
    write_file(out / "report.json", report_json_text(report));
    return report;
}

}  // namespace metaexp
