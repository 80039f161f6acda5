#pragma once

// Per-replication analysis, order-independent aggregation across
// replications, and the report serializations (Markdown, JSON, CSV).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaexp/analysis.hpp"
#include "metaexp/meta.hpp"
#include "metaexp/rng.hpp"
#include "metaexp/scenario.hpp"

namespace metaexp {

inline constexpr std::string_view kToolVersion = "metaexp 0.1.0";

struct ReplicationResult {
    std::int64_t index = 0;
    std::uint64_t seed = 0;
    std::int64_t fleet_size = 0;
    std::int64_t eligible = 0;
    std::int64_t snapshots = 0;
    std::vector<MetricResult> metrics;
    std::vector<MetricResult> subgroups;
    double heterogeneity_p = 1.0;
    std::vector<double> weekly_rct;
    std::vector<double> weekly_rollout;
    std::optional<IntervalEstimate> its;

    const MetricResult* find(std::string_view name) const {
        for (const auto& m : metrics)
            if (m.name == name) return &m;
        return nullptr;
    }
};

/// Seed of replication `index` under `master_seed`.
inline std::uint64_t replication_seed(std::uint64_t master_seed, std::int64_t index) {
    return mix(master_seed, static_cast<std::uint64_t>(index));
}

/// Simulates and analyses one replication. When `keep` is non-null the raw
/// RCT-world output is moved into it.
inline ReplicationResult analyze_replication(const Scenario& scenario, std::uint64_t master_seed, std::int64_t index,
                                             RunOutput* keep = nullptr) {
    const auto& an = scenario.analysis;
    const int elig = scenario.world.design.eligibility_day;

    ReplicationResult r;
    r.index = index;
    r.seed = replication_seed(master_seed, index);
    auto out = run_meta_experiment(scenario.world, r.seed);
    r.fleet_size = static_cast<std::int64_t>(out.fleet.size());
    r.eligible = static_cast<std::int64_t>(out.eligible.size());
    r.snapshots = static_cast<std::int64_t>(out.snapshots.size());

    if (!out.assignment.empty()) {
        r.metrics.push_back(
            success_metric_fixed_day(out.snapshots, out.assignment, elig, an.measurement_offset, an.alpha));
        r.metrics.push_back(success_metric_end_of_run(out.snapshots, out.assignment, an.alpha));
        if (an.cuped)
            r.metrics.push_back(success_metric_cuped(out.snapshots, out.events, out.assignment, elig,
                                                     an.measurement_offset, an.alpha));
        for (auto& m : supporting_and_monitoring_metrics(out.events, out.assignment, an.alpha))
            r.metrics.push_back(std::move(m));
        r.subgroups = subgroup_analysis(out.snapshots, out.assignment, fleet_attributes(out.fleet),
                                        "experiment_type", elig, an.measurement_offset, an.alpha,
                                        an.min_subgroup_size);
        r.heterogeneity_p = subgroup_heterogeneity_p_value(r.subgroups);
    }
    r.weekly_rct = weekly_powered_fraction(out.fleet_days);

    if (an.timeline_comparison) {
        const auto rollout = run_meta_experiment(scenario.world, r.seed, Rollout{7 * an.intervention_week});
        r.weekly_rollout = weekly_powered_fraction(rollout.fleet_days);
        r.its = timeline_analysis(r.weekly_rollout, static_cast<std::size_t>(an.intervention_week), an.alpha);
    }
    if (keep) *keep = std::move(out);
    return r;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Mean over values summed in sorted order, so the result does not depend on
/// the order replications finished in.
inline double stable_mean(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double stable_sd(std::vector<double> v) {
    if (v.size() < 2) return 0.0;
    const double n = static_cast<double>(v.size());
    const double m = stable_mean(v);
    for (auto& x : v) x = (x - m) * (x - m);
    return std::sqrt(stable_mean(std::move(v)) * n / (n - 1.0));
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct MetricSummary {
    std::string name;
    MetricKind kind = MetricKind::success;
    std::int64_t replications = 0;
    double mean_base = 0.0;
    double mean_variant = 0.0;
    double mean_effect = 0.0;
    double sd_effect = 0.0;
    bool tested = false;
    double detection_rate = 0.0;
    double median_p = 1.0;
    double mean_ci_width = 0.0;
};

struct SubgroupSummary {
    std::string group;
    std::int64_t replications = 0;
    double mean_effect = 0.0;
    double mean_base_n = 0.0;
    double mean_variant_n = 0.0;
    double detection_rate = 0.0;
    double low_power_fraction = 0.0;
    double mean_ci_width = 0.0;
};

struct EstimatorComparison {
    double mean_fixed_day = 0.0;
    double mean_end_of_run = 0.0;
    double mean_difference = 0.0;
    double se_difference = 0.0;
};

struct TimelineSummary {
    std::vector<double> mean_weekly_rct;
    std::vector<double> mean_weekly_rollout;
    bool compared = false;
    int intervention_week = 0;
    double mean_its_step = 0.0;
    double its_detection_rate = 0.0;
    double rct_detection_rate = 0.0;
};

struct AnalysisReport {
    nlohmann::ordered_json metadata;
    double mean_fleet_size = 0.0;
    double mean_eligible = 0.0;
    double mean_base_n = 0.0;
    double mean_variant_n = 0.0;
    double mean_snapshots = 0.0;
    double mean_experimenter_click_rate = 0.0;
    std::vector<MetricSummary> metrics;
    std::vector<SubgroupSummary> subgroups;
    double heterogeneity_detection_rate = 0.0;
    EstimatorComparison estimators;
    TimelineSummary timeline;
};

inline nlohmann::ordered_json report_metadata(const Scenario& s, std::uint64_t seed, std::int64_t replications) {
    nlohmann::ordered_json m;
    m["tool"] = kToolVersion;
    m["scenario"] = s.name;
    m["config_digest"] = s.digest;
    m["seed"] = seed;
    m["replications"] = replications;
    m["alpha"] = s.analysis.alpha;
    m["power_threshold"] = s.analysis.power_threshold;
    m["eligibility_day"] = s.world.design.eligibility_day;
    m["measurement_day"] = s.measurement_day();
    m["randomization_unit"] = std::string(to_string(s.world.design.randomization_unit));
    m["variant_split"] = s.world.design.variant_split;
    m["duration_days"] = s.world.design.duration_days;
    m["agents"] = {{"p_spontaneous_fix", s.world.agents.p_spontaneous_fix},
                   {"p_click_alert", s.world.agents.p_click_alert},
                   {"p_fix_given_click", s.world.agents.p_fix_given_click},
                   {"p_late_extension", s.world.agents.p_late_extension},
                   {"reliance_gain", s.world.agents.reliance_gain}};
    if (!s.calibration.is_null()) m["calibration"] = s.calibration;
    return m;
}

/// Aggregates replication results. Every number is invariant under any
/// permutation of `results`.
inline AnalysisReport summarize(const Scenario& scenario, std::uint64_t seed, std::span<const ReplicationResult> results) {
    AnalysisReport rep;
    rep.metadata = report_metadata(scenario, seed, static_cast<std::int64_t>(results.size()));

    auto collect = [&](auto&& fn) {
        std::vector<double> v;
        for (const auto& r : results) fn(r, v);
        return v;
    };
    rep.mean_fleet_size = stable_mean(collect([](const auto& r, auto& v) { v.push_back(double(r.fleet_size)); }));
    rep.mean_eligible = stable_mean(collect([](const auto& r, auto& v) { v.push_back(double(r.eligible)); }));
    rep.mean_snapshots = stable_mean(collect([](const auto& r, auto& v) { v.push_back(double(r.snapshots)); }));

    // Metric order follows the first replication that has metrics.
    std::vector<std::string> names;
    std::map<std::string, MetricKind> kinds;
    for (const auto& r : results)
        for (const auto& m : r.metrics)
            if (!kinds.count(m.name)) {
                names.push_back(m.name);
                kinds[m.name] = m.kind;
            }

    for (const auto& name : names) {
        MetricSummary s;
        s.name = name;
        s.kind = kinds[name];
        std::vector<double> base, variant, effect, p, width, sig;
        for (const auto& r : results) {
            const auto* m = r.find(name);
            if (!m) continue;
            base.push_back(m->base_value);
            variant.push_back(m->variant_value);
            effect.push_back(m->absolute_effect);
            if (m->test) {
                p.push_back(m->test->p_value);
                width.push_back(m->test->ci_high - m->test->ci_low);
                sig.push_back(m->significant ? 1.0 : 0.0);
            }
        }
        s.replications = static_cast<std::int64_t>(effect.size());
        s.mean_base = stable_mean(base);
        s.mean_variant = stable_mean(variant);
        s.mean_effect = stable_mean(effect);
        s.sd_effect = stable_sd(effect);
        s.tested = !p.empty();
        s.detection_rate = stable_mean(sig);
        s.median_p = median(p);
        s.mean_ci_width = stable_mean(width);
        rep.metrics.push_back(std::move(s));
    }

    rep.mean_base_n = stable_mean(collect([](const auto& r, auto& v) {
        if (const auto* m = r.find(metric_names::powered)) v.push_back(double(m->base_n));
    }));
    rep.mean_variant_n = stable_mean(collect([](const auto& r, auto& v) {
        if (const auto* m = r.find(metric_names::powered)) v.push_back(double(m->variant_n));
    }));
    rep.mean_experimenter_click_rate = stable_mean(collect([](const auto& r, auto& v) {
        if (const auto* m = r.find(metric_names::clicked_experimenters)) v.push_back(m->variant_value);
    }));

    std::map<std::string, std::vector<const MetricResult*>> groups;
    for (const auto& r : results)
        for (const auto& g : r.subgroups) groups[g.group].push_back(&g);
    for (const auto& [label, ms] : groups) {
        SubgroupSummary s;
        s.group = label;
        s.replications = static_cast<std::int64_t>(ms.size());
        std::vector<double> eff, bn, vn, sig, low, width;
        for (const auto* m : ms) {
            eff.push_back(m->absolute_effect);
            bn.push_back(double(m->base_n));
            vn.push_back(double(m->variant_n));
            low.push_back(m->low_power ? 1.0 : 0.0);
            if (m->test) {
                sig.push_back(m->significant ? 1.0 : 0.0);
                width.push_back(m->test->ci_high - m->test->ci_low);
            }
        }
        s.mean_effect = stable_mean(eff);
        s.mean_base_n = stable_mean(bn);
        s.mean_variant_n = stable_mean(vn);
        s.detection_rate = stable_mean(sig);
        s.low_power_fraction = stable_mean(low);
        s.mean_ci_width = stable_mean(width);
        rep.subgroups.push_back(std::move(s));
    }
    rep.heterogeneity_detection_rate = stable_mean(collect([&](const auto& r, auto& v) {
        if (r.subgroups.size() >= 2) v.push_back(r.heterogeneity_p <= scenario.analysis.alpha ? 1.0 : 0.0);
    }));

    std::vector<double> fixed, end, diff;
    for (const auto& r : results) {
        const auto* f = r.find(metric_names::powered);
        const auto* e = r.find(metric_names::powered_end_of_run);
        if (!f || !e) continue;
        fixed.push_back(f->absolute_effect);
        end.push_back(e->absolute_effect);
        diff.push_back(e->absolute_effect - f->absolute_effect);
    }
    rep.estimators.mean_fixed_day = stable_mean(fixed);
    rep.estimators.mean_end_of_run = stable_mean(end);
    rep.estimators.mean_difference = stable_mean(diff);
    rep.estimators.se_difference = diff.size() > 1 ? stable_sd(diff) / std::sqrt(double(diff.size())) : 0.0;

    auto weekly_mean = [&](auto member) {
        std::size_t weeks = 0;
        for (const auto& r : results) weeks = std::max(weeks, (r.*member).size());
        std::vector<double> out(weeks);
        for (std::size_t w = 0; w < weeks; ++w)
            out[w] = stable_mean(collect([&](const auto& r, auto& v) {
                if (w < (r.*member).size()) v.push_back((r.*member)[w]);
            }));
        return out;
    };
    rep.timeline.mean_weekly_rct = weekly_mean(&ReplicationResult::weekly_rct);
    rep.timeline.mean_weekly_rollout = weekly_mean(&ReplicationResult::weekly_rollout);
    rep.timeline.compared = scenario.analysis.timeline_comparison;
    rep.timeline.intervention_week = scenario.analysis.intervention_week;
    if (rep.timeline.compared) {
        rep.timeline.mean_its_step = stable_mean(collect([](const auto& r, auto& v) {
            if (r.its) v.push_back(r.its->estimate);
        }));
        rep.timeline.its_detection_rate = stable_mean(collect([](const auto& r, auto& v) {
            if (r.its) v.push_back(r.its->excludes_zero() ? 1.0 : 0.0);
        }));
        rep.timeline.rct_detection_rate = stable_mean(collect([](const auto& r, auto& v) {
            if (const auto* m = r.find(metric_names::powered)) v.push_back(m->significant ? 1.0 : 0.0);
        }));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Shortest round-trip decimal form.
inline std::string format_number(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

inline std::string fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

inline std::string percent(double x) { return fixed(100.0 * x, 2) + "%"; }

inline std::string p_text(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2g", p);
    return buf;
}

inline std::string_view metric_type_label(MetricKind k) {
    switch (k) {
        case MetricKind::success: return "Success metric (KPI component)";
        case MetricKind::supporting: return "Supporting behavioral metric";
        case MetricKind::monitoring: return "Monitoring metric";
    }
    return "";
}

/// Rows of the headline table, in display order.
inline std::vector<const MetricSummary*> headline_rows(const AnalysisReport& r) {
    std::vector<const MetricSummary*> rows;
    for (auto name : {metric_names::powered, metric_names::clicked, metric_names::settings_changed,
                      metric_names::not_shipped})
        for (const auto& m : r.metrics)
            if (m.name == name) rows.push_back(&m);
    return rows;
}

inline std::string significance_text(const MetricSummary& m, std::int64_t replications) {
    if (!m.tested) return "N/A";
    if (replications == 1)
        return std::string(m.detection_rate > 0.5 ? "Significant" : "Not significant") + " (p=" + p_text(m.median_p) + ")";
    return "Significant in " + percent(m.detection_rate) + " of replications (median p=" + p_text(m.median_p) + ")";
}

inline std::string report_markdown(const AnalysisReport& r) {
    const auto& md = r.metadata;
    const auto reps = md.at("replications").get<std::int64_t>();
    std::ostringstream o;
    o << "# Meta-experiment report: " << md.at("scenario").get<std::string>() << "\n\n";
    o << "Replications: " << reps << ", seed: " << md.at("seed").get<std::uint64_t>()
      << ", config digest: " << md.at("config_digest").get<std::string>() << ", " << kToolVersion << "\n\n";

    o << "## Population\n\n";
    o << "- Randomization unit: " << md.at("randomization_unit").get<std::string>() << "\n";
    o << "- Eligibility: underpowered on day " << md.at("eligibility_day").get<int>() << " of the experiment\n";
    o << "- Mean fleet size: " << fixed(r.mean_fleet_size, 1) << ", mean eligible experiments: " << fixed(r.mean_eligible, 1)
      << " (base " << fixed(r.mean_base_n, 1) << ", variant " << fixed(r.mean_variant_n, 1) << ")\n\n";

    const auto& ag = md.at("agents");
    o << "## Intervention / comparison\n\n";
    o << "- Variant: low-power alert on the eligibility day with a one-click runtime fix\n";
    o << "- Base: no alert\n";
    o << "- Agent parameters: p_click_alert " << format_number(ag.at("p_click_alert").get<double>())
      << ", p_fix_given_click " << format_number(ag.at("p_fix_given_click").get<double>()) << ", p_spontaneous_fix "
      << format_number(ag.at("p_spontaneous_fix").get<double>()) << ", p_late_extension "
      << format_number(ag.at("p_late_extension").get<double>()) << ", reliance_gain "
      << format_number(ag.at("reliance_gain").get<double>()) << "\n\n";

    o << "## Outcome\n\n";
    o << "| Metric type | Metric | Absolute effect | Significance |\n";
    o << "|---|---|---|---|\n";
    for (const auto* m : headline_rows(r)) {
        const double shown = m->tested ? m->mean_effect : m->mean_variant;
        o << "| " << metric_type_label(m->kind) << " | " << m->name << " | " << percent(shown) << " | "
          << significance_text(*m, reps) << " |\n";
    }
    o << "\nExperimenter-level click rate: " << percent(r.mean_experimenter_click_rate) << "\n\n";

    o << "### All metrics\n\n";
    o << "| Metric | Kind | Base | Variant | Effect | SD(effect) | Detection rate | Median p |\n";
    o << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& m : r.metrics) {
        o << "| " << m.name << " | " << to_string(m.kind) << " | " << (m.tested ? fixed(m.mean_base, 4) : "-") << " | "
          << fixed(m.mean_variant, 4) << " | " << (m.tested ? fixed(m.mean_effect, 4) : "-") << " | "
          << (m.tested ? fixed(m.sd_effect, 4) : "-") << " | " << (m.tested ? fixed(m.detection_rate, 3) : "-")
          << " | " << (m.tested ? p_text(m.median_p) : "-") << " |\n";
    }

    o << "\n### Heterogeneous effects by experiment type\n\n";
    o << "| Group | Base n | Variant n | Effect | Detection rate | Mean CI width | Low-power fraction |\n";
    o << "|---|---|---|---|---|---|---|\n";
    for (const auto& g : r.subgroups)
        o << "| " << g.group << " | " << fixed(g.mean_base_n, 1) << " | " << fixed(g.mean_variant_n, 1) << " | "
          << fixed(g.mean_effect, 4) << " | " << fixed(g.detection_rate, 3) << " | " << fixed(g.mean_ci_width, 4)
          << " | " << fixed(g.low_power_fraction, 3) << " |\n";
    o << "\nHeterogeneity test significant in " << percent(r.heterogeneity_detection_rate) << " of replications.\n\n";

    o << "## Time\n\n";
    o << "- Window: " << md.at("duration_days").get<int>() << " days; success metric measured on experiment day "
      << md.at("measurement_day").get<int>() << "\n";
    o << "- Fixed-day effect " << fixed(r.estimators.mean_fixed_day, 4) << ", end-of-run effect "
      << fixed(r.estimators.mean_end_of_run, 4) << ", difference " << fixed(r.estimators.mean_difference, 4)
      << " (paired SE " << fixed(r.estimators.se_difference, 4) << ")\n";
    if (r.timeline.compared) {
        o << "- Timeline baseline (rollout at week " << r.timeline.intervention_week << "): mean step "
          << fixed(r.timeline.mean_its_step, 4) << ", detected in " << percent(r.timeline.its_detection_rate)
          << " of replications vs " << percent(r.timeline.rct_detection_rate) << " for the randomized test\n";
    }
    o << "\nMean weekly powered fraction of the running fleet:\n\n| Week | Randomized world |"
      << (r.timeline.compared ? " Rollout world |" : "") << "\n|---|---|" << (r.timeline.compared ? "---|" : "") << "\n";
    for (std::size_t w = 0; w < r.timeline.mean_weekly_rct.size(); ++w) {
        o << "| " << w << " | " << fixed(r.timeline.mean_weekly_rct[w], 4) << " |";
        if (r.timeline.compared && w < r.timeline.mean_weekly_rollout.size())
            o << " " << fixed(r.timeline.mean_weekly_rollout[w], 4) << " |";
        o << "\n";
    }
    return o.str();
}

inline nlohmann::ordered_json report_json(const AnalysisReport& r) {
    nlohmann::ordered_json j;
    j["metadata"] = r.metadata;
    j["population"] = {{"mean_fleet_size", r.mean_fleet_size},
                       {"mean_eligible", r.mean_eligible},
                       {"mean_base_n", r.mean_base_n},
                       {"mean_variant_n", r.mean_variant_n},
                       {"mean_snapshots", r.mean_snapshots}};
    auto& metrics = j["metrics"] = nlohmann::ordered_json::array();
    for (const auto& m : r.metrics) {
        nlohmann::ordered_json e;
        e["name"] = m.name;
        e["kind"] = std::string(to_string(m.kind));
        e["replications"] = m.replications;
        e["mean_base"] = m.mean_base;
        e["mean_variant"] = m.mean_variant;
        e["mean_effect"] = m.mean_effect;
        e["sd_effect"] = m.sd_effect;
        e["tested"] = m.tested;
        e["detection_rate"] = m.detection_rate;
        e["median_p"] = m.median_p;
        e["mean_ci_width"] = m.mean_ci_width;
        metrics.push_back(std::move(e));
    }
    j["experimenter_click_rate"] = r.mean_experimenter_click_rate;
    auto& table = j["table"] = nlohmann::ordered_json::array();
    const auto reps = r.metadata.at("replications").get<std::int64_t>();
    for (const auto* m : headline_rows(r))
        table.push_back({{"metric_type", std::string(metric_type_label(m->kind))},
                         {"metric", m->name},
                         {"absolute_effect", m->tested ? m->mean_effect : m->mean_variant},
                         {"significance", significance_text(*m, reps)}});
    auto& groups = j["subgroups"] = nlohmann::ordered_json::array();
    for (const auto& g : r.subgroups)
        groups.push_back({{"group", g.group},
                          {"replications", g.replications},
                          {"mean_effect", g.mean_effect},
                          {"mean_base_n", g.mean_base_n},
                          {"mean_variant_n", g.mean_variant_n},
                          {"detection_rate", g.detection_rate},
                          {"low_power_fraction", g.low_power_fraction},
                          {"mean_ci_width", g.mean_ci_width}});
    j["heterogeneity_detection_rate"] = r.heterogeneity_detection_rate;
    j["estimators"] = {{"mean_fixed_day", r.estimators.mean_fixed_day},
                       {"mean_end_of_run", r.estimators.mean_end_of_run},
                       {"mean_difference", r.estimators.mean_difference},
                       {"se_difference", r.estimators.se_difference}};
    j["timeline"] = {{"compared", r.timeline.compared},
                     {"intervention_week", r.timeline.intervention_week},
                     {"mean_its_step", r.timeline.mean_its_step},
                     {"its_detection_rate", r.timeline.its_detection_rate},
                     {"rct_detection_rate", r.timeline.rct_detection_rate},
                     {"mean_weekly_rct", r.timeline.mean_weekly_rct},
                     {"mean_weekly_rollout", r.timeline.mean_weekly_rollout}};
    return j;
}

inline std::string report_json_text(const AnalysisReport& r) { return report_json(r).dump(2) + "\n"; }

/// One row per metric (and per subgroup metric) per replication.
inline std::string metrics_csv(std::span<const ReplicationResult> results) {
    std::ostringstream o;
    o << "replication,seed,metric,kind,group,base_n,base_x,variant_n,variant_x,base_value,variant_value,"
         "absolute_effect,z_score,p_value,ci_low,ci_high,significant\n";
    auto row = [&](const ReplicationResult& r, const MetricResult& m) {
        o << r.index << "," << r.seed << ",\"" << m.name << "\"," << to_string(m.kind) << "," << m.group << ","
          << m.base_n << "," << m.base_x << "," << m.variant_n << "," << m.variant_x << ","
          << format_number(m.base_value) << "," << format_number(m.variant_value) << ","
          << format_number(m.absolute_effect) << ",";
        if (m.test)
            o << format_number(m.test->z_score) << "," << format_number(m.test->p_value) << ","
              << format_number(m.test->ci_low) << "," << format_number(m.test->ci_high) << ","
              << (m.significant ? 1 : 0);
        else
            o << ",,,,";
        o << "\n";
    };
    for (const auto& r : results) {
        for (const auto& m : r.metrics) row(r, m);
        for (const auto& m : r.subgroups) row(r, m);
    }
    return o.str();
}

inline std::string subgroups_csv(const AnalysisReport& r) {
    std::ostringstream o;
    o << "group,replications,mean_base_n,mean_variant_n,mean_effect,detection_rate,low_power_fraction,mean_ci_width\n";
    for (const auto& g : r.subgroups)
        o << g.group << "," << g.replications << "," << format_number(g.mean_base_n) << ","
          << format_number(g.mean_variant_n) << "," << format_number(g.mean_effect) << ","
          << format_number(g.detection_rate) << "," << format_number(g.low_power_fraction) << ","
          << format_number(g.mean_ci_width) << "\n";
    return o.str();
}

inline std::string timeline_csv(std::span<const ReplicationResult> results) {
    std::ostringstream o;
    o << "replication,world,week,powered_fraction\n";
    for (const auto& r : results) {
        for (std::size_t w = 0; w < r.weekly_rct.size(); ++w)
            o << r.index << ",randomized," << w << "," << format_number(r.weekly_rct[w]) << "\n";
        for (std::size_t w = 0; w < r.weekly_rollout.size(); ++w)
            o << r.index << ",rollout," << w << "," << format_number(r.weekly_rollout[w]) << "\n";
    }
    return o.str();
}

inline std::string events_csv(const EventLog& events) {
    std::ostringstream o;
    o << "window_day,day,experiment_id,owner_id,variant,kind,value\n";
    for (const auto& e : events)
        o << e.window_day << "," << e.day << "," << e.experiment_id << "," << e.owner_id << "," << to_string(e.variant)
          << "," << to_string(e.kind) << "," << format_number(e.value) << "\n";
    return o.str();
}

inline std::string snapshots_csv(std::span<const DailySnapshot> snapshots) {
    std::ostringstream o;
    o << "day,window_day,experiment_id,variant,sufficiently_powered,settings_changed,alert_received,alert_clicked,"
         "status,achieved_power\n";
    for (const auto& s : snapshots)
        o << s.day << "," << s.window_day << "," << s.experiment_id << "," << to_string(s.variant) << ","
          << s.sufficiently_powered << "," << s.settings_changed << "," << s.alert_received << "," << s.alert_clicked
          << "," << to_string(s.status) << "," << format_number(s.achieved_power) << "\n";
    return o.str();
}

}  // namespace metaexp
