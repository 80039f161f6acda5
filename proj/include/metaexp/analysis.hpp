#pragma once

// Meta-experiment metrics: the success metric at a fixed day and at end of
// run, supporting and monitoring metrics from the event log, subgroup
// (heterogeneous effect) analysis, and the interrupted-time-series baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "metaexp/meta.hpp"
#include "metaexp/stats.hpp"

namespace metaexp {

enum class MetricKind { success, supporting, monitoring };

inline std::string_view to_string(MetricKind k) {
    switch (k) {
        case MetricKind::success: return "success";
        case MetricKind::supporting: return "supporting";
        case MetricKind::monitoring: return "monitoring";
    }
    return "unknown";
}

namespace metric_names {
inline constexpr std::string_view powered = "Experiment has sufficient power";
inline constexpr std::string_view powered_end_of_run = "Experiment has sufficient power (end of run)";
inline constexpr std::string_view powered_cuped = "Experiment has sufficient power (CUPED)";
inline constexpr std::string_view clicked = "Clicked link in alert (only possible in variant)";
inline constexpr std::string_view clicked_experimenters = "Clicked link in alert (experimenter level)";
inline constexpr std::string_view settings_changed = "Changed power-related experiment settings";
inline constexpr std::string_view not_shipped = "Experiment not shipped";
}  // namespace metric_names

/// One row of the results table. Counts are kept so that subgroup results
/// recombine exactly. Variant-only metrics have base_n = 0 and no test.
struct MetricResult {
    std::string name;
    MetricKind kind = MetricKind::success;
    std::string group;  ///< subgroup label, empty for overall
    Count base_n = 0, base_x = 0;
    Count variant_n = 0, variant_x = 0;
    double base_value = 0.0;
    double variant_value = 0.0;
    double absolute_effect = 0.0;
    std::optional<TestResult> test;
    bool significant = false;
    bool low_power = false;

    bool has_base() const noexcept { return base_n > 0; }
};

namespace detail {

inline double rate(Count x, Count n) { return n > 0 ? static_cast<double>(x) / static_cast<double>(n) : 0.0; }

inline MetricResult make_metric(std::string_view name, MetricKind kind, Count bx, Count bn, Count vx, Count vn,
                                double alpha, bool tested = true) {
    MetricResult m;
    m.name = std::string(name);
    m.kind = kind;
    m.base_x = bx;
    m.base_n = bn;
    m.variant_x = vx;
    m.variant_n = vn;
    m.base_value = rate(bx, bn);
    m.variant_value = rate(vx, vn);
    m.absolute_effect = m.variant_value - m.base_value;
    if (tested && bn > 0 && vn > 0) {
        m.test = two_proportion_ztest(bx, bn, vx, vn, alpha);
        m.significant = m.test->p_value <= alpha;
    }
    return m;
}

struct ArmCounts {
    Count base_x = 0, base_n = 0, variant_x = 0, variant_n = 0;

    void add(Variant v, bool hit) {
        if (v == Variant::base) {
            ++base_n;
            base_x += hit ? 1 : 0;
        } else {
            ++variant_n;
            variant_x += hit ? 1 : 0;
        }
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Success metric
// ---------------------------------------------------------------------------

/// Powered fraction per arm among enrolled experiments running on life day
/// eligibility_day + offset.
inline MetricResult success_metric_fixed_day(std::span<const DailySnapshot> snapshots, const Assignment& assignment,
                                             int eligibility_day, int offset, double alpha) {
    if (offset < 0) throw std::invalid_argument("success_metric_fixed_day: offset must be >= 0");
    const int day = eligibility_day + offset;
    detail::ArmCounts c;
    for (const auto& s : snapshots)
        if (s.day == day && assignment.by_experiment.count(s.experiment_id))
            c.add(assignment.of(s.experiment_id), s.sufficiently_powered);
    if (c.base_n + c.variant_n == 0 && !assignment.empty())
        throw std::out_of_range("success_metric_fixed_day: measurement day " + std::to_string(day) +
                                " is beyond the simulated horizon");
    return detail::make_metric(metric_names::powered, MetricKind::success, c.base_x, c.base_n, c.variant_x,
                               c.variant_n, alpha);
}

/// Powered fraction per arm at each experiment's final (completed) day.
inline MetricResult success_metric_end_of_run(std::span<const DailySnapshot> snapshots, const Assignment& assignment,
                                              double alpha) {
    if (assignment.empty()) throw std::invalid_argument("success_metric_end_of_run: empty assignment");
    std::map<Id, const DailySnapshot*> last;
    for (const auto& s : snapshots) {
        if (s.status != Status::completed) continue;
        auto& slot = last[s.experiment_id];
        if (!slot || slot->day < s.day) slot = &s;
    }
    detail::ArmCounts c;
    for (const auto& [id, s] : last)
        if (assignment.by_experiment.count(id)) c.add(assignment.of(id), s->sufficiently_powered);
    return detail::make_metric(metric_names::powered_end_of_run, MetricKind::success, c.base_x, c.base_n,
                               c.variant_x, c.variant_n, alpha);
}

/// Success metric on CUPED-adjusted outcomes, using power at enrollment as the
/// pre-treatment covariate. The test is a Welch interval on adjusted means.
inline MetricResult success_metric_cuped(std::span<const DailySnapshot> snapshots, const EventLog& events,
                                         const Assignment& assignment, int eligibility_day, int offset,
                                         double alpha) {
    std::map<Id, double> covariate;
    for (const auto& e : events)
        if (e.kind == EventKind::enrolled) covariate[e.experiment_id] = e.value;

    const int day = eligibility_day + offset;
    std::vector<double> y, x;
    std::vector<Variant> arm;
    for (const auto& s : snapshots) {
        if (s.day != day || !assignment.by_experiment.count(s.experiment_id)) continue;
        y.push_back(s.sufficiently_powered ? 1.0 : 0.0);
        x.push_back(covariate.at(s.experiment_id));
        arm.push_back(assignment.of(s.experiment_id));
    }
    auto base = success_metric_fixed_day(snapshots, assignment, eligibility_day, offset, alpha);
    base.name = std::string(metric_names::powered_cuped);
    base.test.reset();
    base.significant = false;
    if (y.size() < 4) return base;

    const auto adjusted = cuped_adjust(y, x).adjusted;
    std::vector<double> b, v;
    for (std::size_t i = 0; i < adjusted.size(); ++i) (arm[i] == Variant::base ? b : v).push_back(adjusted[i]);
    if (b.size() < 2 || v.size() < 2) return base;

    const auto w = welch_interval(b, v, alpha);
    TestResult t;
    t.alpha = alpha;
    t.estimate = w.estimate;
    t.ci_low = w.ci_low;
    t.ci_high = w.ci_high;
    t.p_value = w.p_value;
    const double half = 0.5 * (w.ci_high - w.ci_low);
    t.z_score = half > 0.0 ? w.estimate / (half / normal_quantile(1.0 - alpha / 2.0)) : 0.0;
    base.test = t;
    base.significant = t.p_value <= alpha;
    return base;
}

// ---------------------------------------------------------------------------
// Supporting and monitoring metrics
// ---------------------------------------------------------------------------

/// Click rate (variant only, untested, experiment and experimenter level),
/// settings-change rate and not-shipped rate per arm with z-tests.
inline std::vector<MetricResult> supporting_and_monitoring_metrics(const EventLog& events, const Assignment& assignment,
                                                                   double alpha) {
    std::set<Id> alerted, clicked, changed, completed, shipped;
    std::set<Id> owners_alerted, owners_clicked;
    for (const auto& e : events) {
        if (!assignment.by_experiment.count(e.experiment_id)) continue;
        if (e.kind == EventKind::alert_sent) {
            alerted.insert(e.experiment_id);
            owners_alerted.insert(e.owner_id);
        } else if (e.kind == EventKind::alert_clicked) {
            clicked.insert(e.experiment_id);
            owners_clicked.insert(e.owner_id);
        } else if (changes_settings(e.kind)) {
            changed.insert(e.experiment_id);
        } else if (e.kind == EventKind::completed) {
            completed.insert(e.experiment_id);
            if (e.value > 0.5) shipped.insert(e.experiment_id);
        }
    }

    std::vector<MetricResult> out;
    out.push_back(detail::make_metric(metric_names::clicked, MetricKind::supporting, 0, 0,
                                      static_cast<Count>(clicked.size()), static_cast<Count>(alerted.size()), alpha,
                                      false));
    out.push_back(detail::make_metric(metric_names::clicked_experimenters, MetricKind::supporting, 0, 0,
                                      static_cast<Count>(owners_clicked.size()),
                                      static_cast<Count>(owners_alerted.size()), alpha, false));

    detail::ArmCounts settings, not_shipped;
    for (const auto& [id, v] : assignment.by_experiment) {
        settings.add(v, changed.count(id) > 0);
        if (completed.count(id)) not_shipped.add(v, shipped.count(id) == 0);
    }
    out.push_back(detail::make_metric(metric_names::settings_changed, MetricKind::supporting, settings.base_x,
                                      settings.base_n, settings.variant_x, settings.variant_n, alpha));
    out.push_back(detail::make_metric(metric_names::not_shipped, MetricKind::monitoring, not_shipped.base_x,
                                      not_shipped.base_n, not_shipped.variant_x, not_shipped.variant_n, alpha));
    return out;
}

// ---------------------------------------------------------------------------
// Subgroups
// ---------------------------------------------------------------------------

/// Named per-experiment attributes available for subgrouping.
using Attributes = std::map<std::string, std::map<Id, std::string>, std::less<>>;

inline Attributes fleet_attributes(std::span<const FleetMember> fleet) {
    Attributes a;
    auto& type = a["experiment_type"];
    for (const auto& m : fleet) type[m.config.id] = m.config.experiment_type;
    return a;
}

/// Fixed-day success metric within each group of `by`. Groups whose smaller
/// arm has fewer than min_group_size experiments are flagged low_power.
inline std::vector<MetricResult> subgroup_analysis(std::span<const DailySnapshot> snapshots,
                                                   const Assignment& assignment, const Attributes& attributes,
                                                   std::string_view by, int eligibility_day, int offset,
                                                   double alpha, Count min_group_size = 0) {
    const auto attr = attributes.find(by);
    if (attr == attributes.end()) throw std::invalid_argument("subgroup_analysis: unknown attribute '" + std::string(by) + "'");
    const int day = eligibility_day + offset;
    std::map<std::string, detail::ArmCounts> groups;
    for (const auto& s : snapshots) {
        if (s.day != day || !assignment.by_experiment.count(s.experiment_id)) continue;
        groups[attr->second.at(s.experiment_id)].add(assignment.of(s.experiment_id), s.sufficiently_powered);
    }
    std::vector<MetricResult> out;
    for (const auto& [label, c] : groups) {
        auto m = detail::make_metric(metric_names::powered, MetricKind::success, c.base_x, c.base_n, c.variant_x,
                                     c.variant_n, alpha);
        m.group = label;
        m.low_power = std::min(c.base_n, c.variant_n) < min_group_size;
        out.push_back(std::move(m));
    }
    return out;
}

/// Unpooled standard error of a metric's absolute effect.
inline double effect_standard_error(const MetricResult& m) {
    if (m.base_n < 1 || m.variant_n < 1) return 0.0;
    auto term = [](double p, Count n) {
        const double dn = static_cast<double>(n);
        const double q = std::clamp(p, 0.5 / dn, 1.0 - 0.5 / dn);
        return q * (1.0 - q) / dn;
    };
    return std::sqrt(term(m.base_value, m.base_n) + term(m.variant_value, m.variant_n));
}

/// Two-sided z-test of effect(a) - effect(b) for independent groups.
inline TestResult effect_difference_test(const MetricResult& a, const MetricResult& b, double alpha) {
    TestResult t;
    t.alpha = alpha;
    t.estimate = a.absolute_effect - b.absolute_effect;
    const double se = std::hypot(effect_standard_error(a), effect_standard_error(b));
    if (se > 0.0) {
        t.z_score = t.estimate / se;
        t.p_value = std::erfc(std::abs(t.z_score) * 0.70710678118654752440);
        const double half = normal_quantile(1.0 - alpha / 2.0) * se;
        t.ci_low = t.estimate - half;
        t.ci_high = t.estimate + half;
    } else {
        t.ci_low = t.ci_high = t.estimate;
    }
    return t;
}

/// Cochran's Q across subgroup effects.
inline double subgroup_heterogeneity_p_value(std::span<const MetricResult> groups) {
    std::vector<double> est, se;
    for (const auto& g : groups) {
        est.push_back(g.absolute_effect);
        se.push_back(effect_standard_error(g));
    }
    return heterogeneity_p_value(est, se);
}

// ---------------------------------------------------------------------------
// Timeline (interrupted time series)
// ---------------------------------------------------------------------------

/// Powered fraction per complete 7-day block of the window, pooled over
/// experiment-days.
inline std::vector<double> weekly_powered_fraction(std::span<const FleetDay> days) {
    std::vector<double> weeks;
    for (std::size_t start = 0; start + 7 <= days.size(); start += 7) {
        Count running = 0, powered = 0;
        for (std::size_t d = start; d < start + 7; ++d) {
            running += days[d].running;
            powered += days[d].powered;
        }
        weeks.push_back(running > 0 ? static_cast<double>(powered) / static_cast<double>(running) : 0.0);
    }
    return weeks;
}

inline constexpr std::size_t kMinTimelineWeeks = 4;

/// Step estimate post-mean minus pre-mean over weekly aggregates, with a
/// Welch interval. Weeks [0, intervention_week) are pre.
inline IntervalEstimate timeline_analysis(std::span<const double> weekly, std::size_t intervention_week,
                                          double alpha = 0.05) {
    if (intervention_week < kMinTimelineWeeks || weekly.size() < intervention_week + kMinTimelineWeeks)
        throw std::invalid_argument("timeline_analysis: need at least 4 weeks before and after the intervention");
    return welch_interval(weekly.first(intervention_week), weekly.subspan(intervention_week), alpha);
}

}  // namespace metaexp
