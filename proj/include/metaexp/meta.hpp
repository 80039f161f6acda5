#pragma once

// The meta-experiment engine: eligibility at day 7, randomization by
// experiment or experimenter, low-power alerts with one-click fixes,
// experimenter behaviour (spontaneous fixes suppressed by reliance on alerts),
// and the daily snapshot / event-log pipeline.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "metaexp/experiment.hpp"
#include "metaexp/fleet.hpp"
#include "metaexp/rng.hpp"

namespace metaexp {

enum class Variant { base, variant };
enum class RandomizationUnit { experiment, experimenter };

inline std::string_view to_string(Variant v) { return v == Variant::base ? "base" : "variant"; }
inline std::string_view to_string(RandomizationUnit u) {
    return u == RandomizationUnit::experiment ? "experiment" : "experimenter";
}
inline std::string_view to_string(Status s) { return s == Status::running ? "running" : "completed"; }

/// Behavioural parameters shared by every experimenter in a scenario.
struct AgentParams {
    double p_spontaneous_fix = 0.15;
    double p_click_alert = 0.40;
    double p_fix_given_click = 0.45;
    double p_late_extension = 0.0;  ///< alerted, still underpowered at the last planned day
    double reliance_gain = 0.0;
};

struct ExperimenterAgent {
    Id id = 0;
    double p_spontaneous_fix = 0.0;
    double p_click_alert = 0.0;
    double p_fix_given_click = 0.0;
    double p_late_extension = 0.0;
    double reliance = 0.0;
    double reliance_gain = 0.0;

    static ExperimenterAgent from(Id id, const AgentParams& p) {
        return {id, p.p_spontaneous_fix, p.p_click_alert, p.p_fix_given_click, p.p_late_extension, 0.0,
                p.reliance_gain};
    }

    double effective_spontaneous_fix() const noexcept { return p_spontaneous_fix * (1.0 - reliance); }
};

struct MetaDesign {
    RandomizationUnit randomization_unit = RandomizationUnit::experiment;
    int eligibility_day = 7;
    double variant_split = 0.5;
    int duration_days = 112;
    std::uint64_t seed = 0;
};

inline void validate(const MetaDesign& d) {
    if (d.eligibility_day < 1) throw std::invalid_argument("MetaDesign: eligibility_day must be >= 1");
    if (!(d.variant_split > 0.0 && d.variant_split < 1.0))
        throw std::invalid_argument("MetaDesign: variant_split must lie in (0,1)");
    if (d.duration_days < 1) throw std::invalid_argument("MetaDesign: duration_days must be >= 1");
}

struct Assignment {
    RandomizationUnit unit = RandomizationUnit::experiment;
    std::map<Id, Variant> by_unit;
    std::map<Id, Variant> by_experiment;

    bool empty() const noexcept { return by_experiment.empty(); }

    Variant of(Id experiment) const {
        const auto it = by_experiment.find(experiment);
        if (it == by_experiment.end()) throw std::out_of_range("Assignment: experiment not enrolled");
        return it->second;
    }
};

struct DailySnapshot {
    int day = 0;         ///< life day of the experiment
    int window_day = 0;  ///< day of the meta-experiment window
    Id experiment_id = 0;
    Variant variant = Variant::base;
    bool sufficiently_powered = false;
    bool settings_changed = false;
    bool alert_received = false;
    bool alert_clicked = false;
    Status status = Status::running;
    double achieved_power = 0.0;
};

enum class EventKind {
    enrolled,                 ///< value: achieved power at eligibility
    alert_sent,
    alert_clicked,
    alert_fix,                ///< value: days added
    alert_fix_partial,        ///< value: days added (cap reached, still underpowered)
    reliance_updated,         ///< value: new reliance
    spontaneous_check,        ///< value: effective spontaneous-fix probability
    spontaneous_fix,          ///< value: days added
    spontaneous_fix_partial,  ///< value: days added
    late_extension,           ///< value: days added
    completed,                ///< value: 1 shipped, 0 not shipped
};

inline std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::enrolled: return "enrolled";
        case EventKind::alert_sent: return "alert_sent";
        case EventKind::alert_clicked: return "alert_clicked";
        case EventKind::alert_fix: return "alert_fix";
        case EventKind::alert_fix_partial: return "alert_fix_partial";
        case EventKind::reliance_updated: return "reliance_updated";
        case EventKind::spontaneous_check: return "spontaneous_check";
        case EventKind::spontaneous_fix: return "spontaneous_fix";
        case EventKind::spontaneous_fix_partial: return "spontaneous_fix_partial";
        case EventKind::late_extension: return "late_extension";
        case EventKind::completed: return "completed";
    }
    return "unknown";
}

/// True for events that change power-related settings.
inline bool changes_settings(EventKind k) {
    return k == EventKind::alert_fix || k == EventKind::alert_fix_partial || k == EventKind::spontaneous_fix ||
           k == EventKind::spontaneous_fix_partial || k == EventKind::late_extension;
}

struct Event {
    int window_day = 0;
    int day = 0;
    Id experiment_id = 0;
    Id owner_id = 0;
    Variant variant = Variant::base;
    EventKind kind = EventKind::enrolled;
    double value = 0.0;

    bool operator==(const Event&) const = default;
};

using EventLog = std::vector<Event>;

/// Window-level daily counts over the whole fleet (timeline input).
struct FleetDay {
    int window_day = 0;
    int running = 0;
    int powered = 0;
};

// ---------------------------------------------------------------------------
// Eligibility and randomization
// ---------------------------------------------------------------------------

/// Underpowered at eligibility_day, still running then, and that day inside
/// the window. Settings never change before eligibility, so the initial state
/// is the day-7 state.
inline bool is_eligible(const FleetMember& m, const MetaDesign& design) {
    if (m.start_day < 0) return false;
    if (m.start_day + design.eligibility_day - 1 >= design.duration_days) return false;
    if (m.config.planned_runtime_days <= design.eligibility_day) return false;
    return !assess_power(m.config, initial_state(m.config), design.eligibility_day).is_sufficient;
}

inline std::vector<Id> select_eligible(std::span<const FleetMember> fleet, const MetaDesign& design) {
    std::vector<Id> ids;
    for (const auto& m : fleet)
        if (is_eligible(m, design)) ids.push_back(m.config.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// Seeded shuffle of the sorted unit ids; the first round(split * N) become
/// variant. Deterministic in (design.seed, unit id set).
inline Assignment randomize(std::span<const FleetMember> enrolled, const MetaDesign& design) {
    validate(design);
    if (enrolled.empty()) throw std::invalid_argument("randomize: empty unit set");

    Assignment a;
    a.unit = design.randomization_unit;
    std::set<Id> unit_set;
    for (const auto& m : enrolled)
        unit_set.insert(design.randomization_unit == RandomizationUnit::experiment ? m.config.id : m.config.owner_id);
    std::vector<Id> units(unit_set.begin(), unit_set.end());

    Stream rng(derive(design.seed, StreamTag::assignment));
    for (std::size_t i = units.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(units[i - 1], units[j]);
    }
    const auto n_variant = static_cast<std::size_t>(
        std::llround(design.variant_split * static_cast<double>(units.size())));
    for (std::size_t i = 0; i < units.size(); ++i)
        a.by_unit[units[i]] = i < n_variant ? Variant::variant : Variant::base;

    for (const auto& m : enrolled) {
        const Id unit = design.randomization_unit == RandomizationUnit::experiment ? m.config.id : m.config.owner_id;
        a.by_experiment[m.config.id] = a.by_unit.at(unit);
    }
    return a;
}

// ---------------------------------------------------------------------------
// Experimenter responses
// ---------------------------------------------------------------------------

struct Response {
    EventLog events;
    ExperimentState state;
    ExperimenterAgent agent;
};

/// Day-7 decision point for an enrolled experiment. Three uniforms are drawn
/// in a fixed order (click, fix, spontaneous) regardless of the branch taken,
/// so paired runs that differ only in parameters stay coupled.
///
/// Variant: alert, click with p_click_alert, then one-click fix with
/// p_fix_given_click; a successful fix raises reliance by reliance_gain.
/// Experiments without an alert-driven fix attempt try a spontaneous fix: with
/// p_spontaneous_fix * (1 - reliance) when no alert arrived (base), with
/// p_spontaneous_fix for variant non-responders.
/// A fix that hits the extension cap extends to the cap instead.
inline Response deliver_alert_and_respond(const ExperimentConfig& config, ExperimentState state,
                                          ExperimenterAgent agent, Variant variant, int window_day,
                                          Stream& rng) {
    const double u_click = rng.uniform();
    const double u_fix = rng.uniform();
    const double u_spontaneous = rng.uniform();

    Response r;
    auto emit = [&](EventKind kind, double value = 0.0) {
        r.events.push_back({window_day, state.day, config.id, config.owner_id, variant, kind, value});
    };
    auto fix = [&](EventKind full, EventKind partial) {
        auto result = apply_one_click_fix(config, state);
        if (result.status == FixStatus::unfixable) {
            result = extend_to_cap(config, std::move(result.state));
            if (result.extension_days > 0) {
                state = std::move(result.state);
                emit(partial, result.extension_days);
            }
            return false;
        }
        state = std::move(result.state);
        if (result.status == FixStatus::fixed) emit(full, result.extension_days);
        return result.status == FixStatus::fixed;
    };

    bool responded = false;
    if (variant == Variant::variant) {
        state.alert_received = true;
        emit(EventKind::alert_sent);
        if (u_click < agent.p_click_alert) {
            state.alert_clicked = true;
            emit(EventKind::alert_clicked);
            if (u_fix < agent.p_fix_given_click) {
                responded = true;
                if (fix(EventKind::alert_fix, EventKind::alert_fix_partial)) {
                    agent.reliance = std::min(1.0, agent.reliance + agent.reliance_gain);
                    emit(EventKind::reliance_updated, agent.reliance);
                }
            }
        }
    }
    if (!responded) {
        // An alerted experimenter was reminded, so reliance costs nothing there.
        const double p_eff =
            state.alert_received ? agent.p_spontaneous_fix : agent.effective_spontaneous_fix();
        emit(EventKind::spontaneous_check, p_eff);
        if (u_spontaneous < p_eff) fix(EventKind::spontaneous_fix, EventKind::spontaneous_fix_partial);
    }
    r.state = std::move(state);
    r.agent = agent;
    return r;
}

/// At the start of the last scheduled day, an alerted experiment that is still
/// underpowered is extended to sufficiency with p_late_extension (when the cap
/// allows). `u` is the caller's uniform draw.
inline std::optional<Event> consider_late_extension(const ExperimentConfig& config, ExperimentState& state,
                                                    const ExperimenterAgent& agent, Variant variant,
                                                    int window_day, double u) {
    if (!state.alert_received || state.sufficiently_powered_today) return std::nullopt;
    if (!(u < agent.p_late_extension)) return std::nullopt;
    auto result = apply_one_click_fix(config, state);
    if (result.status != FixStatus::fixed) return std::nullopt;
    state = std::move(result.state);
    return Event{window_day, state.day, config.id, config.owner_id, variant, EventKind::late_extension,
                 static_cast<double>(result.extension_days)};
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

struct WorldSpec {
    FleetSpec fleet;
    AgentParams agents;
    MetaDesign design;
    double alpha = 0.05;
    double power_threshold = 0.8;
};

/// Rollout counterfactual: no randomization; every eligible experiment whose
/// eligibility day falls on or after `intervention_day` gets the alert.
struct Rollout {
    int intervention_day = 0;
};

struct RunOutput {
    std::vector<FleetMember> fleet;
    std::vector<Id> eligible;
    Assignment assignment;
    EventLog events;
    std::vector<DailySnapshot> snapshots;
    std::vector<FleetDay> fleet_days;
};

/// Simulates one replication. The window covers days [0, duration_days);
/// enrolled experiments are followed past the window until they complete.
/// Deterministic in (world, seed).
inline RunOutput run_meta_experiment(const WorldSpec& world, std::uint64_t seed,
                                     std::optional<Rollout> rollout = std::nullopt) {
    MetaDesign design = world.design;
    design.seed = seed;
    validate(design);

    RunOutput out;
    out.fleet = generate_fleet(world.fleet, world.alpha, world.power_threshold, derive(seed, StreamTag::fleet),
                               [&](const FleetMember& m) { return is_eligible(m, design); });
    out.eligible = select_eligible(out.fleet, design);

    const std::size_t n = out.fleet.size();
    std::vector<char> enrolled(n, 0);
    for (Id id : out.eligible) enrolled[static_cast<std::size_t>(id)] = 1;

    if (!out.eligible.empty()) {
        if (rollout) {
            out.assignment.unit = design.randomization_unit;
            for (Id id : out.eligible) {
                const auto& m = out.fleet[static_cast<std::size_t>(id)];
                const int elig_window_day = m.start_day + design.eligibility_day - 1;
                out.assignment.by_experiment[id] =
                    elig_window_day >= rollout->intervention_day ? Variant::variant : Variant::base;
            }
        } else {
            std::vector<FleetMember> members;
            members.reserve(out.eligible.size());
            for (Id id : out.eligible) members.push_back(out.fleet[static_cast<std::size_t>(id)]);
            out.assignment = randomize(members, design);
        }
    }

    std::map<Id, ExperimenterAgent> agents;
    for (const auto& m : out.fleet)
        agents.try_emplace(m.config.owner_id, ExperimenterAgent::from(m.config.owner_id, world.agents));

    struct Live {
        ExperimentState state;
        Stream traffic;
        Stream behavior;
        Variant variant = Variant::base;
        bool late_checked = false;
    };
    std::vector<Live> live(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = out.fleet[i].config;
        live[i].state = initial_state(c);
        live[i].traffic = Stream(derive(seed, StreamTag::traffic, static_cast<std::uint64_t>(c.id)));
        live[i].behavior = Stream(derive(seed, StreamTag::behavior, static_cast<std::uint64_t>(c.id)));
        if (enrolled[i]) live[i].variant = out.assignment.of(c.id);
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return out.fleet[a].start_day < out.fleet[b].start_day; });

    std::size_t next = 0;
    std::vector<std::size_t> active;
    std::size_t enrolled_running = 0;
    int day = n == 0 ? 0 : std::min(0, out.fleet[order[0]].start_day);
    for (;; ++day) {
        if (day >= design.duration_days && enrolled_running == 0) break;
        bool added = false;
        while (next < n && out.fleet[order[next]].start_day <= day) {
            const std::size_t i = order[next++];
            if (day >= design.duration_days && !enrolled[i]) continue;
            active.push_back(i);
            if (enrolled[i]) ++enrolled_running;
            added = true;
        }
        if (added) std::sort(active.begin(), active.end());

        const bool in_window = day >= 0 && day < design.duration_days;
        FleetDay fd{day, 0, 0};
        for (std::size_t i : active) {
            const auto& c = out.fleet[i].config;
            auto& e = live[i];
            if (enrolled[i] && !e.late_checked && e.state.day >= design.eligibility_day &&
                e.state.day + 1 == e.state.runtime_days_current) {
                e.late_checked = true;
                const double u = e.behavior.uniform();
                if (auto ev = consider_late_extension(c, e.state, agents.at(c.owner_id), e.variant, day, u))
                    out.events.push_back(*ev);
            }

            e.state = simulate_day(c, std::move(e.state), e.traffic);

            if (enrolled[i] && e.state.day == design.eligibility_day) {
                out.events.push_back({day, e.state.day, c.id, c.owner_id, e.variant, EventKind::enrolled,
                                      e.state.achieved_power});
                auto response = deliver_alert_and_respond(c, std::move(e.state), agents.at(c.owner_id), e.variant,
                                                          day, e.behavior);
                e.state = std::move(response.state);
                agents.at(c.owner_id) = response.agent;
                out.events.insert(out.events.end(), response.events.begin(), response.events.end());
            }
            if (enrolled[i] && e.state.day >= design.eligibility_day) {
                out.snapshots.push_back({e.state.day, day, c.id, e.variant, e.state.sufficiently_powered_today,
                                         e.state.settings_changed, e.state.alert_received, e.state.alert_clicked,
                                         e.state.status, e.state.achieved_power});
            }
            if (enrolled[i] && e.state.status == Status::completed) {
                e.state.shipped = decide_ship(c, e.state);
                out.events.push_back({day, e.state.day, c.id, c.owner_id, e.variant, EventKind::completed,
                                      *e.state.shipped ? 1.0 : 0.0});
            }
            if (in_window) {
                ++fd.running;
                if (e.state.sufficiently_powered_today) ++fd.powered;
            }
        }
        if (in_window) out.fleet_days.push_back(fd);

        std::erase_if(active, [&](std::size_t i) {
            const bool done = live[i].state.status == Status::completed ||
                              (day + 1 >= design.duration_days && !enrolled[i]);
            if (done && enrolled[i]) --enrolled_running;
            return done;
        });
    }
    return out;
}

}  // namespace metaexp
