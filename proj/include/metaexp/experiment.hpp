#pragma once

// Sample experiments: one ordinary two-arm A/B test with a binary metric,
// 50/50 split, Bernoulli conversions and a prospective power check against
// its planned total sample size.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "metaexp/rng.hpp"
#include "metaexp/stats.hpp"

namespace metaexp {

using Id = std::int64_t;

struct ExperimentConfig {
    Id id = 0;
    Id owner_id = 0;
    double baseline_rate = 0.1;
    double true_lift_abs = 0.0;
    Count daily_traffic_per_arm = 1000;
    int planned_runtime_days = 14;
    double target_mde_abs = 0.01;
    double alpha = 0.05;
    double power_threshold = 0.8;
    std::string experiment_type = "default";
    int max_extension_days = 14;
};

inline void validate(const ExperimentConfig& c) {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("experiment " + std::to_string(c.id) + ": " + what);
    };
    if (!(c.baseline_rate >= 0.0 && c.baseline_rate < 1.0)) fail("baseline_rate must lie in [0,1)");
    const double treated = c.baseline_rate + c.true_lift_abs;
    if (!(treated >= 0.0 && treated < 1.0)) fail("baseline_rate + true_lift_abs must lie in [0,1)");
    if (c.daily_traffic_per_arm < 1) fail("daily_traffic_per_arm must be >= 1");
    if (c.planned_runtime_days < 7) fail("planned_runtime_days must be >= 7");
    if (!(c.target_mde_abs > 0.0) || !(c.baseline_rate + c.target_mde_abs < 1.0))
        fail("target_mde_abs must be > 0 with baseline_rate + target_mde_abs < 1");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) fail("alpha must lie in (0,1)");
    if (!(c.power_threshold > 0.0 && c.power_threshold < 1.0)) fail("power_threshold must lie in (0,1)");
    if (c.max_extension_days < 0) fail("max_extension_days must be >= 0");
}

enum class Status { running, completed };

struct ExperimentState {
    int day = 0;
    Count n_control = 0;
    Count n_treatment = 0;
    Count x_control = 0;
    Count x_treatment = 0;
    int runtime_days_current = 0;
    bool settings_changed = false;
    bool alert_received = false;
    bool alert_clicked = false;
    Status status = Status::running;
    std::optional<bool> shipped;
    bool sufficiently_powered_today = false;
    double achieved_power = 0.0;
};

struct PowerAssessment {
    double achieved_power = 0.0;
    bool is_sufficient = false;
    int evaluated_at_day = 0;
};

/// Prospective power for target_mde_abs given the planned total sample
/// (daily_traffic_per_arm x runtime_days_current per arm).
inline PowerAssessment assess_power(const ExperimentConfig& config, const ExperimentState& state, int at_day) {
    if (at_day < 1) throw std::invalid_argument("assess_power: at_day must be >= 1");
    PowerSpec spec;
    spec.baseline_rate = config.baseline_rate;
    spec.mde_abs = config.target_mde_abs;
    spec.alpha = config.alpha;
    spec.target_power = config.power_threshold;
    spec.n_per_arm = config.daily_traffic_per_arm * static_cast<Count>(state.runtime_days_current);
    PowerAssessment a;
    a.achieved_power = power_two_proportions(spec);
    a.is_sufficient = a.achieved_power >= config.power_threshold;
    a.evaluated_at_day = at_day;
    return a;
}

namespace detail {

inline void refresh_power(const ExperimentConfig& config, ExperimentState& state) {
    const auto a = assess_power(config, state, std::max(state.day, 1));
    state.achieved_power = a.achieved_power;
    state.sufficiently_powered_today = a.is_sufficient;
}

}  // namespace detail

inline ExperimentState initial_state(const ExperimentConfig& config) {
    ExperimentState s;
    s.runtime_days_current = config.planned_runtime_days;
    detail::refresh_power(config, s);
    return s;
}

/// Advances one day: accrues traffic on both arms, draws conversions at
/// baseline_rate (control) and baseline_rate + true_lift_abs (treatment),
/// and completes the experiment on its last scheduled day.
inline ExperimentState simulate_day(const ExperimentConfig& config, ExperimentState state, Stream& rng) {
    if (state.status != Status::running) throw std::logic_error("simulate_day: experiment already completed");
    const Count n = config.daily_traffic_per_arm;
    state.n_control += n;
    state.n_treatment += n;
    state.x_control += rng.binomial(n, config.baseline_rate);
    state.x_treatment += rng.binomial(n, config.baseline_rate + config.true_lift_abs);
    ++state.day;
    if (state.day >= state.runtime_days_current) state.status = Status::completed;
    return state;
}

enum class FixStatus { already_sufficient, fixed, unfixable };

struct FixResult {
    FixStatus status = FixStatus::already_sufficient;
    ExperimentState state;
    int extension_days = 0;  ///< days added by this call
};

/// Smallest runtime (days) whose planned sample reaches the power threshold.
inline int required_runtime_days(const ExperimentConfig& config) {
    PowerSpec spec;
    spec.baseline_rate = config.baseline_rate;
    spec.mde_abs = config.target_mde_abs;
    spec.alpha = config.alpha;
    spec.target_power = config.power_threshold;
    const Count n = required_sample_size(spec);
    const Count days = (n + config.daily_traffic_per_arm - 1) / config.daily_traffic_per_arm;
    return static_cast<int>(std::min<Count>(days, 1'000'000'000));
}

/// One-click fix: extends the runtime to the minimal number of days that makes
/// the experiment sufficiently powered. If that needs more than
/// max_extension_days beyond the planned runtime, returns unfixable with the
/// state untouched.
inline FixResult apply_one_click_fix(const ExperimentConfig& config, ExperimentState state) {
    FixResult r;
    if (assess_power(config, state, std::max(state.day, 1)).is_sufficient) {
        r.status = FixStatus::already_sufficient;
        r.state = std::move(state);
        return r;
    }
    const int days = std::max(required_runtime_days(config), state.day);
    if (days - config.planned_runtime_days > config.max_extension_days) {
        r.status = FixStatus::unfixable;
        r.state = std::move(state);
        return r;
    }
    r.status = FixStatus::fixed;
    r.extension_days = days - state.runtime_days_current;
    state.runtime_days_current = days;
    state.settings_changed = true;
    detail::refresh_power(config, state);
    r.state = std::move(state);
    return r;
}

/// Partial fix: extends to the cap without reaching sufficiency. No-op when the
/// cap is already used up.
inline FixResult extend_to_cap(const ExperimentConfig& config, ExperimentState state) {
    FixResult r;
    r.status = FixStatus::unfixable;
    const int cap = config.planned_runtime_days + config.max_extension_days;
    if (cap > state.runtime_days_current) {
        r.extension_days = cap - state.runtime_days_current;
        state.runtime_days_current = cap;
        state.settings_changed = true;
        detail::refresh_power(config, state);
    }
    r.state = std::move(state);
    return r;
}

/// Ship rule: significant at alpha with a positive estimated effect.
inline bool decide_ship(const ExperimentConfig& config, const ExperimentState& state) {
    if (state.status != Status::completed) throw std::logic_error("decide_ship: experiment still running");
    if (state.n_control < 1 || state.n_treatment < 1) return false;
    const auto t = two_proportion_ztest(state.x_control, state.n_control, state.x_treatment, state.n_treatment,
                                        config.alpha);
    return t.significant() && t.estimate > 0.0;
}

}  // namespace metaexp
