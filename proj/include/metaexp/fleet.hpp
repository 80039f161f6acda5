#pragma once

// Fleet of sample experiments: distribution specs for each configuration
// field and a seeded generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaexp/experiment.hpp"
#include "metaexp/rng.hpp"

namespace metaexp {

/// A univariate distribution as written in scenario files.
struct Distribution {
    enum class Kind { constant, uniform, log_uniform, int_uniform, choice };

    Kind kind = Kind::constant;
    double a = 0.0;
    double b = 0.0;
    std::vector<double> values;       // numeric choice
    std::vector<std::string> labels;  // categorical choice
    std::vector<double> weights;

    static Distribution constant(double v) { return {Kind::constant, v, v, {}, {}, {}}; }
    static Distribution uniform(double lo, double hi) { return {Kind::uniform, lo, hi, {}, {}, {}}; }
    static Distribution log_uniform(double lo, double hi) { return {Kind::log_uniform, lo, hi, {}, {}, {}}; }
    static Distribution int_uniform(double lo, double hi) { return {Kind::int_uniform, lo, hi, {}, {}, {}}; }
    static Distribution choice(std::vector<double> v, std::vector<double> w = {}) {
        return {Kind::choice, 0.0, 0.0, std::move(v), {}, std::move(w)};
    }
    static Distribution categorical(std::vector<std::string> l, std::vector<double> w = {}) {
        return {Kind::choice, 0.0, 0.0, {}, std::move(l), std::move(w)};
    }

    bool is_categorical() const noexcept { return kind == Kind::choice && !labels.empty(); }

    double lower() const {
        if (kind == Kind::choice) return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
        return a;
    }
    double upper() const {
        if (kind == Kind::choice) return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
        return b;
    }

    double sample(Stream& rng) const {
        switch (kind) {
            case Kind::constant: return a;
            case Kind::uniform: return a + (b - a) * rng.uniform();
            case Kind::log_uniform: return std::exp(std::log(a) + (std::log(b) - std::log(a)) * rng.uniform());
            case Kind::int_uniform:
                return static_cast<double>(rng.uniform_int(static_cast<std::int64_t>(a), static_cast<std::int64_t>(b)));
            case Kind::choice: {
                if (values.empty()) throw std::logic_error("Distribution: numeric sample from a categorical choice");
                return values[pick(rng, values.size())];
            }
        }
        return a;
    }

    std::int64_t sample_int(Stream& rng) const { return static_cast<std::int64_t>(std::llround(sample(rng))); }

    const std::string& sample_label(Stream& rng) const {
        if (!is_categorical()) throw std::logic_error("Distribution: label sample from a numeric distribution");
        return labels[pick(rng, labels.size())];
    }

private:
    std::size_t pick(Stream& rng, std::size_t n) const {
        const double u = rng.uniform();
        if (weights.empty()) return std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
        double total = 0.0;
        for (double w : weights) total += w;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += weights[i] / total;
            if (u < acc) return i;
        }
        return n - 1;
    }
};

/// How the fleet is generated. Exactly one of count / eligible_target is set.
/// start_day is relative to the meta-experiment window start (day 0);
/// negative starts are background experiments already running when the window
/// opens.
struct FleetSpec {
    std::optional<std::int64_t> count;
    std::optional<std::int64_t> eligible_target;
    Distribution start_day = Distribution::int_uniform(0, 0);
    Distribution baseline_rate = Distribution::uniform(0.05, 0.2);
    Distribution true_lift_abs = Distribution::constant(0.0);
    Distribution daily_traffic_per_arm = Distribution::log_uniform(200, 5000);
    Distribution planned_runtime_days = Distribution::int_uniform(14, 28);
    Distribution target_mde_abs = Distribution::uniform(0.005, 0.02);
    Distribution max_extension_days = Distribution::int_uniform(7, 28);
    Distribution experiment_type = Distribution::categorical({"default"});
    Distribution owner_multiplicity = Distribution::constant(1);
};

struct FleetMember {
    ExperimentConfig config;
    int start_day = 0;  ///< window day on which life day 1 happens
};

/// Generates experiments in id order from one stream. With eligible_target,
/// generation stops as soon as that many members satisfy `is_eligible`.
/// Owners are assigned in consecutive groups whose sizes follow
/// owner_multiplicity.
template <typename EligiblePredicate>
std::vector<FleetMember> generate_fleet(const FleetSpec& spec, double alpha, double power_threshold,
                                        std::uint64_t seed, EligiblePredicate&& is_eligible) {
    if (spec.count.has_value() == spec.eligible_target.has_value())
        throw std::invalid_argument("generate_fleet: exactly one of count / eligible_target must be set");

    Stream rng(seed);
    std::vector<FleetMember> fleet;
    const std::int64_t target = spec.count ? *spec.count : *spec.eligible_target;
    const std::int64_t max_members = spec.count ? *spec.count : std::max<std::int64_t>(1000, 1000 * target);

    Id owner = -1;
    std::int64_t owner_left = 0;
    std::int64_t eligible = 0;
    while (static_cast<std::int64_t>(fleet.size()) < max_members) {
        if (spec.eligible_target && eligible >= target) break;
        if (owner_left <= 0) {
            ++owner;
            owner_left = std::max<std::int64_t>(1, spec.owner_multiplicity.sample_int(rng));
        }
        FleetMember m;
        m.start_day = static_cast<int>(spec.start_day.sample_int(rng));
        auto& c = m.config;
        c.id = static_cast<Id>(fleet.size());
        c.owner_id = owner;
        c.baseline_rate = spec.baseline_rate.sample(rng);
        c.true_lift_abs = spec.true_lift_abs.sample(rng);
        c.daily_traffic_per_arm = std::max<std::int64_t>(1, spec.daily_traffic_per_arm.sample_int(rng));
        c.planned_runtime_days = static_cast<int>(spec.planned_runtime_days.sample_int(rng));
        c.target_mde_abs = spec.target_mde_abs.sample(rng);
        c.max_extension_days = static_cast<int>(spec.max_extension_days.sample_int(rng));
        c.experiment_type = spec.experiment_type.sample_label(rng);
        c.alpha = alpha;
        c.power_threshold = power_threshold;
        validate(c);
        --owner_left;
        if (is_eligible(m)) ++eligible;
        fleet.push_back(std::move(m));
    }
    if (spec.eligible_target && eligible < target)
        throw std::runtime_error("generate_fleet: eligible_target not reachable with this fleet spec");
    return fleet;
}

}  // namespace metaexp
