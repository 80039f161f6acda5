#pragma once

// Scenario files: strict JSON schema, full validation with every error
// collected, and a digest of the raw bytes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "metaexp/analysis.hpp"
#include "metaexp/fleet.hpp"
#include "metaexp/meta.hpp"

namespace metaexp {

struct AnalysisSpec {
    double alpha = 0.05;
    double power_threshold = 0.8;
    int measurement_offset = 7;
    std::int64_t min_subgroup_size = 20;
    bool timeline_comparison = true;
    int intervention_week = 8;
    bool cuped = false;
};

struct Scenario {
    std::string name;
    std::string description;
    WorldSpec world;
    AnalysisSpec analysis;
    std::int64_t replications = 1;
    std::uint64_t seed = 0;
    nlohmann::ordered_json calibration;  ///< informational, carried into reports
    std::string source_bytes;
    std::string digest;

    int measurement_day() const { return world.design.eligibility_day + analysis.measurement_offset; }
};

/// FNV-1a 64-bit over the raw file bytes, as 16 lowercase hex digits.
inline std::string digest_of(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(std::vector<std::string> errors)
        : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    static std::string join(const std::vector<std::string>& errors) {
        std::string s = "invalid scenario:";
        for (const auto& e : errors) s += "\n  " + e;
        return s;
    }
    std::vector<std::string> errors_;
};

namespace detail {

using json = nlohmann::json;

class ScenarioParser {
public:
    std::vector<std::string> errors;

    void error(const std::string& path, const std::string& message) { errors.push_back(path + ": " + message); }

    /// Flags keys outside `allowed`.
    void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
        for (const auto& [key, value] : obj.items()) {
            bool ok = false;
            for (auto a : allowed) ok = ok || key == a;
            if (!ok) error(path.empty() ? key : path + "." + key, "unknown key '" + key + "'");
        }
    }

    const json* object(const json& parent, const std::string& key, const std::string& path, bool required = true) {
        const auto full = path.empty() ? key : path + "." + key;
        if (!parent.contains(key)) {
            if (required) error(full, "missing required block");
            return nullptr;
        }
        const auto& v = parent.at(key);
        if (!v.is_object()) {
            error(full, "must be an object");
            return nullptr;
        }
        return &v;
    }

    template <typename T>
    void number(const json& obj, const std::string& key, const std::string& path, T& out, bool required = false) {
        const auto full = path.empty() ? key : path + "." + key;
        if (!obj.contains(key)) {
            if (required) error(full, "missing required field");
            return;
        }
        const auto& v = obj.at(key);
        if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) {
                error(full, "must be an integer");
                return;
            }
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned()) out = v.get<T>();
                else if (v.get<std::int64_t>() >= 0) out = static_cast<T>(v.get<std::int64_t>());
                else error(full, "must be non-negative");
            } else {
                out = static_cast<T>(v.get<std::int64_t>());
            }
        } else {
            if (!v.is_number()) {
                error(full, "must be a number");
                return;
            }
            out = v.get<T>();
        }
    }

    void boolean(const json& obj, const std::string& key, const std::string& path, bool& out) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_boolean()) error(path + "." + key, "must be true or false");
        else out = obj.at(key).get<bool>();
    }

    void text(const json& obj, const std::string& key, const std::string& path, std::string& out) {
        if (!obj.contains(key)) return;
        if (!obj.at(key).is_string()) error(path.empty() ? key : path + "." + key, "must be a string");
        else out = obj.at(key).get<std::string>();
    }

    /// A distribution: a bare number (constant), a bare string (categorical
    /// constant), or an object with exactly one of constant / uniform /
    /// log_uniform / int_uniform / choice (+ optional weights).
    bool distribution(const json& obj, const std::string& key, const std::string& path, Distribution& out,
                      bool categorical = false) {
        const auto full = path + "." + key;
        if (!obj.contains(key)) return true;
        const auto& v = obj.at(key);
        if (categorical) {
            if (v.is_string()) {
                out = Distribution::categorical({v.get<std::string>()});
                return true;
            }
        } else if (v.is_number()) {
            out = Distribution::constant(v.get<double>());
            return true;
        }
        if (!v.is_object()) {
            error(full, categorical ? "must be a string or a distribution object" : "must be a number or a distribution object");
            return false;
        }
        check_keys(v, full, {"constant", "uniform", "log_uniform", "int_uniform", "choice", "weights"});
        int kinds = 0;
        for (auto k : {"constant", "uniform", "log_uniform", "int_uniform", "choice"}) kinds += v.contains(k) ? 1 : 0;
        if (kinds != 1) {
            error(full, "needs exactly one of constant, uniform, log_uniform, int_uniform, choice");
            return false;
        }
        if (v.contains("weights") && !v.contains("choice")) error(full + ".weights", "only valid together with choice");

        auto pair = [&](const char* name, Distribution::Kind kind) {
            const auto& p = v.at(name);
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
                error(full + "." + name, "must be [low, high]");
                return false;
            }
            out = Distribution{kind, p[0].get<double>(), p[1].get<double>(), {}, {}, {}};
            if (out.a > out.b) {
                error(full + "." + name, "low must not exceed high");
                return false;
            }
            if (kind == Distribution::Kind::log_uniform && !(out.a > 0.0)) {
                error(full + "." + name, "log_uniform bounds must be > 0");
                return false;
            }
            if (kind == Distribution::Kind::int_uniform && (!p[0].is_number_integer() || !p[1].is_number_integer())) {
                error(full + "." + name, "int_uniform bounds must be integers");
                return false;
            }
            return true;
        };

        if (v.contains("constant")) {
            const auto& c = v.at("constant");
            if (categorical && c.is_string()) out = Distribution::categorical({c.get<std::string>()});
            else if (!categorical && c.is_number()) out = Distribution::constant(c.get<double>());
            else {
                error(full + ".constant", categorical ? "must be a string" : "must be a number");
                return false;
            }
            return true;
        }
        if (categorical && !v.contains("choice")) {
            error(full, "categorical field accepts only constant or choice");
            return false;
        }
        if (v.contains("uniform")) return pair("uniform", Distribution::Kind::uniform);
        if (v.contains("log_uniform")) return pair("log_uniform", Distribution::Kind::log_uniform);
        if (v.contains("int_uniform")) return pair("int_uniform", Distribution::Kind::int_uniform);

        const auto& c = v.at("choice");
        if (!c.is_array() || c.empty()) {
            error(full + ".choice", "must be a non-empty array");
            return false;
        }
        Distribution d;
        d.kind = Distribution::Kind::choice;
        for (const auto& item : c) {
            if (categorical && item.is_string()) d.labels.push_back(item.get<std::string>());
            else if (!categorical && item.is_number()) d.values.push_back(item.get<double>());
            else {
                error(full + ".choice", categorical ? "entries must be strings" : "entries must be numbers");
                return false;
            }
        }
        if (v.contains("weights")) {
            const auto& w = v.at("weights");
            if (!w.is_array() || w.size() != c.size()) {
                error(full + ".weights", "must be an array as long as choice");
                return false;
            }
            double total = 0.0;
            for (const auto& x : w) {
                if (!x.is_number() || x.get<double>() < 0.0) {
                    error(full + ".weights", "entries must be non-negative numbers");
                    return false;
                }
                d.weights.push_back(x.get<double>());
                total += x.get<double>();
            }
            if (!(total > 0.0)) {
                error(full + ".weights", "must not all be zero");
                return false;
            }
        }
        out = std::move(d);
        return true;
    }

    void range(const Distribution& d, const std::string& path, double lo, double hi, bool open_lo, bool open_hi,
               const std::string& what) {
        const bool lo_ok = open_lo ? d.lower() > lo : d.lower() >= lo;
        const bool hi_ok = open_hi ? d.upper() < hi : d.upper() <= hi;
        if (!lo_ok || !hi_ok) error(path, what);
    }

    void integral(const Distribution& d, const std::string& path) {
        auto is_int = [](double x) { return std::floor(x) == x; };
        bool ok = d.kind == Distribution::Kind::int_uniform ||
                  (d.kind == Distribution::Kind::constant && is_int(d.a)) ||
                  (d.kind == Distribution::Kind::choice && !d.values.empty() &&
                   std::all_of(d.values.begin(), d.values.end(), is_int));
        if (!ok) error(path, "must be an integer-valued distribution (int_uniform, integer constant or choice)");
    }

    void probability(const json& obj, const std::string& key, const std::string& path, double& out) {
        number(obj, key, path, out);
        if (!(out >= 0.0 && out <= 1.0)) error(path + "." + key, "must lie in [0,1]");
    }
};

}  // namespace detail

/// Parses and validates scenario JSON. Throws ScenarioError listing every
/// problem found.
inline Scenario parse_scenario(std::string bytes) {
    using nlohmann::json;
    detail::ScenarioParser p;
    Scenario s;
    s.source_bytes = std::move(bytes);
    s.digest = digest_of(s.source_bytes);

    json root;
    try {
        root = json::parse(s.source_bytes);
    } catch (const json::parse_error& e) {
        throw ScenarioError({std::string("json: ") + e.what()});
    }
    if (!root.is_object()) throw ScenarioError({"scenario: top level must be an object"});

    p.check_keys(root, "", {"name", "description", "seed", "replications", "fleet", "agents", "design", "analysis",
                            "calibration"});
    p.text(root, "name", "", s.name);
    p.text(root, "description", "", s.description);
    p.number(root, "seed", "", s.seed);
    p.number(root, "replications", "", s.replications);
    if (s.replications < 1) p.error("replications", "must be >= 1");
    if (root.contains("calibration")) {
        if (!root.at("calibration").is_object()) p.error("calibration", "must be an object");
        else s.calibration = nlohmann::ordered_json::parse(root.at("calibration").dump());
    }

    // fleet
    auto& f = s.world.fleet;
    if (const auto* fj = p.object(root, "fleet", "")) {
        const std::string fp = "fleet";
        p.check_keys(*fj, fp, {"count", "eligible_target", "start_day", "baseline_rate", "true_lift_abs",
                               "daily_traffic_per_arm", "planned_runtime_days", "target_mde_abs",
                               "max_extension_days", "experiment_type", "owner_multiplicity"});
        if (fj->contains("count")) {
            std::int64_t c = 0;
            p.number(*fj, "count", fp, c);
            if (c < 1) p.error("fleet.count", "must be >= 1");
            f.count = c;
        }
        if (fj->contains("eligible_target")) {
            std::int64_t c = 0;
            p.number(*fj, "eligible_target", fp, c);
            if (c < 0) p.error("fleet.eligible_target", "must be >= 0");
            f.eligible_target = c;
        }
        if (f.count.has_value() == f.eligible_target.has_value())
            p.error("fleet", "exactly one of count / eligible_target is required");

        const bool start_ok = p.distribution(*fj, "start_day", fp, f.start_day);
        const bool base_ok = p.distribution(*fj, "baseline_rate", fp, f.baseline_rate);
        const bool lift_ok = p.distribution(*fj, "true_lift_abs", fp, f.true_lift_abs);
        const bool traffic_ok = p.distribution(*fj, "daily_traffic_per_arm", fp, f.daily_traffic_per_arm);
        const bool runtime_ok = p.distribution(*fj, "planned_runtime_days", fp, f.planned_runtime_days);
        const bool mde_ok = p.distribution(*fj, "target_mde_abs", fp, f.target_mde_abs);
        const bool cap_ok = p.distribution(*fj, "max_extension_days", fp, f.max_extension_days);
        p.distribution(*fj, "experiment_type", fp, f.experiment_type, true);
        const bool owner_ok = p.distribution(*fj, "owner_multiplicity", fp, f.owner_multiplicity);

        if (start_ok) p.integral(f.start_day, "fleet.start_day");
        if (base_ok) p.range(f.baseline_rate, "fleet.baseline_rate", 0.0, 1.0, true, true, "must lie in (0,1)");
        if (base_ok && lift_ok && !(f.baseline_rate.lower() + f.true_lift_abs.lower() > 0.0 &&
                                    f.baseline_rate.upper() + f.true_lift_abs.upper() < 1.0))
            p.error("fleet.true_lift_abs", "baseline_rate + true_lift_abs must lie in (0,1)");
        if (traffic_ok) p.range(f.daily_traffic_per_arm, "fleet.daily_traffic_per_arm", 1.0, 1e12, false, false,
                                "must be >= 1");
        if (runtime_ok) {
            p.integral(f.planned_runtime_days, "fleet.planned_runtime_days");
            p.range(f.planned_runtime_days, "fleet.planned_runtime_days", 7.0, 1e6, false, false, "must be >= 7");
        }
        if (mde_ok) {
            p.range(f.target_mde_abs, "fleet.target_mde_abs", 0.0, 1.0, true, true, "must lie in (0,1)");
            if (base_ok && !(f.baseline_rate.upper() + f.target_mde_abs.upper() < 1.0))
                p.error("fleet.target_mde_abs", "baseline_rate + target_mde_abs must stay below 1");
        }
        if (cap_ok) {
            p.integral(f.max_extension_days, "fleet.max_extension_days");
            p.range(f.max_extension_days, "fleet.max_extension_days", 0.0, 1e6, false, false, "must be >= 0");
        }
        if (owner_ok) {
            p.integral(f.owner_multiplicity, "fleet.owner_multiplicity");
            p.range(f.owner_multiplicity, "fleet.owner_multiplicity", 1.0, 1e9, false, false, "must be >= 1");
        }
    }

    // agents
    if (const auto* aj = p.object(root, "agents", "")) {
        p.check_keys(*aj, "agents", {"p_spontaneous_fix", "p_click_alert", "p_fix_given_click", "p_late_extension",
                                     "reliance_gain"});
        auto& a = s.world.agents;
        p.probability(*aj, "p_spontaneous_fix", "agents", a.p_spontaneous_fix);
        p.probability(*aj, "p_click_alert", "agents", a.p_click_alert);
        p.probability(*aj, "p_fix_given_click", "agents", a.p_fix_given_click);
        p.probability(*aj, "p_late_extension", "agents", a.p_late_extension);
        p.probability(*aj, "reliance_gain", "agents", a.reliance_gain);
    }

    // design
    auto& d = s.world.design;
    if (const auto* dj = p.object(root, "design", "")) {
        p.check_keys(*dj, "design", {"randomization_unit", "eligibility_day", "variant_split", "duration_days"});
        std::string unit = "experiment";
        p.text(*dj, "randomization_unit", "design", unit);
        if (unit == "experiment") d.randomization_unit = RandomizationUnit::experiment;
        else if (unit == "experimenter") d.randomization_unit = RandomizationUnit::experimenter;
        else p.error("design.randomization_unit", "must be 'experiment' or 'experimenter'");
        p.number(*dj, "eligibility_day", "design", d.eligibility_day);
        p.number(*dj, "variant_split", "design", d.variant_split);
        p.number(*dj, "duration_days", "design", d.duration_days);
        if (d.eligibility_day < 1) p.error("design.eligibility_day", "must be >= 1");
        if (!(d.variant_split > 0.0 && d.variant_split < 1.0)) p.error("design.variant_split", "must lie in (0,1)");
        if (d.duration_days < 1) p.error("design.duration_days", "must be >= 1");
    }

    // analysis
    auto& an = s.analysis;
    if (const auto* aj = p.object(root, "analysis", "", false)) {
        p.check_keys(*aj, "analysis", {"alpha", "power_threshold", "measurement_offset", "min_subgroup_size",
                                       "timeline_comparison", "intervention_week", "cuped"});
        p.number(*aj, "alpha", "analysis", an.alpha);
        p.number(*aj, "power_threshold", "analysis", an.power_threshold);
        p.number(*aj, "measurement_offset", "analysis", an.measurement_offset);
        p.number(*aj, "min_subgroup_size", "analysis", an.min_subgroup_size);
        p.boolean(*aj, "timeline_comparison", "analysis", an.timeline_comparison);
        p.number(*aj, "intervention_week", "analysis", an.intervention_week);
        p.boolean(*aj, "cuped", "analysis", an.cuped);
    }
    if (!(an.alpha > 0.0 && an.alpha < 1.0)) p.error("analysis.alpha", "must lie in (0,1)");
    if (!(an.power_threshold > 0.0 && an.power_threshold < 1.0))
        p.error("analysis.power_threshold", "must lie in (0,1)");
    if (an.measurement_offset < 0) p.error("analysis.measurement_offset", "must be >= 0");
    if (an.min_subgroup_size < 0) p.error("analysis.min_subgroup_size", "must be >= 0");
    if (an.timeline_comparison) {
        const int weeks = d.duration_days / 7;
        if (an.intervention_week < static_cast<int>(kMinTimelineWeeks) ||
            an.intervention_week + static_cast<int>(kMinTimelineWeeks) > weeks)
            p.error("analysis.intervention_week", "needs at least 4 complete weeks before and after it inside the window");
    }
    s.world.alpha = an.alpha;
    s.world.power_threshold = an.power_threshold;

    if (!p.errors.empty()) throw ScenarioError(std::move(p.errors));
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError({path + ": cannot open scenario file"});
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

}  // namespace metaexp
