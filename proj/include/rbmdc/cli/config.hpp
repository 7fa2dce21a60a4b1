#pragma once

#include "rbmdc/core/types.hpp"
#include "rbmdc/neural/adam.hpp"
#include "rbmdc/policies/evaluate.hpp"
#include "rbmdc/policies/search.hpp"
#include "rbmdc/problems/presets.hpp"
#include "rbmdc/solver/train.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rbmdc::cli {

// Configuration files are INI documents; every key may also be given on the
// command line as --set section.key=value. Recognised keys:
//
//   [problem]  preset, K, b, objective (ergodic|discounted), r, file
//   [train]    profile, iterations, batch, horizon, step, loss, lr_boundaries,
//              lr_rates, value_hidden, gradient_hidden, decay_c0, decay_c1,
//              seed, checkpoint_interval, xi_multiplier, chunk, progress_every
//   [evaluate] policy, checkpoint, beta, phi, family, theta, paths, horizon,
//              burn_in, step, seed, chunk
//   [search]   family, axes, refine, heuristic, sub_axes, row_axis
//   [simulate] horizon, step, paths, seed
//   [run]      workers, out
inline const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"problem", {"preset", "K", "b", "objective", "r", "file"}},
        {"train",
         {"profile", "iterations", "batch", "horizon", "step", "loss", "lr_boundaries", "lr_rates", "value_hidden",
          "gradient_hidden", "decay_c0", "decay_c1", "seed", "checkpoint_interval", "xi_multiplier", "chunk",
          "progress_every"}},
        {"evaluate",
         {"policy", "checkpoint", "beta", "phi", "family", "theta", "paths", "horizon", "burn_in", "step", "seed",
          "chunk"}},
        {"search", {"family", "axes", "refine", "heuristic", "sub_axes", "row_axis"}},
        {"simulate", {"horizon", "step", "paths", "seed"}},
        {"run", {"workers", "out"}},
    };
    return keys;
}

/// Flat view of the effective settings: "section.key" -> raw string.
class Settings {
public:
    Settings() = default;

    static Settings from_file(const std::string& path) {
        boost::property_tree::ptree tree;
        try {
            boost::property_tree::read_ini(path, tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError("cannot read config '" + path + "': " + e.what());
        }
        Settings s;
        for (const auto& [section, body] : tree) {
            if (body.empty() && !body.data().empty()) {
                throw ConfigError("config '" + path + "': key '" + section + "' must be inside a section");
            }
            for (const auto& [key, value] : body) s.set(section + "." + key, value.data());
        }
        return s;
    }

    void set(const std::string& dotted, std::string value) {
        const auto dot = dotted.find('.');
        if (dot == std::string::npos) throw ConfigError("setting '" + dotted + "' must be written section.key");
        const std::string section = dotted.substr(0, dot);
        const std::string key = dotted.substr(dot + 1);
        const auto it = known_keys().find(section);
        if (it == known_keys().end()) throw ConfigError("unknown config section '" + section + "'");
        if (!it->second.count(key)) throw ConfigError("unknown config key '" + dotted + "'");
        values_[dotted] = trim_quotes(std::move(value));
    }

    /// "section.key=value"
    void set_assignment(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("expected section.key=value, got '" + assignment + "'");
        set(assignment.substr(0, eq), assignment.substr(eq + 1));
    }

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0; }

    [[nodiscard]] std::optional<std::string> raw(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] std::string str(const std::string& key, const std::string& fallback) const {
        return raw(key).value_or(fallback);
    }

    [[nodiscard]] std::optional<double> number(const std::string& key) const {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        return parse_double(*v, key);
    }

    [[nodiscard]] std::optional<long> integer(const std::string& key) const {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        long out = 0;
        const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc() || ptr != v->data() + v->size()) {
            throw ConfigError("setting '" + key + "' expects an integer, got '" + *v + "'");
        }
        return out;
    }

    [[nodiscard]] std::optional<bool> boolean(const std::string& key) const {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError("setting '" + key + "' expects true/false, got '" + *v + "'");
    }

    [[nodiscard]] std::optional<std::vector<double>> list(const std::string& key) const {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        return parse_list(*v, key);
    }

    /// Canonical text (sorted key=value lines) used for the config hash. The
    /// output location and worker count do not affect results and are left out.
    [[nodiscard]] std::string canonical() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) {
            if (k != "run.out" && k != "run.workers") out << k << '=' << v << '\n';
        }
        return out.str();
    }

    [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

    static double parse_double(const std::string& text, const std::string& key) {
        double out = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
        if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(out)) {
            throw ConfigError("setting '" + key + "' expects a number, got '" + text + "'");
        }
        return out;
    }

    static std::vector<double> parse_list(const std::string& text, const std::string& key) {
        std::vector<double> out;
        std::string item;
        std::istringstream in(text);
        while (std::getline(in, item, ',')) {
            const auto b = item.find_first_not_of(" \t");
            const auto e = item.find_last_not_of(" \t");
            if (b == std::string::npos) throw ConfigError("setting '" + key + "' has an empty list entry");
            out.push_back(parse_double(item.substr(b, e - b + 1), key));
        }
        if (out.empty()) throw ConfigError("setting '" + key + "' expects a comma-separated list");
        return out;
    }

private:
    static std::string trim_quotes(std::string v) {
        const auto b = v.find_first_not_of(" \t");
        const auto e = v.find_last_not_of(" \t");
        v = b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
        return v;
    }

    std::map<std::string, std::string> values_;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const std::string& command, const Settings& settings) {
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << fnv1a(command + '\n' + settings.canonical());
    return out.str();
}

inline Objective objective_from(const Settings& s) {
    const std::string kind = s.str("problem.objective", "ergodic");
    if (kind == "ergodic") return Objective::ergodic();
    if (kind == "discounted") return Objective::discounted(s.number("problem.r").value_or(0.1));
    throw ConfigError("problem.objective must be 'ergodic' or 'discounted', got '" + kind + "'");
}

inline ProblemSpec problem_from(const Settings& s) {
    PresetParams p;
    p.k = s.integer("problem.K").value_or(0);
    p.b = s.number("problem.b");
    p.objective = objective_from(s);
    p.custom_path = s.str("problem.file", "");
    return make_preset(s.str("problem.preset", "ff-linear"), p);
}

/// Profile matching the problem's cost kind, dimension and drift cap.
inline std::string suggest_profile(const ProblemSpec& spec) {
    const Eigen::Index d = spec.dim();
    if (spec.cost().kind == CostKind::Quadratic) {
        if (d == 1) return "quadratic-d1";
        if (d <= 2) return "quadratic-d2";
        if (d <= 6) return "quadratic-d6";
        return "quadratic-d100";
    }
    const std::string cap = spec.actions().upper().maxCoeff() >= 10.0 ? "-b10" : "-b2";
    if (d == 1) return "linear-d1";
    if (d <= 2) return "linear-d2" + cap;
    if (d <= 6) return "linear-d6" + cap;
    return "linear-d30" + cap;
}

inline std::vector<Eigen::Index> widths_from(const std::vector<double>& v, const std::string& key) {
    std::vector<Eigen::Index> out;
    for (double x : v) {
        if (x < 1.0 || x != std::floor(x)) throw ConfigError("setting '" + key + "' expects positive integers");
        out.push_back(static_cast<Eigen::Index>(x));
    }
    return out;
}

inline TrainConfig train_config_from(const Settings& s, const ProblemSpec& spec) {
    const std::string profile = s.str("train.profile", "auto");
    TrainConfig c = training_profile(profile == "auto" ? suggest_profile(spec) : profile);
    if (auto m = s.integer("train.iterations")) c = c.rescaled(*m);
    if (auto v = s.integer("train.batch")) c.batch = *v;
    if (auto v = s.number("train.horizon")) c.horizon = *v;
    if (auto v = s.number("train.step")) c.step = *v;
    if (auto v = s.raw("train.loss")) c.loss = parse_loss_variant(*v);
    if (s.has("train.lr_boundaries") || s.has("train.lr_rates")) {
        const auto bounds = s.list("train.lr_boundaries").value_or(std::vector<double>{});
        const auto rates = s.list("train.lr_rates").value_or(std::vector<double>{5e-4, 3e-4, 1e-4});
        if (rates.size() != bounds.size() + 1) {
            throw ConfigError("train.lr_rates needs exactly one more entry than train.lr_boundaries");
        }
        std::vector<LrSchedule::Segment> segs;
        long start = 0;
        for (std::size_t i = 0; i < rates.size(); ++i) {
            const long end = i < bounds.size() ? static_cast<long>(bounds[i]) : LrSchedule::kOpen;
            segs.push_back({start, end, rates[i]});
            start = end;
        }
        c.schedule = LrSchedule(segs);
    }
    if (auto v = s.list("train.value_hidden")) c.value_hidden = widths_from(*v, "train.value_hidden");
    if (auto v = s.list("train.gradient_hidden")) c.gradient_hidden = widths_from(*v, "train.gradient_hidden");
    if (auto v = s.number("train.decay_c0")) c.decay_c0 = *v;
    if (auto v = s.number("train.decay_c1")) c.decay_c1 = *v;
    if (auto v = s.integer("train.seed")) c.seed = static_cast<std::uint64_t>(*v);
    if (auto v = s.integer("train.checkpoint_interval")) c.checkpoint_interval = *v;
    if (auto v = s.integer("train.xi_multiplier")) c.xi_multiplier = *v;
    if (auto v = s.integer("train.chunk")) c.chunk = *v;
    if (auto v = s.integer("run.workers")) {
        require(*v >= 1, "run.workers must be at least 1");
        c.workers = static_cast<unsigned>(*v);
    }
    c.validate();
    return c;
}

inline EvalSettings eval_settings_from(const Settings& s, const ProblemSpec& spec) {
    EvalSettings e = default_eval_settings(spec, s.number("evaluate.step").value_or(0.1 / 64));
    if (auto v = s.integer("evaluate.paths")) e.paths = *v;
    if (auto v = s.number("evaluate.horizon")) e.horizon = *v;
    if (auto v = s.number("evaluate.burn_in")) e.burn_in = *v;
    if (auto v = s.integer("evaluate.seed")) e.seed = static_cast<std::uint64_t>(*v);
    if (auto v = s.integer("evaluate.chunk")) e.chunk = *v;
    if (auto v = s.integer("run.workers")) e.workers = static_cast<unsigned>(std::max(1L, *v));
    require(e.paths >= 1, "evaluate.paths must be at least 1");
    return e;
}

/// Axis text "lo:hi:step"; several axes are separated by ';'.
inline std::vector<std::vector<double>> parse_axes(const std::string& text, const std::string& key) {
    std::vector<std::vector<double>> axes;
    std::istringstream in(text);
    std::string axis;
    while (std::getline(in, axis, ';')) {
        std::vector<double> parts;
        std::istringstream ain(axis);
        std::string part;
        while (std::getline(ain, part, ':')) parts.push_back(Settings::parse_double(part, key));
        if (parts.size() == 1) {
            axes.push_back({parts[0]});
        } else if (parts.size() == 3) {
            axes.push_back(grid_axis(parts[0], parts[1], parts[2]));
        } else {
            throw ConfigError("setting '" + key + "' expects axes written lo:hi:step separated by ';'");
        }
    }
    if (axes.empty()) throw ConfigError("setting '" + key + "' is empty");
    return axes;
}

}  // namespace rbmdc::cli
