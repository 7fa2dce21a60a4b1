#pragma once

#include "rbmdc/analytic/oned.hpp"
#include "rbmdc/cli/config.hpp"
#include "rbmdc/cli/output.hpp"
#include "rbmdc/core/types.hpp"
#include "rbmdc/neural/checkpoint.hpp"
#include "rbmdc/policies/evaluate.hpp"
#include "rbmdc/policies/policy.hpp"
#include "rbmdc/policies/search.hpp"
#include "rbmdc/problems/presets.hpp"
#include "rbmdc/rbm/paths.hpp"
#include "rbmdc/solver/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace rbmdc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

// ---------------------------------------------------------------------------
// Shared option wiring
// ---------------------------------------------------------------------------

/// Options that write straight into Settings keys.
class OptionBinder {
public:
    OptionBinder(CLI::App* app, std::map<std::string, std::string>& sink) : app_(app), sink_(sink) {}

    void bind(const std::string& flag, const std::string& key, const std::string& help) {
        auto* sink = &sink_;
        app_->add_option_function<std::string>(
            flag, [sink, key](const std::string& v) { (*sink)[key] = v; }, help);
    }

private:
    CLI::App* app_;
    std::map<std::string, std::string>& sink_;
};

struct CommonArgs {
    std::string config;
    std::vector<std::string> assignments;
    std::map<std::string, std::string> flags;
};

inline void add_common(CLI::App* app, CommonArgs& args) {
    app->add_option("--config", args.config, "INI configuration file");
    app->add_option("--set", args.assignments, "Override a config key: section.key=value (repeatable)");
    OptionBinder b(app, args.flags);
    b.bind("--out", "run.out", "Output directory");
    b.bind("--workers", "run.workers", "Worker threads (results do not depend on this)");
}

inline void add_problem_flags(CLI::App* app, CommonArgs& args) {
    OptionBinder b(app, args.flags);
    b.bind("--preset", "problem.preset", "Problem preset (" + [] {
        std::string s;
        for (const auto& n : preset_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
    }() + ")");
    b.bind("--K", "problem.K", "Number of downstream buffers (feed-forward) or queues (parallel)");
    b.bind("--b", "problem.b", "Upper drift limit");
    b.bind("--objective", "problem.objective", "ergodic or discounted");
    b.bind("--r", "problem.r", "Discount rate");
    b.bind("--problem-file", "problem.file", "JSON problem description for the custom preset");
}

inline void add_eval_flags(CLI::App* app, CommonArgs& args) {
    OptionBinder b(app, args.flags);
    b.bind("--paths", "evaluate.paths", "Evaluation paths (ergodic: replications)");
    b.bind("--eval-horizon", "evaluate.horizon", "Simulated time per evaluation path");
    b.bind("--burn-in", "evaluate.burn_in", "Ergodic burn-in time");
    b.bind("--eval-step", "evaluate.step", "Evaluation time step");
    b.bind("--eval-seed", "evaluate.seed", "Evaluation seed");
}

inline Settings resolve_settings(const CommonArgs& args) {
    Settings s = args.config.empty() ? Settings() : Settings::from_file(args.config);
    for (const auto& [k, v] : args.flags) s.set(k, v);
    for (const auto& a : args.assignments) s.set_assignment(a);
    return s;
}

inline fs::path out_dir(const Settings& s) { return fs::path(s.str("run.out", "out")); }

inline json eval_json(const EvalReport& r) {
    return json{{"mode", eval_mode_name(r.mode)}, {"mean", r.mean},         {"stderr", r.stderr_},
                {"n_paths", r.n_paths},           {"horizon", r.horizon},   {"burn_in", r.burn_in},
                {"step", r.step},                 {"seed", r.seed},         {"tail_bound", r.tail_bound}};
}

inline const std::vector<std::string>& eval_columns() {
    static const std::vector<std::string> cols{"policy", "mode",    "mean", "stderr",    "n_paths",
                                               "horizon", "burn_in", "step", "seed", "tail_bound"};
    return cols;
}

inline std::vector<std::string> eval_row(const std::string& policy, const EvalReport& r) {
    return {policy,         eval_mode_name(r.mode), num(r.mean), num(r.stderr_), num(static_cast<long>(r.n_paths)),
            num(r.horizon), num(r.burn_in),         num(r.step), num(r.seed),    num(r.tail_bound)};
}

// ---------------------------------------------------------------------------
// analytic
// ---------------------------------------------------------------------------

struct AnalyticArgs {
    std::string kind = "ergodic-linear";
    double a = 1.0, b = 2.0, c = 1.0, h = 2.0, r = 0.1, alpha = 1.0, nominal = 1.0, z_max = 50.0;
    std::string out;
};

inline json analytic_json(const Analytic1DSolution& s, const std::string& kind) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    const OneDimParams& p = s.params;
    json params{{"a", p.a}, {"h", p.h}};
    if (s.kind == Analytic1DKind::ErgodicQuadratic) {
        params["alpha"] = p.alpha;
        params["nominal"] = p.nominal;
    } else {
        params["b"] = p.b;
        params["c"] = p.c;
        if (s.kind == Analytic1DKind::DiscountedLinear) params["r"] = p.r;
    }
    json j{{"kind", kind},     {"parameters", params}, {"z_star", opt(s.threshold)},
           {"xi_star", opt(s.average_cost)}, {"c1", opt(s.c1)},       {"c2", opt(s.c2)}};
    if (s.kind == Analytic1DKind::DiscountedLinear) {
        j["value_at_zero"] = s.value(0.0);
        j["zero_drift_optimal"] = !s.threshold.has_value();
    }
    if (s.kind == Analytic1DKind::ErgodicQuadratic) j["reliable_until"] = s.reliable_until;
    return j;
}

inline int cmd_analytic(const AnalyticArgs& a, Streams io) {
    Analytic1DSolution sol;
    if (a.kind == "ergodic-linear") {
        sol = ergodic_linear_1d(a.a, a.b, a.c, a.h);
    } else if (a.kind == "discounted-linear") {
        sol = discounted_linear_1d(a.a, a.b, a.c, a.h, a.r);
    } else if (a.kind == "ergodic-quadratic") {
        sol = ergodic_quadratic_1d(a.a, a.alpha, a.nominal, a.h, a.z_max);
    } else {
        throw ConfigError("unknown analytic kind '" + a.kind +
                          "' (expected ergodic-linear, discounted-linear, ergodic-quadratic)");
    }
    const json j = analytic_json(sol, a.kind);
    io.out << j.dump(2) << '\n';
    if (!a.out.empty()) write_json(a.out, j);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline int cmd_simulate(const Settings& s, Streams io) {
    const ProblemSpec spec = problem_from(s);
    const double horizon = s.number("simulate.horizon").value_or(0.1);
    const double step = s.number("simulate.step").value_or(0.1 / 64);
    const long paths = s.integer("simulate.paths").value_or(1);
    require(paths >= 1, "simulate.paths must be at least 1");
    const auto seed = static_cast<std::uint64_t>(s.integer("simulate.seed").value_or(0));
    const unsigned workers = static_cast<unsigned>(std::max(1L, s.integer("run.workers").value_or(1)));
    const Matrix z0 = Matrix::Zero(spec.dim(), paths);
    const PathBatch batch = simulate_reference_paths(spec.reflection(), spec.covariance(), spec.reference_drift(), z0,
                                                     horizon, step, StreamKey{seed, stream_purpose::simulation, 0, 0},
                                                     workers);
    const std::string hash = config_hash("simulate", s);
    std::vector<std::string> cols{"path", "step", "time"};
    for (Eigen::Index k = 0; k < spec.dim(); ++k) cols.push_back("z" + std::to_string(k));
    for (Eigen::Index k = 0; k < spec.dim(); ++k) cols.push_back("dy" + std::to_string(k));
    CsvFile csv(out_dir(s) / "paths.csv", hash, cols);
    for (Eigen::Index i = 0; i < batch.batch; ++i) {
        for (Eigen::Index n = 0; n <= batch.steps; ++n) {
            std::vector<std::string> row{num(static_cast<long>(i)), num(static_cast<long>(n)),
                                         num(step * static_cast<double>(n))};
            for (Eigen::Index k = 0; k < spec.dim(); ++k) row.push_back(num(batch.state(i, n)(k)));
            for (Eigen::Index k = 0; k < spec.dim(); ++k) row.push_back(n == 0 ? "0" : num(batch.push(i, n - 1)(k)));
            csv.row(row);
        }
    }
    io.out << "wrote " << csv.path().string() << " (" << batch.batch << " paths, " << batch.steps << " steps)\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline json train_summary(const ProblemSpec& spec, const TrainConfig& cfg, const TrainResult& res,
                          const std::string& hash) {
    json j{{"problem", spec.name()},
           {"dimension", spec.dim()},
           {"loss_variant", loss_variant_name(res.variant)},
           {"iterations", cfg.iterations},
           {"batch", cfg.batch},
           {"horizon", cfg.horizon},
           {"step", cfg.step},
           {"seed", cfg.seed},
           {"xi_hat", res.xi_hat},
           {"value_at_origin", res.value_at_origin},
           {"offset", res.nets.offset},
           {"final_loss", res.loss_trace.back()},
           {"config_hash", hash}};
    if (spec.cost().kind == CostKind::Linear && spec.dim() == 1) {
        const auto t = learned_threshold(res.nets.gradient, spec);
        j["threshold"] = t ? json(*t) : json(nullptr);
    }
    return j;
}

inline TrainResult run_training(const ProblemSpec& spec, const TrainConfig& cfg, const Settings& s,
                                const fs::path& dir, const std::string& hash, Streams io) {
    const long every = std::max(1L, s.integer("train.progress_every").value_or(100));
    TrainCallbacks cb;
    io.out << "# progress: iteration,loss,lr,b_decay,elapsed_s\n";
    cb.progress = [&](const TrainProgress& p) {
        if (p.iteration % every == 0 || p.iteration + 1 == cfg.iterations) {
            io.out << p.iteration << ',' << num(p.loss) << ',' << num(p.lr) << ',' << num(p.b_decay) << ','
                   << p.elapsed << '\n';
            io.out.flush();
        }
    };
    cb.checkpoint = [&](long iteration, const NetworkPair& nets) {
        const fs::path cdir = dir / "checkpoints" / ("iter_" + std::to_string(iteration));
        ensure_directory(cdir);
        save_mlp(nets.value, (cdir / "value.json").string());
        save_mlp(nets.gradient, (cdir / "gradient.json").string());
    };
    TrainResult res = train(spec, cfg, cb);
    CsvFile loss(dir / "loss.csv", hash, {"iteration", "loss", "lr", "b_decay"});
    const bool decay = spec.cost().kind == CostKind::Linear;
    for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
        const long it = static_cast<long>(i);
        loss.row({num(it), num(res.loss_trace[i]), num(cfg.schedule.rate(it)), num(decay ? cfg.decay_at(it) : 0.0)});
    }
    save_mlp(res.nets.value, (dir / "value.json").string());
    save_mlp(res.nets.gradient, (dir / "gradient.json").string());
    write_json(dir / "summary.json", train_summary(spec, cfg, res, hash));
    return res;
}

inline int cmd_train(const Settings& s, Streams io) {
    const ProblemSpec spec = problem_from(s);
    const TrainConfig cfg = train_config_from(s, spec);
    const std::string hash = config_hash("train", s);
    const fs::path dir = out_dir(s);
    ensure_directory(dir);
    const TrainResult res = run_training(spec, cfg, s, dir, hash, io);
    io.out << "xi_hat=" << num(res.xi_hat) << " value_at_origin=" << num(res.value_at_origin)
           << " wall_seconds=" << res.wall_seconds << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

inline Matrix square_from_list(const std::vector<double>& v, Eigen::Index d, const std::string& key) {
    if (static_cast<Eigen::Index>(v.size()) != d * d) {
        throw ConfigError("setting '" + key + "' needs d*d = " + std::to_string(d * d) + " entries (row-major)");
    }
    Matrix m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = v[static_cast<std::size_t>(i * d + j)];
    }
    return m;
}

inline BenchmarkFamily family_from(const Settings& s, const std::string& key, const ProblemSpec& spec) {
    const auto v = s.raw(key);
    if (v) return parse_family(*v);
    return spec.cost().kind == CostKind::Linear ? BenchmarkFamily::LinearBoundary : BenchmarkFamily::AffineRate;
}

inline Policy policy_from(const Settings& s, const ProblemSpec& spec) {
    const std::string kind = s.str("evaluate.policy", "learned");
    const Eigen::Index d = spec.dim();
    if (kind == "learned" || kind == "learned-value-gradient") {
        const fs::path dir = s.str("evaluate.checkpoint", out_dir(s).string());
        const bool vg = kind == "learned-value-gradient";
        const Mlp net = load_mlp((dir / (vg ? "value.json" : "gradient.json")).string());
        return learned_policy(spec, net, vg);
    }
    if (kind == "analytic") return analytic_policy(spec);
    if (kind == "constant") {
        const auto theta = s.list("evaluate.theta");
        if (!theta) throw ConfigError("constant policy needs evaluate.theta");
        return constant_policy(spec, Eigen::Map<const Vector>(theta->data(), static_cast<Eigen::Index>(theta->size())));
    }
    if (kind == "linear-boundary" || kind == "affine-rate") {
        const auto beta = s.list("evaluate.beta");
        if (!beta) throw ConfigError(kind + " policy needs evaluate.beta");
        return family_policy(spec, parse_family(kind), square_from_list(*beta, d, "evaluate.beta"));
    }
    if (kind == "symmetric") {
        const auto phi = s.list("evaluate.phi");
        if (!phi) throw ConfigError("symmetric policy needs evaluate.phi");
        return symmetric_policy(spec, family_from(s, "evaluate.family", spec), *phi);
    }
    throw ConfigError("unknown policy '" + kind +
                      "' (expected learned, learned-value-gradient, analytic, constant, linear-boundary, "
                      "affine-rate, symmetric)");
}

inline int cmd_evaluate(const Settings& s, Streams io) {
    const ProblemSpec spec = problem_from(s);
    const Policy policy = policy_from(s, spec);
    const EvalSettings es = eval_settings_from(s, spec);
    const EvalReport rep = evaluate_policy(spec, policy, es);
    const std::string hash = config_hash("evaluate", s);
    CsvFile csv(out_dir(s) / "evaluation.csv", hash, eval_columns());
    csv.row(eval_row(policy.name(), rep));
    io.out << policy.name() << ": mean=" << num(rep.mean) << " stderr=" << num(rep.stderr_)
           << " n_paths=" << rep.n_paths << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// benchmark-search
// ---------------------------------------------------------------------------

inline int cmd_search(const Settings& s, Streams io) {
    const ProblemSpec spec = problem_from(s);
    const EvalSettings es = eval_settings_from(s, spec);
    const BenchmarkFamily family = family_from(s, "search.family", spec);
    const int refine = static_cast<int>(s.integer("search.refine").value_or(5));
    const std::string hash = config_hash("benchmark-search", s);
    const fs::path dir = out_dir(s);
    json summary{{"family", family_name(family)}, {"config_hash", hash}};
    Matrix beta;
    EvalReport rep;
    std::vector<double> phi;
    Eigen::Index evaluated = 0;
    if (s.boolean("search.heuristic").value_or(false)) {
        const auto sub = s.raw("search.sub_axes") ? parse_axes(*s.raw("search.sub_axes"), "search.sub_axes")
                                                  : std::vector<std::vector<double>>(4, grid_axis(0.0, 3.0, 0.5));
        const auto row = s.raw("search.row_axis") ? parse_axes(*s.raw("search.row_axis"), "search.row_axis").at(0)
                                                  : grid_axis(0.0, 3.0, 0.5);
        require(sub.size() == 4, "search.sub_axes needs four axes");
        HeuristicResult h = heuristic_asymmetric(spec, sub, row, es, family);
        beta = h.beta;
        rep = h.report;
        phi = h.first_row.phi;
        evaluated = h.first_row.evaluated;
        for (const auto& r : h.subnetworks) evaluated += r.evaluated;
        summary["method"] = "subnetwork-heuristic";
    } else {
        auto axes = s.raw("search.axes") ? parse_axes(*s.raw("search.axes"), "search.axes")
                                         : default_symmetric_axes(spec);
        const std::size_t need = spec.dim() == 1 ? 1 : 5;
        if (axes.size() == 1 && need > 1) axes.assign(need, axes[0]);
        require(axes.size() == need, "search.axes needs " + std::to_string(need) + " axes for this problem");
        auto factory = [&](const std::vector<double>& p) { return symmetric_policy(spec, family, p); };
        SearchResult r = refine > 0 ? two_stage_search(spec, factory, axes, es, refine)
                                    : grid_search(spec, factory, axes, es);
        phi = r.phi;
        rep = r.report;
        evaluated = r.evaluated;
        beta = expand_symmetric(phi, spec.dim() - 1);
        summary["method"] = "symmetric-grid";
    }
    std::vector<std::string> cols{"family"};
    for (std::size_t i = 0; i < phi.size(); ++i) cols.push_back("phi" + std::to_string(i + 1));
    for (const char* c : {"mean", "stderr", "n_paths", "evaluated"}) cols.emplace_back(c);
    CsvFile csv(dir / "search.csv", hash, cols);
    std::vector<std::string> row{family_name(family)};
    for (double p : phi) row.push_back(num(p));
    row.push_back(num(rep.mean));
    row.push_back(num(rep.stderr_));
    row.push_back(num(static_cast<long>(rep.n_paths)));
    row.push_back(num(static_cast<long>(evaluated)));
    csv.row(row);
    summary["phi"] = phi;
    summary["beta"] = matrix_json(beta);
    summary["evaluation"] = eval_json(rep);
    summary["evaluated"] = evaluated;
    write_json(dir / "search.json", summary);
    io.out << "best mean=" << num(rep.mean) << " stderr=" << num(rep.stderr_) << " after " << evaluated
           << " evaluations\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

struct ReproTarget {
    std::string name;
    std::string alias;
    std::string preset;
    Eigen::Index k = 0;
    std::vector<double> caps;
};

inline const std::vector<ReproTarget>& repro_targets() {
    static const std::vector<ReproTarget> targets{
        {"linear-d1", "table1", "ff-linear", 0, {2.0, 10.0}},
        {"linear-d2", "table2", "ff-linear", 1, {2.0, 10.0}},
        {"quadratic-d1", "table3", "ff-quadratic", 0, {kQuadraticUpperDefault}},
        {"linear-d21", "table4", "ff-linear", 20, {2.0, 10.0}},
        {"asymmetric-d6", "table5", "ff-asymmetric", 5, {2.0, 10.0}},
        {"parallel-linear-d30", "table6", "parallel-linear", 30, {2.0, 10.0}},
        {"linear-d6", "", "ff-linear", 5, {2.0, 10.0}},
        {"quadratic-d2", "", "ff-quadratic", 1, {kQuadraticUpperDefault}},
        {"quadratic-d6", "", "ff-quadratic", 5, {kQuadraticUpperDefault}},
        {"parallel-quadratic-d100", "", "parallel-quadratic", 100, {kQuadraticUpperDefault}},
    };
    return targets;
}

struct ReproArgs {
    std::string target;
    double scale = 1.0;
    std::string objectives = "ergodic,0.01,0.1";
    std::vector<double> caps;
    long grid_points = 7;
};

inline int cmd_zstar(const Settings& s, Streams io) {
    const std::string hash = config_hash("reproduce z-star", s);
    CsvFile csv(out_dir(s) / "z-star.csv", hash, {"b", "h", "r", "z_star"});
    for (double b : {2.0, 10.0}) {
        for (double h : {2.0, 1.9}) {
            for (double r : {0.01, 0.1}) {
                const auto sol = discounted_linear_1d(1.0, b, 1.0, h, r);
                csv.row({num(b), num(h), num(r), sol.threshold ? num(*sol.threshold) : std::string("none")});
                io.out << "b=" << b << " h=" << h << " r=" << r << " z*=" << num(*sol.threshold) << '\n';
            }
        }
    }
    return kExitOk;
}

/// Best benchmark available for a problem: analytic when the coordinates
/// decouple, the subnetwork heuristic for unequal routing, otherwise a
/// symmetric grid search.
inline std::pair<Policy, std::string> repro_benchmark(const ProblemSpec& spec, const EvalSettings& es,
                                                      long grid_points) {
    const Eigen::Index d = spec.dim();
    const Matrix& r = spec.reflection().matrix();
    const Matrix& a = spec.covariance().matrix();
    const bool decoupled = r.isIdentity(0.0) && Matrix(a.diagonal().asDiagonal()).isApprox(a, 0.0);
    const bool linear = spec.cost().kind == CostKind::Linear;
    const double top = 3.0;
    const double step = top / static_cast<double>(std::max(1L, grid_points - 1));
    if (decoupled && (linear || !spec.objective().is_discounted())) return {analytic_policy(spec), "analytic"};
    if (decoupled) {
        auto factory = [&](const std::vector<double>& p) {
            return affine_rate_policy(spec, p[0] * Matrix::Identity(d, d));
        };
        const SearchResult res = two_stage_search(spec, factory, {grid_axis(0.0, top, step)}, es);
        return {factory(res.phi), "affine-rate-search"};
    }
    const BenchmarkFamily family = linear ? BenchmarkFamily::LinearBoundary : BenchmarkFamily::AffineRate;
    const Vector p = routing_from_reflection(spec);
    if ((p.array() - p(0)).abs().maxCoeff() > 1e-12) {
        const auto axis = grid_axis(0.0, top, step);
        HeuristicResult h = heuristic_asymmetric(spec, std::vector<std::vector<double>>(4, axis), axis, es, family);
        return {h.policy, "subnetwork-heuristic"};
    }
    const auto axes = std::vector<std::vector<double>>(5, grid_axis(0.0, top, step));
    auto factory = [&](const std::vector<double>& phi) { return symmetric_policy(spec, family, phi); };
    const SearchResult res = two_stage_search(spec, factory, axes, es);
    return {factory(res.phi), "symmetric-search"};
}

inline int cmd_reproduce(const ReproArgs& args, const Settings& s, Streams io) {
    if (args.target == "z-star" || args.target == "table9") return cmd_zstar(s, io);
    const ReproTarget* target = nullptr;
    for (const auto& t : repro_targets()) {
        if (t.name == args.target || (!t.alias.empty() && t.alias == args.target)) target = &t;
    }
    if (!target) throw ConfigError("unknown reproduce target '" + args.target + "'");
    require(args.scale > 0.0 && args.scale <= 1.0, "--scale must be in (0, 1]");

    std::vector<std::string> columns;
    std::vector<Objective> objectives;
    std::istringstream tokens(args.objectives);
    std::string token;
    while (std::getline(tokens, token, ',')) {
        if (token == "ergodic") {
            objectives.push_back(Objective::ergodic());
            columns.emplace_back("ergodic");
        } else {
            const double rate = Settings::parse_double(token, "--objectives");
            objectives.push_back(Objective::discounted(rate));
            columns.push_back("r=" + num(rate));
        }
    }
    require(!objectives.empty(), "--objectives is empty");
    const std::vector<double> caps = args.caps.empty() ? target->caps : args.caps;
    const fs::path dir = out_dir(s) / target->name;
    const std::string hash = config_hash("reproduce " + target->name + " scale=" + num(args.scale) +
                                             " objectives=" + args.objectives + " grid=" + num(args.grid_points),
                                         s);
    std::vector<std::string> header{"b", "policy"};
    for (const auto& c : columns) {
        header.push_back(c + "_mean");
        header.push_back(c + "_stderr");
    }
    CsvFile table(out_dir(s) / (target->name + ".csv"), hash, header);
    for (double b : caps) {
        std::vector<std::string> ours{num(b), "learned"};
        std::vector<std::string> bench{num(b), "benchmark"};
        for (std::size_t oi = 0; oi < objectives.size(); ++oi) {
            PresetParams pp;
            pp.k = target->k;
            pp.b = b;
            pp.objective = objectives[oi];
            const ProblemSpec spec = make_preset(target->preset, pp);
            Settings cell = s;
            TrainConfig cfg = train_config_from(cell, spec);
            if (!s.has("train.iterations")) {
                cfg = cfg.rescaled(std::max(1L, std::lround(static_cast<double>(cfg.iterations) * args.scale)));
            }
            EvalSettings es = eval_settings_from(s, spec);
            if (!s.has("evaluate.paths")) {
                const double base = spec.objective().is_discounted() ? 100000.0 : 2048.0;
                es.paths = std::max<Eigen::Index>(2, std::lround(base * args.scale));
            }
            const std::string label = "b=" + num(b) + "_" + columns[oi];
            io.out << "== " << target->name << " " << label << ": training " << cfg.iterations << " iterations\n";
            const TrainResult res = run_training(spec, cfg, s, dir / label, hash, io);
            const EvalReport mine = evaluate_policy(spec, extract_policy(res, spec), es);
            auto [policy, how] = repro_benchmark(spec, es, args.grid_points);
            const EvalReport theirs = evaluate_policy(spec, policy, es);
            io.out << "   learned " << num(mine.mean) << " +- " << num(mine.stderr_) << "; " << how << " "
                   << num(theirs.mean) << " +- " << num(theirs.stderr_) << '\n';
            ours.push_back(num(mine.mean));
            ours.push_back(num(mine.stderr_));
            bench.push_back(num(theirs.mean));
            bench.push_back(num(theirs.stderr_));
        }
        table.row(ours);
        table.row(bench);
    }
    io.out << "wrote " << table.path().string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

/// Parses argv and runs one subcommand. Returns 0 on success, 2 for
/// configuration errors, 3 for numerical failures.
inline int run_subcommand(int argc, const char* const* argv, std::ostream& out = std::cout,
                          std::ostream& err = std::cerr) {
    Streams io{out, err};
    CLI::App app{"Drift control of reflected Brownian motion with neural value-gradient solvers"};
    app.require_subcommand(1);
    // "--h" is the time-step flag, so help is long-form only.
    app.set_help_flag("--help", "Print this help message and exit");

    AnalyticArgs an;
    auto* analytic = app.add_subcommand("analytic", "Closed-form and ODE solutions of the one-dimensional problems");
    analytic->add_option("--kind", an.kind, "ergodic-linear, discounted-linear or ergodic-quadratic");
    analytic->add_option("--a", an.a, "Variance");
    analytic->add_option("--b", an.b, "Upper drift limit");
    analytic->add_option("--c", an.c, "Control price");
    analytic->add_option("--h", an.h, "Holding cost rate");
    analytic->add_option("--r", an.r, "Discount rate");
    analytic->add_option("--alpha", an.alpha, "Quadratic cost coefficient");
    analytic->add_option("--nominal", an.nominal, "Nominal (lower) drift for quadratic cost");
    analytic->add_option("--z-max", an.z_max, "Integration range for the quadratic case");
    analytic->add_option("--out", an.out, "Also write the JSON to this file");

    CommonArgs sim_args;
    auto* simulate = app.add_subcommand("simulate", "Simulate reference paths and write them as CSV");
    add_common(simulate, sim_args);
    add_problem_flags(simulate, sim_args);
    {
        OptionBinder b(simulate, sim_args.flags);
        b.bind("--T", "simulate.horizon", "Horizon");
        b.bind("--h", "simulate.step", "Time step");
        b.bind("--paths", "simulate.paths", "Number of paths");
        b.bind("--seed", "simulate.seed", "Seed");
    }

    CommonArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train value and gradient networks");
    add_common(train_cmd, train_args);
    add_problem_flags(train_cmd, train_args);
    {
        OptionBinder b(train_cmd, train_args.flags);
        b.bind("--profile", "train.profile", "Hyperparameter profile (default: chosen from the problem)");
        b.bind("--iterations", "train.iterations", "Iterations (learning-rate and decay schedules are rescaled)");
        b.bind("--batch", "train.batch", "Paths per iteration");
        b.bind("--T", "train.horizon", "Path horizon per iteration");
        b.bind("--h", "train.step", "Time step");
        b.bind("--loss", "train.loss", "plain-discounted, variance-discounted or ergodic-variance");
        b.bind("--seed", "train.seed", "Seed");
        b.bind("--checkpoint-interval", "train.checkpoint_interval", "Write networks every N iterations");
        b.bind("--progress-every", "train.progress_every", "Progress line interval");
    }

    CommonArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "Estimate the cost of a policy by simulation");
    add_common(evaluate, eval_args);
    add_problem_flags(evaluate, eval_args);
    add_eval_flags(evaluate, eval_args);
    {
        OptionBinder b(evaluate, eval_args.flags);
        b.bind("--policy", "evaluate.policy",
               "learned, learned-value-gradient, analytic, constant, linear-boundary, affine-rate or symmetric");
        b.bind("--checkpoint", "evaluate.checkpoint", "Directory holding gradient.json / value.json");
        b.bind("--beta", "evaluate.beta", "Row-major d x d coefficients");
        b.bind("--phi", "evaluate.phi", "Symmetric parameters");
        b.bind("--family", "evaluate.family", "linear-boundary or affine-rate (symmetric policies)");
        b.bind("--theta", "evaluate.theta", "Constant drift vector");
    }

    CommonArgs search_args;
    auto* search = app.add_subcommand("benchmark-search", "Tune benchmark policies by grid search");
    add_common(search, search_args);
    add_problem_flags(search, search_args);
    add_eval_flags(search, search_args);
    {
        OptionBinder b(search, search_args.flags);
        b.bind("--family", "search.family", "linear-boundary or affine-rate");
        b.bind("--axes", "search.axes", "Axes lo:hi:step separated by ';' (one axis is repeated)");
        b.bind("--refine", "search.refine", "Refinement factor for the second stage (0 disables)");
        b.bind("--heuristic", "search.heuristic", "Use the subnetwork heuristic for unequal routing");
        b.bind("--sub-axes", "search.sub_axes", "Four axes for the subnetwork searches");
        b.bind("--row-axis", "search.row_axis", "Axis for the first-row parameters");
    }

    CommonArgs repro_args;
    ReproArgs repro;
    auto* reproduce = app.add_subcommand("reproduce", "Train, evaluate and compare against a benchmark for a table");
    add_common(reproduce, repro_args);
    reproduce->add_option("target", repro.target, "Target (linear-d1, linear-d2, ..., z-star)")->required();
    reproduce->add_option("--scale", repro.scale, "Fraction of the full iteration and path budget");
    reproduce->add_option("--objectives", repro.objectives, "Columns: 'ergodic' and/or discount rates");
    reproduce->add_option("--caps", repro.caps, "Upper drift limits (rows)");
    reproduce->add_option("--grid-points", repro.grid_points, "Coarse grid points per benchmark parameter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*analytic) return cmd_analytic(an, io);
        if (*simulate) return cmd_simulate(resolve_settings(sim_args), io);
        if (*train_cmd) return cmd_train(resolve_settings(train_args), io);
        if (*evaluate) return cmd_evaluate(resolve_settings(eval_args), io);
        if (*search) return cmd_search(resolve_settings(search_args), io);
        if (*reproduce) return cmd_reproduce(repro, resolve_settings(repro_args), io);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitConfig;
}

}  // namespace rbmdc::cli
