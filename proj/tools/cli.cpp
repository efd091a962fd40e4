#include "hjb/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "hjb/errors.hpp"
#include "hjb/mpc.hpp"
#include "hjb/problems.hpp"

namespace hjb::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Order band accepted by order-check for the fifth-order collocation.
constexpr double kOrderLo = 4.5;
constexpr double kOrderHi = 5.5;

struct Settings {
    std::string config;
    int workers = 0;
    std::string out;

    struct {
        std::string family = "classic";
        int d = 0;
        int q = 0;
        std::string problem;
        std::string points;
    } grid;
    struct {
        std::string problem;
        std::string family = "cgl";
        int q = 0;
        double tol = 1e-8;
        double threshold = 0.01;
        std::string params;
        int continuation = 4;
    } sweep;
    std::string dataset;
    std::vector<std::string> at;
    struct {
        std::string family = "cgl";
        int d = 0;
        int q = 0;
        std::string source = "bound";
        int rate_from = 0;
    } bound;
    struct {
        std::string family = "cgl";
        int d = 6;
        int q = 13;
        int n = 2000;
        std::uint64_t seed = 0;
        double scale = 1.0;
        std::string model = "symmetric";
        bool ratios = false;
        std::string histogram;
    } mc;
    struct {
        int n = 300;
        double tol = 1e-9;
        std::uint64_t seed = 0;
        bool records = false;
        std::string histogram;
    } validate;
    struct {
        std::string problem;
        std::string x0;
        double noise = 0.005;
        double hz = 10.0;
        double dt = 0.0;
        double tmax = 0.0;
        double step = 0.0;
        std::string mode;
        std::uint64_t seed = 0;
    } mpc;
};

/// What a subcommand produced, for printing and the manifest.
struct Run {
    ojson result = ojson::object();
    ojson file;  ///< written to --out when set; defaults to `result`
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    std::vector<std::uint64_t> seeds;
    int exit = kExitOk;
};

ojson ordered(const nlohmann::json& j) { return ojson::parse(j.dump()); }

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    const char* p = text.data();
    const char* end = p + text.size();
    while (p < end) {
        while (p < end && (*p == ' ' || *p == ',')) ++p;
        if (p == end) break;
        double v = 0.0;
        const auto res = std::from_chars(p, end, v);
        if (res.ec != std::errc()) throw std::invalid_argument("cannot parse " + what + " '" + text + "'");
        out.push_back(v);
        p = res.ptr;
        if (p < end && *p != ',' && *p != ' ') throw std::invalid_argument("cannot parse " + what + " '" + text + "'");
    }
    if (out.empty()) throw std::invalid_argument(what + " is empty");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

nlohmann::json parse_params(const std::string& text) {
    if (text.empty()) return nlohmann::json();
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("--params is not valid JSON: " + std::string(e.what()));
    }
}

struct Loaded {
    std::shared_ptr<const ControlProblem> problem;
    GridSolution solution;
};

Loaded load_dataset(const fs::path& path, Run& run) {
    if (!fs::exists(path)) throw std::runtime_error("dataset " + path.string() + " does not exist");
    run.inputs.push_back(path);
    Loaded l;
    l.solution = read_dataset(path);
    const auto& h = l.solution.header;
    l.problem = std::make_shared<const ControlProblem>(
        make_problem(h.at("problem").get<std::string>(), h.value("params", nlohmann::json())));
    if (l.problem->grid_dim() != l.solution.grid->dim() || !(l.problem->domain == l.solution.grid->domain()))
        throw DomainError("dataset grid does not match its problem");
    return l;
}

ValueFunction fit_loaded(const Loaded& l, int workers) {
    FitOptions fo;
    fo.workers = workers;
    return fit_solution(l.problem, l.solution, fo);
}

// ---------------------------------------------------------------- subcommands

void run_grid(const Settings& s, Run& run) {
    const NodeFamily family = parse_family(s.grid.family);
    Box domain;
    int d = s.grid.d;
    if (!s.grid.problem.empty()) {
        const auto cp = make_problem(s.grid.problem);
        if (d != 0 && d != cp.grid_dim()) throw std::invalid_argument("--d disagrees with the problem dimension");
        d = cp.grid_dim();
        domain = cp.domain;
    } else {
        if (d < 1) throw std::invalid_argument("--d is required without --problem");
        domain = Box::unit(d);
    }
    if (s.grid.q < d) throw std::invalid_argument("--q must be at least d");
    auto& r = run.result;
    r["family"] = to_string(family);
    r["d"] = d;
    r["q"] = s.grid.q;
    r["domain"] = ordered(nlohmann::json(domain));
    r["count"] = sparse_size(family, d, s.grid.q);
    r["max_level"] = s.grid.q - d + 1;
    r["nodes_per_axis"] = node_count(family, s.grid.q - d + 1);
    r["dense"] = dense_size(family, d, s.grid.q).str();
    if (!s.grid.points.empty()) {
        const auto grid = build_grid(family, d, s.grid.q, domain);
        std::ostringstream csv;
        csv.precision(17);
        csv << "id,level_sum";
        for (int k = 0; k < d; ++k) csv << ",i" << k + 1;
        for (int k = 0; k < d; ++k) csv << ",j" << k + 1;
        for (int k = 0; k < d; ++k) csv << ",x" << k + 1;
        csv << '\n';
        for (std::size_t id = 0; id < grid.size(); ++id) {
            csv << id << ',' << grid.level_sum(id);
            for (int v : grid.levels(id)) csv << ',' << v;
            for (int v : grid.offsets(id)) csv << ',' << v;
            for (double v : grid.phys(id)) csv << ',' << v;
            csv << '\n';
        }
        write_text(s.grid.points, csv.str());
        run.outputs.emplace_back(s.grid.points);
        r["points"] = s.grid.points;
    }
}

void run_sweep(const Settings& s, Run& run) {
    const auto cp = make_problem(s.sweep.problem, parse_params(s.sweep.params));
    const NodeFamily family = parse_family(s.sweep.family);
    if (s.sweep.q < cp.grid_dim()) throw std::invalid_argument("--q must be at least the grid dimension");
    auto grid = std::make_shared<const SparseGrid>(build_grid(family, cp.grid_dim(), s.sweep.q, cp.domain));
    SweepOptions o;
    o.characteristic.tol = s.sweep.tol;
    o.characteristic.continuation_stages = s.sweep.continuation;
    o.workers = s.workers;
    o.failure_threshold = s.sweep.threshold;

    const auto start = std::chrono::steady_clock::now();
    GridSolution sol;
    std::string error;
    try {
        sol = sweep(cp, grid, o);
    } catch (const SweepError& e) {
        sol = e.solution();
        error = e.what();
        run.exit = kExitDomain;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // Run times live in the manifest; the dataset stays byte-reproducible.
    sol.header.erase("timestamp");
    write_dataset(fs::path(s.out), sol);
    run.outputs.emplace_back(s.out);

    const auto failed = sol.failures();
    auto& r = run.result;
    r["problem"] = cp.id;
    r["family"] = to_string(family);
    r["d"] = grid->dim();
    r["q"] = s.sweep.q;
    r["tol"] = s.sweep.tol;
    r["points"] = grid->size();
    r["converged"] = grid->size() - failed.size();
    r["failures"] = failed.size();
    r["failed_ids"] = failed;
    r["seconds"] = seconds;
    r["dataset"] = s.out;
    if (!error.empty()) r["error"] = error;
}

void run_fit(const Settings& s, Run& run) {
    const auto loaded = load_dataset(s.dataset, run);
    const auto vf = fit_loaded(loaded, s.workers);
    double max_surplus = 0.0;
    for (double w : vf.value.surpluses()) max_surplus = std::max(max_surplus, std::abs(w));
    auto& r = run.result;
    r["problem"] = loaded.problem->id;
    r["points"] = loaded.solution.grid->size();
    r["excluded"] = loaded.solution.failures().size();
    r["max_abs_value_surplus"] = max_surplus;
    run.file = r;
    run.file["value"] = ordered(to_json(vf.value));
    run.file["costate"] = ordered(to_json(vf.costate));
}

void run_interp(const Settings& s, Run& run) {
    if (s.at.empty()) throw std::invalid_argument("--at is required");
    const auto loaded = load_dataset(s.dataset, run);
    const auto vf = fit_loaded(loaded, s.workers);
    const auto& cp = *loaded.problem;
    ojson points = ojson::array();
    for (const auto& text : s.at) {
        const auto p = parse_list(text, "--at");
        if (static_cast<int>(p.size()) != cp.grid_dim())
            throw std::invalid_argument("--at needs " + std::to_string(cp.grid_dim()) + " coordinates");
        const auto [t, x] = cp.split_point(p);
        const Vec lam = vf.lambda(t, x);
        const Vec u = feedback(vf, t, x);
        points.push_back({{"point", p},
                          {"V", vf.V(t, x)},
                          {"lambda", std::vector<double>(lam.begin(), lam.end())},
                          {"u", std::vector<double>(u.begin(), u.end())}});
    }
    run.result["problem"] = cp.id;
    run.result["evaluations"] = std::move(points);
}

void run_bound(const Settings& s, Run& run) {
    const NodeFamily family = parse_family(s.bound.family);
    const LebesgueSource source = parse_lebesgue_source(s.bound.source);
    run.result = ordered(error_bound_coefficient(family, s.bound.d, s.bound.q, source).to_json());
    if (s.bound.rate_from > 0)
        run.result["rate"] = ordered(coefficient_growth_check(family, s.bound.d, s.bound.rate_from, s.bound.q, source).to_json());
}

void run_mc(const Settings& s, Run& run) {
    const auto& m = s.mc;
    auto grid = std::make_shared<const SparseGrid>(build_grid(parse_family(m.family), m.d, m.q));
    const auto report = mc_ebvp(grid, m.n, m.seed, m.scale, parse_epsilon_model(m.model), Execution::Parallel, s.workers);
    run.seeds.push_back(m.seed);
    run.result = ordered(report.to_json(m.ratios));
    if (!m.histogram.empty()) {
        write_text(m.histogram, report.histogram.csv());
        run.outputs.emplace_back(m.histogram);
    }
}

void run_validate(const Settings& s, Run& run) {
    const auto& v = s.validate;
    const auto loaded = load_dataset(s.dataset, run);
    const auto vf = fit_loaded(loaded, s.workers);
    const auto report = validate(vf, v.n, v.tol, v.seed, Execution::Parallel, s.workers);
    run.seeds.push_back(v.seed);
    run.result = ordered(report.to_json(v.records));
    if (!v.histogram.empty()) {
        write_text(v.histogram, report.histogram.csv());
        run.outputs.emplace_back(v.histogram);
    }
    if (!report.valid) run.exit = kExitDomain;
}

void run_mpc(const Settings& s, Run& run) {
    const auto& m = s.mpc;
    const auto loaded = load_dataset(s.dataset, run);
    const auto& cp = *loaded.problem;
    if (!m.problem.empty() && m.problem != cp.id)
        throw std::invalid_argument("--problem " + m.problem + " does not match the dataset problem " + cp.id);
    const auto x0v = parse_list(m.x0, "--x0");
    if (static_cast<int>(x0v.size()) != cp.n)
        throw std::invalid_argument("--x0 needs " + std::to_string(cp.n) + " states");
    const Vec x0 = Eigen::Map<const Vec>(x0v.data(), cp.n);
    if (!(m.hz > 0.0) && !(m.dt > 0.0)) throw std::invalid_argument("--hz must be positive");

    MpcConfig c;
    c.dt = m.dt > 0.0 ? m.dt : 1.0 / m.hz;
    c.step = m.step;
    c.t_max = m.tmax > 0.0 ? m.tmax : cp.horizon;
    c.noise = noise_from_fraction(cp.state_box(), m.noise);
    c.mode = m.mode.empty() ? (cp.time_in_grid ? HorizonMode::TimeInGrid : HorizonMode::FixedInitial)
                            : parse_horizon_mode(m.mode);
    c.seed = m.seed;
    run.seeds.push_back(m.seed);

    const auto vf = fit_loaded(loaded, s.workers);
    const auto tr = simulate(vf, x0, c);
    emit_trajectory(fs::path(s.out), tr);
    run.outputs.emplace_back(s.out);

    auto& r = run.result;
    r["problem"] = cp.id;
    r["mode"] = to_string(c.mode);
    r["dt"] = c.dt;
    r["step"] = c.integrator_step();
    r["noise"] = c.noise;
    r["status"] = to_string(tr.status);
    r["samples"] = tr.samples();
    r["clamped"] = tr.clamped;
    r["t_final"] = tr.t.back();
    r["x_final"] = std::vector<double>(tr.x.back().begin(), tr.x.back().end());
    r["running_cost"] = tr.cost.back();
    r["terminal_cost"] = tr.terminal_cost;
    r["total_cost"] = tr.cost.back() + tr.terminal_cost;
    r["trajectory"] = s.out;
    // The CSV holds every sample; the manifest keeps this summary.
    run.file = nullptr;
    if (tr.status == MpcStatus::Diverged) run.exit = kExitDomain;
}

void run_order_check(const Settings&, Run& run) {
    ojson cases = ojson::array();
    bool all = true;
    for (const auto& m : manufactured_problems()) {
        const auto rep = empirical_order(m.problem, m.exact, m.intervals);
        const bool pass = rep.order >= kOrderLo && rep.order <= kOrderHi;
        all = all && pass;
        cases.push_back({{"name", m.name},
                         {"intervals", rep.intervals},
                         {"step", rep.step},
                         {"max_error", rep.max_error},
                         {"order", rep.order},
                         {"pass", pass}});
    }
    run.result["band"] = {kOrderLo, kOrderHi};
    run.result["cases"] = std::move(cases);
    run.result["pass"] = all;
    if (!all) run.exit = kExitDomain;
}

// ---------------------------------------------------------------- parsing

const std::vector<std::string> kFamilies{"classic", "modified", "cgl"};

std::unique_ptr<CLI::App> make_app(Settings& s) {
    auto app = std::make_unique<CLI::App>("Sparse-grid characteristics solver for HJB optimal feedback control", "hjb");
    app->require_subcommand(1);
    app->option_defaults()->always_capture_default();
    const auto family = CLI::IsMember(kFamilies, CLI::ignore_case);

    auto common = [&](CLI::App* sub, bool out_required) {
        sub->add_option("--config", s.config, "JSON file of option values; flags take precedence")
            ->check(CLI::ExistingFile);
        sub->add_option("--workers", s.workers, "Worker threads; 0 uses HJB_WORKERS or all cores")
            ->check(CLI::NonNegativeNumber);
        auto* out = sub->add_option("--out", s.out, "Output file");
        if (out_required) out->required();
    };

    auto* grid = app->add_subcommand("grid", "Count (and optionally list) sparse grid points");
    grid->add_option("--family", s.grid.family)->transform(family);
    grid->add_option("--d", s.grid.d, "Dimension (implied by --problem)");
    grid->add_option("--q", s.grid.q)->required();
    grid->add_option("--problem", s.grid.problem, "Use this problem's domain and dimension");
    grid->add_option("--points", s.grid.points, "CSV file listing every point");
    common(grid, false);

    auto* sweep = app->add_subcommand("sweep", "Solve the characteristic BVP at every grid point");
    sweep->add_option("--problem", s.sweep.problem)->required();
    sweep->add_option("--family", s.sweep.family)->transform(family);
    sweep->add_option("--q", s.sweep.q)->required();
    sweep->add_option("--tol", s.sweep.tol)->check(CLI::PositiveNumber);
    sweep->add_option("--threshold", s.sweep.threshold, "Largest tolerated failure fraction")
        ->check(CLI::Range(0.0, 1.0));
    sweep->add_option("--params", s.sweep.params, "JSON object of problem parameter overrides");
    sweep->add_option("--continuation", s.sweep.continuation, "Continuation depth after a cold-start failure")
        ->check(CLI::Range(0, 16));
    common(sweep, true);

    auto* fit = app->add_subcommand("fit", "Fit hierarchical surpluses of V and the costate");
    fit->add_option("--dataset", s.dataset)->required();
    common(fit, false);

    auto* interp = app->add_subcommand("interp", "Evaluate the fitted V, costate and feedback");
    interp->add_option("--dataset", s.dataset)->required();
    interp->add_option("--at", s.at, "Comma-separated grid-domain point; repeatable")->required();
    common(interp, false);

    auto* bound = app->add_subcommand("bound", "Rigorous e_BVP amplification coefficient");
    bound->add_option("--family", s.bound.family)->transform(family);
    bound->add_option("--d", s.bound.d)->required();
    bound->add_option("--q", s.bound.q)->required();
    bound->add_option("--source", s.bound.source, "Lebesgue constants: bound or numeric")
        ->transform(CLI::IsMember({"bound", "numeric"}, CLI::ignore_case));
    bound->add_option("--rate-from", s.bound.rate_from, "Also fit the growth rate over q = rate-from … q");
    common(bound, false);

    auto* mc = app->add_subcommand("mc-ebvp", "Monte-Carlo estimate of e_BVP / eps");
    mc->add_option("--family", s.mc.family)->transform(family);
    mc->add_option("--d", s.mc.d);
    mc->add_option("--q", s.mc.q);
    mc->add_option("--n", s.mc.n, "Evaluation points")->check(CLI::PositiveNumber);
    mc->add_option("--seed", s.mc.seed);
    mc->add_option("--scale", s.mc.scale, "Multiplier on the drawn point errors");
    mc->add_option("--model", s.mc.model, "Point error law: symmetric U[-1,1] or unit U[0,1]")
        ->transform(CLI::IsMember({"symmetric", "unit"}, CLI::ignore_case));
    mc->add_flag("--ratios", s.mc.ratios, "Include every ratio in the output");
    mc->add_option("--histogram", s.mc.histogram, "CSV file for the ratio histogram");
    common(mc, false);

    auto* val = app->add_subcommand("validate", "Compare the interpolant against tight characteristic solves");
    val->add_option("--dataset", s.dataset)->required();
    val->add_option("--n", s.validate.n)->check(CLI::PositiveNumber);
    val->add_option("--tol", s.validate.tol)->check(CLI::PositiveNumber);
    val->add_option("--seed", s.validate.seed);
    val->add_flag("--records", s.validate.records, "Include every sample in the output");
    val->add_option("--histogram", s.validate.histogram, "CSV file for the error histogram");
    common(val, false);

    auto* mpc = app->add_subcommand("mpc", "Closed-loop zero-order-hold simulation");
    mpc->add_option("--dataset", s.dataset)->required();
    mpc->add_option("--problem", s.mpc.problem, "Must match the dataset when given");
    mpc->add_option("--x0", s.mpc.x0, "Comma-separated initial state")->required();
    mpc->add_option("--noise", s.mpc.noise, "Noise as a fraction of each axis half-width")
        ->check(CLI::NonNegativeNumber);
    mpc->add_option("--hz", s.mpc.hz, "Sampling rate");
    mpc->add_option("--dt", s.mpc.dt, "Sample period; overrides --hz");
    mpc->add_option("--tmax", s.mpc.tmax, "Simulated time; 0 means the horizon");
    mpc->add_option("--step", s.mpc.step, "Integrator step; 0 means dt/20");
    mpc->add_option("--mode", s.mpc.mode, "fixed-initial or time-in-grid; default follows the problem")
        ->transform(CLI::IsMember({"fixed-initial", "time-in-grid"}, CLI::ignore_case));
    mpc->add_option("--seed", s.mpc.seed);
    common(mpc, true);

    auto* order = app->add_subcommand("order-check", "Convergence order of the BVP solver on manufactured problems");
    common(order, false);
    return app;
}

void parse(CLI::App& app, const std::vector<std::string>& args) {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
}

/// Names the first token that is neither a subcommand nor an option of it;
/// CLI11 alone would report a missing required option first.
std::string unknown_token(const CLI::App& app, const std::vector<std::string>& args) {
    if (args.front() == "-h" || args.front() == "--help") return {};
    const CLI::App* sub = app.get_subcommand_no_throw(args.front());
    if (sub == nullptr) return "unknown subcommand '" + args.front() + "'";
    for (std::size_t k = 1; k < args.size(); ++k) {
        const std::string& a = args[k];
        if (a.size() < 2 || a[0] != '-' || std::isdigit(static_cast<unsigned char>(a[1])) || a[1] == '.') continue;
        const std::string name = a.substr(0, a.find('='));
        if (name == "-h" || name == "--help") continue;
        if (sub->get_option_no_throw(name) == nullptr) return "unknown option '" + a + "' for " + sub->get_name();
    }
    return {};
}

CLI::App* chosen(const CLI::App& app) { return app.get_subcommands().front(); }

bool on_command_line(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Appends "--key=value" for every config entry the command line leaves unset.
std::vector<std::string> with_config(const std::vector<std::string>& args, const CLI::App& sub, const fs::path& path,
                                     std::map<std::string, std::string>& sources) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw std::invalid_argument("config must be a JSON object");
    std::vector<std::string> out = args;
    for (const auto& [raw, value] : cfg.items()) {
        const std::string key = raw.rfind("--", 0) == 0 ? raw.substr(2) : raw;
        const std::string flag = "--" + key;
        if (key == "config") throw std::invalid_argument("config files cannot name another config");
        const CLI::Option* opt = sub.get_option_no_throw(flag);
        if (opt == nullptr) throw std::invalid_argument("unknown config key '" + raw + "' for " + sub.get_name());
        if (on_command_line(args, flag)) continue;
        sources[key] = "config";
        if (value.is_boolean()) {
            if (value.get<bool>()) out.push_back(flag);
            continue;
        }
        const auto token = [](const nlohmann::json& v) {
            return v.is_string() ? v.get<std::string>() : v.dump();
        };
        if (value.is_array() && opt->get_items_expected_max() > 1) {
            for (const auto& v : value) out.push_back(flag + "=" + token(v));
        } else if (value.is_object()) {
            out.push_back(flag + "=" + value.dump());
        } else {
            out.push_back(flag + "=" + token(value));
        }
    }
    return out;
}

ojson resolved_config(const CLI::App& sub, const std::map<std::string, std::string>& sources) {
    ojson cfg = ojson::object();
    for (const CLI::Option* opt : sub.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help") continue;
        ojson entry;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            if (opt->get_items_expected_max() > 1) {
                entry["value"] = res;
            } else if (opt->get_expected_min() == 0) {
                entry["value"] = true;
            } else {
                entry["value"] = res.empty() ? std::string() : res.back();
            }
            const auto it = sources.find(name);
            entry["source"] = it != sources.end() ? it->second : "flag";
        } else {
            if (opt->get_expected_min() == 0) {
                entry["value"] = false;
            } else {
                entry["value"] = opt->get_default_str();
            }
            entry["source"] = "default";
        }
        cfg[name] = std::move(entry);
    }
    return cfg;
}

ojson digests(const std::vector<fs::path>& paths) {
    ojson out = ojson::array();
    for (const auto& p : paths) out.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    return out;
}

using Handler = void (*)(const Settings&, Run&);

const std::map<std::string, Handler>& handlers() {
    static const std::map<std::string, Handler> table{
        {"grid", run_grid},     {"sweep", run_sweep},       {"fit", run_fit},   {"interp", run_interp},
        {"bound", run_bound},   {"mc-ebvp", run_mc},        {"validate", run_validate},
        {"mpc", run_mpc},       {"order-check", run_order_check}};
    return table;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("SHA-256 init failed");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1)
            throw std::runtime_error("SHA-256 update failed");
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw std::runtime_error("SHA-256 final failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < len; ++k) {
        out.push_back(hex[md[k] >> 4]);
        out.push_back(hex[md[k] & 15]);
    }
    return out;
}

fs::path manifest_path(const fs::path& artifact) { return fs::path(artifact.string() + ".manifest.json"); }

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Settings settings;
    auto app = make_app(settings);
    if (args.empty()) {
        err << app->help();
        return kExitUsage;
    }
    std::vector<std::string> effective = args;
    std::map<std::string, std::string> sources;
    if (const auto bad = unknown_token(*app, args); !bad.empty()) {
        err << "usage error: " << bad << "\nrun 'hjb --help' for usage\n";
        return kExitUsage;
    }
    try {
        parse(*app, args);
        if (!settings.config.empty()) {
            effective = with_config(args, *chosen(*app), settings.config, sources);
            settings = Settings{};
            app = make_app(settings);
            parse(*app, effective);
        }
    } catch (const CLI::CallForHelp&) {
        out << (app->get_subcommands().empty() ? app->help() : chosen(*app)->help());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\nrun 'hjb --help' for usage\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    }

    const CLI::App& sub = *chosen(*app);
    const int workers = settings.workers > 0 ? settings.workers : default_workers();
    settings.workers = workers;
    const std::string started = utc_now();
    Run run;
    try {
        handlers().at(sub.get_name())(settings, run);
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    }

    try {
        const bool owns_out = std::find(run.outputs.begin(), run.outputs.end(), fs::path(settings.out)) != run.outputs.end();
        if (!settings.out.empty() && !owns_out) {
            write_text(settings.out, (run.file.is_null() ? run.result : run.file).dump(2) + "\n");
            run.outputs.insert(run.outputs.begin(), fs::path(settings.out));
        }
        if (!run.outputs.empty()) {
            ojson m;
            m["command"] = sub.get_name();
            m["argv"] = args;
            m["effective_argv"] = effective;
            m["config_file"] = settings.config.empty() ? ojson() : ojson(settings.config);
            m["config"] = resolved_config(sub, sources);
            m["version"] = HJB_VERSION;
            m["workers"] = workers;
            m["seeds"] = run.seeds;
            m["started"] = started;
            m["finished"] = utc_now();
            m["inputs"] = digests(run.inputs);
            m["outputs"] = digests(run.outputs);
            m["exit"] = run.exit;
            m["result"] = run.result;
            const fs::path primary = settings.out.empty() ? run.outputs.front() : fs::path(settings.out);
            write_text(manifest_path(primary), m.dump(2) + "\n");
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDomain;
    }
    out << run.result.dump(2) << '\n';
    if (run.exit != kExitOk && run.result.contains("error")) err << "error: " << run.result["error"].get<std::string>() << '\n';
    return run.exit;
}

}  // namespace hjb::cli
