#include "hjb/characteristics.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace hjb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

CharacteristicRecord failed_record(std::size_t id, int n, BvpStatus status) {
    CharacteristicRecord r;
    r.id = id;
    r.V = kNaN;
    r.lambda = Vec::Constant(n, kNaN);
    r.status = status;
    r.residual = std::numeric_limits<double>::infinity();
    return r;
}

bool same_box(const Box& a, const Box& b) {
    if (a.dim() != b.dim()) return false;
    for (int k = 0; k < a.dim(); ++k) {
        const double tol = 1e-12 * std::max(1.0, a.width(k));
        if (std::abs(a.lower()[k] - b.lower()[k]) > tol || std::abs(a.upper()[k] - b.upper()[k]) > tol) return false;
    }
    return true;
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

// ---------------------------------------------------------------- ControlProblem

Box ControlProblem::state_box() const {
    if (!time_in_grid) return domain;
    return Box({domain.lower().begin() + 1, domain.lower().end()}, {domain.upper().begin() + 1, domain.upper().end()});
}

double ControlProblem::hamiltonian(double t, const Vec& x, const Vec& lambda, const Vec& u) const {
    Vec dx(n);
    f(t, x, u, dx);
    return L(t, x, u) + lambda.dot(dx);
}

void ControlProblem::hamiltonian_gradient(double t, const Vec& x, const Vec& lambda, const Vec& u, Vec& hx) const {
    if (H_x) {
        H_x(t, x, lambda, u, hx);
        return;
    }
    hx.resize(n);
    const double scale = std::cbrt(std::numeric_limits<double>::epsilon());
    Vec xp = x, xm = x;
    for (int j = 0; j < n; ++j) {
        const double step = scale * std::max(std::abs(x[j]), 1.0);
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        hx[j] = (hamiltonian(t, xp, lambda, u) - hamiltonian(t, xm, lambda, u)) / (xp[j] - xm[j]);
        xp[j] = x[j];
        xm[j] = x[j];
    }
}

std::pair<double, Vec> ControlProblem::split_point(std::span<const double> phys) const {
    if (static_cast<int>(phys.size()) != grid_dim()) throw std::invalid_argument("grid point dimension mismatch");
    const std::size_t offset = time_in_grid ? 1 : 0;
    Vec x(n);
    for (int k = 0; k < n; ++k) x[k] = phys[offset + k];
    return {time_in_grid ? phys[0] : 0.0, x};
}

Vec hamiltonian_control_gradient(const ControlProblem& problem, double t, const Vec& x, const Vec& lambda,
                                 const Vec& u) {
    Vec g(problem.m);
    const double scale = std::cbrt(std::numeric_limits<double>::epsilon());
    Vec up = u, um = u;
    for (int j = 0; j < problem.m; ++j) {
        const double step = scale * std::max(std::abs(u[j]), 1.0);
        up[j] = u[j] + step;
        um[j] = u[j] - step;
        g[j] = (problem.hamiltonian(t, x, lambda, up) - problem.hamiltonian(t, x, lambda, um)) / (up[j] - um[j]);
        up[j] = u[j];
        um[j] = u[j];
    }
    return g;
}

// ---------------------------------------------------------------- characteristic BVP

BvpProblem assemble_bvp(const ControlProblem& problem, double t0, const Vec& x0, const CharacteristicOptions& options) {
    const int n = problem.n;
    if (x0.size() != n) throw std::invalid_argument("initial state has the wrong dimension");
    if (!(t0 < problem.horizon)) throw std::invalid_argument("initial time must precede the horizon");
    auto cp = std::make_shared<const ControlProblem>(problem);

    BvpProblem bvp;
    bvp.dim = 2 * n + 1;
    bvp.ta = t0;
    bvp.tb = problem.horizon;
    bvp.mesh = uniform_mesh(t0, problem.horizon, options.initial_intervals);
    bvp.options.tol = options.tol;
    bvp.options.max_nodes = options.max_nodes;
    bvp.rhs = [cp, n](double s, const Vec& y, Vec& dy) {
        const Vec x = y.head(n);
        const Vec lam = y.segment(n, n);
        const Vec u = cp->u_star(s, x, lam);
        Vec dx(n), hx(n);
        cp->f(s, x, u, dx);
        cp->hamiltonian_gradient(s, x, lam, u, hx);
        dy.resize(2 * n + 1);
        dy.head(n) = dx;
        dy.segment(n, n) = -hx;
        dy[2 * n] = cp->L(s, x, u);
    };
    bvp.bc = [cp, n, x0](const Vec& ya, const Vec& yb, Vec& r) {
        r.resize(2 * n + 1);
        r.head(n) = ya.head(n) - x0;
        r.segment(n, n) = yb.segment(n, n) - cp->h_x(yb.head(n));
        r[2 * n] = ya[2 * n];
    };
    if (options.warm_start) {
        bvp.guess = options.warm_start;
    } else {
        Vec start(2 * n + 1);
        start.head(n) = x0;
        start.segment(n, n) = problem.h_x(x0);
        start[2 * n] = 0.0;
        bvp.guess = [start](double) { return start; };
    }
    return bvp;
}

// Horizon continuation from the cold guess: solve on [t0, t0 + θ (T - t0)],
// starting at θ = 2^-K and seeding each stage with the previous solution held
// constant past its end. The increment doubles after a success and halves after
// a failure. Uses only (t0, x0), so records stay causality-free.
BvpSolution solve_by_continuation(const ControlProblem& problem, double t0, const Vec& x0,
                                  const CharacteristicOptions& options, BvpSolution cold) {
    const double span = problem.horizon - t0;
    const double min_step = 1.0 / 256;
    auto stage_solve = [&](double theta, const std::shared_ptr<const BvpSolution>& seed) {
        ControlProblem stage = problem;
        stage.horizon = theta >= 1.0 ? problem.horizon : t0 + span * theta;
        CharacteristicOptions stage_options = options;
        if (theta < 1.0) stage_options.tol = std::max(options.tol, 1e-4);
        if (seed) {
            stage_options.warm_start = [seed](double s) {
                return s >= seed->mesh.back() ? seed->at_end() : seed->interpolate(s);
            };
        }
        return solve(assemble_bvp(stage, t0, x0, stage_options));
    };

    double theta = std::ldexp(1.0, -options.continuation_stages);
    auto seed = std::make_shared<const BvpSolution>(stage_solve(theta, nullptr));
    if (seed->status != BvpStatus::Converged) return cold;
    double step = theta;
    for (int stages = 0; stages < 64; ++stages) {
        const double next = std::min(1.0, theta + step);
        BvpSolution sol = stage_solve(next, seed);
        if (sol.status == BvpStatus::Converged) {
            if (next >= 1.0) return sol;
            theta = next;
            seed = std::make_shared<const BvpSolution>(std::move(sol));
            step *= 2;
        } else {
            step /= 2;
            if (step < min_step) return next >= 1.0 ? sol : cold;
        }
    }
    return cold;
}

PointSolution solve_point(const ControlProblem& base, double t0, const Vec& x0, const CharacteristicOptions& options) {
    const ControlProblem problem = base.anchored ? base.anchored(x0) : base;
    const int n = problem.n;
    PointSolution out;
    out.record.id = 0;
    if (problem.horizon - t0 <= 1e-12 * std::max(1.0, std::abs(problem.horizon))) {
        // Zero-length horizon: V = h and λ = h_x at the point itself.
        out.record.V = problem.h(x0);
        out.record.lambda = problem.h_x(x0);
        out.record.status = BvpStatus::Converged;
        out.record.residual = 0.0;
        out.record.mesh = 0;
        return out;
    }
    BvpSolution sol = solve(assemble_bvp(problem, t0, x0, options));
    if (sol.status == BvpStatus::NewtonDiverged && options.continuation_stages > 0)
        sol = solve_by_continuation(problem, t0, x0, options, std::move(sol));
    out.record.status = sol.status;
    out.record.residual = sol.est_residual;
    out.record.mesh = static_cast<int>(sol.mesh.size());
    if (sol.status == BvpStatus::Converged) {
        const Vec end = sol.at_end();
        out.record.V = end[2 * n] + problem.h(end.head(n));
        out.record.lambda = sol.at_start().segment(n, n);
    } else {
        out.record.V = kNaN;
        out.record.lambda = Vec::Constant(n, kNaN);
    }
    out.trajectory = std::move(sol);
    return out;
}

PointSolution solve_grid_point(const ControlProblem& problem, std::span<const double> phys,
                               const CharacteristicOptions& options) {
    const auto [t0, x0] = problem.split_point(phys);
    return solve_point(problem, t0, x0, options);
}

// ---------------------------------------------------------------- sweep

std::vector<std::size_t> GridSolution::failures() const {
    std::vector<std::size_t> out;
    for (const auto& r : records)
        if (!r.ok()) out.push_back(r.id);
    return out;
}

std::vector<CharacteristicRecord> solve_points(const ControlProblem& problem, const SparseGrid& grid,
                                               std::span<const std::size_t> ids, const SweepOptions& options) {
    if (!same_box(grid.domain(), problem.domain))
        throw std::invalid_argument("grid domain does not match the problem domain");
    std::vector<CharacteristicRecord> out(ids.size());
    for_each_index(ids.size(), options.execution, options.workers, [&](std::size_t k) {
        const std::size_t id = ids[k];
        try {
            CharacteristicRecord r = solve_grid_point(problem, grid.phys(id), options.characteristic).record;
            r.id = id;
            out[k] = std::move(r);
        } catch (const DomainError&) {
            out[k] = failed_record(id, problem.n, BvpStatus::NewtonDiverged);
        }
    });
    return out;
}

nlohmann::json sweep_header(const ControlProblem& problem, const SparseGrid& grid, double tol) {
    nlohmann::json h = describe(grid);
    h["format"] = "hjb-dataset";
    h["problem"] = problem.id;
    h["T"] = problem.horizon;
    h["time_in_grid"] = problem.time_in_grid;
    h["tol"] = tol;
    h["n"] = problem.n;
    h["state_labels"] = problem.state_labels;
    h["params"] = problem.params;
    return h;
}

GridSolution sweep(const ControlProblem& problem, std::shared_ptr<const SparseGrid> grid, const SweepOptions& options) {
    if (grid->dim() != problem.grid_dim()) throw std::invalid_argument("grid dimension does not match the problem");
    std::vector<std::size_t> ids(grid->size());
    for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = k;
    auto solution = std::make_shared<GridSolution>();
    solution->grid = grid;
    solution->header = sweep_header(problem, *grid, options.characteristic.tol);
    solution->header["version"] = HJB_VERSION;
    solution->header["timestamp"] = utc_timestamp();
    solution->records = solve_points(problem, *grid, ids, options);

    const auto failed = solution->failures();
    solution->header["failures"] = failed.size();
    if (static_cast<double>(failed.size()) > options.failure_threshold * static_cast<double>(grid->size())) {
        throw SweepError(std::to_string(failed.size()) + " of " + std::to_string(grid->size()) +
                             " characteristic solves failed",
                         solution);
    }
    return std::move(*solution);
}

// ---------------------------------------------------------------- interpolation

ValueFunction fit_solution(std::shared_ptr<const ControlProblem> problem, const GridSolution& solution,
                           const FitOptions& options) {
    const auto& grid = *solution.grid;
    const int n = problem->n;
    if (solution.records.size() != grid.size()) throw std::invalid_argument("record count does not match the grid");
    FitOptions opt = options;
    opt.exclude.assign(grid.size(), false);
    std::vector<double> values(grid.size());
    std::vector<double> costates(grid.size() * n);
    std::vector<std::size_t> coarse_failures;
    for (std::size_t id = 0; id < grid.size(); ++id) {
        const auto& r = solution.records[id];
        if (!r.ok()) {
            opt.exclude[id] = true;
            if (grid.level_sum(id) <= grid.dim() + 1) coarse_failures.push_back(id);
            values[id] = 0.0;
            for (int k = 0; k < n; ++k) costates[id * n + k] = 0.0;
            continue;
        }
        values[id] = r.V;
        for (int k = 0; k < n; ++k) costates[id * n + k] = r.lambda[k];
    }
    if (!coarse_failures.empty()) {
        std::string ids;
        for (std::size_t id : coarse_failures) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
        throw DomainError("refusing to fit: failed points on coarse levels (ids " + ids + ")");
    }
    return ValueFunction{problem, fit_hierarchical(solution.grid, values, 1, opt),
                         fit_hierarchical(solution.grid, costates, static_cast<std::size_t>(n), opt)};
}

namespace {

std::vector<double> query_point(const ControlProblem& p, double t, const Vec& x) {
    std::vector<double> q;
    q.reserve(x.size() + 1);
    if (p.time_in_grid) q.push_back(t);
    q.insert(q.end(), x.data(), x.data() + x.size());
    return q;
}

}  // namespace

double ValueFunction::V(double t, const Vec& x) const { return value.eval(query_point(*problem, t, x)).front(); }

Vec ValueFunction::lambda(double t, const Vec& x) const {
    const auto v = costate.eval(query_point(*problem, t, x));
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vec feedback(const ValueFunction& vf, double t, const Vec& x) { return vf.problem->u_star(t, x, vf.lambda(t, x)); }

// ---------------------------------------------------------------- dataset IO

nlohmann::ordered_json record_to_json(const CharacteristicRecord& record, const SparseGrid& grid) {
    nlohmann::ordered_json j;
    const auto levels = grid.levels(record.id);
    const auto offsets = grid.offsets(record.id);
    const auto x = grid.phys(record.id);
    j["id"] = record.id;
    j["mi"] = std::vector<int>(levels.begin(), levels.end());
    j["off"] = std::vector<int>(offsets.begin(), offsets.end());
    j["x"] = std::vector<double>(x.begin(), x.end());
    if (record.ok()) {
        j["V"] = record.V;
        j["lam"] = to_std(record.lambda);
    } else {
        j["V"] = nullptr;
        j["lam"] = nullptr;
    }
    j["status"] = std::string(to_string(record.status));
    if (std::isfinite(record.residual))
        j["res"] = record.residual;
    else
        j["res"] = nullptr;
    j["mesh"] = record.mesh;
    return j;
}

std::string dataset_body(const GridSolution& solution) {
    std::string body;
    for (const auto& r : solution.records) {
        body += record_to_json(r, *solution.grid).dump();
        body += '\n';
    }
    return body;
}

void write_dataset(std::ostream& out, const GridSolution& solution) {
    out << solution.header.dump() << '\n' << dataset_body(solution);
    if (!out) throw std::runtime_error("failed to write dataset");
}

void write_dataset(const std::filesystem::path& path, const GridSolution& solution) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_dataset(out, solution);
}

GridSolution read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("dataset is empty");
    GridSolution sol;
    sol.header = nlohmann::json::parse(line);
    const Box domain = sol.header.at("domain").get<Box>();
    sol.grid = std::make_shared<const SparseGrid>(build_grid(parse_family(sol.header.at("family").get<std::string>()),
                                                             sol.header.at("d").get<int>(),
                                                             sol.header.at("q").get<int>(), domain));
    const int n = sol.header.at("n").get<int>();
    sol.records.resize(sol.grid->size());
    std::vector<bool> seen(sol.grid->size(), false);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        CharacteristicRecord r;
        r.id = j.at("id").get<std::size_t>();
        if (r.id >= sol.records.size() || seen[r.id]) throw std::runtime_error("dataset has a bad record id");
        seen[r.id] = true;
        r.status = parse_bvp_status(j.at("status").get<std::string>());
        r.V = j.at("V").is_null() ? kNaN : j.at("V").get<double>();
        r.lambda = Vec::Constant(n, kNaN);
        if (!j.at("lam").is_null()) {
            const auto lam = j.at("lam").get<std::vector<double>>();
            if (static_cast<int>(lam.size()) != n) throw std::runtime_error("costate has the wrong dimension");
            for (int k = 0; k < n; ++k) r.lambda[k] = lam[k];
        }
        r.residual = j.at("res").is_null() ? std::numeric_limits<double>::infinity() : j.at("res").get<double>();
        r.mesh = j.at("mesh").get<int>();
        sol.records[r.id] = std::move(r);
    }
    for (std::size_t id = 0; id < seen.size(); ++id)
        if (!seen[id]) throw std::runtime_error("dataset is missing record " + std::to_string(id));
    return sol;
}

GridSolution read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_dataset(in);
}

}  // namespace hjb
