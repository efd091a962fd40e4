#include "hjb/mpc.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "hjb/rng.hpp"

namespace hjb {

namespace {

void write_double(std::ostream& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
}

// RK4 on (x, accumulated cost) with u held fixed.
void rk4_step(const ControlProblem& p, double t, Vec& x, double& cost, const Vec& u, double h) {
    const int n = p.n;
    auto rhs = [&](double s, const Vec& y, Vec& dy, double& dl) {
        p.f(s, y, u, dy);
        dl = p.L(s, y, u);
    };
    Vec k1(n), k2(n), k3(n), k4(n);
    double l1, l2, l3, l4;
    rhs(t, x, k1, l1);
    rhs(t + h / 2, x + h / 2 * k1, k2, l2);
    rhs(t + h / 2, x + h / 2 * k2, k3, l3);
    rhs(t + h, x + h * k3, k4, l4);
    x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    cost += h / 6 * (l1 + 2 * l2 + 2 * l3 + l4);
}

}  // namespace

std::string_view to_string(HorizonMode mode) {
    return mode == HorizonMode::FixedInitial ? "fixed-initial" : "time-in-grid";
}

HorizonMode parse_horizon_mode(std::string_view name) {
    if (name == "fixed-initial") return HorizonMode::FixedInitial;
    if (name == "time-in-grid") return HorizonMode::TimeInGrid;
    throw std::invalid_argument("unknown horizon mode '" + std::string(name) + "' (fixed-initial, time-in-grid)");
}

std::string_view to_string(MpcStatus status) { return status == MpcStatus::Completed ? "Completed" : "Diverged"; }

void MpcConfig::check(int states) const {
    if (!(dt > 0.0)) throw std::invalid_argument("sample period must be positive");
    if (!(integrator_step() > 0.0 && integrator_step() < dt)) throw std::invalid_argument("integrator step must be in (0, dt)");
    if (!(t_max > 0.0)) throw std::invalid_argument("simulation time must be positive");
    if (!noise.empty() && static_cast<int>(noise.size()) != states)
        throw std::invalid_argument("noise needs one magnitude per state");
    for (double v : noise)
        if (!(v >= 0.0)) throw std::invalid_argument("noise magnitudes must be nonnegative");
}

std::vector<double> noise_from_fraction(const Box& state_box, double fraction) {
    std::vector<double> out(static_cast<std::size_t>(state_box.dim()));
    for (int j = 0; j < state_box.dim(); ++j) out[j] = fraction * state_box.width(j) / 2;
    return out;
}

Trajectory simulate(const ValueFunction& vf, const Vec& x0, const MpcConfig& config) {
    if (!vf.problem) throw std::invalid_argument("value function has no problem attached");
    const ControlProblem& base = *vf.problem;
    const ControlProblem problem = base.anchored ? base.anchored(x0) : base;
    const int n = problem.n;
    if (x0.size() != n) throw std::invalid_argument("initial state has the wrong dimension");
    config.check(n);
    if (config.mode == HorizonMode::TimeInGrid && !problem.time_in_grid)
        throw std::invalid_argument("time-in-grid MPC needs a time-in-grid problem");

    const Box box = problem.state_box();
    const Box limit = box.inflated(2.0);
    const CounterRng rng(config.seed);
    const auto steps = static_cast<long>(std::llround(config.t_max / config.dt));
    const int substeps = std::max(1, static_cast<int>(std::ceil(config.dt / config.integrator_step() - 1e-9)));
    const double h = config.dt / substeps;

    Trajectory tr;
    tr.state_labels = problem.state_labels;
    tr.control_labels = problem.control_labels;
    Vec x = x0;
    double cost = 0.0;
    for (long k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * config.dt;
        Vec m = x;
        if (!config.noise.empty())
            for (int j = 0; j < n; ++j)
                m[j] += config.noise[j] * (2.0 * rng.uniform(static_cast<std::uint64_t>(k) * n + j) - 1.0);
        if (box.clamp(std::span<double>(m.data(), n))) ++tr.clamped;
        const double tau = config.mode == HorizonMode::TimeInGrid ? std::fmod(t, problem.horizon) : 0.0;
        const Vec u = feedback(vf, tau, m);

        tr.t.push_back(t);
        tr.x.push_back(x);
        tr.measured.push_back(m);
        tr.u.push_back(u);
        tr.running.push_back(problem.L(tau, x, u));
        tr.cost.push_back(cost);
        tr.terminal_cost = problem.h(x);
        if (k == steps) break;

        try {
            for (int s = 0; s < substeps; ++s) rk4_step(problem, tau + s * h, x, cost, u, h);
        } catch (const DomainError&) {
            tr.status = MpcStatus::Diverged;
            break;
        }
        if (!x.allFinite() || !limit.contains(std::span<const double>(x.data(), n))) {
            tr.status = MpcStatus::Diverged;
            break;
        }
    }
    return tr;
}

std::vector<Trajectory> simulate_batch(const ValueFunction& vf, const std::vector<Vec>& x0s, const MpcConfig& config,
                                       Execution execution, int workers) {
    std::vector<Trajectory> out(x0s.size());
    for_each_index(x0s.size(), execution, workers, [&](std::size_t k) {
        MpcConfig c = config;
        c.seed = config.seed + k;
        out[k] = simulate(vf, x0s[k], c);
    });
    return out;
}

void emit_trajectory(std::ostream& out, const Trajectory& tr) {
    out << 't';
    for (const auto& s : tr.state_labels) out << ',' << s;
    for (const auto& s : tr.control_labels) out << ',' << s;
    out << ",cost\n";
    for (std::size_t k = 0; k < tr.samples(); ++k) {
        write_double(out, tr.t[k]);
        for (Eigen::Index j = 0; j < tr.x[k].size(); ++j) {
            out << ',';
            write_double(out, tr.x[k][j]);
        }
        for (Eigen::Index j = 0; j < tr.u[k].size(); ++j) {
            out << ',';
            write_double(out, tr.u[k][j]);
        }
        out << ',';
        write_double(out, tr.cost[k]);
        out << '\n';
    }
}

void emit_trajectory(const std::filesystem::path& path, const Trajectory& tr) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    emit_trajectory(out, tr);
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace hjb
