#include "hjb/problems.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

namespace hjb {

namespace {

constexpr double kPi = std::numbers::pi;

Mat3 frame_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << 1, 0, 0, 0, c, s, 0, -s, c;
    return m;
}
Mat3 frame_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, 0, -s, 0, 1, 0, s, 0, c;
    return m;
}
Mat3 frame_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << c, s, 0, -s, c, 0, 0, 0, 1;
    return m;
}
Mat3 dframe_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << 0, 0, 0, 0, -s, c, 0, -c, -s;
    return m;
}
Mat3 dframe_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << -s, 0, -c, 0, 0, 0, c, 0, -s;
    return m;
}
Mat3 dframe_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 m;
    m << -s, c, 0, -c, -s, 0, 0, 0, 0;
    return m;
}

Mat3 matrix3_from_json(const nlohmann::json& j) {
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = j.at(r).at(c).get<double>();
    return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        j.push_back(row);
    }
    return j;
}

Box attitude_box(double angle, double rate) {
    return Box({-angle, -angle, -angle, -rate, -rate, -rate}, {angle, angle, angle, rate, rate, rate});
}

double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * kPi);
    return a <= -kPi ? a + 2.0 * kPi : a;
}

/// Same rotation with |θ| ≤ π/2 and angles in (-π, π].
Vec3 canonical_angles(Vec3 v) {
    for (int k = 0; k < 3; ++k) v[k] = wrap_angle(v[k]);
    if (std::abs(v[1]) > kPi / 2) {
        v[1] = (v[1] > 0 ? kPi : -kPi) - v[1];
        v[0] = wrap_angle(v[0] + kPi);
        v[2] = wrap_angle(v[2] + kPi);
    }
    return v;
}

// Pieces of the reachable-attitude program: F = tr R, g = Cᵀ R H + k.
struct AttitudeProgram {
    Vec3 C;
    Vec3 H;
    double k;

    [[nodiscard]] double trace(const Vec3& v) const { return rotation(v).trace(); }
    [[nodiscard]] double constraint(const Vec3& v) const { return C.dot(rotation(v) * H) + k; }
    void gradients(const Vec3& v, Vec3& grad_f, Vec3& grad_g) const {
        const auto d = rotation_derivatives(v);
        for (int i = 0; i < 3; ++i) {
            grad_f[i] = d[i].trace();
            grad_g[i] = C.dot(d[i] * H);
        }
    }
};

struct Candidate {
    Vec3 v;
    double mu;
    bool ok;
};

Candidate solve_from(const AttitudeProgram& prog, Vec3 v) {
    double mu = 0.0, rho = 10.0;
    Vec3 gf, gg;
    auto merit = [&](const Vec3& x) {
        const double g = prog.constraint(x);
        return prog.trace(x) - mu * g - 0.5 * rho * g * g;
    };
    auto merit_grad = [&](const Vec3& x) {
        Vec3 a, b;
        prog.gradients(x, a, b);
        return (a - (mu + rho * prog.constraint(x)) * b).eval();
    };
    for (int outer = 0; outer < 40; ++outer) {
        for (int inner = 0; inner < 60; ++inner) {
            const Vec3 grad = merit_grad(v);
            if (grad.norm() < 1e-13) break;
            Mat3 hess;
            for (int j = 0; j < 3; ++j) {
                Vec3 vp = v, vm = v;
                vp[j] += 1e-6;
                vm[j] -= 1e-6;
                hess.col(j) = (merit_grad(vp) - merit_grad(vm)) / 2e-6;
            }
            hess = 0.5 * (hess + hess.transpose()).eval();
            // Force an ascent direction: flip and floor the curvature.
            Eigen::SelfAdjointEigenSolver<Mat3> eig(hess);
            Vec3 vals = eig.eigenvalues();
            for (int j = 0; j < 3; ++j) vals[j] = std::max(std::abs(vals[j]), 1e-6);
            const Vec3 step = eig.eigenvectors() * (eig.eigenvectors().transpose() * grad).cwiseQuotient(vals);
            const double base = merit(v);
            double alpha = 1.0;
            bool moved = false;
            for (int halving = 0; halving < 30; ++halving) {
                const Vec3 trial = v + alpha * step;
                if (merit(trial) >= base + 1e-4 * alpha * grad.dot(step)) {
                    v = trial;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!moved || alpha * step.norm() < 1e-15) break;
        }
        const double g = prog.constraint(v);
        mu += rho * g;
        if (std::abs(g) < 1e-12) break;
        rho = std::min(rho * 4.0, 1e8);
    }
    // KKT polish: ∇F - μ ∇g = 0, g = 0.
    for (int it = 0; it < 20; ++it) {
        Eigen::Vector4d r;
        prog.gradients(v, gf, gg);
        r.head<3>() = gf - mu * gg;
        r[3] = prog.constraint(v);
        if (r.lpNorm<Eigen::Infinity>() < 1e-14) break;
        Eigen::Matrix4d jac;
        const double step = 1e-7;
        for (int j = 0; j < 4; ++j) {
            Vec3 vp = v, vm = v;
            double mp = mu, mm = mu;
            if (j < 3) {
                vp[j] += step;
                vm[j] -= step;
            } else {
                mp += step;
                mm -= step;
            }
            Vec3 a, b;
            Eigen::Vector4d rp, rm;
            prog.gradients(vp, a, b);
            rp.head<3>() = a - mp * b;
            rp[3] = prog.constraint(vp);
            prog.gradients(vm, a, b);
            rm.head<3>() = a - mm * b;
            rm[3] = prog.constraint(vm);
            jac.col(j) = (rp - rm) / (2 * step);
        }
        const Eigen::Vector4d delta = jac.fullPivLu().solve(-r);
        if (!delta.allFinite()) break;
        v += delta.head<3>();
        mu += delta[3];
    }
    return {v, mu, v.allFinite()};
}

}  // namespace

// ---------------------------------------------------------------- kinematics

Mat3 rotation(const Vec3& v) { return frame_x(v[0]) * frame_y(v[1]) * frame_z(v[2]); }

std::array<Mat3, 3> rotation_derivatives(const Vec3& v) {
    const Mat3 rx = frame_x(v[0]), ry = frame_y(v[1]), rz = frame_z(v[2]);
    return {dframe_x(v[0]) * ry * rz, rx * dframe_y(v[1]) * rz, rx * ry * dframe_z(v[2])};
}

Mat3 euler_rates_matrix(const Vec3& v) {
    const double sp = std::sin(v[0]), cp = std::cos(v[0]);
    const double ct = std::cos(v[1]), tt = std::tan(v[1]);
    if (std::abs(ct) < 1e-8) throw SingularityError("Euler-rate matrix is singular at |theta| = pi/2");
    Mat3 e;
    e << 1, sp * tt, cp * tt, 0, cp, -sp, 0, sp / ct, cp / ct;
    return e;
}

std::array<Mat3, 3> euler_rates_derivatives(const Vec3& v) {
    const double sp = std::sin(v[0]), cp = std::cos(v[0]);
    const double st = std::sin(v[1]), ct = std::cos(v[1]), tt = std::tan(v[1]);
    if (std::abs(ct) < 1e-8) throw SingularityError("Euler-rate matrix is singular at |theta| = pi/2");
    const double sec2 = 1.0 / (ct * ct);
    Mat3 dphi, dtheta;
    dphi << 0, cp * tt, -sp * tt, 0, -sp, -cp, 0, cp / ct, -sp / ct;
    dtheta << 0, sp * sec2, cp * sec2, 0, 0, 0, 0, sp * st * sec2, cp * st * sec2;
    return {dphi, dtheta, Mat3::Zero()};
}

Mat3 skew(const Vec3& w) {
    Mat3 s;
    s << 0, w[2], -w[1], -w[2], 0, w[0], w[1], -w[0], 0;
    return s;
}

// ---------------------------------------------------------------- parameters

AttitudeParams AttitudeParams::example1(int variant) {
    AttitudeParams p;
    p.B.resize(3, 3);
    p.B << 1, 1.0 / 20, 1.0 / 10, 1.0 / 15, 1, 1.0 / 10, 1.0 / 10, 1.0 / 15, 1;
    p.J = Vec3(2, 3, 4).asDiagonal();
    p.H = Vec3(1, 1, 1);
    p.W = {1, 1, 0.5, 1, 1};
    p.horizon = 20;
    if (variant == 1)
        p.domain = attitude_box(kPi / 6, kPi / 8);
    else if (variant == 2)
        p.domain = attitude_box(kPi / 3, kPi / 4);
    else
        throw std::invalid_argument("example 1 domain variant must be 1 or 2");
    return p;
}

AttitudeParams AttitudeParams::example2() {
    AttitudeParams p;
    p.B.resize(3, 2);
    p.B << 1, 1.0 / 10, 0, 1, 1.0 / 12, 0;
    p.J = Vec3(2, 3, 4).asDiagonal();
    p.H = Vec3(12, 12, 6);
    p.W = {1, 2, 0.5, 0, 0};
    p.horizon = 30;
    p.domain = attitude_box(kPi / 6, kPi / 8);
    return p;
}

void AttitudeParams::apply(const nlohmann::json& o) {
    if (o.is_null()) return;
    if (o.contains("B")) {
        const auto& b = o.at("B");
        const auto rows = b.size();
        if (rows != 3) throw std::invalid_argument("B must have 3 rows");
        const auto cols = b.at(0).size();
        B.resize(3, static_cast<Eigen::Index>(cols));
        for (std::size_t r = 0; r < 3; ++r) {
            if (b.at(r).size() != cols) throw std::invalid_argument("B rows differ in length");
            for (std::size_t c = 0; c < cols; ++c)
                B(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = b.at(r).at(c).get<double>();
        }
    }
    if (o.contains("J")) J = matrix3_from_json(o.at("J"));
    if (o.contains("H"))
        for (int k = 0; k < 3; ++k) H[k] = o.at("H").at(k).get<double>();
    if (o.contains("W")) {
        if (o.at("W").size() != 5) throw std::invalid_argument("W needs 5 weights");
        for (int k = 0; k < 5; ++k) W[k] = o.at("W").at(k).get<double>();
    }
    if (o.contains("T")) horizon = o.at("T").get<double>();
    if (o.contains("domain")) domain = o.at("domain").get<Box>();
    Eigen::LLT<Mat3> llt(0.5 * (J + J.transpose()));
    if (llt.info() != Eigen::Success || (J - J.transpose()).norm() > 1e-12)
        throw std::invalid_argument("J must be symmetric positive definite");
    if (domain.dim() != 6) throw std::invalid_argument("attitude domain must be 6-dimensional");
}

nlohmann::json AttitudeParams::to_json() const {
    return {{"B", matrix_to_json(B)}, {"J", matrix_to_json(J)}, {"H", {H[0], H[1], H[2]}},
            {"W", W},                 {"T", horizon},           {"domain", domain}};
}

void attitude_dynamics(const AttitudeParams& p, const Vec& x, const Vec& u, Vec& dx) {
    const Vec3 v = x.head<3>();
    const Vec3 w = x.segment<3>(3);
    dx.resize(6);
    dx.head<3>() = euler_rates_matrix(v) * w;
    dx.segment<3>(3) = p.J.ldlt().solve(skew(w) * rotation(v) * p.H + p.B * u);
}

Vec3 reachable_normal(const AttitudeParams& p) {
    if (p.controls() != 2) throw std::invalid_argument("reachable normal needs exactly two inputs");
    Vec3 c = Vec3(p.B.col(0)).cross(Vec3(p.B.col(1)));
    if (c.norm() < 1e-14) throw std::invalid_argument("B has dependent columns");
    c.normalize();
    for (int k = 0; k < 3; ++k) {
        if (std::abs(c[k]) > 1e-14) {
            if (c[k] < 0) c = -c;
            break;
        }
    }
    return c;
}

double conserved_quantity(const AttitudeParams& p, const Vec3& C, const Vec3& v, const Vec3& w) {
    return C.dot(p.J * w - rotation(v) * p.H);
}

ReachableTarget optimal_attitude(const AttitudeParams& p, const Vec3& v, const Vec3& w) {
    ReachableTarget out;
    out.C = reachable_normal(p);
    out.c0 = conserved_quantity(p, out.C, v, w);
    const double reach = out.C.norm() * p.H.norm();
    if (std::abs(out.c0) > reach * (1 + 1e-12))
        throw DomainError("reachable-attitude constraint is infeasible: |c0| exceeds |C||H|");
    const AttitudeProgram prog{out.C, p.H, out.c0};

    bool found = false;
    const double s = kPi / 6;
    for (int corner = 0; corner < 8; ++corner) {
        const Vec3 start((corner & 1) ? s : -s, (corner & 2) ? s : -s, (corner & 4) ? s : -s);
        const Candidate cand = solve_from(prog, start);
        if (!cand.ok) continue;
        Vec3 gf, gg;
        prog.gradients(cand.v, gf, gg);
        const double kkt = (gf - cand.mu * gg).lpNorm<Eigen::Infinity>();
        const double cons = std::abs(prog.constraint(cand.v));
        if (kkt > 1e-8 || cons > 1e-9) continue;
        const double tr = prog.trace(cand.v);
        if (!found || tr > out.trace + 1e-12) {
            found = true;
            out.v_e = canonical_angles(cand.v);
            out.trace = tr;
            out.kkt_residual = kkt;
            out.constraint_residual = cons;
        }
    }
    if (!found) throw DomainError("reachable-attitude program did not converge from any start");
    return out;
}

// ---------------------------------------------------------------- control problems

ControlProblem make_attitude_problem(std::string id, const AttitudeParams& params, const Vec3& target) {
    auto p = std::make_shared<const AttitudeParams>(params);
    const Mat3 j_inv_t = params.J.inverse().transpose();
    const Eigen::MatrixXd gain = -(1.0 / params.W[2]) * params.B.transpose() * j_inv_t;

    ControlProblem cp;
    cp.id = std::move(id);
    cp.n = 6;
    cp.m = params.controls();
    cp.horizon = params.horizon;
    cp.domain = params.domain;
    cp.state_labels = {"phi", "theta", "psi", "omega1", "omega2", "omega3"};
    for (int k = 0; k < cp.m; ++k) cp.control_labels.push_back("u" + std::to_string(k + 1));
    cp.params = params.to_json();
    cp.params["target"] = {target[0], target[1], target[2]};

    cp.f = [p](double, const Vec& x, const Vec& u, Vec& dx) { attitude_dynamics(*p, x, u, dx); };
    cp.L = [p, target](double, const Vec& x, const Vec& u) {
        return 0.5 * p->W[0] * (x.head<3>() - target).squaredNorm() + 0.5 * p->W[1] * x.segment<3>(3).squaredNorm() +
               0.5 * p->W[2] * u.squaredNorm();
    };
    cp.h = [p](const Vec& x) { return p->W[3] * x.head<3>().squaredNorm() + p->W[4] * x.segment<3>(3).squaredNorm(); };
    cp.h_x = [p](const Vec& x) {
        Vec g(6);
        g.head<3>() = 2.0 * p->W[3] * x.head<3>();
        g.segment<3>(3) = 2.0 * p->W[4] * x.segment<3>(3);
        return g;
    };
    cp.u_star = [gain](double, const Vec&, const Vec& lam) { return (gain * lam.segment<3>(3)).eval(); };
    cp.H_x = [p, target, j_inv_t](double, const Vec& x, const Vec& lam, const Vec&, Vec& hx) {
        const Vec3 v = x.head<3>(), w = x.segment<3>(3);
        const Vec3 lv = lam.head<3>(), lw = lam.segment<3>(3);
        const Vec3 mu = j_inv_t * lw;
        const Vec3 rh = rotation(v) * p->H;
        const auto dr = rotation_derivatives(v);
        const auto de = euler_rates_derivatives(v);
        const Vec3 w_cross_mu = w.cross(mu);
        hx.resize(6);
        for (int k = 0; k < 3; ++k)
            hx[k] = p->W[0] * (v[k] - target[k]) + lv.dot(de[k] * w) + (dr[k] * p->H).dot(w_cross_mu);
        hx.segment<3>(3) = p->W[1] * w + euler_rates_matrix(v).transpose() * lv + mu.cross(rh);
    };
    return cp;
}

ControlProblem make_example1(int variant, const nlohmann::json& overrides) {
    AttitudeParams p = AttitudeParams::example1(variant);
    p.apply(overrides);
    return make_attitude_problem(variant == 1 ? "example1" : "example1-d2", p);
}

ControlProblem make_example2(const nlohmann::json& overrides) {
    AttitudeParams p = AttitudeParams::example2();
    p.apply(overrides);
    ControlProblem cp = make_attitude_problem("example2", p);
    cp.params.erase("target");
    cp.anchored = [p](const Vec& x0) {
        const ReachableTarget t = optimal_attitude(p, x0.head<3>(), x0.segment<3>(3));
        return make_attitude_problem("example2", p, t.v_e);
    };
    return cp;
}

ControlProblem make_example3(const nlohmann::json& overrides) {
    double T = 5.0;
    if (!overrides.is_null() && overrides.contains("T")) T = overrides.at("T").get<double>();
    ControlProblem cp;
    cp.id = "example3";
    cp.n = 3;
    cp.m = 1;
    cp.horizon = T;
    cp.time_in_grid = true;
    cp.domain = Box({0.0, -2.0, -2.0, -2.0}, {T, 2.0, 2.0, 2.0});
    if (!overrides.is_null() && overrides.contains("domain")) cp.domain = overrides.at("domain").get<Box>();
    cp.state_labels = {"x1", "x2", "x3"};
    cp.control_labels = {"u"};
    cp.params = {{"T", T}, {"domain", cp.domain}};

    cp.f = [](double, const Vec& x, const Vec& u, Vec& dx) {
        const double rho = 1 + x[0] * x[0] + x[1] * x[1];
        const double y = x[2] / rho;
        const double q0 = -2 * x[0] * x[0] + 2 * x[0] * x[1] - 2 * x[1] * x[1];
        dx.resize(3);
        dx << -x[0] + x[1], -x[1] + y, (q0 + 2 * x[1] * y) * y + rho * u[0];
    };
    cp.L = [](double, const Vec& x, const Vec& u) {
        const double y = x[2] / (1 + x[0] * x[0] + x[1] * x[1]);
        return 0.5 * (y * y + u[0] * u[0]);
    };
    cp.h = [](const Vec&) { return 0.0; };
    cp.h_x = [](const Vec&) { return Vec::Zero(3).eval(); };
    cp.u_star = [](double, const Vec& x, const Vec& lam) {
        Vec u(1);
        u[0] = -(1 + x[0] * x[0] + x[1] * x[1]) * lam[2];
        return u;
    };
    cp.H_x = [](double, const Vec& x, const Vec& lam, const Vec& u, Vec& hx) {
        const double x1 = x[0], x2 = x[1], x3 = x[2];
        const double rho = 1 + x1 * x1 + x2 * x2;
        const double y = x3 / rho;
        const double q0 = -2 * x1 * x1 + 2 * x1 * x2 - 2 * x2 * x2;
        const double y1 = -2 * x1 * x3 / (rho * rho);
        const double y2 = -2 * x2 * x3 / (rho * rho);
        const double y3 = 1 / rho;
        hx.resize(3);
        hx[0] = y * y1 - lam[0] + lam[1] * y1 +
                lam[2] * ((-4 * x1 + 2 * x2) * y + q0 * y1 + 4 * x2 * y * y1 + 2 * x1 * u[0]);
        hx[1] = y * y2 + lam[0] + lam[1] * (-1 + y2) +
                lam[2] * ((2 * x1 - 4 * x2) * y + q0 * y2 + 2 * y * y + 4 * x2 * y * y2 + 2 * x2 * u[0]);
        hx[2] = y * y3 + lam[1] * y3 + lam[2] * (q0 * y3 + 4 * x2 * y * y3);
    };
    return cp;
}

ControlProblem make_problem(std::string_view id, const nlohmann::json& overrides) {
    if (id == "example1") return make_example1(1, overrides);
    if (id == "example1-d2") return make_example1(2, overrides);
    if (id == "example2") return make_example2(overrides);
    if (id == "example3") return make_example3(overrides);
    throw std::invalid_argument("unknown problem '" + std::string(id) + "'");
}

double example3_value(double t, const Vec& x, double T) {
    const double y = x[2] / (1 + x[0] * x[0] + x[1] * x[1]);
    return 0.5 * y * y * std::tanh(T - t);
}

Vec example3_control(double t, const Vec& x, double T) {
    Vec u(1);
    u[0] = -x[2] / (1 + x[0] * x[0] + x[1] * x[1]) * std::tanh(T - t);
    return u;
}

Vec example3_costate(double t, const Vec& x, double T) {
    const double rho = 1 + x[0] * x[0] + x[1] * x[1];
    const double y = x[2] / rho;
    const double p = std::tanh(T - t);
    Vec lam(3);
    lam << p * y * (-2 * x[0] * x[2] / (rho * rho)), p * y * (-2 * x[1] * x[2] / (rho * rho)), p * y / rho;
    return lam;
}

}  // namespace hjb
