#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "hjb/problems.hpp"

using namespace hjb;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_vec3(std::mt19937_64& rng, double half) {
    std::uniform_real_distribution<double> u(-half, half);
    return {u(rng), u(rng), u(rng)};
}

Vec random_vec(std::mt19937_64& rng, int n, double half) {
    std::uniform_real_distribution<double> u(-half, half);
    Vec v(n);
    for (int k = 0; k < n; ++k) v[k] = u(rng);
    return v;
}

// Row formulas of the (3,2,1) inertial-to-body rotation.
Mat3 rotation_oracle(const Vec3& v) {
    const double sf = std::sin(v[0]), cf = std::cos(v[0]);
    const double st = std::sin(v[1]), ct = std::cos(v[1]);
    const double sp = std::sin(v[2]), cp = std::cos(v[2]);
    Mat3 r;
    r << ct * cp, ct * sp, -st, sf * st * cp - cf * sp, sf * st * sp + cf * cp, sf * ct, cf * st * cp + sf * sp,
        cf * st * sp - sf * cp, cf * ct;
    return r;
}

template <class F>
void rk4(F&& f, double t, Vec& x, double dt) {
    const Vec k1 = f(t, x);
    const Vec k2 = f(t + dt / 2, (x + dt / 2 * k1).eval());
    const Vec k3 = f(t + dt / 2, (x + dt / 2 * k2).eval());
    const Vec k4 = f(t + dt, (x + dt * k3).eval());
    x += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

Vec central_gradient(const std::function<double(const Vec&)>& f, const Vec& x) {
    Vec g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        Vec xp = x, xm = x;
        xp[j] += 1e-6;
        xm[j] -= 1e-6;
        g[j] = (f(xp) - f(xm)) / 2e-6;
    }
    return g;
}

// Closed-form reachable-attitude oracle: rotate H toward C inside their plane.
double optimal_trace_oracle(const Vec3& H, const Vec3& C, double c0) {
    const double gamma = std::acos(C.dot(H) / (C.norm() * H.norm()));
    const double beta = std::acos(-c0 / (C.norm() * H.norm()));
    return 1.0 + 2.0 * std::cos(gamma - beta);
}

}  // namespace

TEST_CASE("rotation, Euler-rate and skew examples") {
    CHECK(rotation(Vec3::Zero()).isApprox(Mat3::Identity(), 0.0));
    CHECK(euler_rates_matrix(Vec3::Zero()).isApprox(Mat3::Identity(), 0.0));
    std::mt19937_64 rng(1);
    for (int k = 0; k < 100; ++k) {
        const Vec3 w = random_vec3(rng, 2.0);
        CHECK((skew(w) * w).norm() <= 1e-15);
        CHECK((skew(w) + skew(w).transpose()).norm() == 0.0);
        const Vec3 b = random_vec3(rng, 2.0);
        CHECK((skew(w) * b - b.cross(w)).norm() <= 1e-15);
    }
    CHECK_THROWS_AS((void)euler_rates_matrix(Vec3(0, kPi / 2, 0)), SingularityError);
}

TEST_CASE("rotation is orthogonal with det 1 and matches the row formulas") {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 10000; ++k) {
        const Vec3 v = random_vec3(rng, kPi / 3);
        const Mat3 r = rotation(v);
        CHECK((r.transpose() * r - Mat3::Identity()).norm() <= 1e-12);
        CHECK(r.determinant() == Approx(1.0).epsilon(1e-12));
        if (k < 100) CHECK((r - rotation_oracle(v)).norm() <= 1e-14);
    }
}

TEST_CASE("analytic derivatives of R and E") {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 50; ++k) {
        const Vec3 v = random_vec3(rng, 1.0);
        const auto dr = rotation_derivatives(v);
        const auto de = euler_rates_derivatives(v);
        for (int i = 0; i < 3; ++i) {
            Vec3 vp = v, vm = v;
            vp[i] += 1e-6;
            vm[i] -= 1e-6;
            CHECK((dr[i] - (rotation(vp) - rotation(vm)) / 2e-6).norm() <= 1e-8);
            CHECK((de[i] - (euler_rates_matrix(vp) - euler_rates_matrix(vm)) / 2e-6).norm() <= 1e-8);
        }
    }
}

TEST_CASE("dR/dt equals S(omega) R along integrated trajectories") {
    const auto p = AttitudeParams::example1();
    std::mt19937_64 rng(4);
    Vec x(6);
    x << random_vec3(rng, 0.3), random_vec3(rng, 0.3);
    const Vec u = random_vec(rng, 3, 0.2);
    auto f = [&](double, const Vec& s) {
        Vec dx;
        attitude_dynamics(p, s, u, dx);
        return dx;
    };
    const double dt = 1e-3;
    for (int step = 0; step < 2000; ++step) {
        if (step % 200 == 0) {
            // Central difference of R(v(t)) from two short RK4 steps.
            Vec fwd = x, bwd = x;
            rk4(f, 0.0, fwd, 1e-4);
            rk4(f, 0.0, bwd, -1e-4);
            const Mat3 rdot = (rotation(fwd.head<3>()) - rotation(bwd.head<3>())) / 2e-4;
            const Mat3 expected = skew(x.segment<3>(3)) * rotation(x.head<3>());
            CHECK((rdot - expected).norm() <= 1e-6);
        }
        rk4(f, 0.0, x, dt);
    }
}

TEST_CASE("attitude dynamics rest state") {
    const auto p = AttitudeParams::example1();
    Vec x(6);
    x << 0.2, -0.1, 0.3, 0, 0, 0;
    Vec dx;
    attitude_dynamics(p, x, Vec::Zero(3), dx);
    CHECK(dx.norm() == 0.0);
}

TEST_CASE("example 2 conserves C^T (J omega - R H) under random controls") {
    const auto p = AttitudeParams::example2();
    const Vec3 C = reachable_normal(p);
    CHECK((C.transpose() * p.B).norm() <= 1e-12);
    CHECK(C.norm() == Approx(1.0));
    CHECK(C[0] > 0.0);
    const Vec3 expected = Vec3(1.0 / 12, -1.0 / 120, -1.0).normalized();
    CHECK((C - expected).norm() <= 1e-14);

    std::mt19937_64 rng(5);
    Vec x(6);
    x << random_vec3(rng, kPi / 6), random_vec3(rng, kPi / 8);
    const double start = conserved_quantity(p, C, x.head<3>(), x.segment<3>(3));
    Vec u = Vec::Zero(2);
    const double dt = 1e-3;
    double drift = 0.0;
    for (int step = 0; step < 30000; ++step) {
        if (step % 500 == 0) u = random_vec(rng, 2, 0.5);
        // Damping keeps the attitude away from gimbal lock over the horizon.
        const Vec applied = u - 2.0 * p.B.transpose() * p.J * x.segment<3>(3);
        auto f = [&](double, const Vec& s) {
            Vec dx;
            attitude_dynamics(p, s, applied, dx);
            return dx;
        };
        rk4(f, step * dt, x, dt);
        drift = std::max(drift, std::abs(conserved_quantity(p, C, x.head<3>(), x.segment<3>(3)) - start));
    }
    MESSAGE("conservation drift = " << drift);
    CHECK(drift <= 1e-8);
}

TEST_CASE("Hamiltonian gradients match central differences") {
    std::mt19937_64 rng(6);
    const ControlProblem problems[] = {make_example1(1), make_example1(2),
                                       make_attitude_problem("target", AttitudeParams::example2(), Vec3(0.1, -0.2, 0.05)),
                                       make_example3()};
    for (const auto& cp : problems) {
        for (int k = 0; k < 20; ++k) {
            const Vec x = random_vec(rng, cp.n, cp.time_in_grid ? 2.0 : 0.5);
            const Vec lam = random_vec(rng, cp.n, 1.0);
            const Vec u = cp.u_star(0.3, x, lam);
            Vec hx;
            cp.H_x(0.3, x, lam, u, hx);
            const Vec fd = central_gradient([&](const Vec& s) { return cp.hamiltonian(0.3, s, lam, u); }, x);
            CHECK((hx - fd).lpNorm<Eigen::Infinity>() <= 1e-6 * std::max(1.0, fd.lpNorm<Eigen::Infinity>()));
            // u_star is a stationary point of H.
            CHECK(hamiltonian_control_gradient(cp, 0.3, x, lam, u).norm() <= 1e-6);
            // h_x is the gradient of h.
            const Vec hg = central_gradient(cp.h, x);
            CHECK((cp.h_x(x) - hg).lpNorm<Eigen::Infinity>() <= 1e-7);
        }
    }
}

TEST_CASE("cost examples") {
    const auto e1 = make_example1();
    CHECK(e1.L(0.0, Vec::Zero(6), Vec::Zero(3)) == 0.0);
    CHECK(e1.h(Vec::Zero(6)) == 0.0);
    Vec x(6);
    x << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
    CHECK(e1.h(x) == Approx(0.14 + 0.77));
    CHECK(e1.L(0.0, x, Vec::Ones(3)) == Approx(0.5 * 0.14 + 0.5 * 0.77 + 0.25 * 3));

    const auto e2 = make_example2();
    Vec x2(6);
    x2 << 0.2, -0.1, 0.05, 0.1, 0.02, -0.3;
    const auto anchored = e2.anchored(x2);
    const auto target = optimal_attitude(AttitudeParams::example2(), x2.head<3>(), x2.segment<3>(3));
    Vec at_target(6);
    at_target << target.v_e, Vec3::Zero();
    CHECK(anchored.L(0.0, at_target, Vec::Zero(2)) == Approx(0.0).scale(1.0).epsilon(1e-20));
    CHECK(anchored.h(x2) == 0.0);
    CHECK(e2.horizon == 30.0);
    CHECK(e2.m == 2);
}

TEST_CASE("example 3 structure") {
    const auto cp = make_example3();
    CHECK(cp.time_in_grid);
    CHECK(cp.grid_dim() == 4);
    CHECK(cp.domain.lower()[0] == 0.0);
    CHECK(cp.domain.upper()[0] == 5.0);
    std::mt19937_64 rng(7);
    for (int k = 0; k < 20; ++k) {
        const Vec x = random_vec(rng, 3, 2.0);
        const Vec lam = random_vec(rng, 3, 1.0);
        const double rho = 1 + x[0] * x[0] + x[1] * x[1];
        const Vec u = cp.u_star(0.0, x, lam);
        CHECK(u[0] == Approx(-rho * lam[2]));
        // ∂H/∂u = u + ρ λ3 in closed form.
        CHECK(hamiltonian_control_gradient(cp, 0.0, x, lam, u)[0] == Approx(0.0).scale(1.0).epsilon(1e-7));
        // Under y = x3/ρ the dynamics reduce to dy/dt = u.
        const Vec w = random_vec(rng, 1, 1.0);
        Vec dx;
        cp.f(0.0, x, w, dx);
        const Vec3 grad_y(-2 * x[0] * x[2] / (rho * rho), -2 * x[1] * x[2] / (rho * rho), 1 / rho);
        CHECK(grad_y.dot(Vec3(dx)) == Approx(w[0]).epsilon(1e-12));
    }
}

TEST_CASE("example 3 closed form satisfies the HJB equation") {
    const auto cp = make_example3();
    std::mt19937_64 rng(8);
    for (int k = 0; k < 20; ++k) {
        const Vec x = random_vec(rng, 3, 2.0);
        const double t = std::uniform_real_distribution<double>(0.0, 4.9)(rng);
        const Vec lam = example3_costate(t, x);
        const Vec grad = central_gradient([&](const Vec& s) { return example3_value(t, s); }, x);
        CHECK((lam - grad).lpNorm<Eigen::Infinity>() <= 1e-8);
        const double vt = (example3_value(t + 1e-6, x) - example3_value(t - 1e-6, x)) / 2e-6;
        const Vec u = cp.u_star(t, x, lam);
        CHECK((u - example3_control(t, x)).norm() <= 1e-12);
        CHECK(vt + cp.hamiltonian(t, x, lam, u) == Approx(0.0).scale(1.0).epsilon(1e-8));
    }
    CHECK(example3_value(0.0, Vec3(0, 0, 1)) == Approx(0.5 * std::tanh(5.0)).epsilon(1e-15));
}

TEST_CASE("optimal reachable attitude") {
    const auto p = AttitudeParams::example2();
    const Vec3 C = reachable_normal(p);

    SUBCASE("matches the closed-form optimum") {
        std::mt19937_64 rng(9);
        for (int k = 0; k < 25; ++k) {
            const Vec3 v = random_vec3(rng, kPi / 6);
            const Vec3 w = random_vec3(rng, kPi / 8);
            const auto t = optimal_attitude(p, v, w);
            CHECK(t.constraint_residual <= 1e-9);
            CHECK(t.kkt_residual <= 1e-8);
            CHECK(-C.dot(rotation(t.v_e) * p.H) == Approx(t.c0).epsilon(1e-9));
            CHECK(t.trace == Approx(optimal_trace_oracle(p.H, C, t.c0)).epsilon(1e-9));
        }
    }
    SUBCASE("identity is optimal when feasible") {
        // ω = J⁻¹ (R(v) H - H) makes c0 = -Cᵀ H, which R = I satisfies.
        const Vec3 v(0.2, -0.3, 0.1);
        const Vec3 w = p.J.inverse() * (rotation(v) * p.H - p.H);
        const auto t = optimal_attitude(p, v, w);
        CHECK(t.v_e.norm() <= 1e-7);
        CHECK(t.trace == Approx(3.0).epsilon(1e-12));
    }
    SUBCASE("fixed point") {
        std::mt19937_64 rng(10);
        const Vec3 v = random_vec3(rng, kPi / 6), w = random_vec3(rng, kPi / 8);
        const auto first = optimal_attitude(p, v, w);
        // Pick ω so that (v_e, ω) has the same conserved value.
        const Vec3 w2 = w + p.J.inverse() * (rotation(first.v_e) * p.H - rotation(v) * p.H);
        CHECK(conserved_quantity(p, C, first.v_e, w2) == Approx(first.c0).epsilon(1e-12));
        const auto second = optimal_attitude(p, first.v_e, w2);
        CHECK((second.v_e - first.v_e).norm() <= 1e-9);
    }
    SUBCASE("infeasible constraint") {
        const Vec3 w = p.J.inverse() * (C * 100.0);
        CHECK_THROWS_AS((void)optimal_attitude(p, Vec3::Zero(), w), DomainError);
    }
    SUBCASE("two inputs required") {
        CHECK_THROWS_AS((void)reachable_normal(AttitudeParams::example1()), std::invalid_argument);
    }
}

TEST_CASE("reachable attitude is constant along a controlled trajectory") {
    const auto p = AttitudeParams::example2();
    std::mt19937_64 rng(11);
    Vec x(6);
    x << random_vec3(rng, kPi / 6), random_vec3(rng, kPi / 8);
    const Vec3 first = optimal_attitude(p, x.head<3>(), x.segment<3>(3)).v_e;
    Vec u = Vec::Zero(2);
    double drift = 0.0;
    const double dt = 1e-3;
    for (int step = 1; step <= 30000; ++step) {
        if (step % 500 == 1) u = random_vec(rng, 2, 0.3);
        const Vec applied = u - 2.0 * p.B.transpose() * p.J * x.segment<3>(3);
        auto f = [&](double, const Vec& s) {
            Vec dx;
            attitude_dynamics(p, s, applied, dx);
            return dx;
        };
        rk4(f, 0.0, x, dt);
        if (step % 1000 == 0)
            drift = std::max(drift, (optimal_attitude(p, x.head<3>(), x.segment<3>(3)).v_e - first).norm());
    }
    MESSAGE("v_e drift = " << drift);
    CHECK(drift <= 1e-6);
}

TEST_CASE("parameter overrides") {
    auto p = AttitudeParams::example1();
    p.apply({{"W", {2, 2, 1, 0, 0}}, {"T", 10.0}, {"H", {0, 0, 1}}});
    CHECK(p.W[0] == 2.0);
    CHECK(p.horizon == 10.0);
    CHECK(p.H[2] == 1.0);
    CHECK_THROWS_AS(p.apply({{"J", {{1, 0, 0}, {0, -1, 0}, {0, 0, 1}}}}), std::invalid_argument);
    const auto round = AttitudeParams::example2();
    auto copy = AttitudeParams::example1();
    copy.apply(round.to_json());
    CHECK(copy.B.isApprox(round.B));
    CHECK(copy.H == round.H);
    CHECK(make_problem("example1-d2").domain.upper()[0] == Approx(kPi / 3));
    CHECK_THROWS_AS((void)make_problem("example4"), std::invalid_argument);
}
