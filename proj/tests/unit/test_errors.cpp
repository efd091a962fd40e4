#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hjb/errors.hpp"
#include "hjb/interp.hpp"
#include "hjb/problems.hpp"
#include "hjb/rng.hpp"

using namespace hjb;
using doctest::Approx;

namespace {

// Direct enumeration of all compositions i_1 + ... + i_d = l with i_k ≥ 1.
double brute_composition_sum(const std::vector<double>& lambda, int d, int l) {
    double total = 0.0;
    std::function<void(int, int, double)> rec = [&](int axis, int remaining, double product) {
        if (axis == d - 1) {
            if (remaining >= 1 && remaining <= static_cast<int>(lambda.size())) total += product * lambda[remaining - 1];
            return;
        }
        for (int v = 1; v <= remaining - (d - 1 - axis); ++v) rec(axis + 1, remaining - v, product * lambda[v - 1]);
    };
    rec(0, l, 1.0);
    return total;
}

long long choose(int n, int k) {
    if (k < 0 || k > n) return 0;
    long long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// ẋ = u, L = (x² + u²)/2 on [-1, 1], T = 1: V = tanh(1 - t) x² / 2.
ControlProblem scalar_lq() {
    ControlProblem cp;
    cp.id = "scalar-lq";
    cp.n = 1;
    cp.m = 1;
    cp.horizon = 1.0;
    cp.domain = Box({-1.0}, {1.0});
    cp.f = [](double, const Vec&, const Vec& u, Vec& dx) { dx = u; };
    cp.L = [](double, const Vec& x, const Vec& u) { return 0.5 * (x[0] * x[0] + u[0] * u[0]); };
    cp.h = [](const Vec&) { return 0.0; };
    cp.h_x = [](const Vec&) { return Vec::Zero(1).eval(); };
    cp.u_star = [](double, const Vec&, const Vec& lam) { return (-lam).eval(); };
    return cp;
}

}  // namespace

TEST_CASE("composition sums match enumeration") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(1.0, 3.0);
    for (int d = 1; d <= 4; ++d) {
        for (int l = d; l <= 12; ++l) {
            std::vector<double> lambda(static_cast<std::size_t>(l - d + 1));
            for (double& v : lambda) v = u(rng);
            const double dp = composition_sum(lambda, d, l);
            CHECK(dp == Approx(brute_composition_sum(lambda, d, l)).epsilon(1e-13));
            CHECK(dp > 0.0);
        }
    }
    CHECK(composition_sum({1.0}, 3, 2) == 0.0);
}

TEST_CASE("error bound coefficient examples") {
    const auto r = error_bound_coefficient(NodeFamily::Classic, 2, 3);
    REQUIRE(r.levels == std::vector<int>{2, 3});
    CHECK(r.S == std::vector<double>{1.0, 2.0});
    CHECK(r.weights == std::vector<double>{1.0, 1.0});
    CHECK(r.coefficient == 3.0);

    const auto cgl = error_bound_coefficient(NodeFamily::CGL, 6, 13);
    MESSAGE("CGL d=6 q=13 coefficient (bound) = " << cgl.coefficient);
    CHECK(cgl.coefficient == Approx(3.66e4).epsilon(0.05));
    CHECK(cgl.lambda.size() == 8);
    CHECK(cgl.lambda[0] == 1.0);
    const auto numeric = error_bound_coefficient(NodeFamily::CGL, 6, 13, LebesgueSource::Numeric);
    CHECK(numeric.coefficient < cgl.coefficient);
    CHECK(numeric.coefficient > 0.5 * cgl.coefficient);

    for (auto family : {NodeFamily::Classic, NodeFamily::Modified, NodeFamily::CGL}) {
        for (int q = 1; q <= 8; ++q) {
            CHECK(error_bound_coefficient(family, 1, q).coefficient == lebesgue_bound(family, q));
            CHECK(error_bound_coefficient(family, 1, q, LebesgueSource::Numeric).coefficient ==
                  lebesgue_constant(family, q));
        }
    }
    CHECK_THROWS_AS((void)error_bound_coefficient(NodeFamily::CGL, 4, 3), std::invalid_argument);
    CHECK(parse_lebesgue_source("numeric") == LebesgueSource::Numeric);
    CHECK_THROWS((void)parse_lebesgue_source("exact"));
}

TEST_CASE("unit Lebesgue constants give the binomial closed form") {
    for (int d = 1; d <= 4; ++d) {
        for (int q = d; q <= 12; ++q) {
            long long closed = 0;
            for (int l = std::max(d, q - d + 1); l <= q; ++l) closed += choose(d - 1, q - l) * choose(l - 1, d - 1);
            CHECK(error_bound_coefficient(NodeFamily::Classic, d, q).coefficient == static_cast<double>(closed));
            CHECK(error_bound_coefficient(NodeFamily::Modified, d, q, LebesgueSource::Numeric).coefficient ==
                  static_cast<double>(closed));
        }
    }
}

TEST_CASE("coefficient growth rates") {
    const auto classic = coefficient_growth_check(NodeFamily::Classic, 2, 4, 10);
    MESSAGE("Classic d=2 fitted degree " << classic.fitted_degree);
    CHECK(classic.fitted_degree >= 0.5);
    CHECK(classic.fitted_degree <= 1.5);
    CHECK(classic.expected_degree == 1.0);
    CHECK(classic.monotone);

    const auto flat = coefficient_growth_check(NodeFamily::Classic, 1, 3, 9);
    for (double c : flat.coefficients) CHECK(c == 1.0);
    CHECK(flat.fitted_degree == Approx(0.0).scale(1.0));

    const auto cgl = coefficient_growth_check(NodeFamily::CGL, 2, 4, 10);
    CHECK(cgl.monotone);
    for (std::size_t k = 1; k < cgl.coefficients.size(); ++k) CHECK(cgl.coefficients[k] > cgl.coefficients[k - 1]);
    CHECK_THROWS_AS((void)coefficient_growth_check(NodeFamily::Classic, 2, 4, 6), std::invalid_argument);
}

TEST_CASE("symmetric histogram") {
    const std::vector<double> v = {-2.0, -1.0, 0.0, 0.5, 2.0};
    const auto h = symmetric_histogram(v, 4);
    CHECK(h.edges == std::vector<double>{-2.0, -1.0, 0.0, 1.0, 2.0});
    CHECK(h.counts == std::vector<std::size_t>{1, 1, 2, 1});
    const auto csv = h.csv();
    CHECK(csv.rfind("lower,upper,count\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    const auto zero = symmetric_histogram({0.0, 0.0}, 50);
    CHECK(std::accumulate(zero.counts.begin(), zero.counts.end(), std::size_t{0}) == 2);
    CHECK(zero.edges.size() == 51);
}

TEST_CASE("Monte Carlo e_BVP agrees with an independent hierarchical evaluation") {
    auto grid = std::make_shared<const SparseGrid>(build_grid(NodeFamily::CGL, 3, 7));
    const std::uint64_t seed = 17;
    const auto report = mc_ebvp(grid, 200, seed);
    REQUIRE(report.ratios.size() == 200);

    // Rebuild the same draws from the documented streams.
    const CounterRng root(seed);
    std::vector<double> eps(grid->size());
    for (std::size_t id = 0; id < eps.size(); ++id) eps[id] = 2.0 * root.substream(0).uniform(id) - 1.0;
    const auto hier = fit_hierarchical(grid, eps, 1);
    double max_ratio = 0.0;
    for (std::size_t k = 0; k < 200; ++k) {
        std::vector<double> ref(3);
        for (std::size_t j = 0; j < 3; ++j) ref[j] = root.substream(1).uniform(k * 3 + j);
        const double v = hier.eval_ref(ref)[0];
        CHECK(report.ratios[k] == Approx(v).epsilon(1e-10).scale(1.0));
        max_ratio = std::max(max_ratio, std::abs(v));
    }
    CHECK(report.max_ratio == Approx(max_ratio).epsilon(1e-10));
    CHECK(report.max_ratio < error_bound_coefficient(NodeFamily::CGL, 3, 7).coefficient);
    const auto& counts = report.histogram.counts;
    CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == 200);
}

TEST_CASE("Monte Carlo e_BVP is linear, reproducible and scheduling-independent") {
    auto grid = std::make_shared<const SparseGrid>(build_grid(NodeFamily::CGL, 4, 7));
    const auto base = mc_ebvp(grid, 100, 5);
    const auto zero = mc_ebvp(grid, 100, 5, 0.0);
    CHECK(zero.max_ratio == 0.0);
    for (double c : {0.5, 3.0, 1e-3}) {
        const auto scaled = mc_ebvp(grid, 100, 5, c);
        for (std::size_t k = 0; k < base.ratios.size(); ++k)
            CHECK(std::abs(scaled.ratios[k] - c * base.ratios[k]) <= 1e-12 * std::max(1.0, std::abs(c * base.ratios[k])));
    }
    const auto again = mc_ebvp(grid, 100, 5);
    CHECK(again.ratios == base.ratios);
    const auto serial = mc_ebvp(grid, 100, 5, 1.0, EpsilonModel::Symmetric, Execution::Serial);
    CHECK(serial.ratios == base.ratios);
    const auto other = mc_ebvp(grid, 100, 6);
    CHECK(other.ratios != base.ratios);

    // Combination coefficients sum to one, so constant data pass through: the
    // unit model is the symmetric one shifted by 1/2 and halved.
    const auto unit = mc_ebvp(grid, 100, 5, 1.0, EpsilonModel::Unit);
    for (std::size_t k = 0; k < base.ratios.size(); ++k)
        CHECK(unit.ratios[k] == Approx(0.5 * base.ratios[k] + 0.5).epsilon(1e-12).scale(1.0));
    CHECK(base.to_json().at("model") == "symmetric");
    CHECK(parse_epsilon_model("unit") == EpsilonModel::Unit);
}

TEST_CASE("uniform validation points cover the box") {
    const Box box({0.0, -2.0, -2.0, -2.0}, {5.0, 2.0, 2.0, 2.0});
    const int n = 4000;
    const auto pts = uniform_points(box, n, 3);
    REQUIRE(pts.size() == static_cast<std::size_t>(n));
    for (int j = 0; j < 4; ++j) {
        double mean = 0.0;
        for (const auto& p : pts) {
            CHECK(p[j] >= box.lower()[j]);
            CHECK(p[j] < box.upper()[j]);
            mean += p[j] / n;
        }
        const double width = box.upper()[j] - box.lower()[j];
        const double sigma = width / std::sqrt(12.0 * n);
        CHECK(std::abs(mean - 0.5 * (box.lower()[j] + box.upper()[j])) <= 3 * sigma);
    }
    CHECK(uniform_points(box, 10, 3) == std::vector<std::vector<double>>(pts.begin(), pts.begin() + 10));
}

TEST_CASE("validation against tight-tolerance solves") {
    auto cp = std::make_shared<const ControlProblem>(make_example3());
    double previous = std::numeric_limits<double>::infinity();
    for (int q : {6, 8}) {
        auto grid = std::make_shared<const SparseGrid>(build_grid(NodeFamily::CGL, 4, q, cp->domain));
        SweepOptions opt;
        opt.characteristic.tol = 1e-8;
        const auto sol = sweep(*cp, grid, opt);
        const auto vf = fit_solution(cp, sol);
        const auto report = validate(vf, 60, 1e-10, 11);
        CHECK(report.valid);
        CHECK(report.failures == 0);
        CHECK(report.samples == 60);
        CHECK(report.mae <= report.max_abs);
        CHECK(report.variance >= 0.0);
        CHECK(report.relative_mae > 0.0);
        const auto& counts = report.histogram.counts;
        CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == 60);
        double mae = 0.0;
        for (const auto& s : report.records) {
            CHECK(s.interpolated == vf.value.eval_scalar(s.point));
            CHECK(std::abs(s.oracle - example3_value(s.point[0], Vec3(s.point[1], s.point[2], s.point[3]))) <= 1e-8);
            mae += std::abs(s.error) / 60;
        }
        CHECK(report.mae == Approx(mae).epsilon(1e-12));
        MESSAGE("q=" << q << " validation MAE " << report.mae);
        CHECK(report.mae < previous);
        previous = report.mae;

        if (q == 6) {
            // At grid points only the BVP error remains.
            std::vector<std::vector<double>> nodes;
            for (std::size_t id = 0; id < grid->size(); id += 4) {
                const auto p = grid->phys(id);
                nodes.emplace_back(p.begin(), p.end());
            }
            const auto at_nodes = validate_at(vf, nodes, 1e-10);
            CHECK(at_nodes.max_abs <= 1e-8);
        }
    }
}

TEST_CASE("relative error uses a floor at zero oracle values") {
    auto cp = std::make_shared<const ControlProblem>(make_example3());
    auto grid = std::make_shared<const SparseGrid>(build_grid(NodeFamily::CGL, 4, 5, cp->domain));
    const auto vf = fit_solution(cp, sweep(*cp, grid));
    const auto report = validate_at(vf, {{1.0, 0.3, 0.2, 0.0}}, 1e-10);
    REQUIRE(report.records[0].status == BvpStatus::Converged);
    CHECK(report.records[0].oracle == 0.0);
    CHECK(report.relative_mae == Approx(std::abs(report.records[0].error) / kRelativeErrorFloor));
}

TEST_CASE("too many oracle failures invalidate the report") {
    auto cp = std::make_shared<ControlProblem>(scalar_lq());
    auto grid = std::make_shared<const SparseGrid>(build_grid(NodeFamily::Classic, 1, 4, cp->domain));
    const auto sol = sweep(*cp, grid);
    for (std::size_t id = 0; id < grid->size(); ++id) {
        const double x = grid->phys(id)[0];
        CHECK(sol.records[id].V == Approx(0.5 * std::tanh(1.0) * x * x).epsilon(1e-7).scale(1.0));
    }
    auto vf = fit_solution(cp, sol);
    auto broken = std::make_shared<ControlProblem>(*cp);
    broken->f = [](double, const Vec& x, const Vec& u, Vec& dx) {
        if (x[0] > 0.0) throw DomainError("refused");
        dx = u;
    };
    vf.problem = broken;
    const auto report = validate(vf, 40, 1e-10, 2);
    CHECK(report.failures > 2);
    CHECK_FALSE(report.valid);
    CHECK(report.to_json().at("valid") == false);
    const auto j = report.to_json(true);
    CHECK(j.at("records").size() == 40);
}
