#pragma once

#include <array>
#include <string_view>

#include <Eigen/Dense>

#include "hjb/characteristics.hpp"

namespace hjb {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Attitude conventions. v = (φ, θ, ψ) are (3,2,1) Euler angles and R(v) maps
// inertial coordinates to body coordinates:
//   R(v) = R1(φ) R2(θ) R3(ψ),  R1(φ) = [1 0 0; 0 cφ sφ; 0 -sφ cφ], etc.
// Body rates ω satisfy dR/dt = S(ω) R with S(ω) b = b × ω, and v̇ = E(v) ω.

[[nodiscard]] Mat3 rotation(const Vec3& v);
/// ∂R/∂φ, ∂R/∂θ, ∂R/∂ψ.
[[nodiscard]] std::array<Mat3, 3> rotation_derivatives(const Vec3& v);
/// Throws SingularityError when |cos θ| < 1e-8.
[[nodiscard]] Mat3 euler_rates_matrix(const Vec3& v);
[[nodiscard]] std::array<Mat3, 3> euler_rates_derivatives(const Vec3& v);
/// S(ω): b ↦ b × ω.
[[nodiscard]] Mat3 skew(const Vec3& w);

struct AttitudeParams {
    Eigen::MatrixXd B;  ///< 3 × m
    Mat3 J = Mat3::Identity();
    Vec3 H = Vec3::Zero();
    std::array<double, 5> W{1, 1, 1, 0, 0};
    double horizon = 1.0;
    Box domain = Box::unit(6);

    [[nodiscard]] int controls() const { return static_cast<int>(B.cols()); }
    /// Example I; `variant` 1 or 2 selects the domain D1 or D2.
    static AttitudeParams example1(int variant = 1);
    static AttitudeParams example2();
    /// Overrides any of "B", "J", "H", "W" (5 values), "T", "domain".
    void apply(const nlohmann::json& overrides);
    [[nodiscard]] nlohmann::json to_json() const;
};

/// x = (v, ω):  v̇ = E(v) ω,  J ω̇ = S(ω) R(v) H + B u.
void attitude_dynamics(const AttitudeParams& params, const Vec& x, const Vec& u, Vec& dx);

/// Unit C with Cᵀ B = 0 for a two-input B, first nonzero component positive.
[[nodiscard]] Vec3 reachable_normal(const AttitudeParams& params);
/// Cᵀ (J ω - R(v) H): conserved when Cᵀ B = 0.
[[nodiscard]] double conserved_quantity(const AttitudeParams& params, const Vec3& C, const Vec3& v, const Vec3& w);

struct ReachableTarget {
    Vec3 v_e = Vec3::Zero();
    Vec3 C = Vec3::Zero();
    double c0 = 0.0;  ///< Cᵀ (J ω - R(v) H)
    double trace = 0.0;
    double constraint_residual = 0.0;
    double kkt_residual = 0.0;
};

/// argmax tr R(ṽ) subject to -Cᵀ R(ṽ) H = Cᵀ (J ω - R(v) H). Augmented-Lagrangian
/// Newton from 8 starts at (±π/6)³, then a Newton polish of the KKT system.
/// Throws DomainError when the constraint is infeasible or no start converges.
[[nodiscard]] ReachableTarget optimal_attitude(const AttitudeParams& params, const Vec3& v, const Vec3& w);

/// Attitude problem with L = W1/2 |v - v_e|² + W2/2 |ω|² + W3/2 |u|² and
/// h = W4 |v|² + W5 |ω|².
[[nodiscard]] ControlProblem make_attitude_problem(std::string id, const AttitudeParams& params,
                                                   const Vec3& target = Vec3::Zero());

[[nodiscard]] ControlProblem make_example1(int variant = 1, const nlohmann::json& overrides = {});
/// Each initial state freezes its own v_e through ControlProblem::anchored.
[[nodiscard]] ControlProblem make_example2(const nlohmann::json& overrides = {});
/// Time-in-grid problem on [0, 5] × [-2, 2]³ with a closed-form solution.
[[nodiscard]] ControlProblem make_example3(const nlohmann::json& overrides = {});

/// "example1" (D1), "example1-d2", "example2", "example3".
[[nodiscard]] ControlProblem make_problem(std::string_view id, const nlohmann::json& overrides = {});

// Closed-form solution of example 3 with horizon T.
[[nodiscard]] double example3_value(double t, const Vec& x, double T = 5.0);
[[nodiscard]] Vec example3_control(double t, const Vec& x, double T = 5.0);
[[nodiscard]] Vec example3_costate(double t, const Vec& x, double T = 5.0);

}  // namespace hjb
