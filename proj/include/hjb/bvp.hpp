#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hjb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class BvpStatus { Converged, MaxMesh, NewtonDiverged };

[[nodiscard]] std::string_view to_string(BvpStatus status);
[[nodiscard]] BvpStatus parse_bvp_status(std::string_view name);

struct BvpOptions {
    double tol = 1e-6;         ///< bound on the scaled collocation residual
    double newton_tol = 0.0;   ///< scaled Newton step bound; 0 derives max(1e-3 tol, 1e-13)
    int max_nodes = 10000;
    int max_newton = 50;
    int max_halvings = 8;
    int max_restarts = 3;      ///< uniform refinements after a failed Newton solve
    bool adapt = true;         ///< false: solve once on the given mesh
};

/// Two-point BVP  y' = rhs(s, y),  bc(y(ta), y(tb)) = 0  for y in R^dim.
struct BvpProblem {
    using Rhs = std::function<void(double s, const Vec& y, Vec& dy)>;
    using Bc = std::function<void(const Vec& ya, const Vec& yb, Vec& res)>;
    using Guess = std::function<Vec(double s)>;
    using Jacobian = std::function<void(double s, const Vec& y, Mat& dfdy)>;

    int dim = 0;
    Rhs rhs;
    Bc bc;
    double ta = 0.0;
    double tb = 1.0;
    std::vector<double> mesh;  ///< initial mesh, strictly increasing, ≥ 3 intervals
    Guess guess;
    Jacobian jacobian;         ///< optional; forward differences when empty
    BvpOptions options;
};

/// Uniform mesh with `intervals` intervals on [ta, tb].
[[nodiscard]] std::vector<double> uniform_mesh(double ta, double tb, int intervals);

/// Collocation solution. Between nodes t_i and t_{i+1} the solution is the
/// degree-4 polynomial p(t_i + τh) = y_i + h Σ_l β_l(τ) f_l, where f_l are the
/// right-hand side values at the four Lobatto points and β_l = ∫₀^τ ℓ_l.
class BvpSolution {
public:
    BvpStatus status = BvpStatus::NewtonDiverged;
    std::vector<double> mesh;
    Mat y;                  ///< dim × nodes
    Mat slopes;             ///< dim × (3 intervals + 1): f at every Lobatto point in time order
    double est_residual = 0.0;
    double bc_residual = 0.0;
    int newton_iterations = 0;  ///< summed over all Newton solves
    int refinements = 0;
    int restarts = 0;

    [[nodiscard]] int dim() const { return static_cast<int>(y.rows()); }
    [[nodiscard]] int intervals() const { return static_cast<int>(mesh.size()) - 1; }
    [[nodiscard]] Vec at_start() const { return y.col(0); }
    [[nodiscard]] Vec at_end() const { return y.col(y.cols() - 1); }
    /// p(s); returns the stored node value exactly when s is a mesh node.
    [[nodiscard]] Vec interpolate(double s) const;
    /// p'(s).
    [[nodiscard]] Vec derivative(double s) const;

private:
    [[nodiscard]] int locate(double s) const;
};

[[nodiscard]] BvpSolution solve(const BvpProblem& problem);

/// Lobatto abscissae and the stage matrix a_kl = ∫₀^{c_k} ℓ_l.
struct LobattoTableau {
    double c[4];
    double a[4][4];
    double basis[4][4];         ///< ℓ_l(τ) = Σ_m basis[l][m] τ^m
    double residual_points[3];  ///< interior extrema of Π (τ - c_k)
};
[[nodiscard]] const LobattoTableau& lobatto_tableau();

struct OrderReport {
    std::vector<int> intervals;
    std::vector<double> step;
    std::vector<double> max_error;  ///< uniform error over dense samples
    double order = 0.0;             ///< NaN when the coarsest error is at rounding level
    bool exact = false;
};

/// Solves `problem` without adaptation on uniform meshes with the given
/// interval counts and fits log(max error) against log(h).
[[nodiscard]] OrderReport empirical_order(const BvpProblem& problem, const std::function<Vec(double)>& exact,
                                          const std::vector<int>& intervals, int samples = 4001);

/// Smooth BVP with a known solution and the meshes used to measure its order.
struct ManufacturedBvp {
    std::string name;
    BvpProblem problem;
    std::function<Vec(double)> exact;
    std::vector<int> intervals;
};

/// y'' = -y on [0, π/2] (y = sin s) and the nonlinear y1 = exp(sin s) on [0, 2].
[[nodiscard]] std::vector<ManufacturedBvp> manufactured_problems();

}  // namespace hjb
