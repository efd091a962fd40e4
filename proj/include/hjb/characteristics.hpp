#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hjb/bvp.hpp"
#include "hjb/exceptions.hpp"
#include "hjb/grid.hpp"
#include "hjb/interp.hpp"
#include "hjb/parallel.hpp"
#include "json.hpp"

namespace hjb {

/// Finite-horizon optimal control problem
///   min ∫_t^T L(s, x, u) ds + h(x(T)),   ẋ = f(s, x, u),
/// with Hamiltonian H = L + λᵀ f and a closed-form minimizer u_star.
struct ControlProblem {
    using Dynamics = std::function<void(double t, const Vec& x, const Vec& u, Vec& dx)>;
    using Running = std::function<double(double t, const Vec& x, const Vec& u)>;
    using Terminal = std::function<double(const Vec& x)>;
    using TerminalGradient = std::function<Vec(const Vec& x)>;
    using Minimizer = std::function<Vec(double t, const Vec& x, const Vec& lambda)>;
    using HamiltonianGradient = std::function<void(double t, const Vec& x, const Vec& lambda, const Vec& u, Vec& hx)>;

    std::string id;
    int n = 0;  ///< states
    int m = 0;  ///< controls
    double horizon = 1.0;
    /// Grid domain. With time_in_grid, axis 0 is time and the rest is the state box.
    Box domain = Box::unit(1);
    bool time_in_grid = false;
    std::vector<std::string> state_labels;
    std::vector<std::string> control_labels;

    Dynamics f;
    Running L;
    Terminal h;
    TerminalGradient h_x;
    Minimizer u_star;
    HamiltonianGradient H_x;  ///< optional; central differences of H when empty

    /// Optional per-initial-state specialization, e.g. a target frozen at x0.
    std::function<ControlProblem(const Vec& x0)> anchored;

    nlohmann::json params = nlohmann::json::object();

    [[nodiscard]] int grid_dim() const { return n + (time_in_grid ? 1 : 0); }
    /// State-space part of the domain.
    [[nodiscard]] Box state_box() const;
    [[nodiscard]] double hamiltonian(double t, const Vec& x, const Vec& lambda, const Vec& u) const;
    /// ∂H/∂x at (t, x, λ, u): the closed form if present, else central differences.
    void hamiltonian_gradient(double t, const Vec& x, const Vec& lambda, const Vec& u, Vec& hx) const;
    /// Splits a grid point into (t0, x0).
    [[nodiscard]] std::pair<double, Vec> split_point(std::span<const double> phys) const;
};

/// Central-difference ∂H/∂u, used to spot-check u_star.
[[nodiscard]] Vec hamiltonian_control_gradient(const ControlProblem& problem, double t, const Vec& x,
                                               const Vec& lambda, const Vec& u);

struct CharacteristicOptions {
    double tol = 1e-8;
    int initial_intervals = 10;
    int max_nodes = 10000;
    /// Optional warm start (x, λ, z) at time s. Off by default: every point
    /// starts cold so records do not depend on their neighbors.
    std::function<Vec(double s)> warm_start;
    /// After a cold-start Newton failure, retry by horizon continuation from a
    /// first stage of length 2^-k (T - t0); 0 disables.
    int continuation_stages = 4;
};

/// BVP in y = (x, λ, z) on [t0, T]:
///   ẋ = f(s, x, u*),  λ̇ = -H_x(s, x, λ, u*),  ż = L(s, x, u*),
///   x(t0) = x0,  λ(T) = h_x(x(T)),  z(t0) = 0.
[[nodiscard]] BvpProblem assemble_bvp(const ControlProblem& problem, double t0, const Vec& x0,
                                      const CharacteristicOptions& options = {});

struct CharacteristicRecord {
    std::size_t id = 0;
    double V = 0.0;
    Vec lambda;
    BvpStatus status = BvpStatus::NewtonDiverged;
    double residual = 0.0;
    int mesh = 0;

    [[nodiscard]] bool ok() const { return status == BvpStatus::Converged; }
};

struct PointSolution {
    CharacteristicRecord record;
    std::optional<BvpSolution> trajectory;  ///< absent for trivial t0 = T points
};

/// Solves the characteristic BVP from (t0, x0). V = z(T) + h(x(T)) and λ(t0)
/// are filled only on convergence; failures keep V = NaN.
[[nodiscard]] PointSolution solve_point(const ControlProblem& problem, double t0, const Vec& x0,
                                        const CharacteristicOptions& options = {});

/// Same, for a point of the problem's grid domain.
[[nodiscard]] PointSolution solve_grid_point(const ControlProblem& problem, std::span<const double> phys,
                                             const CharacteristicOptions& options = {});

struct GridSolution {
    nlohmann::json header;
    std::shared_ptr<const SparseGrid> grid;
    std::vector<CharacteristicRecord> records;  ///< indexed by grid point id

    [[nodiscard]] std::vector<std::size_t> failures() const;
};

/// More failures than the threshold allows. Carries the complete result.
class SweepError : public DomainError {
public:
    SweepError(const std::string& what, std::shared_ptr<GridSolution> solution)
        : DomainError(what), solution_(std::move(solution)) {}
    [[nodiscard]] const GridSolution& solution() const { return *solution_; }

private:
    std::shared_ptr<GridSolution> solution_;
};

struct SweepOptions {
    CharacteristicOptions characteristic;
    Execution execution = Execution::Parallel;
    int workers = 0;
    double failure_threshold = 0.01;
};

/// Solves every grid point independently. Results are keyed by point id and
/// do not depend on the worker count or scheduling.
[[nodiscard]] GridSolution sweep(const ControlProblem& problem, std::shared_ptr<const SparseGrid> grid,
                                 const SweepOptions& options = {});

/// Solves only the listed grid points, returning records in the order given.
[[nodiscard]] std::vector<CharacteristicRecord> solve_points(const ControlProblem& problem, const SparseGrid& grid,
                                                             std::span<const std::size_t> ids,
                                                             const SweepOptions& options = {});

/// Header fields describing a sweep (no timestamp or version; callers add them).
[[nodiscard]] nlohmann::json sweep_header(const ControlProblem& problem, const SparseGrid& grid, double tol);

/// Interpolants of V and λ over the sweep grid.
struct ValueFunction {
    std::shared_ptr<const ControlProblem> problem;
    Interpolant value;
    Interpolant costate;  ///< n components

    [[nodiscard]] double V(double t, const Vec& x) const;
    [[nodiscard]] Vec lambda(double t, const Vec& x) const;
};

/// Fits V and λ. Failed points are excluded from the fit; throws DomainError
/// when any failure sits at a level sum ≤ d + 1.
[[nodiscard]] ValueFunction fit_solution(std::shared_ptr<const ControlProblem> problem, const GridSolution& solution,
                                         const FitOptions& options = {});

/// u = u_star(t, x, λ̂(t, x)). Throws OutOfDomainError outside the grid box.
[[nodiscard]] Vec feedback(const ValueFunction& vf, double t, const Vec& x);

// ---------------------------------------------------------------- dataset IO

/// Writes the header line and one record per line. Doubles use the shortest
/// round-trip form; failed values are null.
void write_dataset(std::ostream& out, const GridSolution& solution);
void write_dataset(const std::filesystem::path& path, const GridSolution& solution);
/// Records only, one per line: the part that must not depend on scheduling.
[[nodiscard]] std::string dataset_body(const GridSolution& solution);
[[nodiscard]] nlohmann::ordered_json record_to_json(const CharacteristicRecord& record, const SparseGrid& grid);

/// Parses a dataset and rebuilds its grid from the header.
[[nodiscard]] GridSolution read_dataset(std::istream& in);
[[nodiscard]] GridSolution read_dataset(const std::filesystem::path& path);

}  // namespace hjb
