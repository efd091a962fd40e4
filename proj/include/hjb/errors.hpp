#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "hjb/characteristics.hpp"
#include "hjb/grid.hpp"
#include "hjb/parallel.hpp"
#include "json.hpp"

namespace hjb {

/// Which per-level Lebesgue constants enter the error-bound coefficient.
enum class LebesgueSource { Bound, Numeric };

[[nodiscard]] std::string_view to_string(LebesgueSource source);
[[nodiscard]] LebesgueSource parse_lebesgue_source(std::string_view name);

/// S_l = Σ_{|i| = l, i ≥ 1} Λ_{i_1} ⋯ Λ_{i_d}, with lambda[k] = Λ_{k+1}.
/// Dynamic programming over compositions; needs lambda.size() ≥ l - d + 1.
[[nodiscard]] double composition_sum(const std::vector<double>& lambda, int d, int l);

struct BoundReport {
    NodeFamily family = NodeFamily::Classic;
    int d = 0;
    int q = 0;
    LebesgueSource source = LebesgueSource::Bound;
    std::vector<double> lambda;  ///< Λ_1 … Λ_{q-d+1}
    std::vector<int> levels;     ///< l = q-d+1 … q
    std::vector<double> S;       ///< S_l, aligned with levels
    std::vector<double> weights; ///< C(d-1, q-l), aligned with levels
    double coefficient = 0.0;    ///< Σ C(d-1, q-l) S_l; ‖e_BVP‖∞ < ε · coefficient

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Requires 1 ≤ d ≤ q.
[[nodiscard]] BoundReport error_bound_coefficient(NodeFamily family, int d, int q,
                                               LebesgueSource source = LebesgueSource::Bound);

struct RateReport {
    NodeFamily family = NodeFamily::Classic;
    int d = 0;
    std::vector<int> qs;
    std::vector<double> points;       ///< sparse grid sizes N
    std::vector<double> coefficients;
    /// Least-squares slope of log(coefficient) against log(log N).
    double fitted_degree = 0.0;
    double expected_degree = 0.0;     ///< d - 1
    bool monotone = false;            ///< coefficients nondecreasing in q

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Needs at least 4 values of q, all ≥ d.
[[nodiscard]] RateReport coefficient_growth_check(NodeFamily family, int d, int q_lo, int q_hi,
                                              LebesgueSource source = LebesgueSource::Bound);

struct Histogram {
    std::vector<double> edges;  ///< bins + 1 edges
    std::vector<std::size_t> counts;

    [[nodiscard]] std::string csv() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

/// `bins` uniform bins over [-max|v|, max|v|]; the last bin is closed.
[[nodiscard]] Histogram symmetric_histogram(const std::vector<double>& values, int bins = 50);

/// Distribution of the normalized point errors ε̄ = ε^i_j / ε.
/// Symmetric: U[-1, 1], i.e. errors uniform on [-ε, ε]. Unit: U[0, 1].
enum class EpsilonModel { Symmetric, Unit };

[[nodiscard]] std::string_view to_string(EpsilonModel model);
[[nodiscard]] EpsilonModel parse_epsilon_model(std::string_view name);

struct McReport {
    NodeFamily family = NodeFamily::Classic;
    int d = 0;
    int q = 0;
    std::uint64_t seed = 0;
    double scale = 1.0;
    EpsilonModel model = EpsilonModel::Symmetric;
    std::size_t grid_points = 0;
    std::vector<double> ratios;  ///< signed e_BVP / ε per evaluation point
    double max_ratio = 0.0;      ///< max |e_BVP| / ε
    double mean_abs_ratio = 0.0;
    Histogram histogram;

    [[nodiscard]] nlohmann::json to_json(bool include_ratios = false) const;
};

/// e_BVP / ε from the combination formula with ε̄ · scale drawn per grid
/// point, at `samples` uniform points of [0, 1]^d. The draws depend only on
/// (seed, index), so the report is identical for any worker count.
[[nodiscard]] McReport mc_ebvp(std::shared_ptr<const SparseGrid> grid, int samples, std::uint64_t seed,
                               double scale = 1.0, EpsilonModel model = EpsilonModel::Symmetric,
                               Execution execution = Execution::Parallel, int workers = 0);

struct ValidationSample {
    std::vector<double> point;  ///< physical grid-domain coordinates
    double interpolated = 0.0;
    double oracle = 0.0;        ///< NaN when the oracle solve failed
    double error = 0.0;         ///< interpolated - oracle
    BvpStatus status = BvpStatus::NewtonDiverged;
};

struct ValidationReport {
    std::uint64_t seed = 0;
    double tol = 0.0;
    std::size_t samples = 0;
    std::size_t failures = 0;  ///< oracle solves that did not converge
    bool valid = false;        ///< false when more than 5% of oracle solves fail
    double mae = 0.0;
    double relative_mae = 0.0; ///< mean |err| / max(|Ṽ|, 1e-12)
    double max_abs = 0.0;
    double mean_error = 0.0;   ///< signed mean
    double variance = 0.0;     ///< variance of |err| about the MAE
    Histogram histogram;       ///< signed errors
    std::vector<ValidationSample> records;

    [[nodiscard]] nlohmann::json to_json(bool include_records = false) const;
};

inline constexpr double kRelativeErrorFloor = 1e-12;
inline constexpr double kMaxOracleFailureFraction = 0.05;

/// Compares V̂ with tight-tolerance characteristic solves at `samples` uniform
/// points of the grid domain.
[[nodiscard]] ValidationReport validate(const ValueFunction& vf, int samples, double tight_tol, std::uint64_t seed,
                                        Execution execution = Execution::Parallel, int workers = 0);

/// Same, at the given physical points (rows of length grid_dim).
[[nodiscard]] ValidationReport validate_at(const ValueFunction& vf, const std::vector<std::vector<double>>& points,
                                           double tight_tol, Execution execution = Execution::Parallel,
                                           int workers = 0);

/// Uniform points of a box drawn from a counter-based stream.
[[nodiscard]] std::vector<std::vector<double>> uniform_points(const Box& box, int count, std::uint64_t seed);

}  // namespace hjb
