#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "hjb/grid.hpp"
#include "hjb/parallel.hpp"
#include "json.hpp"

namespace hjb {

// ---------------------------------------------------------------- 1-D bases

/// u^level_k(x): basis of the node at 0-based position `index` of X^level.
/// Hat functions for Classic/Modified (Modified level 1 is the constant 1),
/// Lagrange polynomials over X^level for CGL.
[[nodiscard]] double eval_node_basis(NodeFamily family, int level, int index, double x);

/// a^level_offset(x): basis of the `offset`-th (1-based) node of ΔX^level.
[[nodiscard]] double eval_basis(NodeFamily family, int level, int offset, double x);

/// Writes u^level_k(x) for every k into `out` (size N_level). CGL uses the
/// barycentric form with the closed-form Chebyshev-Lobatto weights; an x equal
/// to a node short-circuits to the Kronecker values.
void node_basis_values(NodeFamily family, int level, double x, std::span<double> out);

/// Λ_level = max_x Σ_k |u^level_k(x)|. Exactly 1 for the piecewise-linear
/// families. For CGL: ≥ 4096 samples per node interval, then a golden-section
/// refinement of the best sample in each interval. Results are cached.
[[nodiscard]] double lebesgue_constant(NodeFamily family, int level);

/// Closed-form upper bound (2/π)(log N + γ + log(4/π) + log 2), N = N_level - 1,
/// for CGL levels ≥ 2; 1 otherwise.
[[nodiscard]] double lebesgue_bound(NodeFamily family, int level);

// ---------------------------------------------------------------- hierarchical

struct FitOptions {
    /// Points flagged here get surplus 0: the interpolant takes the value the
    /// coarser levels predict there instead of a sample. Empty means none.
    std::vector<bool> exclude;
    Execution execution = Execution::Parallel;
    int workers = 0;  ///< 0: default_workers()
};

/// Sparse-grid interpolant stored as hierarchical surpluses, one row of
/// `components()` values per grid point. Immutable; evaluation is reentrant.
class Interpolant {
public:
    Interpolant(std::shared_ptr<const SparseGrid> grid, std::size_t components,
                std::vector<double> surpluses);

    [[nodiscard]] const SparseGrid& grid() const { return *grid_; }
    [[nodiscard]] const std::shared_ptr<const SparseGrid>& grid_ptr() const { return grid_; }
    [[nodiscard]] std::size_t components() const { return components_; }
    [[nodiscard]] std::span<const double> surplus(std::size_t id) const;
    [[nodiscard]] const std::vector<double>& surpluses() const { return surpluses_; }

    /// Evaluates every component at a point of [0, 1]^d.
    [[nodiscard]] std::vector<double> eval_ref(std::span<const double> ref) const;
    /// Evaluates at a point of the grid's physical box.
    [[nodiscard]] std::vector<double> eval(std::span<const double> phys) const;
    [[nodiscard]] double eval_scalar(std::span<const double> phys) const { return eval(phys).front(); }

    /// Batch evaluation at reference points (row-major, d per point). Returns
    /// components() values per point.
    [[nodiscard]] std::vector<double> eval_ref_many(std::span<const double> refs, Execution exec,
                                                    int workers = 0) const;

private:
    friend Interpolant fit_hierarchical(std::shared_ptr<const SparseGrid>, std::span<const double>,
                                        std::size_t, const FitOptions&);
    void accumulate(std::span<const double> ref, std::span<double> out) const;

    std::shared_ptr<const SparseGrid> grid_;
    std::size_t components_;
    std::vector<double> surpluses_;
    std::vector<int> columns_;       ///< per point and axis: flat (level, offset) column
    std::vector<int> level_start_;   ///< first column of each level
};

/// Computes w^i_j = f(x^i_j) - I^{|i|-1}(f)(x^i_j) level by level in ascending
/// |i|. `samples` holds `components` values per grid point (row-major). Points
/// within one level sum are independent, so each level pass is a parallel loop.
/// Throws DomainError listing every non-excluded point with a non-finite sample.
[[nodiscard]] Interpolant fit_hierarchical(std::shared_ptr<const SparseGrid> grid,
                                           std::span<const double> samples, std::size_t components = 1,
                                           const FitOptions& options = {});

[[nodiscard]] nlohmann::json to_json(const Interpolant& interpolant);

// ---------------------------------------------------------------- combination technique

/// Scalar interpolant in the combination form
///   Σ_{q-d+1 ≤ |i| ≤ q} (-1)^{q-|i|} C(d-1, q-|i|) U^{i_1} ⊗ ... ⊗ U^{i_d}(f),
/// each term a full tensor-product interpolant on X^{i_1} × ... × X^{i_d}.
class CombinationInterpolant {
public:
    CombinationInterpolant(std::shared_ptr<const SparseGrid> grid, std::span<const double> samples);

    [[nodiscard]] double eval_ref(std::span<const double> ref) const;
    [[nodiscard]] std::vector<double> eval_ref_many(std::span<const double> refs, Execution exec,
                                                    int workers = 0) const;
    /// Σ over terms of the tensor sizes: the multiply-add count of one evaluation.
    [[nodiscard]] std::size_t work_per_point() const { return values_.size(); }

    struct Term {
        MultiIndex levels;
        double coefficient;
        std::size_t first;  ///< offset of this term's tensor in the value buffer
    };
    [[nodiscard]] const std::vector<Term>& terms() const { return terms_; }

private:
    std::shared_ptr<const SparseGrid> grid_;
    std::vector<Term> terms_;
    std::vector<double> values_;
};

/// Grid point ids of a full tensor grid X^{i_1} × ... × X^{i_d} in row-major
/// order (last axis fastest). Every tensor node of a combination term lies in
/// the sparse grid.
[[nodiscard]] std::vector<std::size_t> tensor_point_ids(const SparseGrid& grid, const MultiIndex& levels);

/// One-shot evaluation of the combination formula at a reference point.
[[nodiscard]] double eval_combination(std::shared_ptr<const SparseGrid> grid,
                                      std::span<const double> samples, std::span<const double> ref);

}  // namespace hjb
