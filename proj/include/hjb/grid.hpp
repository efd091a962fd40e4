#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include "json.hpp"

namespace hjb {

/// Nested one-dimensional node sequences X^1 ⊂ X^2 ⊂ ... on [0, 1].
///
/// Classic:  N_1 = 2, X^i equidistant with 2^{i-1}+1 nodes.
/// Modified: X^1 = {1/2}, otherwise identical to Classic.
/// CGL:      X^1 = {1/2}, X^i Chebyshev-Gauss-Lobatto extrema mapped to [0, 1].
enum class NodeFamily { Classic, Modified, CGL };

[[nodiscard]] std::string_view to_string(NodeFamily family);
/// Accepts "classic", "modified", "cgl" (case-insensitive). Throws std::invalid_argument.
[[nodiscard]] NodeFamily parse_family(std::string_view name);
/// Piecewise-linear families use hat functions; CGL uses Lagrange polynomials.
[[nodiscard]] inline bool is_piecewise_linear(NodeFamily family) {
    return family != NodeFamily::CGL;
}

/// Deepest 1-D level with an int-sized node count.
inline constexpr int kMaxLevel = 30;

/// N_i, the number of nodes in X^i.
[[nodiscard]] int node_count(NodeFamily family, int level);
/// ΔN_i = |X^i \ X^{i-1}|.
[[nodiscard]] int delta_count(NodeFamily family, int level);

/// Level at which a node first appears, and its 1-based offset within ΔX^level.
struct NodeBirth {
    int level;
    int offset;
    auto operator<=>(const NodeBirth&) const = default;
};

/// Birth of the node at 0-based position `index` of X^level.
[[nodiscard]] NodeBirth node_birth(NodeFamily family, int level, int index);
/// 0-based position in X^level of the node with the given 1-based ΔX^level offset.
[[nodiscard]] int node_index_of_offset(NodeFamily family, int level, int offset);
/// Coordinate of the node with the given ΔX^level offset. Computed from the
/// birth coordinates only, so a node has the same double at every level.
[[nodiscard]] double delta_node(NodeFamily family, int level, int offset);

/// X^level, ascending.
[[nodiscard]] std::vector<double> nodes_1d(NodeFamily family, int level);
/// ΔX^level, ascending.
[[nodiscard]] std::vector<double> delta_nodes(NodeFamily family, int level);

using MultiIndex = std::vector<int>;

/// All d-part compositions of `total` with parts ≥ 1, in lexicographic order.
[[nodiscard]] std::vector<MultiIndex> compositions(int d, int total);

/// Axis-aligned box with componentwise affine maps to and from [0, 1]^d.
/// Points within 1e-12 (in reference units) outside the box are clamped onto
/// it; anything farther raises OutOfDomainError.
class Box {
public:
    Box() = default;
    Box(std::vector<double> lower, std::vector<double> upper);
    static Box unit(int d);

    [[nodiscard]] int dim() const { return static_cast<int>(lower_.size()); }
    [[nodiscard]] const std::vector<double>& lower() const { return lower_; }
    [[nodiscard]] const std::vector<double>& upper() const { return upper_; }
    [[nodiscard]] double width(int axis) const { return upper_[axis] - lower_[axis]; }

    [[nodiscard]] std::vector<double> to_phys(std::span<const double> ref) const;
    [[nodiscard]] std::vector<double> to_ref(std::span<const double> phys) const;
    [[nodiscard]] bool contains(std::span<const double> phys, double tol = 1e-12) const;
    /// Projects onto the box; returns true if any coordinate moved.
    bool clamp(std::span<double> phys) const;
    /// Box with every half-width multiplied by `factor` about the same center.
    [[nodiscard]] Box inflated(double factor) const;

    bool operator==(const Box&) const = default;

private:
    std::vector<double> lower_;
    std::vector<double> upper_;
};

void to_json(nlohmann::json& j, const Box& box);
void from_json(const nlohmann::json& j, Box& box);

/// View of one enumerated sparse-grid point.
struct GridPoint {
    std::size_t id;
    std::span<const int> levels;
    std::span<const int> offsets;  ///< 1-based, offsets[k] ≤ ΔN_{levels[k]}
    std::span<const double> ref;
    std::span<const double> phys;
};

/// Smolyak sparse grid G^q = ⋃_{|i| ≤ q} ΔX^{i_1} × ... × ΔX^{i_d}.
///
/// Points are ordered lexicographically by (|i|, i, j), so all cells of one
/// level sum |i| are contiguous and appear after every coarser cell. The
/// object is immutable after construction.
class SparseGrid {
public:
    struct Cell {
        MultiIndex levels;
        std::size_t first;
        std::size_t count;
    };

    SparseGrid(NodeFamily family, int d, int q, Box domain);

    [[nodiscard]] NodeFamily family() const { return family_; }
    [[nodiscard]] int dim() const { return d_; }
    [[nodiscard]] int depth() const { return q_; }
    /// Highest one-dimensional level used on any axis: q - d + 1.
    [[nodiscard]] int max_level() const { return q_ - d_ + 1; }
    [[nodiscard]] const Box& domain() const { return domain_; }
    [[nodiscard]] std::size_t size() const { return level_sum_.size(); }

    [[nodiscard]] GridPoint point(std::size_t id) const;
    [[nodiscard]] int level_sum(std::size_t id) const { return level_sum_[id]; }
    [[nodiscard]] std::span<const int> levels(std::size_t id) const;
    [[nodiscard]] std::span<const int> offsets(std::size_t id) const;
    [[nodiscard]] std::span<const double> ref(std::size_t id) const;
    [[nodiscard]] std::span<const double> phys(std::size_t id) const;
    [[nodiscard]] const std::vector<Cell>& cells() const { return cells_; }

    /// Id of the point with the given levels and 1-based offsets, if present.
    [[nodiscard]] std::optional<std::size_t> find(std::span<const int> levels,
                                                  std::span<const int> offsets) const;

    /// Half-open id range [begin, end) of points with |i| == l.
    [[nodiscard]] std::pair<std::size_t, std::size_t> level_range(int l) const;

private:
    NodeFamily family_;
    int d_;
    int q_;
    Box domain_;
    std::vector<int> levels_;
    std::vector<int> offsets_;
    std::vector<int> level_sum_;
    std::vector<double> ref_;
    std::vector<double> phys_;
    std::vector<Cell> cells_;
    std::map<MultiIndex, std::size_t> cell_of_;
};

/// Throws std::invalid_argument unless q ≥ d ≥ 1 and the box has dimension d.
[[nodiscard]] SparseGrid build_grid(NodeFamily family, int d, int q, Box domain);
[[nodiscard]] SparseGrid build_grid(NodeFamily family, int d, int q);

/// |G^q| from the composition sum Σ_{d ≤ l ≤ q} Σ_{|i|=l} Π ΔN_{i_k},
/// evaluated without enumerating points.
[[nodiscard]] std::uint64_t sparse_size(NodeFamily family, int d, int q);

/// Size N^d of the full tensor grid with N = N_{q-d+1} nodes per axis.
[[nodiscard]] boost::multiprecision::cpp_int dense_size(NodeFamily family, int d, int q);

/// {family, d, q, domain, count}.
[[nodiscard]] nlohmann::json describe(const SparseGrid& grid);

}  // namespace hjb
