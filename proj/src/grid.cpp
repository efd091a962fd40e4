#include "hjb/grid.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "hjb/exceptions.hpp"

namespace hjb {

namespace {

void check_level(int level) {
    if (level < 1 || level > kMaxLevel)
        throw std::invalid_argument("node level must lie in [1, " + std::to_string(kMaxLevel) + "], got " +
                                    std::to_string(level));
}

// Coordinate of 0-based position k in X^level, level ≥ 2 (both families agree on
// the dyadic layout; only the map to [0, 1] differs).
double dyadic_node(NodeFamily family, int level, int k) {
    const double denom = std::ldexp(1.0, level - 1);
    if (family == NodeFamily::CGL) {
        // (1 - cos θ)/2 written as sin²(θ/2): same value, no cancellation near 0.
        const double s = std::sin(static_cast<double>(k) * std::numbers::pi / (2.0 * denom));
        return s * s;
    }
    return static_cast<double>(k) / denom;
}

}  // namespace

std::string_view to_string(NodeFamily family) {
    switch (family) {
        case NodeFamily::Classic: return "classic";
        case NodeFamily::Modified: return "modified";
        case NodeFamily::CGL: return "cgl";
    }
    return "unknown";
}

NodeFamily parse_family(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "classic") return NodeFamily::Classic;
    if (lower == "modified") return NodeFamily::Modified;
    if (lower == "cgl") return NodeFamily::CGL;
    throw std::invalid_argument("unknown node family '" + std::string(name) + "'");
}

int node_count(NodeFamily family, int level) {
    check_level(level);
    if (level == 1) return family == NodeFamily::Classic ? 2 : 1;
    return (1 << (level - 1)) + 1;
}

int delta_count(NodeFamily family, int level) {
    check_level(level);
    if (level == 1) return node_count(family, 1);
    if (level == 2) return family == NodeFamily::Classic ? 1 : 2;
    return 1 << (level - 2);
}

NodeBirth node_birth(NodeFamily family, int level, int index) {
    check_level(level);
    const int n = node_count(family, level);
    if (index < 0 || index >= n) throw std::out_of_range("node index out of range");
    if (level == 1) return {1, index + 1};
    const int last = n - 1;
    if (index == 0 || index == last) {
        const int endpoint_level = family == NodeFamily::Classic ? 1 : 2;
        return {endpoint_level, index == 0 ? 1 : 2};
    }
    const int shift = std::countr_zero(static_cast<unsigned>(index));
    const int odd = index >> shift;
    const int born = level - shift;
    if (born == 2 && family != NodeFamily::Classic) return {1, 1};  // the midpoint
    return {born, (odd + 1) / 2};
}

int node_index_of_offset(NodeFamily family, int level, int offset) {
    if (offset < 1 || offset > delta_count(family, level)) {
        throw std::out_of_range("delta offset out of range");
    }
    if (level == 1) return offset - 1;
    if (level == 2 && family != NodeFamily::Classic) return offset == 1 ? 0 : 2;
    return 2 * offset - 1;
}

double delta_node(NodeFamily family, int level, int offset) {
    const int k = node_index_of_offset(family, level, offset);
    if (level == 1) {
        if (family == NodeFamily::Classic) return static_cast<double>(k);
        return 0.5;
    }
    return dyadic_node(family, level, k);
}

std::vector<double> nodes_1d(NodeFamily family, int level) {
    const int n = node_count(family, level);
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) {
        const NodeBirth b = node_birth(family, level, k);
        out[k] = delta_node(family, b.level, b.offset);
    }
    return out;
}

std::vector<double> delta_nodes(NodeFamily family, int level) {
    const int n = delta_count(family, level);
    std::vector<double> out(n);
    for (int j = 1; j <= n; ++j) out[j - 1] = delta_node(family, level, j);
    return out;
}

std::vector<MultiIndex> compositions(int d, int total) {
    std::vector<MultiIndex> out;
    if (d < 1 || total < d) return out;
    MultiIndex current(d, 1);
    // Recursive fill in lexicographic order: first component smallest first.
    auto fill = [&](auto&& self, int axis, int remaining) -> void {
        if (axis == d - 1) {
            current[axis] = remaining;
            out.push_back(current);
            return;
        }
        const int slots_after = d - 1 - axis;
        for (int v = 1; v <= remaining - slots_after; ++v) {
            current[axis] = v;
            self(self, axis + 1, remaining - v);
        }
    };
    fill(fill, 0, total);
    return out;
}

// ---------------------------------------------------------------- Box

Box::Box(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size()) throw std::invalid_argument("box bounds differ in dimension");
    for (std::size_t k = 0; k < lower_.size(); ++k) {
        if (!(lower_[k] < upper_[k])) {
            throw std::invalid_argument("box axis " + std::to_string(k) + " has lower >= upper");
        }
    }
}

Box Box::unit(int d) { return Box(std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)); }

std::vector<double> Box::to_phys(std::span<const double> ref) const {
    if (static_cast<int>(ref.size()) != dim()) throw std::invalid_argument("point dimension mismatch");
    std::vector<double> out(ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
        double r = ref[k];
        if (!(r >= -1e-12 && r <= 1.0 + 1e-12)) {
            throw OutOfDomainError("reference coordinate " + std::to_string(r) + " on axis " +
                                   std::to_string(k) + " outside [0, 1]");
        }
        r = std::clamp(r, 0.0, 1.0);
        out[k] = r == 1.0 ? upper_[k] : lower_[k] + r * (upper_[k] - lower_[k]);
    }
    return out;
}

std::vector<double> Box::to_ref(std::span<const double> phys) const {
    if (static_cast<int>(phys.size()) != dim()) throw std::invalid_argument("point dimension mismatch");
    std::vector<double> out(phys.size());
    for (std::size_t k = 0; k < phys.size(); ++k) {
        const double r = (phys[k] - lower_[k]) / (upper_[k] - lower_[k]);
        if (!(r >= -1e-12 && r <= 1.0 + 1e-12)) {
            throw OutOfDomainError("coordinate " + std::to_string(phys[k]) + " on axis " +
                                   std::to_string(k) + " outside [" + std::to_string(lower_[k]) +
                                   ", " + std::to_string(upper_[k]) + "]");
        }
        out[k] = std::clamp(r, 0.0, 1.0);
    }
    return out;
}

bool Box::contains(std::span<const double> phys, double tol) const {
    if (static_cast<int>(phys.size()) != dim()) return false;
    for (std::size_t k = 0; k < phys.size(); ++k) {
        const double slack = tol * (upper_[k] - lower_[k]);
        if (!(phys[k] >= lower_[k] - slack && phys[k] <= upper_[k] + slack)) return false;
    }
    return true;
}

bool Box::clamp(std::span<double> phys) const {
    bool moved = false;
    for (std::size_t k = 0; k < phys.size(); ++k) {
        const double c = std::clamp(phys[k], lower_[k], upper_[k]);
        moved = moved || c != phys[k];
        phys[k] = c;
    }
    return moved;
}

Box Box::inflated(double factor) const {
    std::vector<double> lo(lower_.size()), hi(upper_.size());
    for (std::size_t k = 0; k < lower_.size(); ++k) {
        const double mid = 0.5 * (lower_[k] + upper_[k]);
        const double half = 0.5 * (upper_[k] - lower_[k]) * factor;
        lo[k] = mid - half;
        hi[k] = mid + half;
    }
    return Box(std::move(lo), std::move(hi));
}

void to_json(nlohmann::json& j, const Box& box) {
    j = nlohmann::json::array();
    for (int k = 0; k < box.dim(); ++k) j.push_back({box.lower()[k], box.upper()[k]});
}

void from_json(const nlohmann::json& j, Box& box) {
    std::vector<double> lo, hi;
    for (const auto& axis : j) {
        if (!axis.is_array() || axis.size() != 2) throw std::invalid_argument("box axis must be [lo, hi]");
        lo.push_back(axis[0].get<double>());
        hi.push_back(axis[1].get<double>());
    }
    box = Box(std::move(lo), std::move(hi));
}

// ---------------------------------------------------------------- SparseGrid

SparseGrid::SparseGrid(NodeFamily family, int d, int q, Box domain)
    : family_(family), d_(d), q_(q), domain_(std::move(domain)) {
    if (d < 1) throw std::invalid_argument("grid dimension must be >= 1");
    if (q < d) throw std::invalid_argument("grid depth q must be >= d (q=" + std::to_string(q) +
                                           ", d=" + std::to_string(d) + ")");
    if (domain_.dim() != d) throw std::invalid_argument("domain dimension does not match d");

    const std::size_t n = sparse_size(family, d, q);
    levels_.reserve(n * d);
    offsets_.reserve(n * d);
    ref_.reserve(n * d);
    level_sum_.reserve(n);

    // Per-axis node coordinate tables for every (level, offset).
    std::vector<std::vector<double>> coords(max_level() + 1);
    for (int l = 1; l <= max_level(); ++l) coords[l] = delta_nodes(family, l);

    std::vector<int> offset(d);
    for (int l = d; l <= q; ++l) {
        for (const MultiIndex& mi : compositions(d, l)) {
            Cell cell{mi, level_sum_.size(), 0};
            std::fill(offset.begin(), offset.end(), 1);
            while (true) {
                for (int k = 0; k < d; ++k) {
                    levels_.push_back(mi[k]);
                    offsets_.push_back(offset[k]);
                    ref_.push_back(coords[mi[k]][offset[k] - 1]);
                }
                level_sum_.push_back(l);
                ++cell.count;
                // Odometer, last axis fastest.
                int axis = d - 1;
                while (axis >= 0 && offset[axis] == delta_count(family, mi[axis])) {
                    offset[axis] = 1;
                    --axis;
                }
                if (axis < 0) break;
                ++offset[axis];
            }
            cell_of_.emplace(mi, cells_.size());
            cells_.push_back(std::move(cell));
        }
    }

    phys_.resize(ref_.size());
    for (std::size_t id = 0; id < size(); ++id) {
        const auto p = domain_.to_phys(ref(id));
        std::copy(p.begin(), p.end(), phys_.begin() + static_cast<std::ptrdiff_t>(id * d));
    }
}

GridPoint SparseGrid::point(std::size_t id) const {
    return GridPoint{id, levels(id), offsets(id), ref(id), phys(id)};
}

std::span<const int> SparseGrid::levels(std::size_t id) const {
    return {levels_.data() + id * d_, static_cast<std::size_t>(d_)};
}
std::span<const int> SparseGrid::offsets(std::size_t id) const {
    return {offsets_.data() + id * d_, static_cast<std::size_t>(d_)};
}
std::span<const double> SparseGrid::ref(std::size_t id) const {
    return {ref_.data() + id * d_, static_cast<std::size_t>(d_)};
}
std::span<const double> SparseGrid::phys(std::size_t id) const {
    return {phys_.data() + id * d_, static_cast<std::size_t>(d_)};
}

std::optional<std::size_t> SparseGrid::find(std::span<const int> levels,
                                            std::span<const int> offsets) const {
    if (static_cast<int>(levels.size()) != d_ || static_cast<int>(offsets.size()) != d_) return std::nullopt;
    const auto it = cell_of_.find(MultiIndex(levels.begin(), levels.end()));
    if (it == cell_of_.end()) return std::nullopt;
    const Cell& cell = cells_[it->second];
    std::size_t local = 0;
    for (int k = 0; k < d_; ++k) {
        const int radix = delta_count(family_, levels[k]);
        if (offsets[k] < 1 || offsets[k] > radix) return std::nullopt;
        local = local * static_cast<std::size_t>(radix) + static_cast<std::size_t>(offsets[k] - 1);
    }
    return cell.first + local;
}

std::pair<std::size_t, std::size_t> SparseGrid::level_range(int l) const {
    const auto lo = std::lower_bound(level_sum_.begin(), level_sum_.end(), l);
    const auto hi = std::upper_bound(level_sum_.begin(), level_sum_.end(), l);
    return {static_cast<std::size_t>(lo - level_sum_.begin()),
            static_cast<std::size_t>(hi - level_sum_.begin())};
}

SparseGrid build_grid(NodeFamily family, int d, int q, Box domain) {
    return SparseGrid(family, d, q, std::move(domain));
}

SparseGrid build_grid(NodeFamily family, int d, int q) { return SparseGrid(family, d, q, Box::unit(d)); }

std::uint64_t sparse_size(NodeFamily family, int d, int q) {
    if (d < 1 || q < d) throw std::invalid_argument("sparse_size requires q >= d >= 1");
    // Coefficients of (Σ_i ΔN_i t^i)^d up to t^q.
    std::vector<std::uint64_t> poly(q + 1, 0);
    poly[0] = 1;
    for (int axis = 0; axis < d; ++axis) {
        std::vector<std::uint64_t> next(q + 1, 0);
        for (int a = 0; a <= q; ++a) {
            if (poly[a] == 0) continue;
            for (int i = 1; a + i <= q; ++i) {
                next[a + i] += poly[a] * static_cast<std::uint64_t>(delta_count(family, i));
            }
        }
        poly = std::move(next);
    }
    std::uint64_t total = 0;
    for (int l = d; l <= q; ++l) total += poly[l];
    return total;
}

boost::multiprecision::cpp_int dense_size(NodeFamily family, int d, int q) {
    if (d < 1 || q < d) throw std::invalid_argument("dense_size requires q >= d >= 1");
    const int top = q - d + 1;
    boost::multiprecision::cpp_int n = node_count(family, 1);
    if (top > 1) n = (boost::multiprecision::cpp_int(1) << (top - 1)) + 1;
    boost::multiprecision::cpp_int total = 1;
    for (int k = 0; k < d; ++k) total *= n;
    return total;
}

nlohmann::json describe(const SparseGrid& grid) {
    return {{"family", to_string(grid.family())},
            {"d", grid.dim()},
            {"q", grid.depth()},
            {"domain", grid.domain()},
            {"count", grid.size()}};
}

}  // namespace hjb
