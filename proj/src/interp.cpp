#include "hjb/interp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "hjb/exceptions.hpp"

namespace hjb {

namespace {

constexpr int kMaxCachedLevel = 16;

struct NodeCache {
    // [family][level] -> X^level
    std::array<std::array<std::vector<double>, kMaxCachedLevel + 1>, 3> nodes;
    std::array<std::array<std::vector<double>, kMaxCachedLevel + 1>, 3> weights;

    NodeCache() {
        for (const NodeFamily family : {NodeFamily::Classic, NodeFamily::Modified, NodeFamily::CGL}) {
            const auto f = static_cast<std::size_t>(family);
            for (int l = 1; l <= kMaxCachedLevel; ++l) {
                nodes[f][l] = nodes_1d(family, l);
                const std::size_t n = nodes[f][l].size();
                auto& w = weights[f][l];
                w.assign(n, 1.0);
                for (std::size_t k = 0; k < n; ++k) {
                    w[k] = (k % 2 == 0 ? 1.0 : -1.0) * ((k == 0 || k + 1 == n) ? 0.5 : 1.0);
                }
            }
        }
    }
};

const NodeCache& node_cache() {
    static const NodeCache cache;
    return cache;
}

const std::vector<double>& cached_nodes(NodeFamily family, int level) {
    if (level < 1 || level > kMaxCachedLevel) throw std::out_of_range("level beyond supported range");
    return node_cache().nodes[static_cast<std::size_t>(family)][level];
}

const std::vector<double>& cgl_weights(int level) {
    return node_cache().weights[static_cast<std::size_t>(NodeFamily::CGL)][level];
}

double hat(NodeFamily family, int level, int index, double x) {
    if (family == NodeFamily::Modified && level == 1) return 1.0;
    const auto& nodes = cached_nodes(family, level);
    const double h = 1.0 / static_cast<double>(nodes.size() - 1);
    const double t = std::abs(x - nodes[index]) / h;
    return t >= 1.0 ? 0.0 : 1.0 - t;
}

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(r);
}

double lebesgue_function(int level, double x) {
    const auto& nodes = cached_nodes(NodeFamily::CGL, level);
    const auto& w = cgl_weights(level);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (x == nodes[k]) return 1.0;
        const double t = w[k] / (x - nodes[k]);
        num += std::abs(t);
        den += t;
    }
    return num / std::abs(den);
}

double cgl_lebesgue_numeric(int level) {
    if (level == 1) return 1.0;
    const auto& nodes = cached_nodes(NodeFamily::CGL, level);
    const std::size_t intervals = nodes.size() - 1;
    constexpr int kSamples = 4096;
    double best = 1.0;
    // The Lebesgue function is symmetric about 1/2; scan the left half.
    for (std::size_t m = 0; m < (intervals + 1) / 2; ++m) {
        const double a = nodes[m];
        const double b = nodes[m + 1];
        const double step = (b - a) / (kSamples + 1);
        double local_best = 0.0;
        int arg = 1;
        for (int s = 1; s <= kSamples; ++s) {
            const double v = lebesgue_function(level, a + s * step);
            if (v > local_best) {
                local_best = v;
                arg = s;
            }
        }
        // Golden-section refinement inside the bracket around the best sample.
        double lo = a + (arg - 1) * step;
        double hi = a + (arg + 1) * step;
        const double g = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = hi - g * (hi - lo);
        double d = lo + g * (hi - lo);
        double fc = lebesgue_function(level, c);
        double fd = lebesgue_function(level, d);
        for (int it = 0; it < 60 && hi - lo > 1e-15; ++it) {
            if (fc > fd) {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = lebesgue_function(level, c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = lebesgue_function(level, d);
            }
        }
        best = std::max({best, local_best, fc, fd});
    }
    return best;
}

}  // namespace

// ---------------------------------------------------------------- 1-D bases

void node_basis_values(NodeFamily family, int level, double x, std::span<double> out) {
    const auto& nodes = cached_nodes(family, level);
    if (out.size() != nodes.size()) throw std::invalid_argument("basis output size mismatch");
    if (is_piecewise_linear(family)) {
        for (std::size_t k = 0; k < nodes.size(); ++k) out[k] = hat(family, level, static_cast<int>(k), x);
        return;
    }
    if (nodes.size() == 1) {
        out[0] = 1.0;
        return;
    }
    const auto& w = cgl_weights(level);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (x == nodes[k]) {
            std::fill(out.begin(), out.end(), 0.0);
            out[k] = 1.0;
            return;
        }
    }
    double den = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        out[k] = w[k] / (x - nodes[k]);
        den += out[k];
    }
    for (double& v : out) v /= den;
}

double eval_node_basis(NodeFamily family, int level, int index, double x) {
    if (is_piecewise_linear(family)) return hat(family, level, index, x);
    std::vector<double> values(cached_nodes(family, level).size());
    node_basis_values(family, level, x, values);
    return values.at(static_cast<std::size_t>(index));
}

double eval_basis(NodeFamily family, int level, int offset, double x) {
    return eval_node_basis(family, level, node_index_of_offset(family, level, offset), x);
}

double lebesgue_constant(NodeFamily family, int level) {
    if (level < 1) throw std::invalid_argument("level must be >= 1");
    if (is_piecewise_linear(family)) return 1.0;
    static std::mutex mutex;
    static std::map<int, double> cache;
    {
        std::lock_guard lock(mutex);
        if (const auto it = cache.find(level); it != cache.end()) return it->second;
    }
    const double value = cgl_lebesgue_numeric(level);
    std::lock_guard lock(mutex);
    cache.emplace(level, value);
    return value;
}

double lebesgue_bound(NodeFamily family, int level) {
    if (level < 1) throw std::invalid_argument("level must be >= 1");
    if (is_piecewise_linear(family) || level == 1) return 1.0;
    constexpr double euler_gamma = 0.57721566490153286061;
    const double n = static_cast<double>(node_count(family, level) - 1);
    const double c = 2.0 / std::numbers::pi;
    return c * std::log(n) + c * (euler_gamma + std::log(4.0 / std::numbers::pi)) + c * std::log(2.0);
}

// ---------------------------------------------------------------- hierarchical

Interpolant::Interpolant(std::shared_ptr<const SparseGrid> grid, std::size_t components,
                         std::vector<double> surpluses)
    : grid_(std::move(grid)), components_(components), surpluses_(std::move(surpluses)) {
    if (!grid_) throw std::invalid_argument("interpolant needs a grid");
    if (components_ == 0 || surpluses_.size() != grid_->size() * components_) {
        throw std::invalid_argument("surplus count does not match grid size");
    }
    const int lmax = grid_->max_level();
    const NodeFamily family = grid_->family();
    level_start_.assign(lmax + 2, 0);
    for (int l = 1; l <= lmax; ++l) level_start_[l + 1] = level_start_[l] + delta_count(family, l);
    const int d = grid_->dim();
    columns_.resize(grid_->size() * d);
    for (std::size_t id = 0; id < grid_->size(); ++id) {
        const auto lv = grid_->levels(id);
        const auto of = grid_->offsets(id);
        for (int a = 0; a < d; ++a) columns_[id * d + a] = level_start_[lv[a]] + of[a] - 1;
    }
}

std::span<const double> Interpolant::surplus(std::size_t id) const {
    return {surpluses_.data() + id * components_, components_};
}

void Interpolant::accumulate(std::span<const double> ref, std::span<double> out) const {
    const int d = grid_->dim();
    const int lmax = grid_->max_level();
    const NodeFamily family = grid_->family();
    const int ncols = level_start_[lmax + 1];
    std::vector<double> table(static_cast<std::size_t>(d) * ncols);
    std::vector<double> scratch;
    for (int a = 0; a < d; ++a) {
        const double x = ref[a];
        for (int l = 1; l <= lmax; ++l) {
            scratch.resize(cached_nodes(family, l).size());
            node_basis_values(family, l, x, scratch);
            for (int j = 1; j <= delta_count(family, l); ++j) {
                table[a * ncols + level_start_[l] + j - 1] = scratch[node_index_of_offset(family, l, j)];
            }
        }
    }
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t n = grid_->size();
    for (std::size_t id = 0; id < n; ++id) {
        double prod = 1.0;
        const int* cols = columns_.data() + id * d;
        for (int a = 0; a < d && prod != 0.0; ++a) prod *= table[a * ncols + cols[a]];
        if (prod == 0.0) continue;
        const double* w = surpluses_.data() + id * components_;
        for (std::size_t c = 0; c < components_; ++c) out[c] += prod * w[c];
    }
}

std::vector<double> Interpolant::eval_ref(std::span<const double> ref) const {
    if (static_cast<int>(ref.size()) != grid_->dim()) throw std::invalid_argument("point dimension mismatch");
    for (std::size_t a = 0; a < ref.size(); ++a) {
        if (!(ref[a] >= 0.0 && ref[a] <= 1.0)) {
            throw OutOfDomainError("interpolation point outside the unit cube on axis " + std::to_string(a));
        }
    }
    std::vector<double> out(components_);
    accumulate(ref, out);
    return out;
}

std::vector<double> Interpolant::eval(std::span<const double> phys) const {
    const auto ref = grid_->domain().to_ref(phys);
    return eval_ref(ref);
}

std::vector<double> Interpolant::eval_ref_many(std::span<const double> refs, Execution exec,
                                               int workers) const {
    const auto d = static_cast<std::size_t>(grid_->dim());
    if (refs.size() % d != 0) throw std::invalid_argument("point buffer not a multiple of d");
    const std::size_t n = refs.size() / d;
    std::vector<double> out(n * components_);
    for_each_index(n, exec, workers, [&](std::size_t i) {
        const auto v = eval_ref(refs.subspan(i * d, d));
        std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(i * components_));
    });
    return out;
}

Interpolant fit_hierarchical(std::shared_ptr<const SparseGrid> grid, std::span<const double> samples,
                             std::size_t components, const FitOptions& options) {
    if (!grid) throw std::invalid_argument("fit needs a grid");
    const std::size_t n = grid->size();
    if (components == 0 || samples.size() != n * components) {
        throw std::invalid_argument("expected " + std::to_string(n * components) + " samples, got " +
                                    std::to_string(samples.size()));
    }
    if (!options.exclude.empty() && options.exclude.size() != n) {
        throw std::invalid_argument("exclusion mask size does not match grid");
    }
    auto excluded = [&](std::size_t id) { return !options.exclude.empty() && options.exclude[id]; };

    std::vector<std::size_t> bad;
    for (std::size_t id = 0; id < n; ++id) {
        if (excluded(id)) continue;
        for (std::size_t c = 0; c < components; ++c) {
            if (!std::isfinite(samples[id * components + c])) {
                bad.push_back(id);
                break;
            }
        }
    }
    if (!bad.empty()) {
        std::ostringstream msg;
        msg << bad.size() << " grid point(s) have missing or non-finite samples: ";
        for (std::size_t k = 0; k < bad.size() && k < 20; ++k) msg << (k ? ", " : "") << bad[k];
        if (bad.size() > 20) msg << ", ...";
        throw DomainError(msg.str());
    }

    // Start from an all-zero interpolant to get the column layout.
    Interpolant result(grid, components, std::vector<double>(n * components, 0.0));
    const int d = grid->dim();
    const int lmax = grid->max_level();
    const NodeFamily family = grid->family();
    const auto& top_nodes = cached_nodes(family, lmax);
    const int ncols = result.level_start_[lmax + 1];

    // Basis value of every column at every node of X^lmax.
    std::vector<double> table(top_nodes.size() * ncols);
    std::vector<double> scratch;
    for (std::size_t k = 0; k < top_nodes.size(); ++k) {
        for (int l = 1; l <= lmax; ++l) {
            scratch.resize(cached_nodes(family, l).size());
            node_basis_values(family, l, top_nodes[k], scratch);
            for (int j = 1; j <= delta_count(family, l); ++j) {
                table[k * ncols + result.level_start_[l] + j - 1] = scratch[node_index_of_offset(family, l, j)];
            }
        }
    }
    // Position of each point's coordinates among the X^lmax nodes.
    std::vector<int> node_of(n * d);
    for (std::size_t id = 0; id < n; ++id) {
        const auto lv = grid->levels(id);
        const auto of = grid->offsets(id);
        for (int a = 0; a < d; ++a) {
            const int k = node_index_of_offset(family, lv[a], of[a]);
            int pos;
            if (lv[a] == 1 && family != NodeFamily::Classic) {
                pos = static_cast<int>(top_nodes.size() / 2);
            } else {
                pos = k << (lmax - lv[a]);
            }
            node_of[id * d + a] = pos;
        }
    }

    auto& w = result.surpluses_;
    for (int l = d; l <= grid->depth(); ++l) {
        const auto [begin, end] = grid->level_range(l);
        for_each_index(end - begin, options.execution, options.workers, [&, begin = begin](std::size_t i) {
            const std::size_t id = begin + i;
            if (excluded(id)) return;
            std::vector<double> acc(components, 0.0);
            const int* nodes = node_of.data() + id * d;
            for (std::size_t p = 0; p < begin; ++p) {
                const int* cols = result.columns_.data() + p * d;
                double prod = 1.0;
                for (int a = 0; a < d && prod != 0.0; ++a) prod *= table[nodes[a] * ncols + cols[a]];
                if (prod == 0.0) continue;
                for (std::size_t c = 0; c < components; ++c) acc[c] += prod * w[p * components + c];
            }
            for (std::size_t c = 0; c < components; ++c) {
                w[id * components + c] = samples[id * components + c] - acc[c];
            }
        });
    }
    return result;
}

nlohmann::json to_json(const Interpolant& interpolant) {
    const auto& grid = interpolant.grid();
    nlohmann::json surpluses = nlohmann::json::array();
    for (std::size_t id = 0; id < grid.size(); ++id) {
        const auto s = interpolant.surplus(id);
        surpluses.push_back(std::vector<double>(s.begin(), s.end()));
    }
    auto j = describe(grid);
    j["components"] = interpolant.components();
    j["surpluses"] = std::move(surpluses);
    return j;
}

// ---------------------------------------------------------------- combination technique

std::vector<std::size_t> tensor_point_ids(const SparseGrid& grid, const MultiIndex& levels) {
    const int d = grid.dim();
    const NodeFamily family = grid.family();
    std::vector<int> extent(d);
    std::size_t total = 1;
    for (int a = 0; a < d; ++a) {
        extent[a] = node_count(family, levels[a]);
        total *= static_cast<std::size_t>(extent[a]);
    }
    std::vector<std::size_t> ids;
    ids.reserve(total);
    std::vector<int> k(d, 0), birth_level(d), birth_offset(d);
    for (std::size_t t = 0; t < total; ++t) {
        for (int a = 0; a < d; ++a) {
            const NodeBirth b = node_birth(family, levels[a], k[a]);
            birth_level[a] = b.level;
            birth_offset[a] = b.offset;
        }
        const auto id = grid.find(birth_level, birth_offset);
        if (!id) throw std::logic_error("tensor node missing from sparse grid");
        ids.push_back(*id);
        for (int a = d - 1; a >= 0; --a) {
            if (++k[a] < extent[a]) break;
            k[a] = 0;
        }
    }
    return ids;
}

CombinationInterpolant::CombinationInterpolant(std::shared_ptr<const SparseGrid> grid,
                                               std::span<const double> samples)
    : grid_(std::move(grid)) {
    if (!grid_) throw std::invalid_argument("combination interpolant needs a grid");
    if (samples.size() != grid_->size()) throw std::invalid_argument("one sample per grid point required");
    const int d = grid_->dim();
    const int q = grid_->depth();
    for (int l = std::max(d, q - d + 1); l <= q; ++l) {
        const double sign = (q - l) % 2 == 0 ? 1.0 : -1.0;
        const double coefficient = sign * binomial(d - 1, q - l);
        for (const MultiIndex& mi : compositions(d, l)) {
            terms_.push_back(Term{mi, coefficient, values_.size()});
            for (const std::size_t id : tensor_point_ids(*grid_, mi)) values_.push_back(samples[id]);
        }
    }
}

double CombinationInterpolant::eval_ref(std::span<const double> ref) const {
    const int d = grid_->dim();
    const int lmax = grid_->max_level();
    const NodeFamily family = grid_->family();
    if (static_cast<int>(ref.size()) != d) throw std::invalid_argument("point dimension mismatch");
    // basis[a][l] = all u^l_k(x_a)
    std::vector<std::vector<std::vector<double>>> basis(d, std::vector<std::vector<double>>(lmax + 1));
    for (int a = 0; a < d; ++a) {
        if (!(ref[a] >= 0.0 && ref[a] <= 1.0)) {
            throw OutOfDomainError("interpolation point outside the unit cube on axis " + std::to_string(a));
        }
        for (int l = 1; l <= lmax; ++l) {
            basis[a][l].resize(cached_nodes(family, l).size());
            node_basis_values(family, l, ref[a], basis[a][l]);
        }
    }
    std::vector<double> current, next;
    double total = 0.0;
    for (const Term& term : terms_) {
        // Contract axes from last to first.
        std::size_t outer = 1;
        for (int a = 0; a + 1 < d; ++a) outer *= basis[a][term.levels[a]].size();
        const auto& last = basis[d - 1][term.levels[d - 1]];
        const std::size_t n_last = last.size();
        current.assign(outer, 0.0);
        const double* v = values_.data() + term.first;
        for (std::size_t o = 0; o < outer; ++o) {
            double s = 0.0;
            const double* row = v + o * n_last;
            for (std::size_t k = 0; k < n_last; ++k) s += row[k] * last[k];
            current[o] = s;
        }
        for (int a = d - 2; a >= 0; --a) {
            const auto& u = basis[a][term.levels[a]];
            const std::size_t na = u.size();
            outer /= na;
            next.assign(outer, 0.0);
            for (std::size_t o = 0; o < outer; ++o) {
                double s = 0.0;
                for (std::size_t k = 0; k < na; ++k) s += current[o * na + k] * u[k];
                next[o] = s;
            }
            current.swap(next);
        }
        total += term.coefficient * current[0];
    }
    return total;
}

std::vector<double> CombinationInterpolant::eval_ref_many(std::span<const double> refs, Execution exec,
                                                          int workers) const {
    const auto d = static_cast<std::size_t>(grid_->dim());
    if (refs.size() % d != 0) throw std::invalid_argument("point buffer not a multiple of d");
    std::vector<double> out(refs.size() / d);
    for_each_index(out.size(), exec, workers, [&](std::size_t i) { out[i] = eval_ref(refs.subspan(i * d, d)); });
    return out;
}

double eval_combination(std::shared_ptr<const SparseGrid> grid, std::span<const double> samples,
                        std::span<const double> ref) {
    return CombinationInterpolant(std::move(grid), samples).eval_ref(ref);
}

}  // namespace hjb
