#include "hjb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hjb/interp.hpp"
#include "hjb/rng.hpp"

namespace hjb {

namespace {

double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(r);
}

std::vector<double> level_constants(NodeFamily family, int levels, LebesgueSource source) {
    std::vector<double> lambda(static_cast<std::size_t>(levels));
    for (int i = 1; i <= levels; ++i)
        lambda[i - 1] = source == LebesgueSource::Bound ? lebesgue_bound(family, i) : lebesgue_constant(family, i);
    return lambda;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

std::string_view to_string(LebesgueSource source) {
    return source == LebesgueSource::Bound ? "bound" : "numeric";
}

LebesgueSource parse_lebesgue_source(std::string_view name) {
    if (name == "bound") return LebesgueSource::Bound;
    if (name == "numeric") return LebesgueSource::Numeric;
    throw std::invalid_argument("unknown Lebesgue source '" + std::string(name) + "' (bound, numeric)");
}

double composition_sum(const std::vector<double>& lambda, int d, int l) {
    if (d < 1) throw std::invalid_argument("dimension must be at least 1");
    if (l < d) return 0.0;
    const int top = l - d + 1;
    if (static_cast<int>(lambda.size()) < top) throw std::invalid_argument("not enough Lebesgue constants");
    // table[s] = Σ over compositions of s into the axes so far.
    std::vector<double> table(static_cast<std::size_t>(l + 1), 0.0);
    for (int i = 1; i <= top; ++i) table[i] = lambda[i - 1];
    for (int axis = 2; axis <= d; ++axis) {
        std::vector<double> next(table.size(), 0.0);
        for (int s = axis; s <= l; ++s)
            for (int i = 1; i <= std::min(top, s - axis + 1); ++i) next[s] += lambda[i - 1] * table[s - i];
        table.swap(next);
    }
    return table[l];
}

BoundReport error_bound_coefficient(NodeFamily family, int d, int q, LebesgueSource source) {
    if (d < 1 || q < d) throw std::invalid_argument("error bound coefficient needs 1 <= d <= q");
    if (q - d + 1 > kMaxLevel) throw std::invalid_argument("level exceeds the supported maximum");
    BoundReport r;
    r.family = family;
    r.d = d;
    r.q = q;
    r.source = source;
    r.lambda = level_constants(family, q - d + 1, source);
    for (int l = std::max(d, q - d + 1); l <= q; ++l) {
        r.levels.push_back(l);
        r.S.push_back(composition_sum(r.lambda, d, l));
        r.weights.push_back(binomial(d - 1, q - l));
        r.coefficient += r.weights.back() * r.S.back();
    }
    return r;
}

nlohmann::json BoundReport::to_json() const {
    return {{"family", std::string(hjb::to_string(family))},
            {"d", d},
            {"q", q},
            {"lebesgue", std::string(hjb::to_string(source))},
            {"lambda", lambda},
            {"levels", levels},
            {"S", S},
            {"weights", weights},
            {"coefficient", coefficient}};
}

RateReport coefficient_growth_check(NodeFamily family, int d, int q_lo, int q_hi, LebesgueSource source) {
    if (q_lo < d || q_hi - q_lo + 1 < 4) throw std::invalid_argument("rate check needs at least 4 values of q >= d");
    RateReport r;
    r.family = family;
    r.d = d;
    r.expected_degree = d - 1;
    std::vector<double> x, y;
    for (int q = q_lo; q <= q_hi; ++q) {
        r.qs.push_back(q);
        r.points.push_back(static_cast<double>(sparse_size(family, d, q)));
        r.coefficients.push_back(error_bound_coefficient(family, d, q, source).coefficient);
        x.push_back(std::log(std::log(r.points.back())));
        y.push_back(std::log(r.coefficients.back()));
    }
    r.fitted_degree = slope(x, y);
    r.monotone = std::is_sorted(r.coefficients.begin(), r.coefficients.end());
    return r;
}

nlohmann::json RateReport::to_json() const {
    return {{"family", std::string(hjb::to_string(family))},
            {"d", d},
            {"q", qs},
            {"N", points},
            {"coefficient", coefficients},
            {"fitted_degree", fitted_degree},
            {"expected_degree", expected_degree},
            {"monotone", monotone}};
}

// ---------------------------------------------------------------- histogram

Histogram symmetric_histogram(const std::vector<double>& values, int bins) {
    if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
    double top = 0.0;
    for (double v : values) top = std::max(top, std::abs(v));
    Histogram h;
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (int k = 0; k <= bins; ++k) h.edges[k] = -top + 2.0 * top * k / bins;
    for (double v : values) {
        int k = top > 0.0 ? static_cast<int>(std::floor((v + top) / (2.0 * top) * bins)) : bins / 2;
        h.counts[static_cast<std::size_t>(std::clamp(k, 0, bins - 1))] += 1;
    }
    return h;
}

std::string Histogram::csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "lower,upper,count\n";
    for (std::size_t k = 0; k < counts.size(); ++k) out << edges[k] << ',' << edges[k + 1] << ',' << counts[k] << '\n';
    return out.str();
}

nlohmann::json Histogram::to_json() const { return {{"edges", edges}, {"counts", counts}}; }

// ---------------------------------------------------------------- Monte Carlo

std::string_view to_string(EpsilonModel model) { return model == EpsilonModel::Symmetric ? "symmetric" : "unit"; }

EpsilonModel parse_epsilon_model(std::string_view name) {
    if (name == "symmetric") return EpsilonModel::Symmetric;
    if (name == "unit") return EpsilonModel::Unit;
    throw std::invalid_argument("unknown error model '" + std::string(name) + "' (symmetric, unit)");
}

McReport mc_ebvp(std::shared_ptr<const SparseGrid> grid, int samples, std::uint64_t seed, double scale,
                 EpsilonModel model, Execution execution, int workers) {
    if (samples < 1) throw std::invalid_argument("need at least one evaluation point");
    const CounterRng root(seed);
    const CounterRng eps_stream = root.substream(0);
    const CounterRng point_stream = root.substream(1);
    const std::size_t d = static_cast<std::size_t>(grid->dim());

    std::vector<double> eps(grid->size());
    for (std::size_t id = 0; id < eps.size(); ++id) {
        const double u = eps_stream.uniform(id);
        eps[id] = scale * (model == EpsilonModel::Symmetric ? 2.0 * u - 1.0 : u);
    }
    std::vector<double> refs(static_cast<std::size_t>(samples) * d);
    for (std::size_t k = 0; k < refs.size(); ++k) refs[k] = point_stream.uniform(k);

    const CombinationInterpolant combination(grid, eps);
    McReport r;
    r.family = grid->family();
    r.d = grid->dim();
    r.q = grid->depth();
    r.seed = seed;
    r.scale = scale;
    r.model = model;
    r.grid_points = grid->size();
    r.ratios = combination.eval_ref_many(refs, execution, workers);
    for (double v : r.ratios) {
        r.max_ratio = std::max(r.max_ratio, std::abs(v));
        r.mean_abs_ratio += std::abs(v);
    }
    r.mean_abs_ratio /= static_cast<double>(r.ratios.size());
    r.histogram = symmetric_histogram(r.ratios);
    return r;
}

nlohmann::json McReport::to_json(bool include_ratios) const {
    nlohmann::json j = {{"family", std::string(hjb::to_string(family))},
                        {"d", d},
                        {"q", q},
                        {"seed", seed},
                        {"rng", "counter-splitmix64"},
                        {"scale", scale},
                        {"model", std::string(hjb::to_string(model))},
                        {"grid_points", grid_points},
                        {"samples", ratios.size()},
                        {"max_ratio", max_ratio},
                        {"mean_abs_ratio", mean_abs_ratio},
                        {"histogram", histogram.to_json()}};
    if (include_ratios) j["ratios"] = ratios;
    return j;
}

// ---------------------------------------------------------------- validation

std::vector<std::vector<double>> uniform_points(const Box& box, int count, std::uint64_t seed) {
    const CounterRng rng = CounterRng(seed).substream(2);
    const auto d = static_cast<std::size_t>(box.dim());
    std::vector<std::vector<double>> out(static_cast<std::size_t>(count), std::vector<double>(d));
    for (std::size_t k = 0; k < out.size(); ++k)
        for (std::size_t j = 0; j < d; ++j) out[k][j] = rng.uniform(k * d + j, box.lower()[j], box.upper()[j]);
    return out;
}

ValidationReport validate_at(const ValueFunction& vf, const std::vector<std::vector<double>>& points,
                             double tight_tol, Execution execution, int workers) {
    if (!vf.problem) throw std::invalid_argument("value function has no problem attached");
    const ControlProblem& problem = *vf.problem;
    CharacteristicOptions opt;
    opt.tol = tight_tol;

    ValidationReport r;
    r.tol = tight_tol;
    r.samples = points.size();
    r.records.resize(points.size());
    for_each_index(points.size(), execution, workers, [&](std::size_t k) {
        ValidationSample& s = r.records[k];
        s.point = points[k];
        s.interpolated = vf.value.eval_scalar(s.point);
        try {
            const auto sol = solve_grid_point(problem, s.point, opt);
            s.status = sol.record.status;
            s.oracle = sol.record.V;
        } catch (const DomainError&) {
            s.status = BvpStatus::NewtonDiverged;
            s.oracle = std::numeric_limits<double>::quiet_NaN();
        }
        s.error = s.status == BvpStatus::Converged ? s.interpolated - s.oracle : std::numeric_limits<double>::quiet_NaN();
    });

    std::vector<double> errors;
    double rel = 0.0, signed_sum = 0.0;
    for (const auto& s : r.records) {
        if (s.status != BvpStatus::Converged) {
            ++r.failures;
            continue;
        }
        errors.push_back(s.error);
        r.mae += std::abs(s.error);
        r.max_abs = std::max(r.max_abs, std::abs(s.error));
        rel += std::abs(s.error) / std::max(std::abs(s.oracle), kRelativeErrorFloor);
        signed_sum += s.error;
    }
    const double ok = static_cast<double>(errors.size());
    if (!errors.empty()) {
        r.mae /= ok;
        r.relative_mae = rel / ok;
        r.mean_error = signed_sum / ok;
        for (double e : errors) r.variance += (std::abs(e) - r.mae) * (std::abs(e) - r.mae);
        r.variance /= ok;
    }
    r.histogram = symmetric_histogram(errors);
    r.valid = !errors.empty() &&
              static_cast<double>(r.failures) <= kMaxOracleFailureFraction * static_cast<double>(r.samples);
    return r;
}

ValidationReport validate(const ValueFunction& vf, int samples, double tight_tol, std::uint64_t seed,
                          Execution execution, int workers) {
    if (samples < 1) throw std::invalid_argument("need at least one validation sample");
    ValidationReport r =
        validate_at(vf, uniform_points(vf.value.grid().domain(), samples, seed), tight_tol, execution, workers);
    r.seed = seed;
    return r;
}

nlohmann::json ValidationReport::to_json(bool include_records) const {
    nlohmann::json j = {{"seed", seed},
                        {"rng", "counter-splitmix64"},
                        {"tol", tol},
                        {"samples", samples},
                        {"failures", failures},
                        {"valid", valid},
                        {"mae", mae},
                        {"relative_mae", relative_mae},
                        {"relative_floor", kRelativeErrorFloor},
                        {"max_abs", max_abs},
                        {"mean_error", mean_error},
                        {"variance", variance},
                        {"histogram", histogram.to_json()}};
    if (include_records) {
        auto& rows = j["records"] = nlohmann::json::array();
        for (const auto& s : records) {
            rows.push_back({{"x", s.point},
                            {"interpolated", s.interpolated},
                            {"oracle", std::isfinite(s.oracle) ? nlohmann::json(s.oracle) : nlohmann::json()},
                            {"error", std::isfinite(s.error) ? nlohmann::json(s.error) : nlohmann::json()},
                            {"status", std::string(hjb::to_string(s.status))}});
        }
    }
    return j;
}

}  // namespace hjb
