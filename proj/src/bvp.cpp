#include "hjb/bvp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "hjb/exceptions.hpp"

namespace hjb {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

LobattoTableau make_tableau() {
    LobattoTableau tab{};
    const double r5 = std::sqrt(5.0);
    tab.c[0] = 0.0;
    tab.c[1] = (5.0 - r5) / 10.0;
    tab.c[2] = (5.0 + r5) / 10.0;
    tab.c[3] = 1.0;
    Eigen::Matrix4d vander;
    for (int k = 0; k < 4; ++k)
        for (int m = 0; m < 4; ++m) vander(k, m) = std::pow(tab.c[k], m);
    // Column l of the inverse holds the monomial coefficients of ℓ_l.
    const Eigen::Matrix4d coef = vander.inverse();
    for (int l = 0; l < 4; ++l)
        for (int m = 0; m < 4; ++m) tab.basis[l][m] = coef(m, l);
    for (int k = 0; k < 4; ++k) {
        for (int l = 0; l < 4; ++l) {
            double v = 0.0;
            for (int m = 0; m < 4; ++m) v += tab.basis[l][m] * std::pow(tab.c[k], m + 1) / (m + 1);
            tab.a[k][l] = v;
        }
    }
    // Π (τ - c_k) is even about 1/2 with stationary points 1/2 and 1/2 ± √0.15.
    const double s = std::sqrt(0.15);
    tab.residual_points[0] = 0.5 - s;
    tab.residual_points[1] = 0.5;
    tab.residual_points[2] = 0.5 + s;
    return tab;
}

void basis_values(double tau, double ell[4], double beta[4]) {
    const auto& tab = lobatto_tableau();
    for (int l = 0; l < 4; ++l) {
        double v = 0.0, w = 0.0, p = 1.0;
        for (int m = 0; m < 4; ++m) {
            v += tab.basis[l][m] * p;
            p *= tau;
            w += tab.basis[l][m] * p / (m + 1);
        }
        ell[l] = v;
        beta[l] = w;
    }
}

/// Collocation points in time order: node i, its two interior stages, node i+1, ...
struct Layout {
    const std::vector<double>& mesh;
    int intervals;
    int points;

    explicit Layout(const std::vector<double>& m)
        : mesh(m), intervals(static_cast<int>(m.size()) - 1), points(3 * intervals + 1) {}

    [[nodiscard]] double time(int b) const {
        if (b == points - 1) return mesh.back();
        const int i = b / 3;
        return mesh[i] + lobatto_tableau().c[b % 3] * (mesh[i + 1] - mesh[i]);
    }
};

bool all_finite(const Vec& v) { return v.allFinite(); }

class Collocation {
public:
    Collocation(const BvpProblem& problem, const std::vector<double>& mesh)
        : p_(problem), layout_(mesh), m_(problem.dim), n_(m_ * layout_.points),
          f_(m_, layout_.points), jac_(layout_.points) {}

    /// Evaluates f at every point and the full residual. False if anything is
    /// non-finite or the right-hand side leaves its domain.
    bool residual(const Vec& z, Vec& g) {
        g.resize(n_);
        Vec dy(m_);
        try {
            for (int b = 0; b < layout_.points; ++b) {
                p_.rhs(layout_.time(b), z.segment(b * m_, m_), dy);
                f_.col(b) = dy;
            }
            Vec res(m_);
            p_.bc(z.head(m_), z.tail(m_), res);
            g.head(m_) = res;
        } catch (const DomainError&) {
            return false;
        }
        const auto& tab = lobatto_tableau();
        for (int i = 0; i < layout_.intervals; ++i) {
            const double h = layout_.mesh[i + 1] - layout_.mesh[i];
            const int base = 3 * i;
            for (int k = 1; k < 4; ++k) {
                Vec r = z.segment((base + k) * m_, m_) - z.segment(base * m_, m_);
                for (int l = 0; l < 4; ++l) r -= h * tab.a[k][l] * f_.col(base + l);
                g.segment((base + k) * m_, m_) = r;
            }
        }
        return all_finite(g);
    }

    /// Jacobian at z; f_ must hold f(z) from the last residual() call.
    bool jacobian(const Vec& z, SpMat& out) {
        const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
        Vec yp(m_), fp(m_);
        try {
            for (int b = 0; b < layout_.points; ++b) {
                Mat& jb = jac_[b];
                jb.resize(m_, m_);
                const double t = layout_.time(b);
                const Vec y = z.segment(b * m_, m_);
                if (p_.jacobian) {
                    p_.jacobian(t, y, jb);
                    continue;
                }
                for (int j = 0; j < m_; ++j) {
                    yp = y;
                    const double step = root_eps * std::max(std::abs(y[j]), 1.0);
                    yp[j] += step;
                    const double actual = yp[j] - y[j];
                    p_.rhs(t, yp, fp);
                    jb.col(j) = (fp - f_.col(b)) / actual;
                }
            }
            const Vec ya = z.head(m_), yb = z.tail(m_);
            Vec r0(m_), r1(m_);
            p_.bc(ya, yb, r0);
            bca_.resize(m_, m_);
            bcb_.resize(m_, m_);
            for (int j = 0; j < m_; ++j) {
                Vec ya_p = ya, yb_p = yb;
                const double sa = root_eps * std::max(std::abs(ya[j]), 1.0);
                ya_p[j] += sa;
                p_.bc(ya_p, yb, r1);
                bca_.col(j) = (r1 - r0) / (ya_p[j] - ya[j]);
                const double sb = root_eps * std::max(std::abs(yb[j]), 1.0);
                yb_p[j] += sb;
                p_.bc(ya, yb_p, r1);
                bcb_.col(j) = (r1 - r0) / (yb_p[j] - yb[j]);
            }
        } catch (const DomainError&) {
            return false;
        }

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(m_) * m_ * (2 + 12 * layout_.intervals));
        const int last = (layout_.points - 1) * m_;
        for (int r = 0; r < m_; ++r) {
            for (int c = 0; c < m_; ++c) {
                trip.emplace_back(r, c, bca_(r, c));
                trip.emplace_back(r, last + c, bcb_(r, c));
            }
        }
        const auto& tab = lobatto_tableau();
        for (int i = 0; i < layout_.intervals; ++i) {
            const double h = layout_.mesh[i + 1] - layout_.mesh[i];
            const int base = 3 * i;
            for (int k = 1; k < 4; ++k) {
                const int row = (base + k) * m_;
                for (int l = 0; l < 4; ++l) {
                    const int col = (base + l) * m_;
                    const Mat& jl = jac_[base + l];
                    const double scale = -h * tab.a[k][l];
                    const double diag = l == k ? 1.0 : (l == 0 ? -1.0 : 0.0);
                    for (int r = 0; r < m_; ++r)
                        for (int c = 0; c < m_; ++c)
                            trip.emplace_back(row + r, col + c, scale * jl(r, c) + (r == c ? diag : 0.0));
                }
            }
        }
        out.resize(n_, n_);
        out.setFromTriplets(trip.begin(), trip.end());
        for (const auto& t : trip)
            if (!std::isfinite(t.value())) return false;
        return true;
    }

    [[nodiscard]] const Mat& slopes() const { return f_; }
    [[nodiscard]] int size() const { return n_; }

private:
    const BvpProblem& p_;
    Layout layout_;
    int m_;
    int n_;
    Mat f_;
    std::vector<Mat> jac_;
    Mat bca_, bcb_;
};

double scaled_max(const Vec& step, const Vec& z) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < step.size(); ++j)
        worst = std::max(worst, std::abs(step[j]) / std::max(std::abs(z[j]), 1.0));
    return worst;
}

struct NewtonOutcome {
    bool converged = false;
    int iterations = 0;
};

NewtonOutcome newton(const BvpProblem& problem, const std::vector<double>& mesh, Vec& z, Mat& slopes,
                     double newton_tol) {
    const auto& opt = problem.options;
    Collocation col(problem, mesh);
    NewtonOutcome out;
    Vec g, g_trial, z_trial;
    if (!col.residual(z, g)) return out;
    double norm = g.norm();
    SpMat jac;
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    bool analyzed = false;
    for (int it = 0; it < opt.max_newton; ++it) {
        ++out.iterations;
        if (!col.jacobian(z, jac)) return out;
        if (!analyzed) {
            lu.analyzePattern(jac);
            analyzed = true;
        }
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) return out;
        const Vec dz = lu.solve(-g);
        if (lu.info() != Eigen::Success || !dz.allFinite()) return out;

        if (scaled_max(dz, z) <= newton_tol) {
            z += dz;
            if (!col.residual(z, g)) return out;
            slopes = col.slopes();
            out.converged = true;
            return out;
        }
        double lambda = 1.0;
        bool accepted = false;
        for (int halving = 0; halving <= opt.max_halvings; ++halving) {
            z_trial = z + lambda * dz;
            if (col.residual(z_trial, g_trial)) {
                const double trial = g_trial.norm();
                if (trial <= (1.0 - 1e-4 * lambda) * norm) {
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) return out;
        const double step = lambda * scaled_max(dz, z);
        z.swap(z_trial);
        g.swap(g_trial);
        norm = g.norm();
        if (step <= newton_tol) {
            slopes = col.slopes();
            out.converged = true;
            return out;
        }
    }
    return out;
}

Vec sample(const std::function<Vec(double)>& fn, const std::vector<double>& mesh, int dim) {
    const Layout layout(mesh);
    Vec z(static_cast<Eigen::Index>(dim) * layout.points);
    for (int b = 0; b < layout.points; ++b) {
        const Vec v = fn(layout.time(b));
        if (v.size() != dim) throw std::invalid_argument("initial guess has the wrong dimension");
        z.segment(b * dim, dim) = v;
    }
    return z;
}

void store(BvpSolution& sol, const std::vector<double>& mesh, const Vec& z, const Mat& slopes, int dim) {
    sol.mesh = mesh;
    const int nodes = static_cast<int>(mesh.size());
    sol.y.resize(dim, nodes);
    for (int i = 0; i < nodes; ++i) sol.y.col(i) = z.segment(3 * i * dim, dim);
    sol.slopes = slopes;
}

/// Max over sample points of |p' - f(t, p)| / max(|f|, 1), per interval.
std::vector<double> interval_residuals(const BvpProblem& problem, const BvpSolution& sol) {
    const auto& tab = lobatto_tableau();
    const int m = sol.dim();
    std::vector<double> out(sol.intervals(), 0.0);
    Vec p(m), dp(m), f(m);
    for (int i = 0; i < sol.intervals(); ++i) {
        const double h = sol.mesh[i + 1] - sol.mesh[i];
        double worst = 0.0;
        for (double tau : tab.residual_points) {
            double ell[4], beta[4];
            basis_values(tau, ell, beta);
            p = sol.y.col(i);
            dp.setZero();
            for (int l = 0; l < 4; ++l) {
                p += h * beta[l] * sol.slopes.col(3 * i + l);
                dp += ell[l] * sol.slopes.col(3 * i + l);
            }
            try {
                problem.rhs(sol.mesh[i] + tau * h, p, f);
            } catch (const DomainError&) {
                worst = std::numeric_limits<double>::infinity();
                break;
            }
            for (int j = 0; j < m; ++j) {
                const double r = std::abs(dp[j] - f[j]) / std::max(std::abs(f[j]), 1.0);
                worst = std::max(worst, std::isfinite(r) ? r : std::numeric_limits<double>::infinity());
            }
        }
        out[i] = worst;
    }
    return out;
}

double boundary_residual(const BvpProblem& problem, const BvpSolution& sol) {
    Vec res(sol.dim());
    problem.bc(sol.at_start(), sol.at_end(), res);
    return res.lpNorm<Eigen::Infinity>();
}

std::vector<double> split_uniformly(const std::vector<double>& mesh) {
    std::vector<double> out;
    out.reserve(2 * mesh.size());
    for (std::size_t i = 0; i + 1 < mesh.size(); ++i) {
        out.push_back(mesh[i]);
        out.push_back(0.5 * (mesh[i] + mesh[i + 1]));
    }
    out.push_back(mesh.back());
    return out;
}

void validate(const BvpProblem& p) {
    if (p.dim < 1) throw std::invalid_argument("BVP dimension must be positive");
    if (!p.rhs || !p.bc || !p.guess) throw std::invalid_argument("BVP needs rhs, bc and guess");
    if (p.mesh.size() < 4) throw std::invalid_argument("initial mesh needs at least 3 intervals");
    if (p.mesh.front() != p.ta || p.mesh.back() != p.tb)
        throw std::invalid_argument("initial mesh must span [ta, tb]");
    for (std::size_t i = 1; i < p.mesh.size(); ++i)
        if (!(p.mesh[i] > p.mesh[i - 1])) throw std::invalid_argument("mesh must be strictly increasing");
    if (!(p.options.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
}

}  // namespace

const LobattoTableau& lobatto_tableau() {
    static const LobattoTableau tab = make_tableau();
    return tab;
}

std::string_view to_string(BvpStatus status) {
    switch (status) {
        case BvpStatus::Converged: return "Converged";
        case BvpStatus::MaxMesh: return "MaxMesh";
        case BvpStatus::NewtonDiverged: return "NewtonDiverged";
    }
    return "unknown";
}

BvpStatus parse_bvp_status(std::string_view name) {
    if (name == "Converged") return BvpStatus::Converged;
    if (name == "MaxMesh") return BvpStatus::MaxMesh;
    if (name == "NewtonDiverged") return BvpStatus::NewtonDiverged;
    throw std::invalid_argument("unknown BVP status '" + std::string(name) + "'");
}

std::vector<double> uniform_mesh(double ta, double tb, int intervals) {
    if (intervals < 1) throw std::invalid_argument("mesh needs at least one interval");
    std::vector<double> mesh(intervals + 1);
    for (int i = 0; i <= intervals; ++i) mesh[i] = ta + (tb - ta) * i / intervals;
    mesh.back() = tb;
    return mesh;
}

int BvpSolution::locate(double s) const {
    const double slack = 1e-12 * std::max(1.0, std::abs(mesh.back() - mesh.front()));
    if (!(s >= mesh.front() - slack && s <= mesh.back() + slack))
        throw std::out_of_range("BVP solution queried outside its interval");
    const auto it = std::upper_bound(mesh.begin(), mesh.end(), s);
    const int i = static_cast<int>(it - mesh.begin()) - 1;
    return std::clamp(i, 0, intervals() - 1);
}

Vec BvpSolution::interpolate(double s) const {
    const int i = locate(s);
    if (s == mesh[i]) return y.col(i);
    if (s == mesh[i + 1]) return y.col(i + 1);
    const double h = mesh[i + 1] - mesh[i];
    double ell[4], beta[4];
    basis_values((s - mesh[i]) / h, ell, beta);
    Vec p = y.col(i);
    for (int l = 0; l < 4; ++l) p += h * beta[l] * slopes.col(3 * i + l);
    return p;
}

Vec BvpSolution::derivative(double s) const {
    const int i = locate(s);
    const double h = mesh[i + 1] - mesh[i];
    double ell[4], beta[4];
    basis_values((s - mesh[i]) / h, ell, beta);
    Vec dp = Vec::Zero(dim());
    for (int l = 0; l < 4; ++l) dp += ell[l] * slopes.col(3 * i + l);
    return dp;
}

BvpSolution solve(const BvpProblem& problem) {
    validate(problem);
    const auto& opt = problem.options;
    const int m = problem.dim;
    const double newton_tol = opt.newton_tol > 0.0 ? opt.newton_tol : std::max(1e-3 * opt.tol, 1e-13);

    BvpSolution sol;
    std::vector<double> mesh = problem.mesh;
    Vec z = sample(problem.guess, mesh, m);
    Mat slopes;
    for (;;) {
        const NewtonOutcome nr = newton(problem, mesh, z, slopes, newton_tol);
        sol.newton_iterations += nr.iterations;
        if (!nr.converged) {
            const std::vector<double> finer = split_uniformly(mesh);
            if (sol.restarts >= opt.max_restarts || static_cast<int>(finer.size()) > opt.max_nodes) {
                sol.status = BvpStatus::NewtonDiverged;
                sol.mesh = mesh;
                sol.y.resize(m, 0);
                sol.est_residual = std::numeric_limits<double>::infinity();
                sol.bc_residual = std::numeric_limits<double>::infinity();
                return sol;
            }
            mesh = finer;
            z = sample(problem.guess, mesh, m);
            ++sol.restarts;
            continue;
        }
        store(sol, mesh, z, slopes, m);
        const auto res = interval_residuals(problem, sol);
        sol.est_residual = *std::max_element(res.begin(), res.end());
        sol.bc_residual = boundary_residual(problem, sol);
        if (sol.est_residual <= opt.tol) {
            sol.status = sol.bc_residual <= opt.tol ? BvpStatus::Converged : BvpStatus::NewtonDiverged;
            return sol;
        }
        if (!opt.adapt) {
            sol.status = BvpStatus::MaxMesh;
            return sol;
        }
        std::vector<double> refined;
        refined.reserve(mesh.size() * 2);
        for (int i = 0; i + 1 < static_cast<int>(mesh.size()); ++i) {
            refined.push_back(mesh[i]);
            if (res[i] <= opt.tol) continue;
            // The residual scales like h^4: halving gains 16x, thirds gain 81x.
            const int pieces = res[i] > 16.0 * opt.tol ? 3 : 2;
            for (int k = 1; k < pieces; ++k) refined.push_back(mesh[i] + (mesh[i + 1] - mesh[i]) * k / pieces);
        }
        refined.push_back(mesh.back());
        if (static_cast<int>(refined.size()) > opt.max_nodes) {
            sol.status = BvpStatus::MaxMesh;
            return sol;
        }
        z = sample([&](double s) { return sol.interpolate(s); }, refined, m);
        mesh = std::move(refined);
        ++sol.refinements;
    }
}

OrderReport empirical_order(const BvpProblem& problem, const std::function<Vec(double)>& exact,
                            const std::vector<int>& intervals, int samples) {
    if (intervals.size() < 2) throw std::invalid_argument("order estimate needs at least two meshes");
    OrderReport report;
    for (int n : intervals) {
        BvpProblem p = problem;
        p.mesh = uniform_mesh(problem.ta, problem.tb, n);
        p.options.adapt = false;
        p.options.tol = std::numeric_limits<double>::max();
        if (p.options.newton_tol <= 0.0) p.options.newton_tol = 1e-13;
        const BvpSolution sol = solve(p);
        if (sol.status == BvpStatus::NewtonDiverged)
            throw DomainError("Newton iteration failed on a uniform mesh with " + std::to_string(n) + " intervals");
        double err = 0.0;
        for (int k = 0; k < samples; ++k) {
            const double s = problem.ta + (problem.tb - problem.ta) * k / (samples - 1);
            err = std::max(err, (sol.interpolate(s) - exact(s)).lpNorm<Eigen::Infinity>());
        }
        report.intervals.push_back(n);
        report.step.push_back((problem.tb - problem.ta) / n);
        report.max_error.push_back(err);
    }
    if (report.max_error.front() < 1e-13) {
        report.exact = true;
        report.order = std::numeric_limits<double>::quiet_NaN();
        return report;
    }
    const double cnt = static_cast<double>(report.step.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < report.step.size(); ++k) {
        const double x = std::log(report.step[k]);
        const double y = std::log(report.max_error[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    report.order = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    return report;
}

std::vector<ManufacturedBvp> manufactured_problems() {
    auto base = [](double ta, double tb) {
        BvpProblem p;
        p.dim = 2;
        p.ta = ta;
        p.tb = tb;
        p.mesh = uniform_mesh(ta, tb, 10);
        return p;
    };
    std::vector<ManufacturedBvp> out;

    ManufacturedBvp harmonic{"harmonic", base(0.0, std::acos(-1.0) / 2), {}, {4, 8, 16, 32}};
    harmonic.problem.rhs = [](double, const Vec& y, Vec& dy) { dy << y[1], -y[0]; };
    harmonic.problem.bc = [](const Vec& ya, const Vec& yb, Vec& r) { r << ya[0], yb[0] - 1.0; };
    harmonic.problem.guess = [](double) { return Vec::Zero(2).eval(); };
    harmonic.exact = [](double s) { return (Vec(2) << std::sin(s), std::cos(s)).finished(); };
    out.push_back(std::move(harmonic));

    ManufacturedBvp exp_sin{"exp-sin", base(0.0, 2.0), {}, {5, 10, 20, 40}};
    exp_sin.problem.rhs = [](double s, const Vec& y, Vec& dy) {
        dy << y[1], y[1] * y[1] / y[0] - std::sin(s) * y[0];
    };
    exp_sin.problem.bc = [](const Vec& ya, const Vec& yb, Vec& r) { r << ya[0] - 1.0, yb[0] - std::exp(std::sin(2.0)); };
    exp_sin.problem.guess = [](double) { return (Vec(2) << 1.0, 0.0).finished(); };
    exp_sin.exact = [](double s) {
        const double e = std::exp(std::sin(s));
        return (Vec(2) << e, std::cos(s) * e).finished();
    };
    out.push_back(std::move(exp_sin));
    return out;
}

}  // namespace hjb

