#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "hjb/characteristics.hpp"

namespace hjb {

/// FixedInitial: every sample uses the t = 0 slice (constant receding horizon).
/// TimeInGrid: the value function is queried at τ = t mod T, so the horizon
/// shrinks to T - τ and restarts at τ = 0 when t reaches T.
enum class HorizonMode { FixedInitial, TimeInGrid };

[[nodiscard]] std::string_view to_string(HorizonMode mode);
[[nodiscard]] HorizonMode parse_horizon_mode(std::string_view name);

struct MpcConfig {
    double dt = 0.1;       ///< sample period
    double step = 0.0;     ///< integrator step; 0 means dt / 20
    double t_max = 1.0;
    /// Per-state noise magnitude: measurements get U[-noise_j, noise_j] added.
    /// Empty means no noise.
    std::vector<double> noise;
    HorizonMode mode = HorizonMode::FixedInitial;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument unless 0 < step < dt, t_max > 0, noise ≥ 0.
    void check(int states) const;
    [[nodiscard]] double integrator_step() const { return step > 0.0 ? step : dt / 20.0; }
};

/// noise_j = fraction · half-width of state axis j.
[[nodiscard]] std::vector<double> noise_from_fraction(const Box& state_box, double fraction);

enum class MpcStatus { Completed, Diverged };

[[nodiscard]] std::string_view to_string(MpcStatus status);

struct Trajectory {
    std::vector<std::string> state_labels;
    std::vector<std::string> control_labels;
    std::vector<double> t;        ///< sample times t_k = k dt
    std::vector<Vec> x;           ///< true state at t_k
    std::vector<Vec> measured;    ///< noisy, clamped measurement at t_k
    std::vector<Vec> u;           ///< control held on [t_k, t_{k+1})
    std::vector<double> running;  ///< L(t_k, x_k, u_k)
    std::vector<double> cost;     ///< ∫_0^{t_k} L dt along the true trajectory
    double terminal_cost = 0.0;   ///< h(x) at the last sample
    std::size_t clamped = 0;      ///< measurements projected onto the domain
    MpcStatus status = MpcStatus::Completed;

    [[nodiscard]] std::size_t samples() const { return t.size(); }
};

/// Closed-loop zero-order-hold simulation driven by the fitted costate.
/// Deterministic in (x0, config). Anchored problems use the problem anchored
/// at x0 for the dynamics and cost.
[[nodiscard]] Trajectory simulate(const ValueFunction& vf, const Vec& x0, const MpcConfig& config);

/// Independent runs, one per initial state; run k uses seed config.seed + k.
[[nodiscard]] std::vector<Trajectory> simulate_batch(const ValueFunction& vf, const std::vector<Vec>& x0s,
                                                     const MpcConfig& config,
                                                     Execution execution = Execution::Parallel, int workers = 0);

/// CSV with columns t, states, controls, cost; doubles in shortest round-trip form.
void emit_trajectory(std::ostream& out, const Trajectory& trajectory);
void emit_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);

}  // namespace hjb
