#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hfm/integrate.hpp"

namespace hfm {

/// sqrt of the per-particle mean squared distance between two packed vectors.
inline double rmsd(const Vec& a, const Vec& b, int count) {
    require(a.size() == b.size() && count > 0, ErrorKind::shape, "rmsd: size mismatch");
    return std::sqrt((a - b).squaredNorm() / count);
}

struct PosMom {
    double pos = 0.0;
    double mom = 0.0;
};

/// Index of the reference state at time t; reference must have uniform spacing.
inline std::size_t match_time(const Trajectory& ref, double t, double tol) {
    require(ref.length() >= 1, ErrorKind::domain, "reference trajectory is empty");
    const double h = ref.timestep;
    const long k = h > 0.0 ? std::lround(t / h) : 0;
    require(k >= 0 && static_cast<std::size_t>(k) < ref.length() && std::abs(ref.times[static_cast<std::size_t>(k)] - t) <= tol,
            ErrorKind::domain, "no reference state at t = " + std::to_string(t));
    return static_cast<std::size_t>(k);
}

/// Mean over pred's states and particles of |x_pred - x_ref|^2, ref matched
/// at pred's timestamps within 1e-9 dt. A rollout that stopped early has
/// diverged and scores +inf.
inline double trajectory_mse(const Trajectory& pred, const Trajectory& ref) {
    require(pred.length() >= 1, ErrorKind::domain, "trajectory_mse: empty prediction");
    if (pred.status != RolloutStatus::completed) return std::numeric_limits<double>::infinity();
    const double tol = 1e-9 * (pred.timestep > 0.0 ? pred.timestep : 1.0);
    require(std::abs(pred.times.back() - ref.times.back()) <= tol, ErrorKind::domain,
            "trajectory_mse: final times differ");
    const int n = pred.states.front().count();
    double total = 0.0;
    for (std::size_t k = 0; k < pred.length(); ++k) {
        const PhaseState& r = ref.states[match_time(ref, pred.times[k], tol)];
        require(r.size() == pred.states[k].size(), ErrorKind::shape, "trajectory_mse: layouts differ");
        total += (pred.states[k].positions - r.positions).squaredNorm() / n;
    }
    return total / static_cast<double>(pred.length());
}

/// Final-state RMSD normalized by the accumulated RMSD path length of the reference.
inline PosMom normalized_rmsd(const PhaseState& pred_final, const Trajectory& ref) {
    require(ref.length() >= 2, ErrorKind::domain, "normalized_rmsd needs at least two reference states");
    const int n = pred_final.count();
    PosMom path;
    for (std::size_t k = 0; k + 1 < ref.length(); ++k) {
        path.pos += rmsd(ref.states[k + 1].positions, ref.states[k].positions, n);
        path.mom += rmsd(ref.states[k + 1].momenta, ref.states[k].momenta, n);
    }
    require(path.pos > 0.0 && path.mom > 0.0, ErrorKind::domain, "normalized_rmsd: reference path length is zero");
    const PhaseState& last = ref.states.back();
    return {rmsd(pred_final.positions, last.positions, n) / path.pos, rmsd(pred_final.momenta, last.momenta, n) / path.mom};
}

inline double max_pair_distance(const Trajectory& traj) {
    double r = 0.0;
    for (const PhaseState& s : traj.states)
        for (int i = 0; i < s.count(); ++i)
            for (int j = i + 1; j < s.count(); ++j) r = std::max(r, (s.position(i) - s.position(j)).norm());
    return r;
}

/// Frame-averaged pair-distance density on [0, r_max], unit mass. Distances
/// beyond r_max land in the last bin.
inline Vec distance_histogram(const Trajectory& traj, int bins, double r_max) {
    require(bins >= 1 && r_max > 0.0, ErrorKind::domain, "distance_histogram: bins >= 1 and r_max > 0 required");
    require(traj.length() >= 1 && traj.states.front().count() >= 2, ErrorKind::domain,
            "distance_histogram needs N >= 2");
    const double width = r_max / bins;
    Vec h = Vec::Zero(bins);
    for (const PhaseState& s : traj.states) {
        const int n = s.count();
        const double w = 2.0 / (static_cast<double>(n) * (n - 1));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double r = (s.position(i) - s.position(j)).norm();
                const int b = std::min(bins - 1, static_cast<int>(r / width));
                h[b] += w;
            }
    }
    return h / (static_cast<double>(traj.length()) * width);
}

/// sum_bins |h_a - h_b| * bin_width. r_max <= 0 selects 1.1 x the largest
/// pair distance seen in either trajectory.
inline double distance_hist_mae(const Trajectory& a, const Trajectory& b, int bins = 200, double r_max = 0.0) {
    if (r_max <= 0.0) r_max = 1.1 * std::max(max_pair_distance(a), max_pair_distance(b));
    if (r_max <= 0.0) r_max = 1.0;
    const Vec ha = distance_histogram(a, bins, r_max);
    const Vec hb = distance_histogram(b, bins, r_max);
    return (ha - hb).cwiseAbs().sum() * (r_max / bins);
}

/// RMSD between one full step and two half steps.
template <class Model>
PosMom semigroup_error(const Model& model, const PhaseState& state, double dt) {
    const PhaseState full = hfm_step(model, state, dt);
    const PhaseState half = hfm_step(model, hfm_step(model, state, 0.5 * dt), 0.5 * dt);
    return {rmsd(full.positions, half.positions, state.count()), rmsd(full.momenta, half.momenta, state.count())};
}

struct ConservationDrift {
    double energy = 0.0;  // relative, absolute when |E0| < 1e-8
    double angular_momentum = 0.0;
    double linear_momentum = 0.0;
};

inline ConservationDrift conservation_drift(const Trajectory& traj) {
    require(!traj.diagnostics.empty(), ErrorKind::domain, "conservation_drift: no diagnostics");
    const Diagnostics& d0 = traj.diagnostics.front();
    const double scale = std::abs(d0.total_energy) < 1e-8 ? 1.0 : std::abs(d0.total_energy);
    ConservationDrift out;
    for (const Diagnostics& d : traj.diagnostics) {
        out.energy = std::max(out.energy, std::abs(d.total_energy - d0.total_energy) / scale);
        out.angular_momentum = std::max(out.angular_momentum, (d.angular_momentum - d0.angular_momentum).norm());
        out.linear_momentum = std::max(out.linear_momentum, (d.linear_momentum - d0.linear_momentum).norm());
    }
    return out;
}

inline std::size_t fallback_count(const Trajectory& traj) {
    std::size_t n = 0;
    for (const FilterDiagnostics& fd : traj.filter_diagnostics) n += fd.fallback || fd.angular_skipped ? 1 : 0;
    return n;
}

struct MetricReport {
    std::string name;
    double value = 0.0;
    double timestep = 0.0;
    long n_steps = 0;
    std::string system;
    std::uint64_t seed = 0;
};

}  // namespace hfm
