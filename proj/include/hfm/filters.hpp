#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "hfm/rotation.hpp"
#include "hfm/sampling.hpp"

namespace hfm {

/// Restores the previous total momentum with mass-proportional momentum
/// shifts, and moves the center of mass to where uniform motion puts it.
inline PhaseState remove_drift_filter(const PhaseState& prev, const PhaseState& next, double dt) {
    require(prev.size() == next.size() && prev.dims == next.dims, ErrorKind::shape,
            "remove_drift_filter: states have different layouts");
    const double total_mass = next.masses.sum();
    const int d = next.dims;
    const Vec3 v_prev = total_momentum(prev) / total_mass;
    const Vec3 v_next = total_momentum(next) / total_mass;
    const Vec3 shift = center_of_mass(prev) - center_of_mass(next) + dt * v_prev;
    PhaseState out = next;
    for (int i = 0; i < out.count(); ++i) {
        out.momentum(i) += next.masses[i] * (v_prev - v_next).head(d);
        out.position(i) += shift.head(d);
    }
    return out;
}

using StepFn = std::function<PhaseState(const PhaseState&, double)>;

/// R^-1 o step o R, with both rotations taken about the mean position of the
/// input state.
inline PhaseState random_rotation_wrap(const StepFn& step, const PhaseState& state, double dt, const Mat3& rotation) {
    require(state.dims == 3, ErrorKind::domain, "random rotation filter requires d = 3");
    const Vec3 center = mean_position(state);
    const PhaseState stepped = step(rotate_state(state, rotation, center), dt);
    return rotate_state(stepped, rotation.transpose(), center);
}

inline PhaseState random_rotation_wrap(const StepFn& step, const PhaseState& state, double dt, Rng& rng) {
    return random_rotation_wrap(step, state, dt, random_rotation(rng));
}

struct ConservationTargets {
    double kinetic = 0.0;             // K_tgt
    Vec3 angular_momentum = Vec3::Zero();  // L_tgt

    /// K_tgt = K_cur - dE_tot with the energies bracketing one step.
    static ConservationTargets from_step(double kinetic_before, double potential_before, double kinetic_after,
                                         double potential_after, const Vec3& angular_momentum_before) {
        const double delta_e = (potential_after + kinetic_after) - (potential_before + kinetic_before);
        return {kinetic_after - delta_e, angular_momentum_before};
    }
};

struct FilterDiagnostics {
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double discriminant = std::numeric_limits<double>::quiet_NaN();
    bool fallback = false;          // no exact solution, angular-only projection applied
    bool angular_skipped = false;   // degenerate inertia, energy-only rescale applied
    double correction_norm = 0.0;   // ||p' - p||
};

struct ConservationResult {
    PhaseState state;
    FilterDiagnostics diagnostics;
};

/// Minimal mass-weighted momentum correction that meets a kinetic energy
/// and an angular momentum target at once. Corrected momenta have the form
/// p' = u p0 + p1 (u = 1/lambda) where p0 is p with its rigid rotation
/// removed and p1 is the rigid rotation carrying L_tgt; the energy target is
/// a quadratic in lambda. Among real roots the one with the smallest
/// sum |p' - p|^2 / 2m wins, ties going to lambda closest to 1. Positions are
/// never touched.
inline ConservationResult coupled_conservation_filter(const PhaseState& next, const ConservationTargets& targets) {
    ConservationResult result{next, {}};
    FilterDiagnostics& diag = result.diagnostics;
    const double k_current = kinetic_energy(next);

    auto energy_only = [&]() {
        diag.angular_skipped = true;
        if (k_current > 0.0 && targets.kinetic >= 0.0) {
            diag.lambda = std::sqrt(k_current / targets.kinetic);
            result.state.momenta *= std::sqrt(targets.kinetic / k_current);
        } else {
            diag.fallback = true;
        }
        diag.correction_norm = (result.state.momenta - next.momenta).norm();
        return result;
    };
    if (next.dims != 3 || next.count() < 2) return energy_only();

    const Mat3 inertia = inertia_tensor(next);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
    const double largest = eig.eigenvalues().maxCoeff();
    if (!(largest > 0.0) || eig.eigenvalues().minCoeff() <= inertia_condition_cutoff * largest) return energy_only();
    auto solve = [&](const Vec3& rhs) -> Vec3 {
        return eig.eigenvectors() * (eig.eigenvalues().cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() * rhs));
    };

    const Vec3 com = center_of_mass(next);
    const Vec3 omega_current = solve(angular_momentum(next));
    const Vec3 omega_target = solve(targets.angular_momentum);
    const int n = next.count();
    Mat p0(3, n), p1(3, n), p(3, n);
    double a = 0.0, b = 0.0, c = 0.0;
    for (int i = 0; i < n; ++i) {
        const double m = next.masses[i];
        const Vec3 r = next.position(i) - com;
        p.col(i) = next.momentum(i);
        p0.col(i) = p.col(i) - m * omega_current.cross(r);
        p1.col(i) = m * omega_target.cross(r);
        a += p0.col(i).squaredNorm() / (2.0 * m);
        b += p0.col(i).dot(p1.col(i)) / m;
        c += p1.col(i).squaredNorm() / (2.0 * m);
    }
    // (C - K_tgt) lambda^2 + B lambda + A = 0  <=>  A u^2 + B u + (C - K_tgt) = 0
    const double k_target = targets.kinetic;
    const double disc = b * b - 4.0 * (c - k_target) * a;
    diag.discriminant = disc;

    auto apply = [&](double u) {
        for (int i = 0; i < n; ++i) result.state.momentum(i) = u * p0.col(i) + p1.col(i);
        diag.correction_norm = (result.state.momenta - next.momenta).norm();
    };
    auto cost = [&](double u) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += (u * p0.col(i) + p1.col(i) - p.col(i)).squaredNorm() / (2.0 * next.masses[i]);
        return total;
    };

    const double scale = std::max({a, std::abs(b), std::abs(c), std::abs(k_target)});
    if (k_target < 0.0 || disc < 0.0 || a <= 1e-300 || a <= 1e-15 * scale) {
        diag.fallback = true;
        diag.lambda = 1.0;
        apply(1.0);
        return result;
    }
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
    double roots[2];
    int count = 0;
    if (q != 0.0) {
        roots[count++] = q / a;
        roots[count++] = (c - k_target) / q;
    } else {
        roots[count++] = 0.0;  // b = 0 and C = K_tgt
    }
    double best_u = roots[0];
    double best_cost = cost(roots[0]);
    for (int k = 1; k < count; ++k) {
        const double ck = cost(roots[k]);
        const bool tie = std::abs(ck - best_cost) <= 1e-14 * std::max(1.0, best_cost);
        if (ck < best_cost && !tie) {
            best_u = roots[k];
            best_cost = ck;
        } else if (tie && std::abs(1.0 / roots[k] - 1.0) < std::abs(1.0 / best_u - 1.0)) {
            best_u = roots[k];
            best_cost = ck;
        }
    }
    diag.lambda = best_u != 0.0 ? 1.0 / best_u : std::numeric_limits<double>::infinity();
    apply(best_u);
    return result;
}

struct LangevinParams {
    double temperature = 1.0;
    double friction = 0.0;  // gamma
    double k_boltzmann = 1.0;

    bool operator==(const LangevinParams&) const = default;
};

/// Exact Ornstein-Uhlenbeck momentum update p' = c1 p + c2 sqrt(m k_B T) xi.
inline PhaseState langevin_thermostat(const PhaseState& state, double dt, const LangevinParams& params, Rng& rng) {
    require(params.friction >= 0.0 && params.temperature >= 0.0, ErrorKind::domain,
            "Langevin thermostat needs friction >= 0 and temperature >= 0");
    const double c1 = std::exp(-params.friction * dt);
    const double c2 = std::sqrt(std::max(0.0, 1.0 - c1 * c1));
    PhaseState out = state;
    for (int i = 0; i < out.count(); ++i) {
        const double sigma = c2 * std::sqrt(out.masses[i] * params.k_boltzmann * params.temperature);
        for (int k = 0; k < out.dims; ++k) {
            const Eigen::Index idx = i * out.dims + k;
            out.momenta[idx] = c1 * state.momenta[idx] + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
        }
    }
    return out;
}

}  // namespace hfm
