#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "hfm/rng.hpp"
#include "hfm/systems.hpp"

namespace hfm {

/// One trajectory-free training tuple (x, p, v = p/m, f) with its timestep.
struct Sample {
    PhaseState state;
    Vec velocity;
    Vec force;
    double timestep = 0.0;
};

inline Sample make_sample(const PhaseState& state, Vec forces, double timestep = 0.0) {
    require(forces.size() == state.size(), ErrorKind::shape, "force vector must have length N*d");
    return Sample{state, velocities(state), std::move(forces), timestep};
}

inline Sample make_sample(const SystemParams& sys, const PhaseState& state, double timestep = 0.0) {
    return make_sample(state, force(sys, state), timestep);
}

/// Axis-aligned box for uniform position proposals, one interval per N*d component.
struct PositionBox {
    Vec lower;
    Vec upper;

    bool has_volume() const { return ((upper - lower).array() > 0.0).all(); }
    bool operator==(const PositionBox&) const = default;
};

inline PositionBox uniform_box(int components, double lo, double hi) {
    return PositionBox{Vec::Constant(components, lo), Vec::Constant(components, hi)};
}

/// Per-system proposal boxes chosen so that acceptance at the reference energies stays above 1%.
inline PositionBox default_box(const SystemParams& sys, int count, int dims) {
    return std::visit(overloaded{
                          [&](const HarmonicOscillator&) { return uniform_box(1, -2.0, 2.0); },
                          [&](const Barbanis&) { return uniform_box(2, -2.0, 2.0); },
                          [&](const SpringPendulum&) {
                              PositionBox box = uniform_box(2, -3.0, 3.0);
                              box.lower[1] = -3.0;
                              box.upper[1] = 0.0;
                              return box;
                          },
                          [&](const Gravity&) { return uniform_box(count * dims, -1.0, 1.0); },
                      },
                      sys);
}

inline Vec default_masses(const SystemParams& sys, int count) {
    if (const auto* s = std::get_if<SpringPendulum>(&sys)) return Vec::Constant(count, s->mass);
    return Vec::Ones(count);
}

inline Vec uniform_in_box(const PositionBox& box, Rng& rng) {
    Vec x(box.lower.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = rng.uniform(box.lower[k], box.upper[k]);
    return x;
}

/// Rejection-samples positions with V(x) <= E_tot, then draws a uniformly
/// random momentum direction and sets its magnitude so that H(x, p) = E_tot.
inline Sample sample_fixed_energy(const SystemParams& sys, const Vec& masses, int dims, double total_energy,
                                  const PositionBox& box, Rng& rng, long max_tries = 1'000'000,
                                  long* attempts = nullptr) {
    const int n = static_cast<int>(masses.size());
    require(box.lower.size() == n * dims && box.upper.size() == n * dims, ErrorKind::shape,
            "position box must have N*d components");
    require(box.has_volume(), ErrorKind::domain, "position box has zero volume");
    PhaseState state{Vec::Zero(n * dims), Vec::Zero(n * dims), masses, dims};
    state.validate();
    check_compatible(sys, state);

    for (long attempt = 1; attempt <= max_tries; ++attempt) {
        if (attempts) ++*attempts;
        state.positions = uniform_in_box(box, rng);
        const double v = potential_energy(sys, state);
        if (!(v <= total_energy)) continue;

        Vec direction(n * dims);
        for (Eigen::Index k = 0; k < direction.size(); ++k) direction[k] = rng.normal();
        const double norm = direction.norm();
        if (norm == 0.0) continue;
        state.momenta = direction / norm;
        const double unit_kinetic = kinetic_energy(state);
        state.momenta *= std::sqrt((total_energy - v) / unit_kinetic);
        return make_sample(sys, state);
    }
    std::ostringstream msg;
    msg << "rejection budget exhausted: 0 of " << max_tries << " proposals had V(x) <= " << total_energy
        << " for " << system_name(sys) << " (acceptance rate < " << 1.0 / static_cast<double>(max_tries) << ")";
    fail(ErrorKind::numeric, msg.str());
}

struct MomentumSamplerCfg {
    double mean_temperature = 1.0;
    double temperature_spread = 0.0;
    double k_boltzmann = 1.0;
    double q_zero_angular_momentum = 0.0;
    double q_zero_momentum = 0.0;

    bool operator==(const MomentumSamplerCfg&) const = default;

    void validate() const {
        require(temperature_spread >= 0.0, ErrorKind::domain, "temperature_spread must be >= 0");
        require(k_boltzmann > 0.0, ErrorKind::domain, "k_boltzmann must be > 0");
        require(q_zero_angular_momentum >= 0.0 && q_zero_angular_momentum <= 1.0 && q_zero_momentum >= 0.0 &&
                    q_zero_momentum <= 1.0,
                ErrorKind::domain, "momentum sampler probabilities must lie in [0, 1]");
    }
};

/// Draws one temperature T ~ N(mu_T, sigma_T^2), clips it at zero and samples
/// p_i ~ N(0, m_i k_B T I) for every particle.
inline PhaseState sample_maxwell_boltzmann(const PhaseState& state, const MomentumSamplerCfg& cfg, Rng& rng) {
    cfg.validate();
    PhaseState out = state;
    const double temperature = std::max(0.0, cfg.mean_temperature + cfg.temperature_spread * rng.normal());
    for (int i = 0; i < out.count(); ++i) {
        const double sigma = std::sqrt(out.masses[i] * cfg.k_boltzmann * temperature);
        for (int k = 0; k < out.dims; ++k) out.momenta[i * out.dims + k] = sigma * rng.normal();
    }
    return out;
}

/// Degrees of freedom after removing the center-of-mass drift.
inline int drift_free_dof(const PhaseState& s) { return s.dims * s.count() - s.dims; }

inline double kinetic_temperature(const PhaseState& s, double k_boltzmann = 1.0) {
    const int dof = drift_free_dof(s);
    return dof > 0 ? 2.0 * kinetic_energy(s) / (dof * k_boltzmann) : 0.0;
}

inline void subtract_drift(PhaseState& s) {
    const Vec3 drift = total_momentum(s) / s.masses.sum();
    for (int i = 0; i < s.count(); ++i) s.momentum(i) -= s.masses[i] * drift.head(s.dims);
}

/// Removes the center-of-mass drift and rescales momenta to a target
/// temperature; without a target the pre-removal kinetic energy is restored.
inline PhaseState remove_drift_and_rescale(const PhaseState& state, std::optional<double> target_temperature = {},
                                           double k_boltzmann = 1.0) {
    state.validate();
    require(state.count() >= 2, ErrorKind::domain, "drift removal with rescaling needs N >= 2");
    PhaseState out = state;
    const double kinetic_before = kinetic_energy(state);
    subtract_drift(out);
    const double kinetic_after = kinetic_energy(out);
    const double kinetic_target =
        target_temperature ? 0.5 * k_boltzmann * *target_temperature * drift_free_dof(out) : kinetic_before;
    require(!target_temperature || *target_temperature >= 0.0, ErrorKind::domain, "target temperature must be >= 0");
    if (kinetic_target == 0.0) {
        out.momenta.setZero();
        return out;
    }
    require(kinetic_after > 1e-14 * kinetic_before, ErrorKind::numeric,
            "cannot rescale: momenta are zero after drift removal but the target kinetic energy is " +
                std::to_string(kinetic_target));
    out.momenta *= std::sqrt(kinetic_target / kinetic_after);
    return out;
}

inline constexpr double inertia_condition_cutoff = 1e-10;

/// Removes the rigid-rotation component omega x r_i (I omega = L) from the momenta.
inline PhaseState project_zero_angular_momentum(const PhaseState& state) {
    state.validate();
    require(state.dims == 3, ErrorKind::domain, "zero angular momentum projection requires d = 3");
    const Mat3 inertia = inertia_tensor(state);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
    const double largest = eig.eigenvalues().maxCoeff();
    require(largest > 0.0 && eig.eigenvalues().minCoeff() > inertia_condition_cutoff * largest, ErrorKind::numeric,
            "inertia tensor is singular (collinear configuration); zero-L projection skipped");
    const Vec3 omega = eig.eigenvectors() *
                       (eig.eigenvalues().cwiseInverse().asDiagonal() * (eig.eigenvectors().transpose() *
                                                                         angular_momentum(state)));
    const Vec3 com = center_of_mass(state);
    PhaseState out = state;
    for (int i = 0; i < out.count(); ++i) {
        const Vec3 r = lift3(state.position(i)) - com;
        out.momentum(i) -= state.masses[i] * omega.cross(r);
    }
    return out;
}

/// Momentum preparation for training examples whose dataset has no momentum
/// labels: zero momenta with q_zero_momentum, otherwise Maxwell-Boltzmann,
/// drift-free and (with q_zero_angular_momentum) non-rotating. The
/// projections only apply to 3D multi-particle states.
inline PhaseState prepare_training_momenta(const PhaseState& state, const MomentumSamplerCfg& cfg, Rng& rng) {
    const bool spatial = state.dims == 3 && state.count() >= 2;
    const double q_zero_p = spatial ? cfg.q_zero_momentum : 0.0;
    const double q_zero_l = spatial ? cfg.q_zero_angular_momentum : 0.0;
    PhaseState out = state;
    if (rng.uniform() < q_zero_p) {
        out.momenta.setZero();
        return out;
    }
    out = sample_maxwell_boltzmann(out, cfg, rng);
    if (spatial && kinetic_energy(out) > 0.0) {
        PhaseState drift_free = out;
        subtract_drift(drift_free);
        if (kinetic_energy(drift_free) > 0.0) out = remove_drift_and_rescale(out);
    }
    if (rng.uniform() < q_zero_l && out.count() >= 3) {
        try {
            out = project_zero_angular_momentum(out);
        } catch (const Error&) {
            // degenerate inertia: keep the momenta as sampled
        }
    }
    return out;
}

enum class TimestepKind { uniform, logit_normal_diff, mixture };

struct TimestepDist {
    TimestepKind kind = TimestepKind::mixture;
    double max_timestep = 1.0;
    double q_zero = 0.0;
    double logit_mu = -0.4;
    double logit_sigma = 1.0;
    double beta_a = 1.0;
    double beta_b = 2.0;
    double uniform_weight = 0.02;

    bool operator==(const TimestepDist&) const = default;

    void validate() const {
        require(max_timestep > 0.0, ErrorKind::domain, "max_timestep must be > 0");
        require(q_zero >= 0.0 && q_zero <= 1.0, ErrorKind::domain, "q_zero must lie in [0, 1]");
        require(uniform_weight >= 0.0 && uniform_weight <= 1.0, ErrorKind::domain, "uniform_weight must lie in [0, 1]");
        require(beta_a > 0.0 && beta_b > 0.0 && logit_sigma > 0.0, ErrorKind::domain,
                "beta parameters and logit sigma must be > 0");
    }
};

inline double sample_beta(double a, double b, Rng& rng) {
    std::gamma_distribution<double> ga(a, 1.0);
    std::gamma_distribution<double> gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
}

/// Normalized interval tau in [0, 1] (before the q_zero point mass).
inline double sample_tau(const TimestepDist& dist, Rng& rng) {
    switch (dist.kind) {
        case TimestepKind::uniform: return rng.uniform();
        case TimestepKind::logit_normal_diff: {
            auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
            const double a = sigmoid(rng.normal(dist.logit_mu, dist.logit_sigma));
            const double b = sigmoid(rng.normal(dist.logit_mu, dist.logit_sigma));
            return std::abs(a - b);
        }
        case TimestepKind::mixture:
            if (rng.uniform() < dist.uniform_weight) return rng.uniform();
            return sample_beta(dist.beta_a, dist.beta_b, rng);
    }
    return 0.0;
}

inline double sample_timestep(const TimestepDist& dist, Rng& rng) {
    if (dist.q_zero > 0.0 && rng.uniform() < dist.q_zero) return 0.0;
    return std::clamp(sample_tau(dist, rng), 0.0, 1.0) * dist.max_timestep;
}

}  // namespace hfm
