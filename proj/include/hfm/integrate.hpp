#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <string>
#include <vector>

#include "hfm/binary_io.hpp"
#include "hfm/filters.hpp"
#include "hfm/net.hpp"
#include "hfm/systems.hpp"

namespace hfm {

/// Kick-drift-kick Velocity Verlet.
inline PhaseState vv_step(const SystemParams& sys, const PhaseState& state, double dt) {
    const Vec inv_m = component_masses(state.masses, state.dims).cwiseInverse();
    PhaseState out = state;
    out.momenta += 0.5 * dt * force(sys, state);
    out.positions += dt * out.momenta.cwiseProduct(inv_m);
    out.momenta += 0.5 * dt * force(sys, out);
    return out;
}

/// (x, p) + dt * u_bar(x, p, dt).
template <class Model>
PhaseState hfm_step(const Model& model, const PhaseState& state, double dt) {
    require(dt >= 0.0, ErrorKind::domain, "hfm_step: dt must be >= 0");
    require(dt <= model.max_timestep() * (1.0 + 1e-12), ErrorKind::domain,
            "hfm_step: dt = " + std::to_string(dt) + " exceeds the model horizon " +
                std::to_string(model.max_timestep()));
    require(state.size() == model.size(), ErrorKind::shape, "hfm_step: state does not match the model's N*d");
    if (dt == 0.0) return state;
    const MeanField u = evaluate(model, state.positions, state.momenta, dt);
    PhaseState out = state;
    out.positions += dt * u.v;
    out.momenta += dt * u.f;
    return out;
}

struct Diagnostics {
    double total_energy = 0.0;
    double kinetic_energy = 0.0;
    Vec3 angular_momentum = Vec3::Zero();
    Vec3 linear_momentum = Vec3::Zero();

    bool operator==(const Diagnostics&) const = default;
};

inline Diagnostics diagnose(const SystemParams& sys, const PhaseState& s) {
    return {total_energy(sys, s), kinetic_energy(s), angular_momentum(s), total_momentum(s)};
}

enum class RolloutStatus : std::uint32_t { completed = 0, left_box = 1, non_finite = 2 };

inline std::string status_name(RolloutStatus s) {
    switch (s) {
        case RolloutStatus::completed: return "ok";
        case RolloutStatus::left_box: return "left_box";
        case RolloutStatus::non_finite: return "non_finite";
    }
    return "?";
}

struct Trajectory {
    SystemParams system;
    double timestep = 0.0;
    std::vector<PhaseState> states;
    std::vector<double> times;
    std::vector<Diagnostics> diagnostics;
    std::vector<FilterDiagnostics> filter_diagnostics;  // one per state; entry 0 is empty
    RolloutStatus status = RolloutStatus::completed;

    std::size_t length() const { return states.size(); }

    void push(const PhaseState& s, double t, const FilterDiagnostics& fd = {}) {
        states.push_back(s);
        times.push_back(t);
        diagnostics.push_back(diagnose(system, s));
        filter_diagnostics.push_back(fd);
    }
};

enum class FilterKind { rotation, drift, conservation, thermostat };

inline std::string filter_name(FilterKind k) {
    switch (k) {
        case FilterKind::rotation: return "rotation";
        case FilterKind::drift: return "drift";
        case FilterKind::conservation: return "conservation";
        case FilterKind::thermostat: return "thermostat";
    }
    return "?";
}

inline FilterKind filter_from_name(const std::string& name) {
    for (FilterKind k : {FilterKind::rotation, FilterKind::drift, FilterKind::conservation, FilterKind::thermostat})
        if (filter_name(k) == name) return k;
    fail(ErrorKind::config, "unknown filter '" + name + "' (rotation, drift, conservation, thermostat)");
}

using EnergyFn = std::function<double(const PhaseState&)>;

/// The rotation wrap acts on the stepper itself, so its position in the list
/// is irrelevant; every other filter runs after the step in list order.
struct FilterPipeline {
    std::vector<FilterKind> order;
    LangevinParams thermostat;
    EnergyFn potential;  // defaults to the analytic potential of the system

    bool has(FilterKind k) const { return std::find(order.begin(), order.end(), k) != order.end(); }

    /// The default full pipeline.
    static FilterPipeline all() {
        return {{FilterKind::rotation, FilterKind::drift, FilterKind::conservation, FilterKind::thermostat}, {}, {}};
    }
};

struct RolloutOptions {
    double sanity_bound = 1e3;  // |x| per component
};

/// Runs n_steps of stepper followed by the filter pipeline. Leaving the sanity
/// box or producing non-finite values stops the rollout early; the offending
/// state is not stored and status records why.
inline Trajectory rollout(const SystemParams& sys, const StepFn& stepper, const PhaseState& state0, double dt,
                          long n_steps, const FilterPipeline& filters = {}, Rng rng = Rng(),
                          const RolloutOptions& options = {}) {
    require(n_steps >= 0, ErrorKind::domain, "rollout: n_steps must be >= 0");
    state0.validate();
    check_compatible(sys, state0);
    const EnergyFn potential =
        filters.potential ? filters.potential : EnergyFn([&sys](const PhaseState& s) { return potential_energy(sys, s); });
    const bool rotate = filters.has(FilterKind::rotation);

    Trajectory traj;
    traj.system = sys;
    traj.timestep = dt;
    traj.states.reserve(static_cast<std::size_t>(n_steps) + 1);
    traj.push(state0, 0.0);
    for (long k = 1; k <= n_steps; ++k) {
        Rng step_rng = rng.split(static_cast<std::uint64_t>(k));
        const PhaseState& prev = traj.states.back();
        PhaseState next = rotate ? random_rotation_wrap(stepper, prev, dt, step_rng) : stepper(prev, dt);
        FilterDiagnostics fd;
        for (FilterKind f : filters.order) {
            switch (f) {
                case FilterKind::rotation: break;
                case FilterKind::drift: next = remove_drift_filter(prev, next, dt); break;
                case FilterKind::conservation: {
                    if (!next.positions.allFinite() || !next.momenta.allFinite()) break;
                    const ConservationTargets targets = ConservationTargets::from_step(
                        kinetic_energy(prev), potential(prev), kinetic_energy(next), potential(next),
                        angular_momentum(prev));
                    ConservationResult r = coupled_conservation_filter(next, targets);
                    next = std::move(r.state);
                    fd = r.diagnostics;
                    break;
                }
                case FilterKind::thermostat: next = langevin_thermostat(next, dt, filters.thermostat, step_rng); break;
            }
        }
        if (!next.positions.allFinite() || !next.momenta.allFinite()) {
            traj.status = RolloutStatus::non_finite;
            break;
        }
        if (next.positions.cwiseAbs().maxCoeff() >= options.sanity_bound) {
            traj.status = RolloutStatus::left_box;
            break;
        }
        traj.push(next, static_cast<double>(k) * dt, fd);
    }
    return traj;
}

inline StepFn vv_stepper(const SystemParams& sys) {
    return [sys](const PhaseState& s, double dt) { return vv_step(sys, s, dt); };
}

/// The model must outlive the returned function.
template <class Model>
StepFn hfm_stepper(const Model& model) {
    return [&model](const PhaseState& s, double dt) { return hfm_step(model, s, dt); };
}

/// Trajectory of the oscillator's exact flow (unit mass), for oracles.
inline Trajectory exact_trajectory(const SystemParams& sys, const PhaseState& state0, double dt, long n_steps) {
    Trajectory traj;
    traj.system = sys;
    traj.timestep = dt;
    for (long k = 0; k <= n_steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        traj.push(k == 0 ? state0 : exact_flow(sys, state0, t), t);
    }
    return traj;
}

inline constexpr std::uint32_t trajectory_version = 1;

/// Layout (little-endian): "HFMT", version u32, N u32, d u32, state_count u64,
/// system tag u32, 8 x f64 system parameters, N x f64 masses, dt f64,
/// status u32, then per state: t, x (N*d), p (N*d), E_tot, E_kin, L (3), P (3),
/// lambda, discriminant, fallback u32, angular_skipped u32, correction_norm.
inline io::Writer encode_trajectory(const Trajectory& traj) {
    require(!traj.states.empty(), ErrorKind::domain, "cannot write an empty trajectory");
    const PhaseState& first = traj.states.front();
    io::Writer w;
    w.magic("HFMT");
    w.put<std::uint32_t>(trajectory_version);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(first.count()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(first.dims));
    w.put<std::uint64_t>(traj.states.size());
    w.put<std::uint32_t>(system_tag(traj.system));
    w.put(system_slots(traj.system));
    w.put(first.masses);
    w.put<double>(traj.timestep);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(traj.status));
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const Diagnostics& d = traj.diagnostics[k];
        const FilterDiagnostics& fd = traj.filter_diagnostics[k];
        w.put<double>(traj.times[k]);
        w.put(traj.states[k].positions);
        w.put(traj.states[k].momenta);
        w.put<double>(d.total_energy);
        w.put<double>(d.kinetic_energy);
        for (int c = 0; c < 3; ++c) w.put<double>(d.angular_momentum[c]);
        for (int c = 0; c < 3; ++c) w.put<double>(d.linear_momentum[c]);
        w.put<double>(fd.lambda);
        w.put<double>(fd.discriminant);
        w.put<std::uint32_t>(fd.fallback ? 1u : 0u);
        w.put<std::uint32_t>(fd.angular_skipped ? 1u : 0u);
        w.put<double>(fd.correction_norm);
    }
    return w;
}

inline void write_trajectory(const std::string& path, const Trajectory& traj) { encode_trajectory(traj).save(path); }

inline Trajectory read_trajectory(const std::string& path) {
    io::Reader r = io::Reader::open(path);
    r.expect_magic("HFMT");
    const auto version = r.get<std::uint32_t>();
    require(version == trajectory_version, ErrorKind::io,
            path + ": unsupported trajectory version " + std::to_string(version));
    const int count = static_cast<int>(r.get<std::uint32_t>());
    const int dims = static_cast<int>(r.get<std::uint32_t>());
    const auto n_states = r.get<std::uint64_t>();
    Trajectory traj;
    const auto tag = r.get<std::uint32_t>();
    traj.system = system_from_slots(tag, r.get_array<system_slot_count>());
    const Vec masses = r.get_vec(static_cast<std::size_t>(count));
    traj.timestep = r.get<double>();
    traj.status = static_cast<RolloutStatus>(r.get<std::uint32_t>());
    const std::size_t width = static_cast<std::size_t>(count) * static_cast<std::size_t>(dims);
    for (std::uint64_t k = 0; k < n_states; ++k) {
        traj.times.push_back(r.get<double>());
        PhaseState s{r.get_vec(width), r.get_vec(width), masses, dims};
        traj.states.push_back(std::move(s));
        Diagnostics d;
        d.total_energy = r.get<double>();
        d.kinetic_energy = r.get<double>();
        for (int c = 0; c < 3; ++c) d.angular_momentum[c] = r.get<double>();
        for (int c = 0; c < 3; ++c) d.linear_momentum[c] = r.get<double>();
        traj.diagnostics.push_back(d);
        FilterDiagnostics fd;
        fd.lambda = r.get<double>();
        fd.discriminant = r.get<double>();
        fd.fallback = r.get<std::uint32_t>() != 0;
        fd.angular_skipped = r.get<std::uint32_t>() != 0;
        fd.correction_norm = r.get<double>();
        traj.filter_diagnostics.push_back(fd);
    }
    require(r.at_end(), ErrorKind::io, path + ": trailing bytes after the last state");
    return traj;
}

/// One row per state: t, x..., p..., E_tot, E_kin, |L|, |P|, status, lambda, discriminant, fallback.
inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot open '" + path + "' for writing");
    const int width = traj.states.empty() ? 0 : traj.states.front().size();
    out << 't';
    for (const char* prefix : {"x", "p"})
        for (int k = 0; k < width; ++k) out << ',' << prefix << k;
    out << ",E_tot,E_kin,L_norm,P_norm,status,lambda,discriminant,fallback\n";
    out << std::setprecision(17);
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const Diagnostics& d = traj.diagnostics[k];
        const FilterDiagnostics& fd = traj.filter_diagnostics[k];
        const bool last = k + 1 == traj.states.size();
        out << traj.times[k];
        for (const Vec* v : {&traj.states[k].positions, &traj.states[k].momenta})
            for (int c = 0; c < width; ++c) out << ',' << (*v)[c];
        out << ',' << d.total_energy << ',' << d.kinetic_energy << ',' << d.angular_momentum.norm() << ','
            << d.linear_momentum.norm() << ',' << (last ? status_name(traj.status) : "ok") << ',' << fd.lambda << ','
            << fd.discriminant << ',' << (fd.fallback ? 1 : 0) << '\n';
    }
}

}  // namespace hfm
