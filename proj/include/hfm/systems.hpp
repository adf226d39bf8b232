#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "hfm/phase_state.hpp"

namespace hfm {

struct HarmonicOscillator {
    double omega = 1.0;
    bool operator==(const HarmonicOscillator&) const = default;
};

/// Planar elastic pendulum in Cartesian coordinates, pivot at the origin.
struct SpringPendulum {
    double mass = 1.0;
    double gravity = 9.81;
    double stiffness = 1.0;
    double rest_length = 1.0;
    bool operator==(const SpringPendulum&) const = default;
};

struct Barbanis {
    double omega_x = 1.0;
    double omega_y = 1.0;
    double coupling = 10.0;
    bool operator==(const Barbanis&) const = default;
};

/// Newtonian gravity with optional Plummer softening, no boundary conditions.
struct Gravity {
    double G = 1.0;
    double softening = 0.0;
    bool operator==(const Gravity&) const = default;
};

using SystemParams = std::variant<HarmonicOscillator, SpringPendulum, Barbanis, Gravity>;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline std::string_view system_name(const SystemParams& sys) {
    return std::visit(overloaded{
                          [](const HarmonicOscillator&) { return std::string_view("harmonic_oscillator"); },
                          [](const SpringPendulum&) { return std::string_view("spring_pendulum"); },
                          [](const Barbanis&) { return std::string_view("barbanis"); },
                          [](const Gravity&) { return std::string_view("gravity"); },
                      },
                      sys);
}

inline void validate_system(const SystemParams& sys) {
    std::visit(overloaded{
                   [](const HarmonicOscillator& s) {
                       require(s.omega > 0.0, ErrorKind::domain, "harmonic_oscillator: omega must be > 0");
                   },
                   [](const SpringPendulum& s) {
                       require(s.stiffness > 0.0 && s.mass > 0.0, ErrorKind::domain,
                               "spring_pendulum: stiffness and mass must be > 0");
                       require(s.rest_length >= 0.0, ErrorKind::domain, "spring_pendulum: rest_length must be >= 0");
                   },
                   [](const Barbanis&) {},
                   [](const Gravity& s) {
                       require(s.G > 0.0, ErrorKind::domain, "gravity: G must be > 0");
                       require(s.softening >= 0.0, ErrorKind::domain, "gravity: softening must be >= 0");
                   },
               },
               sys);
}

/// Throws a shape error naming the variant and the layout it expects.
inline void check_compatible(const SystemParams& sys, const PhaseState& state) {
    auto mismatch = [&](std::string_view expected) {
        fail(ErrorKind::shape, std::string(system_name(sys)) + " expects " + std::string(expected) + ", got N=" +
                                   std::to_string(state.count()) + " d=" + std::to_string(state.dims));
    };
    std::visit(overloaded{
                   [&](const HarmonicOscillator&) {
                       if (state.count() != 1 || state.dims != 1) mismatch("1 particle in 1D");
                   },
                   [&](const SpringPendulum&) {
                       if (state.count() != 1 || state.dims != 2) mismatch("1 particle in 2D");
                   },
                   [&](const Barbanis&) {
                       if (state.count() != 1 || state.dims != 2) mismatch("1 particle in 2D");
                   },
                   [&](const Gravity&) {
                       if (state.count() < 2 || state.dims < 2) mismatch("N >= 2 particles in 2D or 3D");
                   },
               },
               sys);
    require(state.positions.size() == state.size(), ErrorKind::shape, "positions length does not match N*d");
}

inline double potential_energy(const SystemParams& sys, const PhaseState& state) {
    check_compatible(sys, state);
    const Vec& x = state.positions;
    return std::visit(
        overloaded{
            [&](const HarmonicOscillator& s) { return 0.5 * state.masses[0] * s.omega * s.omega * x[0] * x[0]; },
            [&](const SpringPendulum& s) {
                const double stretch = std::hypot(x[0], x[1]) - s.rest_length;
                return s.mass * s.gravity * x[1] + 0.5 * s.stiffness * stretch * stretch;
            },
            [&](const Barbanis& s) {
                const double xx = x[0] * x[0];
                const double yy = x[1] * x[1];
                return 0.5 * (s.omega_x * s.omega_x * xx + s.omega_y * s.omega_y * yy) + s.coupling * xx * yy;
            },
            [&](const Gravity& s) {
                const double eps2 = s.softening * s.softening;
                double v = 0.0;
                for (int i = 0; i < state.count(); ++i) {
                    for (int j = i + 1; j < state.count(); ++j) {
                        const double r2 = (state.position(i) - state.position(j)).squaredNorm() + eps2;
                        v -= s.G * state.masses[i] * state.masses[j] / std::sqrt(r2);
                    }
                }
                return v;
            },
        },
        sys);
}

/// f = -dV/dx, analytic.
inline Vec force(const SystemParams& sys, const PhaseState& state) {
    check_compatible(sys, state);
    const Vec& x = state.positions;
    Vec f = Vec::Zero(state.size());
    std::visit(overloaded{
                   [&](const HarmonicOscillator& s) { f[0] = -state.masses[0] * s.omega * s.omega * x[0]; },
                   [&](const SpringPendulum& s) {
                       const double r = std::hypot(x[0], x[1]);
                       f[1] = -s.mass * s.gravity;
                       if (r > 0.0) {
                           const double pull = -s.stiffness * (r - s.rest_length) / r;
                           f[0] += pull * x[0];
                           f[1] += pull * x[1];
                       }
                   },
                   [&](const Barbanis& s) {
                       f[0] = -(s.omega_x * s.omega_x * x[0] + 2.0 * s.coupling * x[0] * x[1] * x[1]);
                       f[1] = -(s.omega_y * s.omega_y * x[1] + 2.0 * s.coupling * x[0] * x[0] * x[1]);
                   },
                   [&](const Gravity& s) {
                       const double eps2 = s.softening * s.softening;
                       const int d = state.dims;
                       for (int i = 0; i < state.count(); ++i) {
                           for (int j = i + 1; j < state.count(); ++j) {
                               const Vec delta = state.position(j) - state.position(i);
                               const double r2 = delta.squaredNorm() + eps2;
                               const double scale = s.G * state.masses[i] * state.masses[j] / (r2 * std::sqrt(r2));
                               f.segment(i * d, d) += scale * delta;
                               f.segment(j * d, d) -= scale * delta;
                           }
                       }
                   },
               },
               sys);
    return f;
}

inline double total_energy(const SystemParams& sys, const PhaseState& state) {
    return kinetic_energy(state) + potential_energy(sys, state);
}

/// Closed-form phase-space rotation of the harmonic oscillator (unit mass).
inline PhaseState exact_flow(const SystemParams& sys, const PhaseState& state, double dt) {
    const auto* osc = std::get_if<HarmonicOscillator>(&sys);
    require(osc != nullptr, ErrorKind::unsupported,
            "exact_flow is only available for harmonic_oscillator, not " + std::string(system_name(sys)));
    check_compatible(sys, state);
    require(state.masses[0] == 1.0, ErrorKind::domain, "exact_flow assumes unit mass");
    const double w = osc->omega;
    const double c = std::cos(w * dt);
    const double s = std::sin(w * dt);
    PhaseState out = state;
    const double x = state.positions[0];
    const double p = state.momenta[0];
    out.positions[0] = x * c + (p / w) * s;
    out.momenta[0] = -x * w * s + p * c;
    return out;
}

// Binary layout shared by dataset, checkpoint and trajectory headers.
inline constexpr std::size_t system_slot_count = 8;

inline std::uint32_t system_tag(const SystemParams& sys) { return static_cast<std::uint32_t>(sys.index()); }

inline std::array<double, system_slot_count> system_slots(const SystemParams& sys) {
    std::array<double, system_slot_count> slots{};
    std::visit(overloaded{
                   [&](const HarmonicOscillator& s) { slots[0] = s.omega; },
                   [&](const SpringPendulum& s) {
                       slots[0] = s.mass;
                       slots[1] = s.gravity;
                       slots[2] = s.stiffness;
                       slots[3] = s.rest_length;
                   },
                   [&](const Barbanis& s) {
                       slots[0] = s.omega_x;
                       slots[1] = s.omega_y;
                       slots[2] = s.coupling;
                   },
                   [&](const Gravity& s) {
                       slots[0] = s.G;
                       slots[1] = s.softening;
                   },
               },
               sys);
    return slots;
}

inline SystemParams system_from_slots(std::uint32_t tag, const std::array<double, system_slot_count>& slots) {
    switch (tag) {
        case 0: return HarmonicOscillator{slots[0]};
        case 1: return SpringPendulum{slots[0], slots[1], slots[2], slots[3]};
        case 2: return Barbanis{slots[0], slots[1], slots[2]};
        case 3: return Gravity{slots[0], slots[1]};
        default: fail(ErrorKind::io, "unknown system tag " + std::to_string(tag));
    }
}

}  // namespace hfm
