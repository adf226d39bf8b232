#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "hfm/error.hpp"

namespace hfm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Positions and momenta of N particles in d dimensions, stored particle-major
/// (component k of particle i lives at index i*d + k).
struct PhaseState {
    Vec positions;
    Vec momenta;
    Vec masses;
    int dims = 1;

    int count() const { return static_cast<int>(masses.size()); }
    int size() const { return count() * dims; }

    auto position(int i) const { return positions.segment(i * dims, dims); }
    auto position(int i) { return positions.segment(i * dims, dims); }
    auto momentum(int i) const { return momenta.segment(i * dims, dims); }
    auto momentum(int i) { return momenta.segment(i * dims, dims); }

    void validate() const {
        require(dims >= 1 && dims <= 3, ErrorKind::shape, "dims must be 1, 2 or 3, got " + std::to_string(dims));
        require(count() >= 1, ErrorKind::shape, "phase state needs at least one particle");
        require(positions.size() == size() && momenta.size() == size(), ErrorKind::shape,
                "positions/momenta must have length N*d = " + std::to_string(size()));
        require(masses.allFinite() && (masses.array() > 0.0).all(), ErrorKind::domain,
                "masses must be strictly positive and finite");
        require(positions.allFinite() && momenta.allFinite(), ErrorKind::numeric, "phase state has non-finite entries");
    }

    bool operator==(const PhaseState&) const = default;
};

inline PhaseState make_state(int dims, Vec positions, Vec momenta, Vec masses) {
    PhaseState s{std::move(positions), std::move(momenta), std::move(masses), dims};
    s.validate();
    return s;
}

/// Per-component mass vector (length N*d), m_i repeated d times.
inline Vec component_masses(const Vec& masses, int dims) {
    Vec out(masses.size() * dims);
    for (Eigen::Index i = 0; i < masses.size(); ++i) out.segment(i * dims, dims).setConstant(masses[i]);
    return out;
}

inline Vec velocities(const PhaseState& s) {
    return s.momenta.cwiseQuotient(component_masses(s.masses, s.dims));
}

inline double kinetic_energy(const PhaseState& s) {
    double k = 0.0;
    for (int i = 0; i < s.count(); ++i) k += s.momentum(i).squaredNorm() / (2.0 * s.masses[i]);
    return k;
}

/// Embeds a d-component particle vector into 3D (missing components are zero).
template <class Segment>
Vec3 lift3(const Segment& v) {
    Vec3 out = Vec3::Zero();
    for (Eigen::Index k = 0; k < v.size(); ++k) out[k] = v[k];
    return out;
}

inline Vec3 total_momentum(const PhaseState& s) {
    Vec3 total = Vec3::Zero();
    for (int i = 0; i < s.count(); ++i) total += lift3(s.momentum(i));
    return total;
}

inline Vec3 center_of_mass(const PhaseState& s) {
    Vec3 com = Vec3::Zero();
    for (int i = 0; i < s.count(); ++i) com += s.masses[i] * lift3(s.position(i));
    return com / s.masses.sum();
}

inline Vec3 mean_position(const PhaseState& s) {
    Vec3 mean = Vec3::Zero();
    for (int i = 0; i < s.count(); ++i) mean += lift3(s.position(i));
    return mean / s.count();
}

/// Total angular momentum about the center of mass. For d < 3 the state is
/// embedded in 3D, so a planar system reports (0, 0, L_z).
inline Vec3 angular_momentum(const PhaseState& s) {
    const Vec3 com = center_of_mass(s);
    Vec3 l = Vec3::Zero();
    for (int i = 0; i < s.count(); ++i) l += (lift3(s.position(i)) - com).cross(lift3(s.momentum(i)));
    return l;
}

/// Inertia tensor about the center of mass.
inline Mat3 inertia_tensor(const PhaseState& s) {
    const Vec3 com = center_of_mass(s);
    Mat3 inertia = Mat3::Zero();
    for (int i = 0; i < s.count(); ++i) {
        const Vec3 r = lift3(s.position(i)) - com;
        inertia += s.masses[i] * (r.squaredNorm() * Mat3::Identity() - r * r.transpose());
    }
    return inertia;
}

}  // namespace hfm
