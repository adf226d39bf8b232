#pragma once

#include "hfm/phase_state.hpp"
#include "hfm/rng.hpp"

namespace hfm {

/// Uniform random rotation from a normalized Gaussian quaternion.
inline Mat3 random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    if (q.norm() == 0.0) return Mat3::Identity();
    q.normalize();
    return q.toRotationMatrix();
}

/// Rotates particle vectors of a packed N*3 array: v_i <- R v_i.
inline Vec rotate_vectors(const Mat3& r, const Vec& packed) {
    require(packed.size() % 3 == 0, ErrorKind::shape, "rotation needs 3D particle vectors");
    Vec out(packed.size());
    for (Eigen::Index i = 0; i < packed.size(); i += 3) out.segment<3>(i) = r * packed.segment<3>(i);
    return out;
}

/// Rotates positions about `center` and momenta about the origin.
inline PhaseState rotate_state(const PhaseState& s, const Mat3& r, const Vec3& center) {
    require(s.dims == 3, ErrorKind::domain, "rotations require d = 3");
    PhaseState out = s;
    for (int i = 0; i < s.count(); ++i) {
        out.position(i) = r * (s.position(i) - center) + center;
        out.momentum(i) = r * s.momentum(i);
    }
    return out;
}

}  // namespace hfm
