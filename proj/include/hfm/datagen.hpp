#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hfm/dataset.hpp"
#include "hfm/integrate.hpp"

namespace hfm {

/// Random N-body initial condition: positions uniform in [-half_width, half_width]^d
/// shifted so the center of mass sits at the origin, Maxwell-Boltzmann momenta
/// with the drift removed and the kinetic temperature set to `temperature`.
inline PhaseState random_cluster(const Vec& masses, int dims, double half_width, double temperature, Rng& rng) {
    const int n = static_cast<int>(masses.size());
    require(n >= 2, ErrorKind::domain, "random_cluster needs N >= 2");
    PhaseState s{Vec::Zero(n * dims), Vec::Zero(n * dims), masses, dims};
    for (Eigen::Index k = 0; k < s.positions.size(); ++k) s.positions[k] = rng.uniform(-half_width, half_width);
    const Vec3 com = center_of_mass(s);
    for (int i = 0; i < n; ++i) s.position(i) -= com.head(dims);
    MomentumSamplerCfg mb;
    mb.mean_temperature = temperature;
    s = sample_maxwell_boltzmann(s, mb, rng);
    if (temperature > 0.0) s = remove_drift_and_rescale(s, temperature);
    return s;
}

/// Fine Velocity Verlet evolution over `duration` (rounded to whole fine steps).
inline PhaseState evolve(const SystemParams& sys, PhaseState s, double duration, double fine_dt) {
    const long steps = std::lround(duration / fine_dt);
    for (long k = 0; k < steps; ++k) s = vv_step(sys, s, fine_dt);
    return s;
}

/// Decorrelated snapshot sampler for N-body systems: each trajectory starts
/// from random_cluster and is evolved with fine VV; snapshots are taken at
/// uniformly random times in [0, horizon].
struct SnapshotConfig {
    int trajectories = 64;
    int snapshots_per_trajectory = 16;
    double horizon = 5.0;
    double fine_dt = 1e-3;
    double half_width = 1.0;
    double temperature = 0.5;

    bool operator==(const SnapshotConfig&) const = default;
};

inline std::vector<Sample> snapshot_samples(const SystemParams& sys, const Vec& masses, int dims,
                                            const SnapshotConfig& cfg, Rng rng) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(cfg.trajectories) * cfg.snapshots_per_trajectory);
    for (int t = 0; t < cfg.trajectories; ++t) {
        Rng traj_rng = rng.split(static_cast<std::uint64_t>(t));
        PhaseState s = random_cluster(masses, dims, cfg.half_width, cfg.temperature, traj_rng);
        std::vector<long> times(static_cast<std::size_t>(cfg.snapshots_per_trajectory));
        const long max_steps = std::lround(cfg.horizon / cfg.fine_dt);
        for (long& k : times) k = static_cast<long>(traj_rng.uniform() * static_cast<double>(max_steps + 1));
        std::sort(times.begin(), times.end());
        long at = 0;
        for (long k : times) {
            for (; at < k; ++at) s = vv_step(sys, s, cfg.fine_dt);
            out.push_back(make_sample(sys, s));
        }
    }
    return out;
}

}  // namespace hfm
