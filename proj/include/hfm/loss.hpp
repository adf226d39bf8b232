#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hfm/net.hpp"
#include "hfm/sampling.hpp"

namespace hfm {

struct LossConfig {
    double velocity_weight = 1.0;  // lambda_v
    double force_weight = 1.0;     // lambda_f
    double offset = 1e-3;          // c in (raw + c)^-p
    double exponent = 0.5;         // p in (raw + c)^-p
    bool adaptive = true;
    bool mass_weight_velocity = true;

    bool operator==(const LossConfig&) const = default;

    void validate() const {
        require(offset > 0.0, ErrorKind::config, "loss offset c must be > 0");
        require(velocity_weight >= 0.0 && force_weight >= 0.0, ErrorKind::config, "loss term weights must be >= 0");
    }
};

struct LossReport {
    double total = 0.0;
    double velocity_term = 0.0;
    double force_term = 0.0;
    double raw_velocity = 0.0;  // batch mean of the (mass-weighted) velocity MSE
    double raw_force = 0.0;     // batch mean of the force MSE
    double velocity_adaptive_weight = 1.0;
    double force_adaptive_weight = 1.0;
};

/// (raw + c)^-p; a constant with respect to the parameters. NaN passes through.
inline double adaptive_weight(double raw_mse, const LossConfig& cfg) {
    require(!(raw_mse < 0.0), ErrorKind::domain, "adaptive_weight expects a non-negative MSE");
    return std::pow(raw_mse + cfg.offset, -cfg.exponent);
}

/// Column-stacked samples.
struct Batch {
    Mat x, p, v, f;
    RowVec dt;
    Mat component_mass;  // m_i per component and column

    Eigen::Index size() const { return x.cols(); }
};

inline Batch make_batch(std::span<const Sample> samples) {
    require(!samples.empty(), ErrorKind::domain, "empty batch");
    const Eigen::Index width = samples.front().state.size();
    const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
    Batch b{Mat(width, n), Mat(width, n), Mat(width, n), Mat(width, n), RowVec(n), Mat(width, n)};
    for (Eigen::Index j = 0; j < n; ++j) {
        const Sample& s = samples[static_cast<std::size_t>(j)];
        require(s.state.size() == width, ErrorKind::shape, "batch samples must share the same N*d");
        b.x.col(j) = s.state.positions;
        b.p.col(j) = s.state.momenta;
        b.v.col(j) = s.velocity;
        b.f.col(j) = s.force;
        b.dt[j] = s.timestep;
        b.component_mass.col(j) = component_masses(s.state.masses, s.state.dims);
    }
    return b;
}

/// Consistency targets (v, f) + dt * d/dt u_bar with the total derivative
/// taken along (v, f, -1). Plain matrices: nothing differentiates through them.
template <class Model>
FieldBatch build_targets(const Model& model, const Batch& batch) {
    const RowVec minus_one = RowVec::Constant(batch.size(), -1.0);
    auto pass = model.forward_tangent(batch.x, batch.p, batch.dt, batch.v, batch.f, minus_one);
    return {batch.v + pass.tangent.v * batch.dt.asDiagonal(), batch.f + pass.tangent.f * batch.dt.asDiagonal()};
}

template <class Model>
FieldBatch build_target(const Model& model, const Sample& sample) {
    return build_targets(model, make_batch(std::span<const Sample>(&sample, 1)));
}

struct LossAndGrad {
    LossReport report;
    Vec grad;
};

namespace detail {

/// Loss terms from residuals; fills cotangents when requested.
inline LossReport reduce_loss(const Mat& res_v, const Mat& res_f, const Batch& batch, const LossConfig& cfg,
                              Mat* cot_v, Mat* cot_f) {
    const double n = static_cast<double>(batch.size());
    const double width = static_cast<double>(res_v.rows());
    const Mat weighted_sq_v =
        cfg.mass_weight_velocity ? Mat(batch.component_mass.cwiseProduct(res_v.cwiseAbs2())) : Mat(res_v.cwiseAbs2());
    LossReport r;
    r.raw_velocity = weighted_sq_v.sum() / (width * n);
    r.raw_force = res_f.squaredNorm() / (width * n);
    if (cfg.adaptive) {
        r.velocity_adaptive_weight = adaptive_weight(r.raw_velocity, cfg);
        r.force_adaptive_weight = adaptive_weight(r.raw_force, cfg);
    }
    r.velocity_term = r.velocity_adaptive_weight * r.raw_velocity;
    r.force_term = r.force_adaptive_weight * r.raw_force;
    r.total = cfg.velocity_weight * r.velocity_term + cfg.force_weight * r.force_term;
    if (cot_v) {
        const double sv = cfg.velocity_weight * r.velocity_adaptive_weight * 2.0 / (width * n);
        *cot_v = cfg.mass_weight_velocity ? Mat(sv * batch.component_mass.cwiseProduct(res_v)) : Mat(sv * res_v);
        *cot_f = (cfg.force_weight * r.force_adaptive_weight * 2.0 / (width * n)) * res_f;
    }
    return r;
}

}  // namespace detail

/// Batch-mean consistency loss with stop-gradient targets. The tangent pass
/// supplies both the prediction and the target; the gradient is the VJP of
/// the primal prediction only.
template <class Model>
LossAndGrad loss_and_grad(const Model& model, const Batch& batch, const LossConfig& cfg) {
    cfg.validate();
    require(batch.size() > 0, ErrorKind::domain, "empty batch");
    const RowVec minus_one = RowVec::Constant(batch.size(), -1.0);
    auto pass = model.forward_tangent(batch.x, batch.p, batch.dt, batch.v, batch.f, minus_one);
    const Mat target_v = batch.v + pass.tangent.v * batch.dt.asDiagonal();
    const Mat target_f = batch.f + pass.tangent.f * batch.dt.asDiagonal();
    Mat cot_v, cot_f;
    LossAndGrad out;
    out.report = detail::reduce_loss(pass.primal.v - target_v, pass.primal.f - target_f, batch, cfg, &cot_v, &cot_f);
    out.grad = model.backward(pass.tape, cot_v, cot_f);
    return out;
}

template <class Model>
LossReport loss_only(const Model& model, const Batch& batch, const LossConfig& cfg) {
    cfg.validate();
    require(batch.size() > 0, ErrorKind::domain, "empty batch");
    const RowVec minus_one = RowVec::Constant(batch.size(), -1.0);
    auto pass = model.forward_tangent(batch.x, batch.p, batch.dt, batch.v, batch.f, minus_one);
    const Mat target_v = batch.v + pass.tangent.v * batch.dt.asDiagonal();
    const Mat target_f = batch.f + pass.tangent.f * batch.dt.asDiagonal();
    return detail::reduce_loss(pass.primal.v - target_v, pass.primal.f - target_f, batch, cfg, nullptr, nullptr);
}

}  // namespace hfm
