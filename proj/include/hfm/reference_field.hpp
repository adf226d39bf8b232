#pragma once

#include <cmath>

#include "hfm/net.hpp"

namespace hfm {

/// Exact mean displacement field of the unit-mass harmonic oscillator,
///   v_bar = (x (cos wt - 1) + (p / w) sin wt) / t,
///   f_bar = (p (cos wt - 1) - x w sin wt) / t,
/// with the t -> 0 limit (p, -w^2 x). Exposes the same batch interface as
/// FlowNet (no parameters), so it can stand in for a trained network.
class OscillatorMeanField {
public:
    struct Tape {};

    explicit OscillatorMeanField(double omega = 1.0, double max_timestep = 2.5)
        : omega_(omega), max_timestep_(max_timestep) {}

    int count() const { return 1; }
    int dims() const { return 1; }
    int size() const { return 1; }
    double max_timestep() const { return max_timestep_; }
    Eigen::Index parameter_count() const { return 0; }
    Vec masses_per_component() const { return Vec::Ones(1); }

    FieldBatch forward(const Mat& x, const Mat& p, const RowVec& dt) const {
        check(x, p, dt);
        FieldBatch out{Mat(1, x.cols()), Mat(1, x.cols())};
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const Coefficients c = coefficients(dt[j]);
            out.v(0, j) = x(0, j) * c.g1 + p(0, j) / omega_ * c.g2;
            out.f(0, j) = p(0, j) * c.g1 - x(0, j) * omega_ * c.g2;
        }
        return out;
    }

    TangentPass<Tape> forward_tangent(const Mat& x, const Mat& p, const RowVec& dt, const Mat& dx, const Mat& dp,
                                      const RowVec& ddt) const {
        TangentPass<Tape> pass{forward(x, p, dt), {Mat(1, x.cols()), Mat(1, x.cols())}, {}};
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const Coefficients c = coefficients(dt[j]);
            const double xv = x(0, j), pv = p(0, j);
            pass.tangent.v(0, j) =
                c.g1 * dx(0, j) + c.g2 / omega_ * dp(0, j) + (xv * c.dg1 + pv / omega_ * c.dg2) * ddt[j];
            pass.tangent.f(0, j) =
                -omega_ * c.g2 * dx(0, j) + c.g1 * dp(0, j) + (pv * c.dg1 - xv * omega_ * c.dg2) * ddt[j];
        }
        return pass;
    }

    TangentPass<Tape> forward_recorded(const Mat& x, const Mat& p, const RowVec& dt) const {
        return {forward(x, p, dt), {}, {}};
    }

    Vec backward(const Tape&, const Mat&, const Mat&) const { return Vec(0); }

private:
    // g1 = (cos wt - 1)/t, g2 = sin(wt)/t and their t-derivatives.
    struct Coefficients {
        double g1, g2, dg1, dg2;
    };

    Coefficients coefficients(double t) const {
        const double w = omega_;
        const double th = w * t;
        if (std::abs(th) < 0.05) {
            const double t2 = th * th;
            return {w * th * (-0.5 + t2 * (1.0 / 24 - t2 * (1.0 / 720 - t2 / 40320))),
                    w * (1.0 - t2 * (1.0 / 6 - t2 * (1.0 / 120 - t2 / 5040))),
                    w * w * (-0.5 + t2 * (1.0 / 8 - t2 * (1.0 / 144 - t2 / 5760))),
                    w * w * th * (-1.0 / 3 + t2 * (1.0 / 30 - t2 * (1.0 / 840 - t2 / 45360)))};
        }
        const double c = std::cos(th), s = std::sin(th);
        return {(c - 1.0) / t, s / t, (-w * s * t - (c - 1.0)) / (t * t), (w * c * t - s) / (t * t)};
    }

    void check(const Mat& x, const Mat& p, const RowVec& dt) const {
        require(x.rows() == 1 && p.rows() == 1 && p.cols() == x.cols() && dt.size() == x.cols(), ErrorKind::shape,
                "oscillator mean field expects one 1D particle per column");
    }

    double omega_;
    double max_timestep_;
};

}  // namespace hfm
