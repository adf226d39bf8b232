#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "hfm/phase_state.hpp"
#include "hfm/rng.hpp"

namespace hfm {

enum class Activation { silu, gelu, tanh };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
        case Activation::gelu: return "gelu";
        case Activation::tanh: return "tanh";
    }
    return "silu";
}

inline Activation activation_from_name(const std::string& name) {
    if (name == "silu") return Activation::silu;
    if (name == "gelu") return Activation::gelu;
    if (name == "tanh") return Activation::tanh;
    fail(ErrorKind::config, "unknown activation '" + name + "' (expected silu, gelu or tanh)");
}

struct ArchConfig {
    int width = 256;
    int fourier_features = 0;  // number of frequencies; 0 means "same as width"
    double fourier_scale = 1.0;
    Activation activation = Activation::silu;
    bool velocity_skip = true;  // predict v_bar = p/m + correction

    int frequencies() const { return fourier_features > 0 ? fourier_features : width; }

    bool operator==(const ArchConfig&) const = default;
};

/// Mean velocity and mean force for a batch, one column per sample.
struct FieldBatch {
    Mat v;
    Mat f;
};

template <class Tape>
struct TangentPass {
    FieldBatch primal;
    FieldBatch tangent;
    Tape tape;
};

struct InputGradient {
    Mat x;
    Mat p;
    RowVec dt;
};

namespace detail {

inline Eigen::ArrayXXd activate(Activation a, const Eigen::ArrayXXd& z) {
    switch (a) {
        case Activation::silu: return z / (1.0 + (-z).exp());
        case Activation::tanh: return z.tanh();
        case Activation::gelu: {
            constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
            return 0.5 * z * (1.0 + (k * (z + 0.044715 * z.cube())).tanh());
        }
    }
    return z;
}

inline Eigen::ArrayXXd activate_grad(Activation a, const Eigen::ArrayXXd& z) {
    switch (a) {
        case Activation::silu: {
            const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z).exp());
            return s * (1.0 + z * (1.0 - s));
        }
        case Activation::tanh: return 1.0 - z.tanh().square();
        case Activation::gelu: {
            constexpr double k = 0.7978845608028654;
            const Eigen::ArrayXXd t = (k * (z + 0.044715 * z.cube())).tanh();
            return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t.square()) * k * (1.0 + 3.0 * 0.044715 * z.square());
        }
    }
    return Eigen::ArrayXXd::Ones(z.rows(), z.cols());
}

}  // namespace detail

/// MLP flow-map network (x, p, dt) -> (v_bar, f_bar) for a fixed particle
/// layout. Structure: Fourier time features, position and momentum each go
/// through a two-layer embedding MLP, the three embeddings are summed, refined
/// by a three-layer trunk and read out by two-layer velocity and force heads.
/// All trainable parameters live in one flat vector.
class FlowNet {
public:
    struct Dense {
        Eigen::Index weight_offset = 0;
        Eigen::Index bias_offset = 0;
        int in = 0;
        int out = 0;
        bool activated = true;
    };

    /// Per-layer inputs and pre-activations of a primal pass.
    struct Tape {
        std::vector<Mat> inputs;
        std::vector<Mat> preact;
        Mat angles;
        RowVec tau;
    };

    // Layer indices.
    static constexpr int time_in = 0, time_out = 1, pos_in = 2, pos_out = 3, mom_in = 4, mom_out = 5;
    static constexpr int trunk0 = 6, trunk1 = 7, trunk2 = 8;
    static constexpr int vel_in = 9, vel_out = 10, frc_in = 11, frc_out = 12;
    static constexpr int layer_count = 13;

    FlowNet() = default;

    FlowNet(const ArchConfig& arch, const Vec& masses, int dims, double max_timestep, Rng& rng)
        : arch_(arch), masses_(masses), dims_(dims), max_timestep_(max_timestep) {
        require(arch.width >= 1, ErrorKind::config, "network width must be >= 1");
        require(dims >= 1 && dims <= 3 && masses.size() >= 1, ErrorKind::shape, "invalid particle layout");
        require(max_timestep > 0.0, ErrorKind::config, "max_timestep must be > 0");
        build_layout();
        const int n = size();
        x_shift_ = Vec::Zero(n);
        x_scale_ = Vec::Ones(n);
        p_shift_ = Vec::Zero(n);
        p_scale_ = Vec::Ones(n);
        v_scale_ = Vec::Ones(n);
        f_scale_ = Vec::Ones(n);
        initialize(rng);
    }

    const ArchConfig& arch() const { return arch_; }
    int count() const { return static_cast<int>(masses_.size()); }
    int dims() const { return dims_; }
    int size() const { return count() * dims_; }
    const Vec& masses() const { return masses_; }
    double max_timestep() const { return max_timestep_; }

    Eigen::Index parameter_count() const { return params_.size(); }
    const Vec& parameters() const { return params_; }
    void set_parameters(const Vec& p) {
        require(p.size() == params_.size(), ErrorKind::shape, "parameter vector has the wrong length");
        params_ = p;
    }
    Vec& mutable_parameters() { return params_; }

    const Vec& frequencies() const { return freqs_; }
    const std::vector<Dense>& layers() const { return layers_; }

    /// Closed-form parameter count for a layout, independent of any instance.
    static Eigen::Index expected_parameter_count(const ArchConfig& arch, int components) {
        const Eigen::Index h = arch.width;
        const Eigen::Index e = 2 * static_cast<Eigen::Index>(arch.frequencies());
        const Eigen::Index nd = components;
        auto dense = [](Eigen::Index in, Eigen::Index out) { return in * out + out; };
        return dense(e, h) + dense(h, h)                       // time embedding
               + 2 * (dense(nd, h) + dense(h, h))              // position and momentum embeddings
               + 3 * dense(h, h)                               // trunk
               + 2 * (dense(h, h) + dense(h, nd));             // heads
    }

    // Fixed affine input/output normalization, not trained.
    struct Normalization {
        Vec x_shift, x_scale, p_shift, p_scale, v_scale, f_scale;
    };

    Normalization normalization() const { return {x_shift_, x_scale_, p_shift_, p_scale_, v_scale_, f_scale_}; }

    void set_normalization(const Normalization& n) {
        for (const Vec* v : {&n.x_shift, &n.x_scale, &n.p_shift, &n.p_scale, &n.v_scale, &n.f_scale})
            require(v->size() == size(), ErrorKind::shape, "normalization vectors must have length N*d");
        x_shift_ = n.x_shift;
        x_scale_ = n.x_scale;
        p_shift_ = n.p_shift;
        p_scale_ = n.p_scale;
        v_scale_ = n.v_scale;
        f_scale_ = n.f_scale;
    }

    void set_frequencies(const Vec& f) {
        require(f.size() == arch_.frequencies(), ErrorKind::shape, "frequency vector has the wrong length");
        freqs_ = f;
    }

    FieldBatch forward(const Mat& x, const Mat& p, const RowVec& dt) const {
        return run(x, p, dt, nullptr, nullptr, nullptr, nullptr, nullptr).primal;
    }

    TangentPass<Tape> forward_tangent(const Mat& x, const Mat& p, const RowVec& dt, const Mat& dx, const Mat& dp,
                                      const RowVec& ddt) const {
        Tape tape;
        FieldBatch tangent;
        FieldBatch primal = run(x, p, dt, &dx, &dp, &ddt, &tangent, &tape).primal;
        return {std::move(primal), std::move(tangent), std::move(tape)};
    }

    /// Primal pass that records the tape needed by backward().
    TangentPass<Tape> forward_recorded(const Mat& x, const Mat& p, const RowVec& dt) const {
        Tape tape;
        FieldBatch primal = run(x, p, dt, nullptr, nullptr, nullptr, nullptr, &tape).primal;
        return {std::move(primal), {}, std::move(tape)};
    }

    /// Vector-Jacobian product: gradient of <cot, output> w.r.t. all
    /// parameters, and optionally w.r.t. the inputs.
    Vec backward(const Tape& tape, const Mat& cot_v, const Mat& cot_f, InputGradient* input_grad = nullptr) const {
        const Eigen::Index batch = tape.tau.size();
        require(cot_v.rows() == size() && cot_f.rows() == size() && cot_v.cols() == batch && cot_f.cols() == batch,
                ErrorKind::shape, "cotangent shape does not match the network output");
        Vec grad = Vec::Zero(params_.size());

        Mat g_trunk = back(vel_in, tape, back(vel_out, tape, v_scale_.asDiagonal() * cot_v, grad), grad);
        g_trunk += back(frc_in, tape, back(frc_out, tape, f_scale_.asDiagonal() * cot_f, grad), grad);
        const Mat g_sum = back(trunk0, tape, back(trunk1, tape, back(trunk2, tape, g_trunk, grad), grad), grad);

        const Mat g_emb = back(time_in, tape, back(time_out, tape, g_sum, grad), grad);
        const Mat g_xs = back(pos_in, tape, back(pos_out, tape, g_sum, grad), grad);
        const Mat g_ps = back(mom_in, tape, back(mom_out, tape, g_sum, grad), grad);

        if (input_grad) {
            input_grad->x = x_scale_.asDiagonal() * g_xs;
            input_grad->p = p_scale_.asDiagonal() * g_ps;
            if (arch_.velocity_skip) input_grad->p += masses_per_component().cwiseInverse().asDiagonal() * cot_v;
            const Eigen::Index e = freqs_.size();
            const Eigen::ArrayXXd g_angles = -tape.angles.array().sin() * g_emb.topRows(e).array() +
                                             tape.angles.array().cos() * g_emb.bottomRows(e).array();
            const Vec omega = 2.0 * std::numbers::pi * freqs_;
            input_grad->dt = (omega.transpose() * g_angles.matrix()) / max_timestep_;
        }
        return grad;
    }

    /// Sets the fixed normalization from data statistics (per component mean/std).
    void fit_normalization(const Mat& x, const Mat& p, const Mat& v, const Mat& f) {
        auto stats = [](const Mat& m, Vec& shift, Vec& scale, bool invert) {
            shift = m.rowwise().mean();
            Vec sd = ((m.colwise() - shift).array().square().rowwise().mean()).sqrt().matrix();
            for (Eigen::Index k = 0; k < sd.size(); ++k)
                if (!(sd[k] > 1e-12)) sd[k] = 1.0;
            scale = invert ? Vec(sd.cwiseInverse()) : sd;
        };
        Vec unused;
        stats(x, x_shift_, x_scale_, true);
        stats(p, p_shift_, p_scale_, true);
        if (arch_.velocity_skip) {
            // the network only predicts the deviation of v_bar from p/m, which
            // scales with dt * f / m; use the force spread over mass as its scale
            Vec f_sd;
            stats(f, unused, f_sd, false);
            v_scale_ = max_timestep_ * f_sd.cwiseQuotient(masses_per_component());
            for (Eigen::Index k = 0; k < v_scale_.size(); ++k)
                if (!(v_scale_[k] > 1e-12)) v_scale_[k] = 1.0;
        } else {
            stats(v, unused, v_scale_, false);
        }
        stats(f, unused, f_scale_, false);
    }

    Vec masses_per_component() const { return component_masses(masses_, dims_); }

private:
    void build_layout() {
        const int h = arch_.width;
        const int nd = size();
        const int e2 = 2 * arch_.frequencies();
        layers_.clear();
        Eigen::Index offset = 0;
        auto add = [&](int in, int out, bool act) {
            Dense d;
            d.in = in;
            d.out = out;
            d.activated = act;
            d.weight_offset = offset;
            offset += static_cast<Eigen::Index>(in) * out;
            d.bias_offset = offset;
            offset += out;
            layers_.push_back(d);
        };
        add(e2, h, true);   // time_in
        add(h, h, false);   // time_out
        add(nd, h, true);   // pos_in
        add(h, h, false);   // pos_out
        add(nd, h, true);   // mom_in
        add(h, h, false);   // mom_out
        add(h, h, true);    // trunk0
        add(h, h, true);    // trunk1
        add(h, h, true);    // trunk2
        add(h, h, true);    // vel_in
        add(h, nd, false);  // vel_out
        add(h, h, true);    // frc_in
        add(h, nd, false);  // frc_out
        params_ = Vec::Zero(offset);
    }

    void initialize(Rng& rng) {
        for (const Dense& d : layers_) {
            const double sd = 1.0 / std::sqrt(static_cast<double>(d.in));
            for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(d.in) * d.out; ++k)
                params_[d.weight_offset + k] = sd * rng.normal();
        }
        freqs_ = Vec(arch_.frequencies());
        for (Eigen::Index k = 0; k < freqs_.size(); ++k) freqs_[k] = arch_.fourier_scale * rng.normal();
    }

    Eigen::Map<const Mat> weight(const Dense& d) const {
        return Eigen::Map<const Mat>(params_.data() + d.weight_offset, d.out, d.in);
    }
    Eigen::Map<const Vec> bias(const Dense& d) const {
        return Eigen::Map<const Vec>(params_.data() + d.bias_offset, d.out);
    }

    Mat apply(int index, const Mat& in, const Mat* d_in, Mat* d_out, Tape* tape) const {
        const Dense& d = layers_[static_cast<std::size_t>(index)];
        const auto w = weight(d);
        Mat z = w * in;
        z.colwise() += bias(d);
        if (tape) tape->inputs[static_cast<std::size_t>(index)] = in;
        Mat dz;
        if (d_in) dz = w * (*d_in);
        if (!d.activated) {
            if (d_out) *d_out = std::move(dz);
            return z;
        }
        const Eigen::ArrayXXd za = z.array();
        if (d_out) *d_out = (detail::activate_grad(arch_.activation, za) * dz.array()).matrix();
        Mat out = detail::activate(arch_.activation, za).matrix();
        if (tape) tape->preact[static_cast<std::size_t>(index)] = std::move(z);
        return out;
    }

    Mat back(int index, const Tape& tape, const Mat& g_out, Vec& grad) const {
        const Dense& d = layers_[static_cast<std::size_t>(index)];
        Mat g_z = g_out;
        if (d.activated)
            g_z.array() *= detail::activate_grad(arch_.activation, tape.preact[static_cast<std::size_t>(index)].array());
        const Mat& in = tape.inputs[static_cast<std::size_t>(index)];
        Eigen::Map<Mat>(grad.data() + d.weight_offset, d.out, d.in).noalias() += g_z * in.transpose();
        Eigen::Map<Vec>(grad.data() + d.bias_offset, d.out) += g_z.rowwise().sum();
        return weight(d).transpose() * g_z;
    }

    struct RunResult {
        FieldBatch primal;
    };

    RunResult run(const Mat& x, const Mat& p, const RowVec& dt, const Mat* dx, const Mat* dp, const RowVec* ddt,
                  FieldBatch* tangent, Tape* tape) const {
        const Eigen::Index batch = x.cols();
        require(x.rows() == size() && p.rows() == size() && p.cols() == batch && dt.size() == batch, ErrorKind::shape,
                "network input shape mismatch: expected " + std::to_string(size()) + " rows per sample");
        const bool with_tangent = tangent != nullptr;
        if (with_tangent)
            require(dx->rows() == size() && dp->rows() == size() && dx->cols() == batch && dp->cols() == batch &&
                        ddt->size() == batch,
                    ErrorKind::shape, "tangent shape mismatch");
        if (tape) {
            tape->inputs.assign(layer_count, Mat());
            tape->preact.assign(layer_count, Mat());
        }

        const Mat xs = x_scale_.asDiagonal() * (x.colwise() - x_shift_);
        const Mat ps = p_scale_.asDiagonal() * (p.colwise() - p_shift_);
        const RowVec tau = dt / max_timestep_;
        const Vec omega = 2.0 * std::numbers::pi * freqs_;
        const Mat angles = omega * tau;
        const Eigen::Index e = freqs_.size();
        Mat emb(2 * e, batch);
        emb.topRows(e) = angles.array().cos().matrix();
        emb.bottomRows(e) = angles.array().sin().matrix();
        if (tape) {
            tape->angles = angles;
            tape->tau = tau;
        }

        Mat dxs, dps, demb;
        if (with_tangent) {
            dxs = x_scale_.asDiagonal() * (*dx);
            dps = p_scale_.asDiagonal() * (*dp);
            const Mat dangles = omega * ((*ddt) / max_timestep_);
            demb.resize(2 * e, batch);
            demb.topRows(e) = (-angles.array().sin() * dangles.array()).matrix();
            demb.bottomRows(e) = (angles.array().cos() * dangles.array()).matrix();
        }
        const Mat* tin = with_tangent ? &demb : nullptr;
        const Mat* xin = with_tangent ? &dxs : nullptr;
        const Mat* pin = with_tangent ? &dps : nullptr;

        Mat dt1, dt2, dx1, dx2, dp1, dp2;
        Mat* o = nullptr;
        auto tan = [&](Mat& m) { return with_tangent ? &m : o; };

        const Mat t1 = apply(time_in, emb, tin, tan(dt1), tape);
        Mat h = apply(time_out, t1, with_tangent ? &dt1 : nullptr, tan(dt2), tape);
        const Mat x1 = apply(pos_in, xs, xin, tan(dx1), tape);
        h += apply(pos_out, x1, with_tangent ? &dx1 : nullptr, tan(dx2), tape);
        const Mat p1 = apply(mom_in, ps, pin, tan(dp1), tape);
        h += apply(mom_out, p1, with_tangent ? &dp1 : nullptr, tan(dp2), tape);
        Mat dh;
        if (with_tangent) dh = dt2 + dx2 + dp2;

        Mat dh1, dh2, dh3;
        const Mat h1 = apply(trunk0, h, with_tangent ? &dh : nullptr, tan(dh1), tape);
        const Mat h2 = apply(trunk1, h1, with_tangent ? &dh1 : nullptr, tan(dh2), tape);
        const Mat h3 = apply(trunk2, h2, with_tangent ? &dh2 : nullptr, tan(dh3), tape);

        Mat dv1, dvr, df1, dfr;
        const Mat v1 = apply(vel_in, h3, with_tangent ? &dh3 : nullptr, tan(dv1), tape);
        const Mat vraw = apply(vel_out, v1, with_tangent ? &dv1 : nullptr, tan(dvr), tape);
        const Mat f1 = apply(frc_in, h3, with_tangent ? &dh3 : nullptr, tan(df1), tape);
        const Mat fraw = apply(frc_out, f1, with_tangent ? &df1 : nullptr, tan(dfr), tape);

        RunResult result;
        result.primal.v = v_scale_.asDiagonal() * vraw;
        result.primal.f = f_scale_.asDiagonal() * fraw;
        const Vec inv_m = masses_per_component().cwiseInverse();
        if (arch_.velocity_skip) result.primal.v += inv_m.asDiagonal() * p;
        if (with_tangent) {
            tangent->v = v_scale_.asDiagonal() * dvr;
            tangent->f = f_scale_.asDiagonal() * dfr;
            if (arch_.velocity_skip) tangent->v += inv_m.asDiagonal() * (*dp);
        }
        return result;
    }

    ArchConfig arch_;
    Vec masses_;
    int dims_ = 1;
    double max_timestep_ = 1.0;
    std::vector<Dense> layers_;
    Vec params_;
    Vec freqs_;
    Vec x_shift_, x_scale_, p_shift_, p_scale_, v_scale_, f_scale_;

};

/// Single-sample mean field.
struct MeanField {
    Vec v;
    Vec f;
};

struct MeanFieldTangent {
    MeanField value;
    MeanField tangent;
};

template <class Model>
MeanField evaluate(const Model& model, const Vec& x, const Vec& p, double dt) {
    RowVec t(1);
    t[0] = dt;
    FieldBatch out = model.forward(Mat(x), Mat(p), t);
    return {out.v.col(0), out.f.col(0)};
}

template <class Model>
MeanFieldTangent evaluate_with_tangent(const Model& model, const Vec& x, const Vec& p, double dt, const Vec& dx,
                                       const Vec& dp, double ddt) {
    RowVec t(1), dtt(1);
    t[0] = dt;
    dtt[0] = ddt;
    auto pass = model.forward_tangent(Mat(x), Mat(p), t, Mat(dx), Mat(dp), dtt);
    return {{pass.primal.v.col(0), pass.primal.f.col(0)}, {pass.tangent.v.col(0), pass.tangent.f.col(0)}};
}

}  // namespace hfm
