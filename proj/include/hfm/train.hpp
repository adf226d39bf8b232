#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "hfm/loss.hpp"
#include "hfm/rotation.hpp"

namespace hfm {

struct TrainConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    double lr_warm_start = 1e-6;
    double lr_max = 1e-4;
    double lr_min = 1e-8;
    double warmup_frac = 0.01;
    double clip_norm = 5.0;
    int batch_size = 64;
    int epochs = 10;
    long steps = 0;  // total optimizer steps; 0 means epochs * batches per epoch
    std::uint64_t seed = 0;
    int checkpoint_every = 0;        // epochs; 0 disables periodic checkpoints
    bool resample_momenta = false;   // draw fresh Maxwell-Boltzmann momenta per example
    bool rotation_augmentation = false;

    bool operator==(const TrainConfig&) const = default;

    void validate() const {
        require(warmup_frac >= 0.0 && warmup_frac <= 1.0, ErrorKind::config, "warmup_frac must lie in [0, 1]");
        require(lr_min <= lr_max, ErrorKind::config, "lr_min must not exceed lr_max");
        require(clip_norm > 0.0, ErrorKind::config, "clip_norm must be > 0");
        require(batch_size >= 1 && epochs >= 0 && steps >= 0, ErrorKind::config,
                "batch_size must be >= 1, epochs and steps >= 0");
    }
};

inline long warmup_steps(long total_steps, const TrainConfig& cfg) {
    return std::lround(cfg.warmup_frac * static_cast<double>(total_steps));
}

/// Linear warmup from lr_warm_start to lr_max, then cosine decay to lr_min.
inline double lr_at(long step, long total_steps, const TrainConfig& cfg) {
    require(step >= 0 && step <= total_steps, ErrorKind::domain, "lr_at: step outside [0, total_steps]");
    const long warm = warmup_steps(total_steps, cfg);
    if (step < warm)
        return cfg.lr_warm_start + (cfg.lr_max - cfg.lr_warm_start) * static_cast<double>(step) / warm;
    const long decay = total_steps - warm;
    if (decay <= 0) return cfg.lr_max;
    const double progress = static_cast<double>(step - warm) / static_cast<double>(decay);
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamState {
    Vec m;
    Vec v;
    long step = 0;  // number of updates applied so far
};

inline AdamState make_adam_state(Eigen::Index n) { return {Vec::Zero(n), Vec::Zero(n), 0}; }

/// Bias-corrected Adam without weight decay.
inline void adam_step(AdamState& state, Vec& params, const Vec& grad, double lr, const TrainConfig& cfg) {
    require(params.size() == grad.size() && state.m.size() == grad.size() && state.v.size() == grad.size(),
            ErrorKind::shape, "adam_step: parameter, gradient and moment sizes differ");
    state.step += 1;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + cfg.adam_eps);
}

/// Scales grad in place so that its norm is at most clip_norm; returns the norm before clipping.
inline double clip_global_norm(Vec& grad, double clip_norm) {
    require(clip_norm > 0.0, ErrorKind::domain, "clip_norm must be > 0");
    const double norm = grad.norm();
    if (norm > clip_norm) grad *= clip_norm / norm;
    return norm;
}

struct TrainLogRow {
    long step = 0;
    double total = 0.0;
    double velocity_term = 0.0;
    double force_term = 0.0;
    double velocity_adaptive_weight = 0.0;
    double force_adaptive_weight = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

struct TrainHooks {
    std::function<void(const TrainLogRow&)> on_step;
    // called after each epoch (1-based epoch index)
    std::function<void(int epoch)> on_epoch_end;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    double final_loss = 0.0;
    long steps = 0;
};

/// Fits the network's fixed input/output normalization to a dataset.
inline void fit_normalization(FlowNet& net, const std::vector<Sample>& dataset) {
    require(!dataset.empty(), ErrorKind::domain, "cannot fit normalization to an empty dataset");
    const Batch b = make_batch(dataset);
    net.fit_normalization(b.x, b.p, b.v, b.f);
}

/// Seeded Fisher-Yates permutation of [0, n).
inline std::vector<std::size_t> seeded_permutation(std::size_t n, Rng rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

/// Minimizes the consistency loss over the dataset. Positions and forces
/// are fixed; timesteps (and momenta with resample_momenta) are drawn fresh
/// for each example. The trailing partial batch of each epoch is dropped.
/// Resumes from adam.step when it is non-zero. A non-finite loss or gradient
/// aborts with the parameters of the last good step left in place.
template <class Model>
TrainResult train(const std::vector<Sample>& dataset, Model& net, AdamState& adam, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, const TimestepDist& dist,
                  const std::optional<MomentumSamplerCfg>& momentum_cfg = {}, const TrainHooks& hooks = {}) {
    cfg.validate();
    dist.validate();
    require(!dataset.empty(), ErrorKind::domain, "training dataset is empty");
    const std::size_t batch_size = static_cast<std::size_t>(cfg.batch_size);
    const long per_epoch = static_cast<long>(dataset.size() / batch_size);
    require(per_epoch >= 1, ErrorKind::config, "dataset is smaller than one batch");
    const long total = cfg.steps > 0 ? cfg.steps : per_epoch * cfg.epochs;
    if (adam.m.size() != net.parameter_count()) adam = make_adam_state(net.parameter_count());
    require(cfg.resample_momenta ? momentum_cfg.has_value() : true, ErrorKind::config,
            "resample_momenta needs a momentum sampler configuration");

    const Rng root(cfg.seed, 0x747261696eULL);
    TrainResult result;
    std::vector<Sample> batch_samples(batch_size);
    long order_epoch = -1;
    std::vector<std::size_t> order;
    for (long step = adam.step; step < total; ++step) {
        const long epoch = step / per_epoch;
        const long index = step % per_epoch;
        const Rng epoch_rng = root.split(static_cast<std::uint64_t>(epoch));
        if (order_epoch != epoch) {
            order = seeded_permutation(dataset.size(), epoch_rng.split(0));
            order_epoch = epoch;
        }
        Rng batch_rng = epoch_rng.split(static_cast<std::uint64_t>(index) + 1);
        for (std::size_t k = 0; k < batch_size; ++k) {
            Sample s = dataset[order[static_cast<std::size_t>(index) * batch_size + k]];
            if (cfg.resample_momenta) {
                s.state = prepare_training_momenta(s.state, *momentum_cfg, batch_rng);
                s.velocity = velocities(s.state);
            }
            if (cfg.rotation_augmentation && s.state.dims == 3) {
                const Mat3 r = random_rotation(batch_rng);
                s.state.positions = rotate_vectors(r, s.state.positions);
                s.state.momenta = rotate_vectors(r, s.state.momenta);
                s.velocity = rotate_vectors(r, s.velocity);
                s.force = rotate_vectors(r, s.force);
            }
            s.timestep = sample_timestep(dist, batch_rng);
            batch_samples[k] = std::move(s);
        }
        const Batch batch = make_batch(batch_samples);
        LossAndGrad lg = loss_and_grad(net, batch, loss_cfg);
        require(std::isfinite(lg.report.total) && lg.grad.allFinite(), ErrorKind::numeric,
                "non-finite loss at step " + std::to_string(step) + "; training aborted");
        const double lr = lr_at(step, total, cfg);
        TrainLogRow row{step,
                        lg.report.total,
                        lg.report.velocity_term,
                        lg.report.force_term,
                        lg.report.velocity_adaptive_weight,
                        lg.report.force_adaptive_weight,
                        lr,
                        clip_global_norm(lg.grad, cfg.clip_norm)};
        adam_step(adam, net.mutable_parameters(), lg.grad, lr, cfg);
        result.log.push_back(row);
        result.final_loss = row.total;
        result.steps += 1;
        if (hooks.on_step) hooks.on_step(row);
        if (hooks.on_epoch_end && index == per_epoch - 1) hooks.on_epoch_end(static_cast<int>(epoch + 1));
    }
    return result;
}

}  // namespace hfm
