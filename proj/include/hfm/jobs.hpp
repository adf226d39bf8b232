#pragma once

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include "hfm/checkpoint.hpp"
#include "hfm/config.hpp"
#include "hfm/eval.hpp"

namespace hfm {

// Seed streams, one per subsystem.
inline constexpr std::uint64_t stream_gen = 1, stream_init = 2, stream_train = 3, stream_initial = 4,
                               stream_simulate = 5;

inline bool verbose() {
    const char* v = std::getenv("HFM_VERBOSE");
    return !(v && std::string(v) == "0");
}

inline std::ostream& info() {
    static std::ostream null_stream(nullptr);
    return verbose() ? std::cout : null_stream;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must only
/// depend on i; the lowest-index exception is rethrown.
template <class F>
void parallel_for(std::size_t n, int workers, F&& fn) {
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (std::thread& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline std::string resolve_path(const JobConfig& c, const std::string& p) {
    namespace fs = std::filesystem;
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(c.io.out) / p).string();
}

inline void ensure_out_dir(const JobConfig& c) {
    std::error_code ec;
    std::filesystem::create_directories(c.io.out, ec);
    require(!ec && std::filesystem::is_directory(c.io.out), ErrorKind::io,
            "cannot create output directory '" + c.io.out + "'");
}

inline void require_file(const std::string& path, const std::string& what) {
    require(std::filesystem::is_regular_file(path), ErrorKind::io, what + " '" + path + "' does not exist");
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << text;
    require(static_cast<bool>(out), ErrorKind::io, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------- gen

inline Dataset gen_dataset(const JobConfig& c) {
    validate_system(c.system);
    const Layout lay = resolve_layout(c);
    const SamplingConfig& sa = c.sampling;
    const Rng root = Rng(c.seed).split(stream_gen);
    Dataset data{c.system, lay.count, lay.dims, lay.masses, {}};

    if (sa.mode == SamplingMode::fixed_energy) {
        require(sa.samples >= 1, ErrorKind::config, "sampling.samples must be >= 1");
        require(sa.max_tries >= 1, ErrorKind::config, "sampling.max_tries must be >= 1");
        const PositionBox box = sa.box ? *sa.box : default_box(c.system, lay.count, lay.dims);
        const std::size_t n = static_cast<std::size_t>(sa.samples);
        data.samples.resize(n);
        std::vector<long> attempts(n, 0);
        parallel_for(n, c.workers, [&](std::size_t i) {
            Rng rng = root.split(i);
            data.samples[i] =
                sample_fixed_energy(c.system, lay.masses, lay.dims, sa.total_energy, box, rng, sa.max_tries, &attempts[i]);
        });
        long tries = 0;
        double closure = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            tries += attempts[i];
            closure = std::max(closure, std::abs(total_energy(c.system, data.samples[i].state) - sa.total_energy));
        }
        info() << "acceptance rate: " << static_cast<double>(n) / static_cast<double>(tries) << " (" << n << " of "
               << tries << " proposals)\n";
        info() << "energy closure: max |E - " << sa.total_energy << "| = " << closure << "\n";
    } else {
        const SnapshotConfig& sc = sa.snapshots;
        require(sc.trajectories >= 1 && sc.snapshots_per_trajectory >= 1, ErrorKind::config,
                "sampling.snapshots needs trajectories >= 1 and per_trajectory >= 1");
        require(sc.fine_dt > 0.0 && sc.horizon >= 0.0, ErrorKind::config,
                "sampling.snapshots needs fine_dt > 0 and horizon >= 0");
        SnapshotConfig one = sc;
        one.trajectories = 1;
        std::vector<std::vector<Sample>> parts(static_cast<std::size_t>(sc.trajectories));
        parallel_for(parts.size(), c.workers, [&](std::size_t t) {
            parts[t] = snapshot_samples(c.system, lay.masses, lay.dims, one, root.split(t));
        });
        for (auto& p : parts)
            for (auto& s : p) data.samples.push_back(std::move(s));
        double e_min = std::numeric_limits<double>::infinity(), e_max = -e_min;
        for (const Sample& s : data.samples) {
            const double e = total_energy(c.system, s.state);
            e_min = std::min(e_min, e);
            e_max = std::max(e_max, e);
        }
        info() << "snapshots: " << data.samples.size() << " from " << sc.trajectories << " trajectories, E in ["
               << e_min << ", " << e_max << "]\n";
    }
    for (const Sample& s : data.samples)
        require(s.force.allFinite() && s.state.positions.allFinite() && s.state.momenta.allFinite(), ErrorKind::numeric,
                "generated sample has non-finite values");
    return data;
}

inline int run_gen(const JobConfig& c) {
    ensure_out_dir(c);
    const Dataset data = gen_dataset(c);
    const std::string path = resolve_path(c, c.io.dataset);
    write_dataset(path, data);
    if (!c.io.dataset_csv.empty()) write_dataset_csv(resolve_path(c, c.io.dataset_csv), data);
    info() << "wrote " << data.samples.size() << " samples to " << path << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

inline const char* train_log_header = "step,total,velocity_term,force_term,w_v,w_f,lr,grad_norm\n";

inline std::string format_log_row(const TrainLogRow& r) {
    std::ostringstream o;
    o << std::setprecision(17) << r.step << ',' << r.total << ',' << r.velocity_term << ',' << r.force_term << ','
      << r.velocity_adaptive_weight << ',' << r.force_adaptive_weight << ',' << r.lr << ',' << r.grad_norm << '\n';
    return o.str();
}

inline int run_train(const JobConfig& c) {
    ensure_out_dir(c);
    const std::string data_path = resolve_path(c, c.io.dataset);
    const std::string ckpt_path = resolve_path(c, c.io.checkpoint);
    const std::string log_path = resolve_path(c, c.io.log);
    require_file(data_path, "dataset");
    const Dataset data = read_dataset(data_path);
    require(!data.samples.empty(), ErrorKind::config, "dataset '" + data_path + "' is empty");

    TrainConfig tc = c.train.optimizer;
    tc.seed = Rng(c.seed).split(stream_train)();
    tc.validate();
    c.train.timestep.validate();

    FlowNet net;
    AdamState adam;
    const bool resuming = c.train.resume && std::filesystem::is_regular_file(ckpt_path);
    if (resuming) {
        Checkpoint ck = load_checkpoint(ckpt_path);
        require(ck.net.masses().size() == data.masses.size() && ck.net.dims() == data.dims, ErrorKind::config,
                "checkpoint layout does not match the dataset");
        require(ck.net.max_timestep() == c.train.timestep.max_timestep, ErrorKind::config,
                "checkpoint max_timestep differs from train.timestep.max_timestep");
        net = std::move(ck.net);
        if (ck.optimizer) adam = *ck.optimizer;
        info() << "resuming from step " << adam.step << "\n";
    } else {
        Rng init = Rng(c.seed).split(stream_init);
        net = FlowNet(c.net, data.masses, data.dims, c.train.timestep.max_timestep, init);
        fit_normalization(net, data.samples);
        adam = make_adam_state(net.parameter_count());
    }

    std::ofstream log;
    if (resuming && std::filesystem::is_regular_file(log_path)) {
        log.open(log_path, std::ios::binary | std::ios::app);
    } else {
        log.open(log_path, std::ios::binary);
        log << train_log_header;
    }
    require(static_cast<bool>(log), ErrorKind::io, "cannot open training log '" + log_path + "'");

    TrainHooks hooks;
    hooks.on_step = [&](const TrainLogRow& r) { log << format_log_row(r); };
    hooks.on_epoch_end = [&](int epoch) {
        if (tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0) {
            log.flush();
            save_checkpoint(ckpt_path, net, &adam);
        }
    };
    const std::optional<MomentumSamplerCfg> momenta =
        tc.resample_momenta ? std::optional<MomentumSamplerCfg>(c.sampling.momenta) : std::nullopt;
    TrainResult result;
    try {
        result = train(data.samples, net, adam, tc, c.train.loss, c.train.timestep, momenta, hooks);
    } catch (const Error& e) {
        log.flush();
        if (e.kind() == ErrorKind::numeric)
            std::cerr << "training aborted; last periodic checkpoint (if any) left at " << ckpt_path << "\n";
        throw;
    }
    log.flush();
    require(static_cast<bool>(log), ErrorKind::io, "write to '" + log_path + "' failed");
    save_checkpoint(ckpt_path, net, &adam);
    info() << "trained " << result.steps << " steps (total " << adam.step << "), final loss " << result.final_loss
           << "\nwrote " << ckpt_path << "\n";
    return 0;
}

// ---------------------------------------------------------------- simulate

inline std::vector<PhaseState> initial_states(const JobConfig& c, const Layout& lay) {
    const InitialConfig& ic = c.simulate.initial;
    require(ic.count >= 1 && ic.first >= 0, ErrorKind::config, "simulate.initial needs count >= 1 and first >= 0");
    std::vector<PhaseState> out;
    if (ic.source == "explicit") {
        require(ic.count == 1, ErrorKind::config, "explicit initial state supports count = 1");
        PhaseState s{ic.positions, ic.momenta, lay.masses, lay.dims};
        require(ic.positions.size() == lay.count * lay.dims && ic.momenta.size() == lay.count * lay.dims,
                ErrorKind::config, "simulate.initial positions and momenta need N*d entries");
        out.push_back(s);
    } else if (ic.source == "dataset") {
        const std::string path = resolve_path(c, c.io.dataset);
        require_file(path, "dataset");
        const Dataset data = read_dataset(path);
        require(static_cast<std::size_t>(ic.first + ic.count) <= data.samples.size(), ErrorKind::config,
                "simulate.initial selects samples beyond the end of the dataset");
        for (int k = 0; k < ic.count; ++k) out.push_back(data.samples[static_cast<std::size_t>(ic.first + k)].state);
    } else {
        const Rng root = Rng(c.seed).split(stream_initial);
        const PositionBox box = c.sampling.box ? *c.sampling.box : default_box(c.system, lay.count, lay.dims);
        for (int k = 0; k < ic.count; ++k) {
            Rng rng = root.split(static_cast<std::uint64_t>(k));
            if (c.sampling.mode == SamplingMode::snapshots)
                out.push_back(random_cluster(lay.masses, lay.dims, c.sampling.snapshots.half_width,
                                             c.sampling.snapshots.temperature, rng));
            else
                out.push_back(sample_fixed_energy(c.system, lay.masses, lay.dims, c.sampling.total_energy, box, rng,
                                                  c.sampling.max_tries)
                                  .state);
        }
    }
    return out;
}

inline std::string indexed_path(const std::string& path, int k, int count) {
    if (count == 1) return path;
    std::filesystem::path p(path);
    std::ostringstream name;
    name << p.stem().string() << '_' << std::setw(3) << std::setfill('0') << k << p.extension().string();
    return (p.parent_path() / name.str()).string();
}

inline std::string csv_path(const std::string& path) {
    return std::filesystem::path(path).replace_extension(".csv").string();
}

inline int run_simulate(const JobConfig& c) {
    ensure_out_dir(c);
    validate_system(c.system);
    const SimulateConfig& si = c.simulate;
    require(si.timestep >= 0.0 && si.steps >= 0, ErrorKind::config, "simulate needs timestep >= 0 and steps >= 0");
    const Layout lay = resolve_layout(c);

    std::optional<FlowNet> net;
    if (si.stepper == "hfm") {
        const std::string path = resolve_path(c, c.io.checkpoint);
        require_file(path, "checkpoint");
        net = load_checkpoint(path).net;
        require(si.timestep <= net->max_timestep(), ErrorKind::config,
                "simulate.timestep exceeds the checkpoint's max_timestep");
        require(net->masses().size() == lay.count && net->dims() == lay.dims, ErrorKind::config,
                "checkpoint layout does not match the configured particles");
    }
    const StepFn stepper = net ? hfm_stepper(*net) : vv_stepper(c.system);
    const std::vector<PhaseState> starts = initial_states(c, lay);
    for (const PhaseState& s : starts) check_compatible(c.system, s);

    FilterPipeline pipeline{si.filters, si.thermostat, {}};
    RolloutOptions options{si.sanity_bound};
    const Rng root = Rng(c.seed).split(stream_simulate);
    std::vector<Trajectory> trajs(starts.size());
    parallel_for(starts.size(), c.workers, [&](std::size_t k) {
        trajs[k] = rollout(c.system, stepper, starts[k], si.timestep, si.steps, pipeline, root.split(k), options);
    });
    const int count = static_cast<int>(trajs.size());
    for (int k = 0; k < count; ++k) {
        const std::string path = indexed_path(resolve_path(c, c.io.trajectory), k, count);
        write_trajectory(path, trajs[static_cast<std::size_t>(k)]);
        write_trajectory_csv(csv_path(path), trajs[static_cast<std::size_t>(k)]);
        info() << path << ": " << trajs[static_cast<std::size_t>(k)].length() - 1 << " steps, status "
               << status_name(trajs[static_cast<std::size_t>(k)].status) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- eval

inline std::vector<MetricReport> evaluate_pair(const Trajectory& pred, const Trajectory& ref, const EvalConfig& ec,
                                               std::uint64_t seed, const FlowNet* net) {
    require(system_tag(pred.system) == system_tag(ref.system) && system_slots(pred.system) == system_slots(ref.system),
            ErrorKind::config, "eval pair compares trajectories of different systems");
    require(!pred.states.empty() && !ref.states.empty(), ErrorKind::config, "eval pair has an empty trajectory");
    require(pred.states.front().size() == ref.states.front().size(), ErrorKind::config,
            "eval pair has different particle layouts");
    const std::string sys(system_name(pred.system));
    const long n_steps = static_cast<long>(pred.length()) - 1;
    std::vector<MetricReport> out;
    auto add = [&](const std::string& name, double value, double dt) {
        out.push_back({name, value, dt, n_steps, sys, seed});
    };
    const double inf = std::numeric_limits<double>::infinity();
    add("trajectory_mse", trajectory_mse(pred, ref), pred.timestep);
    if (pred.status == RolloutStatus::completed) {
        const PosMom nr = normalized_rmsd(pred.states.back(), ref);
        add("normalized_rmsd_pos", nr.pos, pred.timestep);
        add("normalized_rmsd_mom", nr.mom, pred.timestep);
    } else {
        add("normalized_rmsd_pos", inf, pred.timestep);
        add("normalized_rmsd_mom", inf, pred.timestep);
    }
    if (pred.states.front().count() >= 2) add("distance_hist_mae", distance_hist_mae(pred, ref, ec.bins, ec.r_max), pred.timestep);
    const ConservationDrift drift = conservation_drift(pred);
    add("energy_drift", drift.energy, pred.timestep);
    add("angular_momentum_drift", drift.angular_momentum, pred.timestep);
    add("linear_momentum_drift", drift.linear_momentum, pred.timestep);
    add("fallback_fraction",
        n_steps > 0 ? static_cast<double>(fallback_count(pred)) / static_cast<double>(n_steps) : 0.0, pred.timestep);
    if (net) {
        for (double dt : ec.semigroup_timesteps) {
            require(dt >= 0.0 && dt <= net->max_timestep(), ErrorKind::config,
                    "eval.semigroup_timesteps must lie in [0, max_timestep]");
            const PosMom sg = semigroup_error(*net, pred.states.front(), dt);
            add("semigroup_pos", sg.pos, dt);
            add("semigroup_mom", sg.mom, dt);
        }
    }
    return out;
}

inline std::string metrics_csv(const std::vector<std::pair<std::size_t, MetricReport>>& rows) {
    std::ostringstream o;
    o << "metric,system,timestep,n_steps,seed,pair,value\n" << std::setprecision(17);
    for (const auto& [pair, m] : rows)
        o << m.name << ',' << m.system << ',' << m.timestep << ',' << m.n_steps << ',' << m.seed << ',' << pair << ','
          << m.value << '\n';
    return o.str();
}

inline std::string metrics_json(const std::vector<std::pair<std::size_t, MetricReport>>& rows) {
    Json arr = Json::array();
    for (const auto& [pair, m] : rows) {
        Json v = std::isfinite(m.value) ? Json(m.value) : Json(m.value > 0 ? "inf" : (m.value < 0 ? "-inf" : "nan"));
        arr.push_back({{"metric", m.name},
                       {"system", m.system},
                       {"timestep", m.timestep},
                       {"n_steps", m.n_steps},
                       {"seed", m.seed},
                       {"pair", pair},
                       {"value", v}});
    }
    return arr.dump(2) + "\n";
}

inline int run_eval(const JobConfig& c) {
    ensure_out_dir(c);
    require(!c.eval.pairs.empty(), ErrorKind::config, "eval.pairs is empty");
    require(c.eval.bins >= 1, ErrorKind::config, "eval.bins must be >= 1");
    std::optional<FlowNet> net;
    if (!c.eval.semigroup_timesteps.empty()) {
        const std::string path = resolve_path(c, c.io.checkpoint);
        require_file(path, "checkpoint");
        net = load_checkpoint(path).net;
    }
    std::vector<std::pair<std::size_t, MetricReport>> rows;
    for (std::size_t i = 0; i < c.eval.pairs.size(); ++i) {
        const std::string pred_path = resolve_path(c, c.eval.pairs[i].pred);
        const std::string ref_path = resolve_path(c, c.eval.pairs[i].ref);
        require_file(pred_path, "trajectory");
        require_file(ref_path, "trajectory");
        const Trajectory pred = read_trajectory(pred_path);
        const Trajectory ref = read_trajectory(ref_path);
        for (MetricReport& m : evaluate_pair(pred, ref, c.eval, c.seed, net ? &*net : nullptr))
            rows.emplace_back(i, std::move(m));
    }
    const std::string base = resolve_path(c, c.io.metrics);
    write_text(base + ".json", metrics_json(rows));
    write_text(base + ".csv", metrics_csv(rows));
    for (const auto& [pair, m] : rows)
        info() << "pair " << pair << "  " << m.name << " = " << m.value << "\n";
    return 0;
}

inline int run_job(const JobConfig& c) {
    require(c.workers >= 1, ErrorKind::config, "workers must be >= 1");
    if (c.command == "gen") return run_gen(c);
    if (c.command == "train") return run_train(c);
    if (c.command == "simulate") return run_simulate(c);
    if (c.command == "eval") return run_eval(c);
    fail(ErrorKind::config, "unknown command '" + c.command + "' (gen, train, simulate, eval)");
}

inline int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::numeric: return 3;
        case ErrorKind::io: return 4;
        default: return 2;
    }
}

}  // namespace hfm
