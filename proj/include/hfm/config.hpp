#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hfm/datagen.hpp"
#include "hfm/integrate.hpp"
#include "hfm/loss.hpp"
#include "hfm/net.hpp"
#include "hfm/train.hpp"

namespace hfm {

using Json = nlohmann::json;

enum class SamplingMode { fixed_energy, snapshots };

struct ParticleConfig {
    int count = 0;  // 0: the system's natural layout
    int dims = 0;
    Vec masses;     // empty: default masses

    bool operator==(const ParticleConfig&) const = default;
};

struct SamplingConfig {
    SamplingMode mode = SamplingMode::fixed_energy;
    long samples = 1000;
    double total_energy = 0.5;
    std::optional<PositionBox> box;
    long max_tries = 1'000'000;
    MomentumSamplerCfg momenta;
    SnapshotConfig snapshots;

    bool operator==(const SamplingConfig&) const = default;
};

struct TrainSection {
    TrainConfig optimizer;
    LossConfig loss;
    TimestepDist timestep;
    bool resume = false;

    bool operator==(const TrainSection&) const = default;
};

struct InitialConfig {
    std::string source = "dataset";  // dataset | sample | explicit
    long first = 0;
    int count = 1;
    Vec positions;
    Vec momenta;

    bool operator==(const InitialConfig&) const = default;
};

struct SimulateConfig {
    std::string stepper = "vv";
    double timestep = 0.1;
    long steps = 100;
    std::vector<FilterKind> filters;
    LangevinParams thermostat;
    double sanity_bound = 1e3;
    InitialConfig initial;

    bool operator==(const SimulateConfig&) const = default;
};

struct EvalPair {
    std::string pred;
    std::string ref;

    bool operator==(const EvalPair&) const = default;
};

struct EvalConfig {
    std::vector<EvalPair> pairs;
    int bins = 200;
    double r_max = 0.0;
    std::vector<double> semigroup_timesteps;

    bool operator==(const EvalConfig&) const = default;
};

struct IoConfig {
    std::string out = ".";
    std::string dataset = "dataset.hfmd";
    std::string dataset_csv;
    std::string checkpoint = "model.hfmc";
    std::string log = "train_log.csv";
    std::string trajectory = "trajectory.hfmt";
    std::string metrics = "metrics";

    bool operator==(const IoConfig&) const = default;
};

struct JobConfig {
    std::string command;
    std::uint64_t seed = 0;
    int workers = 1;
    SystemParams system = HarmonicOscillator{};
    ParticleConfig particles;
    SamplingConfig sampling;
    ArchConfig net;
    TrainSection train;
    SimulateConfig simulate;
    EvalConfig eval;
    IoConfig io;

    bool operator==(const JobConfig&) const = default;
};

namespace config_detail {

[[noreturn]] inline void bad(const std::string& path, const std::string& what) {
    fail(ErrorKind::config, "config: " + path + ": " + what);
}

/// Reads one JSON object, rejecting keys nobody asked for.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) bad(where(), "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const Json* raw(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void get(const std::string& key, double& out) {
        if (const Json* v = raw(key)) {
            if (!v->is_number()) bad(child_path(key), "expected a number");
            out = v->get<double>();
        }
    }
    void get(const std::string& key, bool& out) {
        if (const Json* v = raw(key)) {
            if (!v->is_boolean()) bad(child_path(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const Json* v = raw(key)) {
            if (!v->is_string()) bad(child_path(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const std::string& key, int& out) {
        long wide = out;
        get(key, wide);
        if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max())
            bad(child_path(key), "integer out of range");
        out = static_cast<int>(wide);
    }
    void get(const std::string& key, long& out) {
        if (const Json* v = raw(key)) {
            if (!v->is_number_integer()) bad(child_path(key), "expected an integer");
            out = v->get<long>();
        }
    }
    void get(const std::string& key, std::uint64_t& out) {
        if (const Json* v = raw(key)) {
            if (!v->is_number_unsigned()) bad(child_path(key), "expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void get(const std::string& key, Vec& out) {
        if (const Json* v = raw(key)) {
            if (!v->is_array()) bad(child_path(key), "expected an array of numbers");
            out.resize(static_cast<Eigen::Index>(v->size()));
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (!(*v)[i].is_number()) bad(child_path(key), "expected an array of numbers");
                out[static_cast<Eigen::Index>(i)] = (*v)[i].get<double>();
            }
        }
    }
    void get(const std::string& key, std::vector<double>& out) {
        Vec tmp;
        if (!has(key)) return;
        get(key, tmp);
        out.assign(tmp.data(), tmp.data() + tmp.size());
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) bad(child_path(it.key()), "unknown key");
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline Json vec_json(const Vec& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

template <class F>
void with_section(Section& parent, const std::string& key, F&& body) {
    if (const Json* v = parent.raw(key)) {
        Section s(*v, parent.child_path(key));
        body(s);
        s.finish();
    }
}

}  // namespace config_detail

inline std::string sampling_mode_name(SamplingMode m) { return m == SamplingMode::snapshots ? "snapshots" : "fixed_energy"; }

inline std::string timestep_kind_name(TimestepKind k) {
    switch (k) {
        case TimestepKind::uniform: return "uniform";
        case TimestepKind::logit_normal_diff: return "logit_normal_diff";
        case TimestepKind::mixture: return "mixture";
    }
    return "mixture";
}

inline Json system_to_json(const SystemParams& sys) {
    Json j;
    j["kind"] = std::string(system_name(sys));
    std::visit(overloaded{
                   [&](const HarmonicOscillator& s) { j["omega"] = s.omega; },
                   [&](const SpringPendulum& s) {
                       j["mass"] = s.mass;
                       j["gravity"] = s.gravity;
                       j["stiffness"] = s.stiffness;
                       j["rest_length"] = s.rest_length;
                   },
                   [&](const Barbanis& s) {
                       j["omega_x"] = s.omega_x;
                       j["omega_y"] = s.omega_y;
                       j["coupling"] = s.coupling;
                   },
                   [&](const Gravity& s) {
                       j["G"] = s.G;
                       j["softening"] = s.softening;
                   },
               },
               sys);
    return j;
}

inline SystemParams system_from_json(config_detail::Section& s) {
    std::string kind = "harmonic_oscillator";
    s.get("kind", kind);
    if (kind == "harmonic_oscillator") {
        HarmonicOscillator p;
        s.get("omega", p.omega);
        return p;
    }
    if (kind == "spring_pendulum") {
        SpringPendulum p;
        s.get("mass", p.mass);
        s.get("gravity", p.gravity);
        s.get("stiffness", p.stiffness);
        s.get("rest_length", p.rest_length);
        return p;
    }
    if (kind == "barbanis") {
        Barbanis p;
        s.get("omega_x", p.omega_x);
        s.get("omega_y", p.omega_y);
        s.get("coupling", p.coupling);
        return p;
    }
    if (kind == "gravity") {
        Gravity p;
        s.get("G", p.G);
        s.get("softening", p.softening);
        return p;
    }
    config_detail::bad(s.child_path("kind"),
                       "unknown system '" + kind + "' (harmonic_oscillator, spring_pendulum, barbanis, gravity)");
}

inline Json to_json(const JobConfig& c) {
    using config_detail::vec_json;
    Json j;
    j["command"] = c.command;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["system"] = system_to_json(c.system);
    j["particles"] = {{"count", c.particles.count}, {"dims", c.particles.dims}, {"masses", vec_json(c.particles.masses)}};

    const SamplingConfig& sa = c.sampling;
    Json samp = {{"mode", sampling_mode_name(sa.mode)},
                 {"samples", sa.samples},
                 {"total_energy", sa.total_energy},
                 {"max_tries", sa.max_tries}};
    if (sa.box) samp["box"] = {{"lower", vec_json(sa.box->lower)}, {"upper", vec_json(sa.box->upper)}};
    samp["momenta"] = {{"mean_temperature", sa.momenta.mean_temperature},
                       {"temperature_spread", sa.momenta.temperature_spread},
                       {"k_boltzmann", sa.momenta.k_boltzmann},
                       {"q_zero_angular_momentum", sa.momenta.q_zero_angular_momentum},
                       {"q_zero_momentum", sa.momenta.q_zero_momentum}};
    samp["snapshots"] = {{"trajectories", sa.snapshots.trajectories},
                         {"per_trajectory", sa.snapshots.snapshots_per_trajectory},
                         {"horizon", sa.snapshots.horizon},
                         {"fine_dt", sa.snapshots.fine_dt},
                         {"half_width", sa.snapshots.half_width},
                         {"temperature", sa.snapshots.temperature}};
    j["sampling"] = samp;

    j["net"] = {{"width", c.net.width},
                {"fourier_features", c.net.fourier_features},
                {"fourier_scale", c.net.fourier_scale},
                {"activation", activation_name(c.net.activation)},
                {"velocity_skip", c.net.velocity_skip}};

    const TrainConfig& o = c.train.optimizer;
    const LossConfig& l = c.train.loss;
    const TimestepDist& t = c.train.timestep;
    j["train"] = {{"beta1", o.beta1},
                  {"beta2", o.beta2},
                  {"adam_eps", o.adam_eps},
                  {"lr_warm_start", o.lr_warm_start},
                  {"lr_max", o.lr_max},
                  {"lr_min", o.lr_min},
                  {"warmup_frac", o.warmup_frac},
                  {"clip_norm", o.clip_norm},
                  {"batch_size", o.batch_size},
                  {"epochs", o.epochs},
                  {"steps", o.steps},
                  {"checkpoint_every", o.checkpoint_every},
                  {"resample_momenta", o.resample_momenta},
                  {"rotation_augmentation", o.rotation_augmentation},
                  {"resume", c.train.resume}};
    j["train"]["loss"] = {{"velocity_weight", l.velocity_weight},
                          {"force_weight", l.force_weight},
                          {"offset", l.offset},
                          {"exponent", l.exponent},
                          {"adaptive", l.adaptive},
                          {"mass_weight_velocity", l.mass_weight_velocity}};
    j["train"]["timestep"] = {{"kind", timestep_kind_name(t.kind)},
                              {"max_timestep", t.max_timestep},
                              {"q_zero", t.q_zero},
                              {"logit_mu", t.logit_mu},
                              {"logit_sigma", t.logit_sigma},
                              {"beta_a", t.beta_a},
                              {"beta_b", t.beta_b},
                              {"uniform_weight", t.uniform_weight}};

    const SimulateConfig& si = c.simulate;
    std::vector<std::string> filters;
    for (FilterKind f : si.filters) filters.push_back(filter_name(f));
    j["simulate"] = {{"stepper", si.stepper},
                     {"timestep", si.timestep},
                     {"steps", si.steps},
                     {"filters", filters},
                     {"sanity_bound", si.sanity_bound},
                     {"thermostat",
                      {{"temperature", si.thermostat.temperature},
                       {"friction", si.thermostat.friction},
                       {"k_boltzmann", si.thermostat.k_boltzmann}}},
                     {"initial",
                      {{"source", si.initial.source},
                       {"first", si.initial.first},
                       {"count", si.initial.count},
                       {"positions", vec_json(si.initial.positions)},
                       {"momenta", vec_json(si.initial.momenta)}}}};

    Json pairs = Json::array();
    for (const EvalPair& p : c.eval.pairs) pairs.push_back({{"pred", p.pred}, {"ref", p.ref}});
    j["eval"] = {{"pairs", pairs},
                 {"bins", c.eval.bins},
                 {"r_max", c.eval.r_max},
                 {"semigroup_timesteps", c.eval.semigroup_timesteps}};

    j["io"] = {{"out", c.io.out},
               {"dataset", c.io.dataset},
               {"dataset_csv", c.io.dataset_csv},
               {"checkpoint", c.io.checkpoint},
               {"log", c.io.log},
               {"trajectory", c.io.trajectory},
               {"metrics", c.io.metrics}};
    return j;
}

inline JobConfig job_from_json(const Json& j) {
    using config_detail::bad;
    using config_detail::Section;
    using config_detail::with_section;
    JobConfig c;
    Section root(j, "");
    root.get("command", c.command);
    root.get("seed", c.seed);
    root.get("workers", c.workers);
    with_section(root, "system", [&](Section& s) { c.system = system_from_json(s); });
    with_section(root, "particles", [&](Section& s) {
        s.get("count", c.particles.count);
        s.get("dims", c.particles.dims);
        s.get("masses", c.particles.masses);
    });
    with_section(root, "sampling", [&](Section& s) {
        std::string mode = sampling_mode_name(c.sampling.mode);
        s.get("mode", mode);
        if (mode == "fixed_energy") c.sampling.mode = SamplingMode::fixed_energy;
        else if (mode == "snapshots") c.sampling.mode = SamplingMode::snapshots;
        else bad(s.child_path("mode"), "expected fixed_energy or snapshots");
        s.get("samples", c.sampling.samples);
        s.get("total_energy", c.sampling.total_energy);
        s.get("max_tries", c.sampling.max_tries);
        with_section(s, "box", [&](Section& b) {
            PositionBox box;
            b.get("lower", box.lower);
            b.get("upper", box.upper);
            c.sampling.box = box;
        });
        with_section(s, "momenta", [&](Section& m) {
            MomentumSamplerCfg& mc = c.sampling.momenta;
            m.get("mean_temperature", mc.mean_temperature);
            m.get("temperature_spread", mc.temperature_spread);
            m.get("k_boltzmann", mc.k_boltzmann);
            m.get("q_zero_angular_momentum", mc.q_zero_angular_momentum);
            m.get("q_zero_momentum", mc.q_zero_momentum);
        });
        with_section(s, "snapshots", [&](Section& m) {
            SnapshotConfig& sc = c.sampling.snapshots;
            m.get("trajectories", sc.trajectories);
            m.get("per_trajectory", sc.snapshots_per_trajectory);
            m.get("horizon", sc.horizon);
            m.get("fine_dt", sc.fine_dt);
            m.get("half_width", sc.half_width);
            m.get("temperature", sc.temperature);
        });
    });
    with_section(root, "net", [&](Section& s) {
        s.get("width", c.net.width);
        s.get("fourier_features", c.net.fourier_features);
        s.get("fourier_scale", c.net.fourier_scale);
        std::string act = activation_name(c.net.activation);
        s.get("activation", act);
        try {
            c.net.activation = activation_from_name(act);
        } catch (const Error& e) {
            bad(s.child_path("activation"), e.what());
        }
        s.get("velocity_skip", c.net.velocity_skip);
    });
    with_section(root, "train", [&](Section& s) {
        TrainConfig& o = c.train.optimizer;
        s.get("beta1", o.beta1);
        s.get("beta2", o.beta2);
        s.get("adam_eps", o.adam_eps);
        s.get("lr_warm_start", o.lr_warm_start);
        s.get("lr_max", o.lr_max);
        s.get("lr_min", o.lr_min);
        s.get("warmup_frac", o.warmup_frac);
        s.get("clip_norm", o.clip_norm);
        s.get("batch_size", o.batch_size);
        s.get("epochs", o.epochs);
        s.get("steps", o.steps);
        s.get("checkpoint_every", o.checkpoint_every);
        s.get("resample_momenta", o.resample_momenta);
        s.get("rotation_augmentation", o.rotation_augmentation);
        s.get("resume", c.train.resume);
        with_section(s, "loss", [&](Section& ls) {
            LossConfig& l = c.train.loss;
            ls.get("velocity_weight", l.velocity_weight);
            ls.get("force_weight", l.force_weight);
            ls.get("offset", l.offset);
            ls.get("exponent", l.exponent);
            ls.get("adaptive", l.adaptive);
            ls.get("mass_weight_velocity", l.mass_weight_velocity);
        });
        with_section(s, "timestep", [&](Section& ts) {
            TimestepDist& t = c.train.timestep;
            std::string kind = timestep_kind_name(t.kind);
            ts.get("kind", kind);
            if (kind == "uniform") t.kind = TimestepKind::uniform;
            else if (kind == "logit_normal_diff") t.kind = TimestepKind::logit_normal_diff;
            else if (kind == "mixture") t.kind = TimestepKind::mixture;
            else bad(ts.child_path("kind"), "expected uniform, logit_normal_diff or mixture");
            ts.get("max_timestep", t.max_timestep);
            ts.get("q_zero", t.q_zero);
            ts.get("logit_mu", t.logit_mu);
            ts.get("logit_sigma", t.logit_sigma);
            ts.get("beta_a", t.beta_a);
            ts.get("beta_b", t.beta_b);
            ts.get("uniform_weight", t.uniform_weight);
        });
    });
    with_section(root, "simulate", [&](Section& s) {
        SimulateConfig& si = c.simulate;
        s.get("stepper", si.stepper);
        if (si.stepper != "vv" && si.stepper != "hfm") bad(s.child_path("stepper"), "expected vv or hfm");
        s.get("timestep", si.timestep);
        s.get("steps", si.steps);
        s.get("sanity_bound", si.sanity_bound);
        if (const Json* f = s.raw("filters")) {
            if (!f->is_array()) bad(s.child_path("filters"), "expected an array of filter names");
            si.filters.clear();
            for (const Json& name : *f) {
                if (!name.is_string()) bad(s.child_path("filters"), "expected an array of filter names");
                si.filters.push_back(filter_from_name(name.get<std::string>()));
            }
        }
        with_section(s, "thermostat", [&](Section& t) {
            t.get("temperature", si.thermostat.temperature);
            t.get("friction", si.thermostat.friction);
            t.get("k_boltzmann", si.thermostat.k_boltzmann);
        });
        with_section(s, "initial", [&](Section& t) {
            t.get("source", si.initial.source);
            if (si.initial.source != "dataset" && si.initial.source != "sample" && si.initial.source != "explicit")
                bad(t.child_path("source"), "expected dataset, sample or explicit");
            t.get("first", si.initial.first);
            t.get("count", si.initial.count);
            t.get("positions", si.initial.positions);
            t.get("momenta", si.initial.momenta);
        });
    });
    with_section(root, "eval", [&](Section& s) {
        if (const Json* p = s.raw("pairs")) {
            if (!p->is_array()) bad(s.child_path("pairs"), "expected an array of {pred, ref}");
            for (std::size_t i = 0; i < p->size(); ++i) {
                Section ps((*p)[i], s.child_path("pairs") + "[" + std::to_string(i) + "]");
                EvalPair pair;
                ps.get("pred", pair.pred);
                ps.get("ref", pair.ref);
                ps.finish();
                c.eval.pairs.push_back(pair);
            }
        }
        s.get("bins", c.eval.bins);
        s.get("r_max", c.eval.r_max);
        s.get("semigroup_timesteps", c.eval.semigroup_timesteps);
    });
    with_section(root, "io", [&](Section& s) {
        s.get("out", c.io.out);
        s.get("dataset", c.io.dataset);
        s.get("dataset_csv", c.io.dataset_csv);
        s.get("checkpoint", c.io.checkpoint);
        s.get("log", c.io.log);
        s.get("trajectory", c.io.trajectory);
        s.get("metrics", c.io.metrics);
    });
    root.finish();
    return c;
}

/// Applies "a.b.c=value" to a JSON tree. The value is parsed as JSON when it
/// can be, otherwise taken as a string.
inline void apply_override(Json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorKind::config, "override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) fail(ErrorKind::config, "override key '" + key + "' has an empty component");
        if (!node->is_object()) {
            if (!node->is_null()) fail(ErrorKind::config, "override key '" + key + "' descends into a non-object");
            *node = Json::object();
        }
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open config '" + path + "'");
    Json j = Json::parse(in, nullptr, false, true);
    if (j.is_discarded()) fail(ErrorKind::config, "config '" + path + "' is not valid JSON");
    return j;
}

inline std::string dump_config(const JobConfig& c) { return to_json(c).dump(2) + "\n"; }

/// Resolved particle layout: N, d and masses with system defaults filled in.
struct Layout {
    int count = 1;
    int dims = 1;
    Vec masses;
};

inline Layout resolve_layout(const JobConfig& c) {
    Layout l;
    std::visit(overloaded{
                   [&](const HarmonicOscillator&) { l.count = 1, l.dims = 1; },
                   [&](const SpringPendulum&) { l.count = 1, l.dims = 2; },
                   [&](const Barbanis&) { l.count = 1, l.dims = 2; },
                   [&](const Gravity&) { l.count = 4, l.dims = 3; },
               },
               c.system);
    if (c.particles.count > 0) l.count = c.particles.count;
    if (c.particles.dims > 0) l.dims = c.particles.dims;
    if (c.particles.masses.size() > 0) {
        require(c.particles.masses.size() == l.count, ErrorKind::config,
                "particles.masses must have one entry per particle");
        l.masses = c.particles.masses;
    } else {
        l.masses = default_masses(c.system, l.count);
    }
    return l;
}

}  // namespace hfm
