#pragma once

#include <optional>
#include <string>

#include "hfm/binary_io.hpp"
#include "hfm/net.hpp"
#include "hfm/train.hpp"

namespace hfm {

inline constexpr std::uint32_t checkpoint_version = 1;

struct Checkpoint {
    FlowNet net;
    std::optional<AdamState> optimizer;
};

/// Layout (little-endian):
///   "HFMC", version u32,
///   arch: width u32, frequencies u32, activation u32, velocity_skip u32, fourier_scale f64,
///   N u32, d u32, max_timestep f64, masses N x f64,
///   param_count u64, parameters f64[], fourier frequencies f64[],
///   normalization 6 x (N*d) f64 (x shift/scale, p shift/scale, v scale, f scale),
///   has_optimizer u32, [adam step u64, m f64[], v f64[]].
inline io::Writer encode_checkpoint(const FlowNet& net, const AdamState* optimizer = nullptr) {
    io::Writer w;
    w.magic("HFMC");
    w.put<std::uint32_t>(checkpoint_version);
    const ArchConfig& a = net.arch();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.frequencies()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.activation));
    w.put<std::uint32_t>(a.velocity_skip ? 1u : 0u);
    w.put<double>(a.fourier_scale);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(net.count()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(net.dims()));
    w.put<double>(net.max_timestep());
    w.put(net.masses());
    w.put<std::uint64_t>(static_cast<std::uint64_t>(net.parameter_count()));
    w.put(net.parameters());
    w.put(net.frequencies());
    const FlowNet::Normalization n = net.normalization();
    for (const Vec* v : {&n.x_shift, &n.x_scale, &n.p_shift, &n.p_scale, &n.v_scale, &n.f_scale}) w.put(*v);
    w.put<std::uint32_t>(optimizer ? 1u : 0u);
    if (optimizer) {
        w.put<std::uint64_t>(static_cast<std::uint64_t>(optimizer->step));
        w.put(optimizer->m);
        w.put(optimizer->v);
    }
    return w;
}

inline void save_checkpoint(const std::string& path, const FlowNet& net, const AdamState* optimizer = nullptr) {
    encode_checkpoint(net, optimizer).save(path);
}

inline Checkpoint decode_checkpoint(io::Reader& r) {
    r.expect_magic("HFMC");
    const auto version = r.get<std::uint32_t>();
    require(version == checkpoint_version, ErrorKind::io,
            r.origin() + ": unsupported checkpoint version " + std::to_string(version));
    ArchConfig a;
    a.width = static_cast<int>(r.get<std::uint32_t>());
    a.fourier_features = static_cast<int>(r.get<std::uint32_t>());
    a.activation = static_cast<Activation>(r.get<std::uint32_t>());
    a.velocity_skip = r.get<std::uint32_t>() != 0;
    a.fourier_scale = r.get<double>();
    const int count = static_cast<int>(r.get<std::uint32_t>());
    const int dims = static_cast<int>(r.get<std::uint32_t>());
    const double max_timestep = r.get<double>();
    const Vec masses = r.get_vec(static_cast<std::size_t>(count));
    Rng unused;
    Checkpoint ck{FlowNet(a, masses, dims, max_timestep, unused), std::nullopt};
    const auto n_params = r.get<std::uint64_t>();
    require(static_cast<Eigen::Index>(n_params) == ck.net.parameter_count(), ErrorKind::io,
            r.origin() + ": parameter count does not match the architecture");
    ck.net.set_parameters(r.get_vec(n_params));
    ck.net.set_frequencies(r.get_vec(static_cast<std::size_t>(a.frequencies())));
    const std::size_t width = static_cast<std::size_t>(count) * static_cast<std::size_t>(dims);
    FlowNet::Normalization n;
    for (Vec* v : {&n.x_shift, &n.x_scale, &n.p_shift, &n.p_scale, &n.v_scale, &n.f_scale}) *v = r.get_vec(width);
    ck.net.set_normalization(n);
    if (r.get<std::uint32_t>() != 0) {
        AdamState s;
        s.step = static_cast<long>(r.get<std::uint64_t>());
        s.m = r.get_vec(n_params);
        s.v = r.get_vec(n_params);
        ck.optimizer = std::move(s);
    }
    require(r.at_end(), ErrorKind::io, r.origin() + ": trailing bytes in checkpoint");
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    io::Reader r = io::Reader::open(path);
    return decode_checkpoint(r);
}

}  // namespace hfm
