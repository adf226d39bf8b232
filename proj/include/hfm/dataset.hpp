#pragma once

#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "hfm/binary_io.hpp"
#include "hfm/sampling.hpp"

namespace hfm {

/// Trajectory-free training set. All samples share the system, N, d and masses.
struct Dataset {
    SystemParams system;
    int count = 1;
    int dims = 1;
    Vec masses;
    std::vector<Sample> samples;
};

inline constexpr std::uint32_t dataset_version = 1;

/// Layout (little-endian): "HFMD", version u32, N u32, d u32, sample_count u64,
/// system tag u32, 8 x f64 system parameters, N x f64 masses, then per sample
/// positions, momenta and forces as N*d f64 each. Velocities are recomputed.
inline io::Writer encode_dataset(const Dataset& data) {
    io::Writer w;
    w.magic("HFMD");
    w.put<std::uint32_t>(dataset_version);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(data.count));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(data.dims));
    w.put<std::uint64_t>(data.samples.size());
    w.put<std::uint32_t>(system_tag(data.system));
    w.put(system_slots(data.system));
    w.put(data.masses);
    const Eigen::Index width = static_cast<Eigen::Index>(data.count) * data.dims;
    for (const Sample& s : data.samples) {
        require(s.state.positions.size() == width && s.force.size() == width, ErrorKind::shape,
                "dataset sample does not match the declared N*d");
        w.put(s.state.positions);
        w.put(s.state.momenta);
        w.put(s.force);
    }
    return w;
}

inline void write_dataset(const std::string& path, const Dataset& data) { encode_dataset(data).save(path); }

inline Dataset read_dataset(const std::string& path) {
    io::Reader r = io::Reader::open(path);
    r.expect_magic("HFMD");
    const auto version = r.get<std::uint32_t>();
    require(version == dataset_version, ErrorKind::io, path + ": unsupported dataset version " + std::to_string(version));
    Dataset data;
    data.count = static_cast<int>(r.get<std::uint32_t>());
    data.dims = static_cast<int>(r.get<std::uint32_t>());
    const auto n_samples = r.get<std::uint64_t>();
    const auto tag = r.get<std::uint32_t>();
    data.system = system_from_slots(tag, r.get_array<system_slot_count>());
    data.masses = r.get_vec(static_cast<std::size_t>(data.count));
    const std::size_t width = static_cast<std::size_t>(data.count) * static_cast<std::size_t>(data.dims);
    data.samples.reserve(n_samples);
    for (std::uint64_t i = 0; i < n_samples; ++i) {
        PhaseState state{r.get_vec(width), r.get_vec(width), data.masses, data.dims};
        Vec f = r.get_vec(width);
        data.samples.push_back(make_sample(state, std::move(f)));
    }
    require(r.at_end(), ErrorKind::io, path + ": trailing bytes after the last sample");
    return data;
}

/// Debug export, one row per sample: x..., p..., v..., f..., E_tot.
inline void write_dataset_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot open '" + path + "' for writing");
    const int width = data.count * data.dims;
    for (const char* prefix : {"x", "p", "v", "f"})
        for (int k = 0; k < width; ++k) out << prefix << k << ',';
    out << "E_tot\n";
    out << std::setprecision(17);
    for (const Sample& s : data.samples) {
        for (const Vec* v : {&s.state.positions, &s.state.momenta, &s.velocity, &s.force})
            for (int k = 0; k < width; ++k) out << (*v)[k] << ',';
        out << total_energy(data.system, s.state) << '\n';
    }
}

}  // namespace hfm
