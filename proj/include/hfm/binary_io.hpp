#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "hfm/error.hpp"
#include "hfm/phase_state.hpp"

namespace hfm::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

/// Append-only little-endian byte buffer.
class Writer {
public:
    void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

    template <class T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto raw = std::bit_cast<std::array<char, sizeof(T)>>(value);
        bytes_.insert(bytes_.end(), raw.begin(), raw.end());
    }

    void put(const Vec& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(v[i]);
    }

    template <std::size_t N>
    void put(const std::array<double, N>& a) {
        for (double x : a) put<double>(x);
    }

    const std::vector<char>& bytes() const { return bytes_; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::io, "cannot open '" + path + "' for writing");
        out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
        require(static_cast<bool>(out), ErrorKind::io, "write failed for '" + path + "'");
    }

private:
    std::vector<char> bytes_;
};

class Reader {
public:
    explicit Reader(std::vector<char> bytes, std::string origin = "<memory>")
        : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

    static Reader open(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        require(static_cast<bool>(in), ErrorKind::io, "cannot open '" + path + "'");
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return Reader(std::move(bytes), path);
    }

    void expect_magic(std::string_view tag) {
        need(tag.size());
        require(std::string_view(bytes_.data() + pos_, tag.size()) == tag, ErrorKind::io,
                origin_ + ": bad magic, expected '" + std::string(tag) + "'");
        pos_ += tag.size();
    }

    template <class T>
    T get() {
        need(sizeof(T));
        std::array<char, sizeof(T)> raw;
        std::memcpy(raw.data(), bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return std::bit_cast<T>(raw);
    }

    Vec get_vec(std::size_t n) {
        Vec v(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = get<double>();
        return v;
    }

    template <std::size_t N>
    std::array<double, N> get_array() {
        std::array<double, N> a{};
        for (double& x : a) x = get<double>();
        return a;
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    const std::string& origin() const { return origin_; }

private:
    void need(std::size_t n) const {
        require(pos_ + n <= bytes_.size(), ErrorKind::io, origin_ + ": truncated file");
    }

    std::vector<char> bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open '" + path + "'");
    return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace hfm::io
