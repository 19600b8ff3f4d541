// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte buffers shared by the cache, checkpoint and dataset formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

#include "crossalign/error.hpp"

namespace crossalign {

static_assert(std::endian::native == std::endian::little, "only little-endian hosts are supported");

class ByteWriter {
public:
    template <class T>
        requires std::is_arithmetic_v<T>
    void put(T value) {
        char raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        bytes_.append(raw, sizeof(T));
    }

    void put_bytes(std::string_view bytes) { bytes_.append(bytes); }

    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    template <class T>
        requires std::is_arithmetic_v<T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string_view get_bytes(std::size_t n) {
        need(n);
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n) const {
        if (remaining() < n) {
            fail(ErrorKind::truncation, what_ + ": needed " + std::to_string(n) + " bytes at offset " +
                                            std::to_string(pos_) + ", only " + std::to_string(remaining()) +
                                            " remain");
        }
    }

private:
    std::string_view bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "write to '" + path.string() + "' failed");
}

// A file cut inside its magic is truncated, anything else that fails to match is the wrong format.
inline void expect_magic(std::string_view bytes, std::string_view magic, const std::string& source,
                         std::string_view what) {
    if (bytes.size() < magic.size() && !bytes.empty() && magic.substr(0, bytes.size()) == bytes) {
        fail(ErrorKind::truncation, "'" + source + "' ends inside the " + std::string(what) + " magic");
    }
    if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic) {
        fail(ErrorKind::format, "'" + source + "' is not " + std::string(what) + " (bad magic)");
    }
}

}  // namespace crossalign
