// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tinyunet/serialize.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tinyunet/errors.hpp"

namespace tinyunet {

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void floats(std::span<const float> values) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(values.data(), values.size_bytes());
        } else {
            for (float v : values) f32(v);
        }
    }
    void seal() {
        const auto* p = reinterpret_cast<const std::uint8_t*>(out_.data());
        u32(crc32({p, out_.size()}));
    }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    Reader(std::string_view bytes, const char* what) : in_(bytes), what_(what) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint16_t u16() {
        auto s = take(2);
        return static_cast<std::uint16_t>(byte(s, 0) | byte(s, 1) << 8);
    }
    std::uint32_t u32() {
        auto s = take(4);
        return byte(s, 0) | byte(s, 1) << 8 | byte(s, 2) << 16 | byte(s, 3) << 24;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string_view take(std::size_t n) {
        if (in_.size() - pos_ < n) {
            throw FormatError(std::string(what_) + ": unexpected end of data at byte " +
                              std::to_string(pos_));
        }
        auto s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void floats(std::span<float> out) {
        auto s = take(out.size_bytes());
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data(), s.data(), s.size());
        } else {
            for (std::size_t i = 0; i < out.size(); ++i) {
                std::uint32_t v = 0;
                for (int b = 0; b < 4; ++b) v |= byte(s, 4 * i + b) << (8 * b);
                out[i] = std::bit_cast<float>(v);
            }
        }
    }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    static std::uint32_t byte(std::string_view s, std::size_t i) {
        return static_cast<std::uint8_t>(s[i]);
    }
    std::string_view in_;
    std::size_t pos_ = 0;
    const char* what_;
};

// Checks magic and trailing CRC, returning the body between them.
std::string_view verify_envelope(std::string_view bytes, const char (&magic)[4], const char* what) {
    if (bytes.size() < 8) {
        throw FormatError(std::string(what) + ": file too short (" + std::to_string(bytes.size()) +
                          " bytes)");
    }
    if (std::memcmp(bytes.data(), magic, 4) != 0) {
        throw FormatError(std::string(what) + ": bad magic bytes");
    }
    const std::string_view body = bytes.substr(0, bytes.size() - 4);
    Reader tail(bytes.substr(bytes.size() - 4), what);
    const std::uint32_t stored = tail.u32();
    const std::uint32_t actual =
        crc32({reinterpret_cast<const std::uint8_t*>(body.data()), body.size()});
    if (stored != actual) {
        char buf[96];
        std::snprintf(buf, sizeof buf, ": CRC mismatch (stored %08x, computed %08x)", stored, actual);
        throw FormatError(std::string(what) + buf);
    }
    return body;
}

std::string dims_string(std::span<const int> dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        s += (i ? "x" : "") + std::to_string(dims[i]);
    }
    return s;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large buffers
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string encode_model(const Model& model) {
    const ModelConfig& cfg = model.config();
    Writer w;
    w.bytes(kWeightMagic, 4);
    w.u32(kWeightVersion);
    w.u32(static_cast<std::uint32_t>(cfg.base_width));
    w.u32(static_cast<std::uint32_t>(cfg.depth));
    w.u32(static_cast<std::uint32_t>(cfg.in_channels));
    w.u32(static_cast<std::uint32_t>(cfg.out_channels));
    w.u8(cfg.use_batchnorm ? 1 : 0);
    w.f32(cfg.bn_momentum);
    w.f32(cfg.bn_epsilon);
    const auto params = model.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const ConstParamRef& p : params) {
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.bytes(p.name.data(), p.name.size());
        w.u8(static_cast<std::uint8_t>(p.dims.size()));
        for (int d : p.dims) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        w.floats(p.values);
    }
    w.seal();
    return w.take();
}

Model decode_model(std::string_view bytes) {
    const char* what = "weight file";
    Reader r(verify_envelope(bytes, kWeightMagic, what), what);
    r.take(4);
    const std::uint32_t version = r.u32();
    if (version != kWeightVersion) {
        throw FormatError("weight file: unsupported version " + std::to_string(version));
    }
    ModelConfig cfg;
    cfg.base_width = static_cast<int>(r.u32());
    cfg.depth = static_cast<int>(r.u32());
    cfg.in_channels = static_cast<int>(r.u32());
    cfg.out_channels = static_cast<int>(r.u32());
    const std::uint8_t bn = r.u8();
    if (bn > 1) {
        throw FormatError("weight file: batchnorm flag must be 0 or 1");
    }
    cfg.use_batchnorm = bn == 1;
    cfg.bn_momentum = r.f32();
    cfg.bn_epsilon = r.f32();
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("weight file: invalid config block: ") + e.what());
    }

    Model model(cfg, 0);
    std::vector<ParamRef> params = model.parameters();
    const std::uint32_t count = r.u32();
    if (count != params.size()) {
        throw FormatError("weight file: " + std::to_string(count) + " tensor records, model has " +
                          std::to_string(params.size()));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        ParamRef& p = params[i];
        const std::uint16_t len = r.u16();
        const std::string name(r.take(len));
        const std::string where = "weight file: record " + std::to_string(i) + " '" + name + "'";
        if (name != p.name) {
            throw FormatError(where + ": expected '" + p.name + "'");
        }
        const std::uint8_t rank = r.u8();
        std::vector<int> dims(rank);
        for (int& d : dims) {
            d = static_cast<int>(r.u32());
        }
        if (dims != p.dims) {
            throw FormatError(where + ": shape " + dims_string(dims) + ", expected " +
                              dims_string(p.dims));
        }
        r.floats(p.values);
    }
    if (r.remaining() != 0) {
        throw FormatError("weight file: " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return model;
}

std::uint64_t save_model(const Model& model, const std::string& path) {
    const std::string bytes = encode_model(model);
    write_file_atomic(path, bytes);
    return bytes.size();
}

Model load_model(const std::string& path) { return decode_model(read_file(path)); }

std::string encode_tensor(const Tensor& t) {
    Writer w;
    w.bytes(kTensorMagic, 4);
    w.u8(4);
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) {
        w.u32(static_cast<std::uint32_t>(d));
    }
    w.floats(t.values());
    w.seal();
    return w.take();
}

Tensor decode_tensor(std::string_view bytes) {
    const char* what = "tensor file";
    Reader r(verify_envelope(bytes, kTensorMagic, what), what);
    r.take(4);
    const std::uint8_t rank = r.u8();
    if (rank < 1 || rank > 4) {
        throw FormatError("tensor file: rank " + std::to_string(rank) + " not in 1..4");
    }
    // lower ranks are right-aligned into NCHW
    int extents[4] = {1, 1, 1, 1};
    for (int i = 4 - rank; i < 4; ++i) {
        const std::uint32_t d = r.u32();
        if (d < 1 || d > (1u << 24)) {
            throw FormatError("tensor file: invalid extent " + std::to_string(d));
        }
        extents[i] = static_cast<int>(d);
    }
    const Shape shape{extents[0], extents[1], extents[2], extents[3]};
    if (r.remaining() != shape.numel() * sizeof(float)) {
        throw FormatError("tensor file: payload size does not match shape " + to_string(shape));
    }
    Tensor t(shape);
    r.floats(t.values());
    return t;
}

void save_tensor(const Tensor& t, const std::string& path) { write_file_atomic(path, encode_tensor(t)); }

Tensor load_tensor(const std::string& path) { return decode_tensor(read_file(path)); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failure on '" + path + "'");
    }
    return std::move(ss).str();
}

void write_file_atomic(const std::string& path, std::string_view bytes) {
    if (path.empty()) {
        throw IoError("output path is empty");
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open '" + tmp + "' for writing");
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            throw IoError("write failure on '" + tmp + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move '" + tmp + "' to '" + path + "'");
    }
}

}  // namespace tinyunet
