#include "chamber/core/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace chamber::nn {

namespace {

constexpr char kMagic[8] = {'C', 'H', 'A', 'M', 'B', 'C', 'K', 'P'};

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
    os.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
    os.write(reinterpret_cast<char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, uint32_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

std::string get_str(std::istream& is) {
    const uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    return s;
}

void put_f32_block(std::ostream& os, const std::vector<float>& v) {
    // Values are serialized one float at a time through a u32 view to pin
    // byte order regardless of host endianness.
    std::vector<unsigned char> buf(v.size() * 4);
    for (size_t i = 0; i < v.size(); ++i) {
        uint32_t bits;
        std::memcpy(&bits, &v[i], 4);
        for (int k = 0; k < 4; ++k) buf[i * 4 + size_t(k)] = (bits >> (8 * k)) & 0xff;
    }
    os.write(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
}

void get_f32_block(std::istream& is, std::vector<float>& v) {
    std::vector<unsigned char> buf(v.size() * 4);
    is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    for (size_t i = 0; i < v.size(); ++i) {
        uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= uint32_t(buf[i * 4 + size_t(k)]) << (8 * k);
        std::memcpy(&v[i], &bits, 4);
    }
}

CheckpointHeader read_header(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error(path + ": not a checkpoint file");
    CheckpointHeader h;
    h.format_version = get_u32(is);
    if (h.format_version != 1)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(h.format_version));
    h.model_kind = get_str(is);
    h.config_hash = get_u64(is);
    h.seed = get_u64(is);
    return h;
}

} // namespace

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const std::vector<NamedParam>& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    put_u32(os, header.format_version);
    put_str(os, header.model_kind);
    put_u64(os, header.config_hash);
    put_u64(os, header.seed);
    put_u32(os, uint32_t(params.size()));
    for (const auto& p : params) {
        put_str(os, p.name);
        const auto& shape = p.tensor.shape();
        put_u32(os, uint32_t(shape.size()));
        for (int64_t d : shape) put_u32(os, uint32_t(d));
        put_u64(os, uint64_t(p.tensor.size()) * 4);
        put_f32_block(os, p.tensor.data());
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointHeader load_checkpoint(const std::string& path, std::vector<NamedParam>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    CheckpointHeader h = read_header(is, path);
    const uint32_t count = get_u32(is);
    if (count != params.size())
        throw std::runtime_error(path + ": checkpoint has " + std::to_string(count) +
                                 " parameters, model expects " + std::to_string(params.size()));
    for (auto& p : params) {
        const std::string name = get_str(is);
        if (name != p.name)
            throw std::runtime_error(path + ": parameter order mismatch, got '" + name +
                                     "', expected '" + p.name + "'");
        const uint32_t rank = get_u32(is);
        Shape shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = get_u32(is);
        if (shape != p.tensor.shape())
            throw std::runtime_error(path + ": shape mismatch for '" + name + "': file " +
                                     shape_str(shape) + ", model " + shape_str(p.tensor.shape()));
        const uint64_t bytes = get_u64(is);
        if (bytes != uint64_t(p.tensor.size()) * 4)
            throw std::runtime_error(path + ": payload size mismatch for '" + name + "'");
        get_f32_block(is, p.tensor.data());
    }
    if (!is) throw std::runtime_error("checkpoint truncated: " + path);
    return h;
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    return read_header(is, path);
}

} // namespace chamber::nn
