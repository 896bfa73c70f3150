#include "cores/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace cores {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as raw little-endian doubles");

namespace {

constexpr char kMagic[] = "CORESCKPT";
constexpr std::size_t kMagicLen = 9;
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw IoError("truncated checkpoint: " + path);
    }
    return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : params) {
        if (n == name) return &t;
    }
    return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, kMagicLen);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(ckpt.header.size()));
    os.write(ckpt.header.data(), static_cast<std::streamsize>(ckpt.header.size()));
    write_u32(os, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& [name, tensor] : ckpt.params) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) write_u32(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(tensor.data().data()),
                 static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    }
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[kMagicLen];
    if (!is.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
        throw ParseError("not a checkpoint file (bad magic): " + path);
    }
    const std::uint32_t version = read_u32(is, path);
    if (version != kVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version) + ": " +
                         path);
    }
    Checkpoint ckpt;
    const std::uint32_t header_len = read_u32(is, path);
    ckpt.header.resize(header_len);
    if (header_len > 0 && !is.read(ckpt.header.data(), header_len)) {
        throw IoError("truncated checkpoint: " + path);
    }
    const std::uint32_t count = read_u32(is, path);
    ckpt.params.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint32_t name_len = read_u32(is, path);
        std::string name(name_len, '\0');
        if (name_len > 0 && !is.read(name.data(), name_len)) {
            throw IoError("truncated checkpoint: " + path);
        }
        const std::uint32_t rank = read_u32(is, path);
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = read_u32(is, path);
            numel *= shape[i];
        }
        std::vector<double> data(numel);
        if (numel > 0 && !is.read(reinterpret_cast<char*>(data.data()),
                                  static_cast<std::streamsize>(numel * sizeof(double)))) {
            throw IoError("truncated checkpoint: " + path);
        }
        ckpt.params.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return ckpt;
}

}  // namespace cores
