#include "lowshot/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace lowshot {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(out, u);
}

struct Cursor {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw IoError("checkpoint truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * b);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * b);
        return v;
    }
    double f64() {
        const std::uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<std::byte> bytes(std::size_t n) {
        need(n);
        std::vector<std::byte> v(n);
        std::memcpy(v.data(), buf.data() + pos, n);
        pos += n;
        return v;
    }
};

constexpr std::size_t kMaxNameLen = 4096;
constexpr std::size_t kMaxRank = 16;
constexpr std::uint64_t kMaxRecords = 1u << 20;

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointFile& ckpt) {
    std::string buf;
    buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(ckpt.desc.latent_dim));
    put_u32(buf, static_cast<std::uint32_t>(ckpt.desc.resolution));
    put_u32(buf, static_cast<std::uint32_t>(ckpt.desc.out_channels));
    put_u32(buf, static_cast<std::uint32_t>(ckpt.desc.base_channels));
    put_f64(buf, ckpt.desc.bn_eps);
    put_u32(buf, static_cast<std::uint32_t>(ckpt.meta.size()));
    buf += ckpt.meta;
    put_u64(buf, ckpt.records.size());
    for (const auto& r : ckpt.records) {
        if (r.name.empty() || r.name.size() > kMaxNameLen)
            throw ConfigError("record name length out of range: " + r.name);
        if (r.dtype != kDtypeF32 && r.dtype != kDtypeF64)
            throw ConfigError("record " + r.name + " has unknown dtype tag");
        put_u32(buf, static_cast<std::uint32_t>(r.name.size()));
        buf += r.name;
        buf.push_back(static_cast<char>(r.dtype));
        put_u32(buf, static_cast<std::uint32_t>(r.extents.size()));
        for (auto e : r.extents) put_u64(buf, static_cast<std::uint64_t>(e));
        const std::size_t width = r.dtype == kDtypeF32 ? 4 : 8;
        if (r.bytes.size() != static_cast<std::size_t>(shape_numel(r.extents)) * width)
            throw ConfigError("record " + r.name + " payload does not match extents");
        buf.append(reinterpret_cast<const char*>(r.bytes.data()), r.bytes.size());
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!f) throw IoError("short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move checkpoint into place at " + path + ": " + ec.message());
    }
}

CheckpointFile read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Cursor c{buf};
    const std::string magic = c.str(sizeof(kCheckpointMagic));
    if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw IoError(path + " is not a model checkpoint");
    const std::uint32_t version = c.u32();
    if (version != kCheckpointVersion)
        throw IncompatibleError("checkpoint format version " + std::to_string(version) +
                                ", reader supports " + std::to_string(kCheckpointVersion));

    CheckpointFile out;
    out.desc.latent_dim = c.u32();
    out.desc.resolution = c.u32();
    out.desc.out_channels = c.u32();
    out.desc.base_channels = c.u32();
    out.desc.bn_eps = c.f64();
    out.meta = c.str(c.u32());

    const std::uint64_t count = c.u64();
    if (count > kMaxRecords) throw IoError("checkpoint record count implausible");
    out.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Record r;
        const std::uint32_t name_len = c.u32();
        if (name_len == 0 || name_len > kMaxNameLen) throw IoError("checkpoint record name length corrupt");
        r.name = c.str(name_len);
        r.dtype = c.u8();
        if (r.dtype != kDtypeF32 && r.dtype != kDtypeF64)
            throw IoError("checkpoint record " + r.name + " has unknown dtype tag");
        const std::uint32_t rank = c.u32();
        if (rank > kMaxRank) throw IoError("checkpoint record " + r.name + " rank corrupt");
        std::uint64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t e = c.u64();
            if (e == 0 || e > (std::uint64_t(1) << 32))
                throw IoError("checkpoint record " + r.name + " extent corrupt");
            r.extents.push_back(static_cast<std::int64_t>(e));
            numel *= e;
        }
        const std::size_t width = r.dtype == kDtypeF32 ? 4 : 8;
        if (numel > buf.size())  // cheap plausibility bound before allocating
            throw IoError("checkpoint truncated");
        r.bytes = c.bytes(static_cast<std::size_t>(numel) * width);
        out.records.push_back(std::move(r));
    }
    return out;
}

}  // namespace lowshot
