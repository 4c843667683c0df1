#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lowshot/decoder.hpp"

namespace lowshot {

// Model persistence. Little-endian container: magic, format version,
// architecture descriptor, manifest text, then named tensor records
// (name length, name, dtype tag, rank, extents, raw values).

inline constexpr char kCheckpointMagic[8] = {'L', 'O', 'W', 'S', 'H', 'O', 'T', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline constexpr std::uint8_t kDtypeF32 = 1;
inline constexpr std::uint8_t kDtypeF64 = 2;

struct Record {
    std::string name;
    std::uint8_t dtype = 0;
    Shape extents;
    std::vector<std::byte> bytes;
};

struct CheckpointFile {
    DecoderDesc desc;
    std::string meta;  // manifest text, JSON by convention
    std::vector<Record> records;

    const Record* find(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    }
};

// Serialized write through a temp file and rename; partial files never land
// at the destination path.
void write_checkpoint(const std::string& path, const CheckpointFile& ckpt);
CheckpointFile read_checkpoint(const std::string& path);

template <class T>
constexpr std::uint8_t dtype_tag() {
    if constexpr (sizeof(T) == 4)
        return kDtypeF32;
    else
        return kDtypeF64;
}

template <class T>
Record make_record(std::string name, const Tensor<T>& t) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    Record r;
    r.name = std::move(name);
    r.dtype = dtype_tag<T>();
    r.extents = t.shape;
    r.bytes.resize(static_cast<std::size_t>(t.numel()) * sizeof(T));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if constexpr (sizeof(T) == 4) {
            const auto u = std::bit_cast<std::uint32_t>(t[i]);
            for (int b = 0; b < 4; ++b)
                r.bytes[static_cast<std::size_t>(i) * 4 + b] =
                    static_cast<std::byte>((u >> (8 * b)) & 0xff);
        } else {
            const auto u = std::bit_cast<std::uint64_t>(t[i]);
            for (int b = 0; b < 8; ++b)
                r.bytes[static_cast<std::size_t>(i) * 8 + b] =
                    static_cast<std::byte>((u >> (8 * b)) & 0xff);
        }
    }
    return r;
}

template <class T>
Tensor<T> record_tensor(const Record& r) {
    static_assert(sizeof(T) == 4 || sizeof(T) == 8);
    if (r.dtype != dtype_tag<T>())
        throw IncompatibleError("record " + r.name + " holds dtype tag " +
                                std::to_string(int(r.dtype)) + ", requested " +
                                std::to_string(int(dtype_tag<T>())));
    Tensor<T> t = Tensor<T>::zeros(r.extents);
    if (r.bytes.size() != static_cast<std::size_t>(t.numel()) * sizeof(T))
        throw IoError("record " + r.name + " payload size mismatch");
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if constexpr (sizeof(T) == 4) {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b)
                u |= static_cast<std::uint32_t>(r.bytes[static_cast<std::size_t>(i) * 4 + b])
                     << (8 * b);
            t[i] = std::bit_cast<T>(u);
        } else {
            std::uint64_t u = 0;
            for (int b = 0; b < 8; ++b)
                u |= static_cast<std::uint64_t>(r.bytes[static_cast<std::size_t>(i) * 8 + b])
                     << (8 * b);
            t[i] = std::bit_cast<T>(u);
        }
    }
    return t;
}

// Trained model bundle: decoder weights plus the per-shot latent table.
template <class T>
struct Model {
    DecoderDesc desc;
    ParamSet<T> params;
    std::vector<Tensor<T>> latents;
    std::string meta;
};

template <class T>
CheckpointFile to_checkpoint(const Model<T>& m, std::vector<Record> extra = {}) {
    validate(m.desc);
    CheckpointFile f;
    f.desc = m.desc;
    f.meta = m.meta;
    for (std::size_t i = 0; i < m.params.size(); ++i)
        f.records.push_back(make_record("param." + m.params.name(i), m.params.value(i)));
    for (std::size_t i = 0; i < m.latents.size(); ++i)
        f.records.push_back(make_record("latent." + std::to_string(i), m.latents[i]));
    for (auto& r : extra) f.records.push_back(std::move(r));
    return f;
}

template <class T>
Model<T> from_checkpoint(const CheckpointFile& f) {
    validate(f.desc);
    Model<T> m;
    m.desc = f.desc;
    m.meta = f.meta;
    // rebuild the canonical parameter order from the descriptor, not file order
    const auto layers = layer_table(f.desc);
    auto take = [&](const std::string& name, const Shape& want) {
        const Record* r = f.find("param." + name);
        if (!r) throw IncompatibleError("checkpoint missing parameter " + name);
        Tensor<T> t = record_tensor<T>(*r);
        if (t.shape != want)
            throw IncompatibleError("parameter " + name + " has shape " + shape_str(t.shape) +
                                    ", descriptor implies " + shape_str(want));
        m.params.add(name, std::move(t));
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        take("conv" + std::to_string(i) + ".weight", Shape{l.cin, l.cout, 4, 4});
        if (l.has_bn) {
            take("bn" + std::to_string(i) + ".gamma", Shape{l.cout});
            take("bn" + std::to_string(i) + ".beta", Shape{l.cout});
        }
    }
    for (std::size_t i = 0;; ++i) {
        const Record* r = f.find("latent." + std::to_string(i));
        if (!r) break;
        Tensor<T> z = record_tensor<T>(*r);
        if (z.shape != Shape{f.desc.latent_dim})
            throw IncompatibleError("latent " + std::to_string(i) + " has shape " +
                                    shape_str(z.shape));
        m.latents.push_back(std::move(z));
    }
    return m;
}

template <class T>
void save_model(const std::string& path, const Model<T>& m, std::vector<Record> extra = {}) {
    write_checkpoint(path, to_checkpoint(m, std::move(extra)));
}

template <class T>
Model<T> load_model(const std::string& path) {
    return from_checkpoint<T>(read_checkpoint(path));
}

}  // namespace lowshot
