#include "kcm/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "kcm/errors.hpp"

namespace kcm {

namespace {

constexpr char kMagic[8] = {'K', 'C', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw FormatError("checkpoint: " + path + " truncated at offset " +
                              std::to_string(pos));
        }
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
                 << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
                 << (8 * i);
        }
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace

void checkpoint_save(const Checkpoint& ckpt, const std::string& path) {
    ckpt.params.validate();
    if (ckpt.norm_mean.size() != ckpt.norm_scale.size()) {
        throw ContractError("checkpoint_save: normalization record halves disagree");
    }
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(ckpt.params.layers.size()));
    for (const auto& layer : ckpt.params.layers) {
        put_u32(out, static_cast<std::uint32_t>(layer.out_dim));
        put_u32(out, static_cast<std::uint32_t>(layer.in_dim));
        for (double v : layer.w) put_f64(out, v);
        for (double v : layer.b) put_f64(out, v);
    }
    put_u64(out, ckpt.seeds.init);
    put_u64(out, ckpt.seeds.shuffle);
    put_u64(out, ckpt.seeds.mixup);
    put_u64(out, ckpt.seeds.kernel);
    put_u32(out, static_cast<std::uint32_t>(ckpt.norm_mean.size()));
    for (std::size_t i = 0; i < ckpt.norm_mean.size(); ++i) {
        put_f64(out, ckpt.norm_mean[i]);
        put_f64(out, ckpt.norm_scale[i]);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError("checkpoint_save: cannot open " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw FormatError("checkpoint_save: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint_load: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf, 0, path};

    r.need(sizeof(kMagic));
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("checkpoint: " + path + " has wrong magic");
    }
    r.pos = sizeof(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError("checkpoint: " + path + " has unsupported version " +
                          std::to_string(version));
    }
    Checkpoint ckpt;
    const std::uint32_t layer_count = r.u32();
    for (std::uint32_t s = 0; s < layer_count; ++s) {
        MlpParams::Layer layer;
        layer.out_dim = r.u32();
        layer.in_dim = r.u32();
        if (layer.out_dim == 0 || layer.in_dim == 0) {
            throw FormatError("checkpoint: " + path + " layer " + std::to_string(s) +
                              " has zero dimension");
        }
        layer.w.resize(layer.out_dim * layer.in_dim);
        for (double& v : layer.w) v = r.f64();
        layer.b.resize(layer.out_dim);
        for (double& v : layer.b) v = r.f64();
        ckpt.params.layers.push_back(std::move(layer));
    }
    ckpt.seeds.init = r.u64();
    ckpt.seeds.shuffle = r.u64();
    ckpt.seeds.mixup = r.u64();
    ckpt.seeds.kernel = r.u64();
    const std::uint32_t norm_dim = r.u32();
    ckpt.norm_mean.resize(norm_dim);
    ckpt.norm_scale.resize(norm_dim);
    for (std::uint32_t i = 0; i < norm_dim; ++i) {
        ckpt.norm_mean[i] = r.f64();
        ckpt.norm_scale[i] = r.f64();
    }
    if (r.pos != buf.size()) {
        throw FormatError("checkpoint: " + path + " has " +
                          std::to_string(buf.size() - r.pos) + " trailing bytes");
    }
    ckpt.params.validate();
    return ckpt;
}

}  // namespace kcm
