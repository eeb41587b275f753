#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/net.hpp"
#include "lidarup/schedule.hpp"

namespace lidarup {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and container formats assume a little-endian host");

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 1.0;
};

// Serialized training state. Layout (all little-endian):
//   magic "LUPCKPT\0", u32 version,
//   u64 net-config fingerprint,
//   net config (i32 base, u32 levels, i32 mults[], i32 blocks[], i32 temb,
//               i32 in_ch, i32 out_ch),
//   i32 t_train, u8 schedule kind, u64 schedule fingerprint,
//   u64 step counter, u64 rng state, 5 x f64 optimizer hyperparameters,
//   u32 tensor count, then per tensor: u32 name length, name bytes,
//   u64 element count, f32 data.
struct DenoiserCheckpoint {
    NetConfig net;
    int t_train = 0;
    ScheduleKind sched_kind = ScheduleKind::cosine;
    std::uint64_t sched_fingerprint = 0;
    std::uint64_t step = 0;
    std::uint64_t rng_state = 0;
    AdamConfig adam;
    std::vector<std::pair<std::string, std::vector<float>>> tensors;

    const std::vector<float>* find(const std::string& name) const {
        for (const auto& [n, v] : tensors)
            if (n == name) return &v;
        return nullptr;
    }
};

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'L', 'U', 'P', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kVersion = 1;

template <class T>
inline void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
inline T read_pod(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw CheckpointError("checkpoint: truncated file");
    return v;
}

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
    if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n)))
        throw CheckpointError("checkpoint: truncated file");
}

} // namespace ckpt_detail

inline void save_checkpoint(const DenoiserCheckpoint& ckpt, const std::filesystem::path& path) {
    namespace d = ckpt_detail;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open for writing: " + path.string());

    d::write_bytes(os, d::kMagic, sizeof d::kMagic);
    d::write_pod(os, d::kVersion);
    d::write_pod<std::uint64_t>(os, ckpt.net.fingerprint());

    d::write_pod<std::int32_t>(os, ckpt.net.base_channels);
    d::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.net.channel_mults.size()));
    for (int m : ckpt.net.channel_mults) d::write_pod<std::int32_t>(os, m);
    for (int b : ckpt.net.res_blocks) d::write_pod<std::int32_t>(os, b);
    d::write_pod<std::int32_t>(os, ckpt.net.temb_dim);
    d::write_pod<std::int32_t>(os, ckpt.net.in_channels);
    d::write_pod<std::int32_t>(os, ckpt.net.out_channels);

    d::write_pod<std::int32_t>(os, ckpt.t_train);
    d::write_pod<std::uint8_t>(os, ckpt.sched_kind == ScheduleKind::cosine ? 0 : 1);
    d::write_pod<std::uint64_t>(os, ckpt.sched_fingerprint);
    d::write_pod<std::uint64_t>(os, ckpt.step);
    d::write_pod<std::uint64_t>(os, ckpt.rng_state);
    d::write_pod<double>(os, ckpt.adam.lr);
    d::write_pod<double>(os, ckpt.adam.beta1);
    d::write_pod<double>(os, ckpt.adam.beta2);
    d::write_pod<double>(os, ckpt.adam.eps);
    d::write_pod<double>(os, ckpt.adam.grad_clip);

    d::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, data] : ckpt.tensors) {
        d::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        d::write_bytes(os, name.data(), name.size());
        d::write_pod<std::uint64_t>(os, data.size());
        d::write_bytes(os, data.data(), data.size() * sizeof(float));
    }
    os.flush();
    if (!os) throw IoError("checkpoint: write failed: " + path.string());
}

inline DenoiserCheckpoint load_checkpoint(const std::filesystem::path& path) {
    namespace d = ckpt_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path.string());

    char magic[8];
    d::read_bytes(is, magic, sizeof magic);
    if (std::memcmp(magic, d::kMagic, sizeof magic) != 0)
        throw CheckpointError("checkpoint: bad magic bytes");
    auto version = d::read_pod<std::uint32_t>(is);
    if (version != d::kVersion)
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));

    DenoiserCheckpoint ckpt;
    auto stored_fp = d::read_pod<std::uint64_t>(is);

    ckpt.net.base_channels = d::read_pod<std::int32_t>(is);
    auto levels = d::read_pod<std::uint32_t>(is);
    if (levels == 0 || levels > 16) throw CheckpointError("checkpoint: implausible level count");
    ckpt.net.channel_mults.resize(levels);
    ckpt.net.res_blocks.resize(levels);
    for (auto& m : ckpt.net.channel_mults) m = d::read_pod<std::int32_t>(is);
    for (auto& b : ckpt.net.res_blocks) b = d::read_pod<std::int32_t>(is);
    ckpt.net.temb_dim = d::read_pod<std::int32_t>(is);
    ckpt.net.in_channels = d::read_pod<std::int32_t>(is);
    ckpt.net.out_channels = d::read_pod<std::int32_t>(is);

    std::uint64_t actual_fp = ckpt.net.fingerprint();
    if (actual_fp != stored_fp)
        throw CheckpointError("checkpoint: net config fingerprint mismatch (stored " +
                              std::to_string(stored_fp) + ", recomputed " +
                              std::to_string(actual_fp) + ")");

    ckpt.t_train = d::read_pod<std::int32_t>(is);
    ckpt.sched_kind = d::read_pod<std::uint8_t>(is) == 0 ? ScheduleKind::cosine
                                                         : ScheduleKind::linear;
    ckpt.sched_fingerprint = d::read_pod<std::uint64_t>(is);
    ckpt.step = d::read_pod<std::uint64_t>(is);
    ckpt.rng_state = d::read_pod<std::uint64_t>(is);
    ckpt.adam.lr = d::read_pod<double>(is);
    ckpt.adam.beta1 = d::read_pod<double>(is);
    ckpt.adam.beta2 = d::read_pod<double>(is);
    ckpt.adam.eps = d::read_pod<double>(is);
    ckpt.adam.grad_clip = d::read_pod<double>(is);

    auto count = d::read_pod<std::uint32_t>(is);
    ckpt.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name_len = d::read_pod<std::uint32_t>(is);
        if (name_len > 4096) throw CheckpointError("checkpoint: implausible tensor name length");
        std::string name(name_len, '\0');
        d::read_bytes(is, name.data(), name_len);
        auto numel = d::read_pod<std::uint64_t>(is);
        if (numel > (1ull << 32)) throw CheckpointError("checkpoint: implausible tensor size");
        std::vector<float> data(static_cast<std::size_t>(numel));
        d::read_bytes(is, data.data(), data.size() * sizeof(float));
        ckpt.tensors.emplace_back(std::move(name), std::move(data));
    }
    return ckpt;
}

/// Guard used by consumers that already committed to a network shape.
inline void require_net_fingerprint(const DenoiserCheckpoint& ckpt, const NetConfig& expected) {
    if (ckpt.net.fingerprint() != expected.fingerprint())
        throw CheckpointError("checkpoint: net config fingerprint mismatch (checkpoint " +
                              std::to_string(ckpt.net.fingerprint()) + ", expected " +
                              std::to_string(expected.fingerprint()) + ")");
}

/// Copies the stored parameter tensors into a freshly built net.
inline void load_net_params(DenoiserNet<float>& net, const DenoiserCheckpoint& ckpt) {
    require_net_fingerprint(ckpt, net.config());
    for (auto& p : net.params()) {
        const std::vector<float>* src = ckpt.find(p.name);
        if (src == nullptr)
            throw CheckpointError("checkpoint: missing tensor '" + p.name + "'");
        if (src->size() != p.value->size())
            throw CheckpointError("checkpoint: tensor '" + p.name + "' has wrong size");
        *p.value = *src;
    }
}

/// Rebuilds the denoiser a checkpoint describes. Parameters are bit-exact;
/// the init seed is irrelevant because every tensor is overwritten.
inline DenoiserNet<float> net_from_checkpoint(const DenoiserCheckpoint& ckpt) {
    DenoiserNet<float> net(ckpt.net, /*init_seed=*/0);
    load_net_params(net, ckpt);
    return net;
}

} // namespace lidarup
