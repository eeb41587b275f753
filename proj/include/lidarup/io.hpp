#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/mask.hpp"
#include "lidarup/range_image.hpp"

namespace lidarup {

// ---------------------------------------------------------------------------
// Velodyne-style .bin scans: consecutive little-endian f32 (x, y, z, refl).
// ---------------------------------------------------------------------------
struct LoadedScan {
    PointCloud cloud;
    std::size_t skipped_nonfinite = 0;
};

inline LoadedScan load_scan(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw IoError("scan: cannot open: " + path.string());
    std::streamoff size = is.tellg();
    is.seekg(0);
    if (size % 16 != 0)
        throw ParseError("scan: file size is not a multiple of 16 bytes, parse error at offset " +
                         std::to_string(size - size % 16) + ": " + path.string());
    std::vector<float> raw(static_cast<std::size_t>(size) / 4);
    if (size > 0 && !is.read(reinterpret_cast<char*>(raw.data()), size))
        throw IoError("scan: read failed: " + path.string());

    LoadedScan out;
    out.cloud.points.reserve(raw.size() / 4);
    out.cloud.reflectance.reserve(raw.size() / 4);
    for (std::size_t i = 0; i + 3 < raw.size(); i += 4) {
        float x = raw[i], y = raw[i + 1], z = raw[i + 2], r = raw[i + 3];
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(r)) {
            ++out.skipped_nonfinite;
            continue;
        }
        out.cloud.points.push_back(Vec3{x, y, z});
        out.cloud.reflectance.push_back(std::clamp(r, 0.0f, 1.0f));
    }
    return out;
}

inline void write_scan(const std::filesystem::path& path, const PointCloud& cloud) {
    cloud.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("scan: cannot open for writing: " + path.string());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        float rec[4] = {cloud.points[i].x, cloud.points[i].y, cloud.points[i].z,
                        cloud.reflectance[i]};
        os.write(reinterpret_cast<const char*>(rec), sizeof rec);
    }
    if (!os) throw IoError("scan: write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Range-image container (.lri). Layout, all little-endian:
//   magic "LRI1", u32 version, u32 H, u32 W,
//   f64 fov_up_deg, f64 fov_down_deg, f64 d_max, f64 refl_min, f64 refl_max,
//   f32 depth[H*W], f32 refl[H*W], u8 valid[H*W]   (row-major planes)
// Total size: 56 + H*W*9 bytes. Round trips are bit-exact.
// ---------------------------------------------------------------------------
namespace lri_detail {

inline constexpr char kMagic[4] = {'L', 'R', 'I', '1'};
inline constexpr std::uint32_t kVersion = 1;

template <class T>
inline void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
inline T read_pod(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw ParseError("range image: truncated file");
    return v;
}

} // namespace lri_detail

inline constexpr std::size_t range_image_file_size(int h, int w) {
    return 56 + static_cast<std::size_t>(h) * w * 9;
}

inline void save_range_image(const RangeImage& img, const std::filesystem::path& path) {
    namespace d = lri_detail;
    img.config.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("range image: cannot open for writing: " + path.string());
    os.write(d::kMagic, sizeof d::kMagic);
    d::write_pod(os, d::kVersion);
    d::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(img.config.height));
    d::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(img.config.width));
    d::write_pod<double>(os, img.config.fov_up_deg);
    d::write_pod<double>(os, img.config.fov_down_deg);
    d::write_pod<double>(os, img.config.d_max);
    d::write_pod<double>(os, img.refl_min);
    d::write_pod<double>(os, img.refl_max);
    os.write(reinterpret_cast<const char*>(img.depth.data()), img.depth.size() * sizeof(float));
    os.write(reinterpret_cast<const char*>(img.refl.data()), img.refl.size() * sizeof(float));
    os.write(reinterpret_cast<const char*>(img.valid.data()), img.valid.size());
    os.flush();
    if (!os) throw IoError("range image: write failed: " + path.string());
}

inline RangeImage load_range_image(const std::filesystem::path& path) {
    namespace d = lri_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("range image: cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, sizeof magic)) throw ParseError("range image: truncated file");
    if (std::memcmp(magic, d::kMagic, sizeof magic) != 0)
        throw ParseError("range image: bad magic bytes: " + path.string());
    auto version = d::read_pod<std::uint32_t>(is);
    if (version != d::kVersion)
        throw ParseError("range image: unsupported version " + std::to_string(version));

    RangeImage img;
    img.config.height = static_cast<int>(d::read_pod<std::uint32_t>(is));
    img.config.width = static_cast<int>(d::read_pod<std::uint32_t>(is));
    img.config.fov_up_deg = d::read_pod<double>(is);
    img.config.fov_down_deg = d::read_pod<double>(is);
    img.config.d_max = d::read_pod<double>(is);
    img.refl_min = d::read_pod<double>(is);
    img.refl_max = d::read_pod<double>(is);
    img.config.validate();

    std::size_t n = img.npx();
    img.depth.resize(n);
    img.refl.resize(n);
    img.valid.resize(n);
    if (!is.read(reinterpret_cast<char*>(img.depth.data()), n * sizeof(float)) ||
        !is.read(reinterpret_cast<char*>(img.refl.data()), n * sizeof(float)) ||
        !is.read(reinterpret_cast<char*>(img.valid.data()), n))
        throw ParseError("range image: truncated file: " + path.string());
    return img;
}

// ---------------------------------------------------------------------------
// PGM exports for inspection. 16-bit for channel planes (big-endian samples
// per the netpbm convention), 8-bit 0/255 for masks.
// ---------------------------------------------------------------------------
inline void write_pgm16(const std::filesystem::path& path, int h, int w,
                        const std::vector<float>& values01) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("pgm: cannot open for writing: " + path.string());
    os << "P5\n" << w << " " << h << "\n65535\n";
    for (float v : values01) {
        auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f));
        char be[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
        os.write(be, 2);
    }
    if (!os) throw IoError("pgm: write failed: " + path.string());
}

inline void write_mask_pgm(const Mask& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("pgm: cannot open for writing: " + path.string());
    os << "P5\n" << m.w << " " << m.h << "\n255\n";
    for (std::uint8_t b : m.bits) {
        char v = b ? static_cast<char>(0xff) : 0;
        os.write(&v, 1);
    }
    if (!os) throw IoError("pgm: write failed: " + path.string());
}

inline void write_depth_pgm(const RangeImage& img, const std::filesystem::path& path) {
    write_pgm16(path, img.height(), img.width(), img.depth);
}

inline void write_refl_pgm(const RangeImage& img, const std::filesystem::path& path) {
    write_pgm16(path, img.height(), img.width(), img.refl);
}

// ---------------------------------------------------------------------------
// Split id lists: one id per line.
// ---------------------------------------------------------------------------
inline std::vector<std::string> read_id_list(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("id list: cannot open: " + path.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

inline void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("id list: cannot open for writing: " + path.string());
    for (const std::string& id : ids) os << id << "\n";
    if (!os) throw IoError("id list: write failed: " + path.string());
}

} // namespace lidarup
