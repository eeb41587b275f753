#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "lidarup/errors.hpp"
#include "lidarup/io.hpp"
#include "lidarup/range_image.hpp"
#include "lidarup/rng.hpp"
#include "lidarup/synth.hpp"

namespace lidarup {

// A source of range images addressed by index. Implementations are pure in
// (index), so concurrent readers need no synchronization.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual std::size_t size() const = 0;
    virtual RangeImage get(std::size_t i) const = 0;
    virtual std::string id(std::size_t i) const = 0;

    std::vector<std::string> ids() const {
        std::vector<std::string> out(size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = id(i);
        return out;
    }
};

// Procedurally generated scans; each index is its own derived seed, so any
// subset regenerates identically.
class SyntheticDataset final : public Dataset {
public:
    SyntheticDataset(SceneConfig scene, ProjectionConfig proj, std::uint64_t base_seed,
                     std::size_t count, std::string id_prefix = "synth")
        : scene_(scene), proj_(proj), base_seed_(base_seed), count_(count),
          prefix_(std::move(id_prefix)) {
        scene_.validate();
        proj_.validate();
    }

    std::size_t size() const override { return count_; }
    RangeImage get(std::size_t i) const override {
        if (i >= count_) throw RangeError("synthetic dataset: index out of range");
        return synth_scan(scene_, proj_, derive_seed(base_seed_, i));
    }
    std::string id(std::size_t i) const override {
        char buf[32];
        std::snprintf(buf, sizeof buf, "-%06zu", i);
        return prefix_ + buf;
    }

    const SceneConfig& scene() const { return scene_; }
    const ProjectionConfig& projection() const { return proj_; }

private:
    SceneConfig scene_;
    ProjectionConfig proj_;
    std::uint64_t base_seed_;
    std::size_t count_;
    std::string prefix_;
};

// Directory of .lri containers and/or .bin scans (projected on load),
// in sorted filename order.
class DirectoryDataset final : public Dataset {
public:
    DirectoryDataset(const std::filesystem::path& dir, ProjectionConfig proj,
                     double refl_min = 0.0, double refl_max = 1.0)
        : proj_(proj), refl_min_(refl_min), refl_max_(refl_max) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(dir)) throw IoError("dataset: not a directory: " + dir.string());
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            if (ext == ".lri" || ext == ".bin") files_.push_back(entry.path());
        }
        std::sort(files_.begin(), files_.end());
        if (files_.empty())
            throw IoError("dataset: no .lri or .bin files in " + dir.string());
    }

    std::size_t size() const override { return files_.size(); }

    RangeImage get(std::size_t i) const override {
        if (i >= files_.size()) throw RangeError("directory dataset: index out of range");
        const auto& p = files_[i];
        if (p.extension() == ".lri") return load_range_image(p);
        LoadedScan scan = load_scan(p);
        return project(scan.cloud, proj_, refl_min_, refl_max_).image;
    }

    std::string id(std::size_t i) const override { return files_[i].stem().string(); }

private:
    std::vector<std::filesystem::path> files_;
    ProjectionConfig proj_;
    double refl_min_, refl_max_;
};

// Several sources behind one index space (multi-dataset training).
class ConcatDataset final : public Dataset {
public:
    explicit ConcatDataset(std::vector<std::shared_ptr<const Dataset>> parts)
        : parts_(std::move(parts)) {
        for (const auto& p : parts_)
            if (!p) throw ConfigError("concat dataset: null part");
    }

    std::size_t size() const override {
        std::size_t n = 0;
        for (const auto& p : parts_) n += p->size();
        return n;
    }

    RangeImage get(std::size_t i) const override {
        auto [part, local] = locate(i);
        return part->get(local);
    }

    std::string id(std::size_t i) const override {
        auto [part, local] = locate(i);
        return part->id(local);
    }

private:
    std::pair<const Dataset*, std::size_t> locate(std::size_t i) const {
        for (const auto& p : parts_) {
            if (i < p->size()) return {p.get(), i};
            i -= p->size();
        }
        throw RangeError("concat dataset: index out of range");
    }

    std::vector<std::shared_ptr<const Dataset>> parts_;
};

// Deterministic id partition.
struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
};

/// Shuffles ids by seed and cuts train/val/test by the given ratios
/// (positive, summing to 1). Every id lands in exactly one part.
inline DatasetSplit make_split(const std::vector<std::string>& ids, double r_train, double r_val,
                               double r_test, std::uint64_t seed) {
    if (ids.empty()) throw ConfigError("split: empty source");
    if (!(r_train > 0.0 && r_val > 0.0 && r_test > 0.0))
        throw ConfigError("split: ratios must be positive");
    if (std::abs(r_train + r_val + r_test - 1.0) > 1e-9)
        throw ConfigError("split: ratios must sum to 1");

    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);

    std::size_t n = shuffled.size();
    std::size_t n_train = std::min<std::size_t>(n, std::lround(r_train * n));
    std::size_t n_val = std::min<std::size_t>(n - n_train, std::lround(r_val * n));

    DatasetSplit split;
    split.seed = seed;
    split.train.assign(shuffled.begin(), shuffled.begin() + n_train);
    split.val.assign(shuffled.begin() + n_train, shuffled.begin() + n_train + n_val);
    split.test.assign(shuffled.begin() + n_train + n_val, shuffled.end());
    return split;
}

/// Maps split ids back to dataset indices; unknown ids are a config error.
inline std::vector<std::size_t> dataset_indices(const Dataset& data,
                                                const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < data.size(); ++i) lookup.emplace(data.id(i), i);
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        auto it = lookup.find(id);
        if (it == lookup.end()) throw ConfigError("split: id not present in dataset: " + id);
        out.push_back(it->second);
    }
    return out;
}

} // namespace lidarup
