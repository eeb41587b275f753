#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lidarup/checkpoint.hpp"
#include "lidarup/errors.hpp"
#include "lidarup/mask.hpp"
#include "lidarup/net.hpp"
#include "lidarup/range_image.hpp"
#include "lidarup/schedule.hpp"
#include "lidarup/synth.hpp"
#include "lidarup/train.hpp"

namespace lidarup {

struct KeySpec {
    const char* key;
    const char* def;
    const char* help;
};

// Plain-text key=value configuration. Every key has a registered default,
// unknown keys are rejected, and the fully resolved set is echoed into every
// output directory.
class RunConfig {
public:
    static const std::vector<KeySpec>& registry() {
        static const std::vector<KeySpec> keys = {
            {"seed", "42", "top-level seed; every module derives its own stream"},
            {"threads", "0", "OpenMP thread count, 0 = library default"},

            {"proj.h", "64", "beam rows of the range image"},
            {"proj.w", "1024", "azimuth columns"},
            {"proj.fov_up_deg", "3.0", "top beam elevation, degrees"},
            {"proj.fov_down_deg", "-25.0", "bottom beam elevation, degrees"},
            {"proj.d_max", "80.0", "maximum representable range, meters"},
            {"proj.refl_min", "0.0", "dataset reflectance minimum (min-max normalization)"},
            {"proj.refl_max", "1.0", "dataset reflectance maximum"},

            {"sched.t_train", "1024", "training diffusion steps"},
            {"sched.kind", "cosine", "noise schedule: cosine or linear"},

            {"net.base_channels", "32", "channels at full resolution"},
            {"net.mults", "1,2,4", "channel multiplier per resolution level"},
            {"net.blocks", "1,2,4", "residual blocks per resolution level"},
            {"net.temb_dim", "128", "timestep embedding width"},

            {"task.kinds", "upsample", "training mask kinds: subset of straight,jitter,pepper,upsample"},
            {"task.rates", "4", "upsample rates drawn during training"},
            {"task.ratio_lo", "0.5", "row-mask ratio range low"},
            {"task.ratio_hi", "0.9", "row-mask ratio range high"},
            {"task.pepper_lo", "0.1", "pepper probability range low"},
            {"task.pepper_hi", "0.9", "pepper probability range high"},

            {"train.steps", "2000", "optimization steps"},
            {"train.batch", "2", "examples per step"},
            {"train.lr", "0.001", "base learning rate"},
            {"train.lr_floor", "0.1", "cosine lr decay floor as a fraction of train.lr (1 = constant)"},
            {"train.clip", "1.0", "global gradient-norm clip"},
            {"train.ckpt_every", "0", "periodic checkpoint interval, 0 = final only"},

            {"sample.steps", "8", "reverse diffusion steps at inference"},
            {"sample.eta", "0.0", "sampler stochasticity in [0,1]"},

            {"eval.rate", "4", "upsampling rate under evaluation"},

            {"bench.steps", "2,4,8,16,32,64,128", "step counts timed by bench"},
            {"bench.warmup", "1", "discarded warmup runs"},
            {"bench.runs", "3", "timed runs per step count"},

            {"split.train", "0.8", "train fraction"},
            {"split.val", "0.1", "validation fraction"},
            {"split.test", "0.1", "test fraction"},

            {"synth.count", "200", "scans generated by the synth command"},
            {"scene.sensor_height", "1.8", "sensor height above ground, meters"},
            {"scene.ground", "true", "include the ground plane"},
            {"scene.boxes", "6", "box count"},
            {"scene.cylinders", "4", "cylinder count"},
            {"scene.walls", "2", "wall count"},
            {"scene.box_min", "0.5", "box edge range low, meters"},
            {"scene.box_max", "3.0", "box edge range high"},
            {"scene.cyl_radius_min", "0.1", "cylinder radius low"},
            {"scene.cyl_radius_max", "0.6", "cylinder radius high"},
            {"scene.cyl_height_min", "0.5", "cylinder height low"},
            {"scene.cyl_height_max", "3.0", "cylinder height high"},
            {"scene.wall_length_min", "4.0", "wall length low"},
            {"scene.wall_length_max", "12.0", "wall length high"},
            {"scene.wall_height_min", "1.0", "wall height low"},
            {"scene.wall_height_max", "3.0", "wall height high"},
            {"scene.wall_thickness", "0.2", "wall thickness"},
            {"scene.place_min", "3.0", "object placement ring inner radius"},
            {"scene.place_max", "25.0", "object placement ring outer radius"},
            {"scene.refl_lo", "0.05", "object reflectance low"},
            {"scene.refl_hi", "0.95", "object reflectance high"},
            {"scene.noise_sigma", "0.02", "range noise sigma, meters"},
        };
        return keys;
    }

    RunConfig() {
        for (const KeySpec& k : registry()) values_[k.key] = k.def;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        it->second = value;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    void load_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw IoError("config: cannot open: " + path.string());
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto trim = [](std::string s) {
                auto b = s.find_first_not_of(" \t\r");
                auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            std::string t = trim(line);
            if (t.empty()) continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ParseError("config: expected key = value at " + path.string() + ":" +
                                 std::to_string(lineno));
            set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
    }

    // "key = value" lines in registry order.
    std::string serialize() const {
        std::string s;
        for (const KeySpec& k : registry()) s += std::string(k.key) + " = " + get(k.key) + "\n";
        return s;
    }

    void write_resolved(const std::filesystem::path& dir) const {
        std::ofstream os(dir / "config.resolved");
        if (!os) throw IoError("config: cannot write resolved config in " + dir.string());
        os << serialize();
    }

    // --- typed getters -----------------------------------------------------
    int get_int(const std::string& key) const {
        try {
            return std::stoi(get(key));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not an integer: " + get(key));
        }
    }

    double get_double(const std::string& key) const {
        try {
            return std::stod(get(key));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not a number: " + get(key));
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
    }

    std::uint64_t seed() const { return static_cast<std::uint64_t>(std::stoull(get("seed"))); }

    std::vector<int> get_int_list(const std::string& key) const {
        std::vector<int> out;
        std::stringstream ss(get(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            try {
                out.push_back(std::stoi(item));
            } catch (const std::exception&) {
                throw ConfigError("config: key '" + key + "' has a non-integer entry: " + item);
            }
        }
        return out;
    }

    std::vector<std::string> get_str_list(const std::string& key) const {
        std::vector<std::string> out;
        std::stringstream ss(get(key));
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(item);
        return out;
    }

    // --- module factories --------------------------------------------------
    ProjectionConfig projection() const {
        ProjectionConfig p;
        p.height = get_int("proj.h");
        p.width = get_int("proj.w");
        p.fov_up_deg = get_double("proj.fov_up_deg");
        p.fov_down_deg = get_double("proj.fov_down_deg");
        p.d_max = get_double("proj.d_max");
        p.validate();
        return p;
    }

    NoiseSchedule schedule() const {
        return build_schedule(get_int("sched.t_train"), schedule_kind_from_name(get("sched.kind")));
    }

    NetConfig net() const {
        NetConfig n;
        n.base_channels = get_int("net.base_channels");
        n.channel_mults = get_int_list("net.mults");
        n.res_blocks = get_int_list("net.blocks");
        n.temb_dim = get_int("net.temb_dim");
        n.validate();
        return n;
    }

    TaskConfig task() const {
        TaskConfig t;
        t.kinds.clear();
        for (const std::string& k : get_str_list("task.kinds")) {
            if (k == "straight") t.kinds.push_back(MaskKind::straight);
            else if (k == "jitter") t.kinds.push_back(MaskKind::jitter);
            else if (k == "pepper") t.kinds.push_back(MaskKind::pepper);
            else if (k == "upsample") t.kinds.push_back(MaskKind::upsample);
            else throw ConfigError("config: unknown mask kind '" + k + "'");
        }
        t.rates = get_int_list("task.rates");
        t.ratio_lo = get_double("task.ratio_lo");
        t.ratio_hi = get_double("task.ratio_hi");
        t.pepper_lo = get_double("task.pepper_lo");
        t.pepper_hi = get_double("task.pepper_hi");
        t.validate();
        return t;
    }

    SceneConfig scene() const {
        SceneConfig s;
        s.sensor_height = get_double("scene.sensor_height");
        s.ground = get_bool("scene.ground");
        s.boxes = get_int("scene.boxes");
        s.cylinders = get_int("scene.cylinders");
        s.walls = get_int("scene.walls");
        s.box_min = get_double("scene.box_min");
        s.box_max = get_double("scene.box_max");
        s.cyl_radius_min = get_double("scene.cyl_radius_min");
        s.cyl_radius_max = get_double("scene.cyl_radius_max");
        s.cyl_height_min = get_double("scene.cyl_height_min");
        s.cyl_height_max = get_double("scene.cyl_height_max");
        s.wall_length_min = get_double("scene.wall_length_min");
        s.wall_length_max = get_double("scene.wall_length_max");
        s.wall_height_min = get_double("scene.wall_height_min");
        s.wall_height_max = get_double("scene.wall_height_max");
        s.wall_thickness = get_double("scene.wall_thickness");
        s.place_min = get_double("scene.place_min");
        s.place_max = get_double("scene.place_max");
        s.refl_lo = get_double("scene.refl_lo");
        s.refl_hi = get_double("scene.refl_hi");
        s.noise_sigma = get_double("scene.noise_sigma");
        s.validate();
        return s;
    }

    TrainConfig trainer() const {
        TrainConfig t;
        t.steps = get_int("train.steps");
        t.batch = get_int("train.batch");
        t.adam.lr = get_double("train.lr");
        t.lr_floor_frac = get_double("train.lr_floor");
        t.adam.grad_clip = get_double("train.clip");
        t.checkpoint_every = get_int("train.ckpt_every");
        t.seed = seed();
        return t;
    }

    SamplerConfig sampler() const {
        SamplerConfig s;
        s.steps = get_int("sample.steps");
        s.eta = get_double("sample.eta");
        s.seed = derive_seed(seed(), "sampler");
        return s;
    }

private:
    std::map<std::string, std::string> values_;
};

} // namespace lidarup
