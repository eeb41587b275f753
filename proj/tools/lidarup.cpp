// Command-line front end: synthetic data generation, training, upsampling,
// evaluation and the inference-speed benchmark behind one binary.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lidarup/lidarup.hpp"

namespace fs = std::filesystem;
using namespace lidarup;

namespace {

// Exit codes: 0 success, 2 configuration, 3 I/O or parse, 4 numerical failure.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::int64_t seed = -1; // -1 = take from config
    int threads = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_out = true) {
    cmd->add_option("--config", o.config_path, "config file (key = value lines)");
    cmd->add_option("--set", o.sets, "override a config key, e.g. --set proj.h=32")
        ->take_all();
    cmd->add_option("--seed", o.seed, "top-level seed (overrides the config value)");
    cmd->add_option("--threads", o.threads, "worker thread count (0 = library default)");
    if (needs_out) cmd->add_option("--out", o.out_dir, "output directory")->required();
}

RunConfig resolve_config(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) cfg.load_file(o.config_path);
    for (const std::string& kv : o.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed >= 0) cfg.set("seed", std::to_string(o.seed));
    if (o.threads >= 0) cfg.set("threads", std::to_string(o.threads));
#if defined(_OPENMP)
    if (cfg.get_int("threads") > 0) omp_set_num_threads(cfg.get_int("threads"));
#endif
    return cfg;
}

fs::path prepare_out(const RunConfig& cfg, const std::string& out_dir) {
    fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());
    cfg.write_resolved(dir);
    return dir;
}

std::shared_ptr<const Dataset> build_dataset(const RunConfig& cfg,
                                             const std::vector<std::string>& data_dirs,
                                             int synth_count, const char* synth_tag) {
    std::vector<std::shared_ptr<const Dataset>> parts;
    ProjectionConfig proj = cfg.projection();
    for (const std::string& d : data_dirs)
        parts.push_back(std::make_shared<DirectoryDataset>(d, proj, cfg.get_double("proj.refl_min"),
                                                           cfg.get_double("proj.refl_max")));
    if (synth_count > 0)
        parts.push_back(std::make_shared<SyntheticDataset>(
            cfg.scene(), proj, derive_seed(cfg.seed(), synth_tag), synth_count));
    if (parts.empty())
        throw ConfigError("no data source: pass --data and/or --synth");
    if (parts.size() == 1) return parts[0];
    return std::make_shared<ConcatDataset>(std::move(parts));
}

RangeImage load_input_image(const fs::path& path, const RunConfig& cfg) {
    if (path.extension() == ".lri") return load_range_image(path);
    if (path.extension() == ".bin") {
        LoadedScan scan = load_scan(path);
        if (scan.skipped_nonfinite > 0)
            std::fprintf(stderr, "note: skipped %zu non-finite points in %s\n",
                         scan.skipped_nonfinite, path.string().c_str());
        return project(scan.cloud, cfg.projection(), cfg.get_double("proj.refl_min"),
                       cfg.get_double("proj.refl_max"))
            .image;
    }
    throw ConfigError("input must be a .lri range image or a .bin scan: " + path.string());
}

void write_loss_log(const fs::path& path, const std::vector<std::pair<int, double>>& losses) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "step,loss\n";
    char buf[64];
    for (auto [s, l] : losses) {
        std::snprintf(buf, sizeof buf, "%d,%.8f\n", s, l);
        os << buf;
    }
}

// --- commands ---------------------------------------------------------------

int cmd_synth(const CommonOpts& o, int count_override) {
    RunConfig cfg = resolve_config(o);
    if (count_override > 0) cfg.set("synth.count", std::to_string(count_override));
    fs::path dir = prepare_out(cfg, o.out_dir);
    int count = cfg.get_int("synth.count");
    SyntheticDataset ds(cfg.scene(), cfg.projection(), derive_seed(cfg.seed(), "synth"),
                        static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        RangeImage img = ds.get(i);
        save_range_image(img, dir / (ds.id(i) + ".lri"));
    }
    std::printf("wrote %d scans to %s\n", count, dir.string().c_str());
    return 0;
}

int cmd_train(const CommonOpts& o, const std::vector<std::string>& data_dirs, int synth_count,
              const std::string& resume_path) {
    RunConfig cfg = resolve_config(o);
    fs::path dir = prepare_out(cfg, o.out_dir);
    auto data = build_dataset(cfg, data_dirs, synth_count, "synth");

    NoiseSchedule sched = cfg.schedule();
    NetConfig nc = cfg.net();
    DenoiserNet<float> net(nc, derive_seed(cfg.seed(), "net"));
    Trainer trainer(net, sched, cfg.task(), cfg.trainer());
    if (!resume_path.empty()) {
        DenoiserCheckpoint ckpt = load_checkpoint(resume_path);
        load_net_params(net, ckpt);
        trainer.restore(ckpt);
        std::printf("resumed from %s at step %llu\n", resume_path.c_str(),
                    static_cast<unsigned long long>(ckpt.step));
    }

    std::vector<std::pair<int, double>> losses;
    TrainHooks hooks;
    hooks.on_step = [&](int step, double loss) {
        losses.emplace_back(step, loss);
        if (step % 100 == 0) {
            std::printf("step %6d  loss %.6f\n", step, loss);
            std::fflush(stdout);
        }
    };
    hooks.on_checkpoint = [&](int step, const DenoiserCheckpoint& ckpt) {
        save_checkpoint(ckpt, dir / ("ckpt_step" + std::to_string(step) + ".ckpt"));
    };
    trainer.run(*data, hooks);

    save_checkpoint(trainer.make_checkpoint(), dir / "model.ckpt");
    write_loss_log(dir / "loss.csv", losses);
    std::printf("trained %llu steps over %zu scans; checkpoint at %s\n",
                static_cast<unsigned long long>(trainer.step_count()), data->size(),
                (dir / "model.ckpt").string().c_str());
    return 0;
}

int cmd_upsample(const CommonOpts& o, const std::string& ckpt_path, const std::string& input_path,
                 int rate) {
    RunConfig cfg = resolve_config(o);
    fs::path dir = prepare_out(cfg, o.out_dir);

    DenoiserCheckpoint ckpt = load_checkpoint(ckpt_path);
    DenoiserNet<float> net = net_from_checkpoint(ckpt);
    NoiseSchedule sched = build_schedule(ckpt.t_train, ckpt.sched_kind);
    if (sched.fingerprint() != ckpt.sched_fingerprint)
        throw CheckpointError("checkpoint schedule fingerprint mismatch");

    RangeImage observed = load_input_image(input_path, cfg);
    Mask mask = upsampling_mask(observed.height(), observed.width(), rate);
    RangeImage sparse = apply_mask(observed, mask);

    auto den = [&](const TensorF& u, const Mask& m, int t) { return net.predict(u, m, t); };
    RangeImage dense = conditional_sample_image(sparse, mask, den, sched, cfg.sampler());

    save_range_image(dense, dir / "dense.lri");
    write_depth_pgm(dense, dir / "depth.pgm");
    write_refl_pgm(dense, dir / "refl.pgm");
    write_depth_pgm(sparse, dir / "sparse_depth.pgm");
    write_mask_pgm(mask, dir / "mask.pgm");
    write_scan(dir / "cloud.bin", unproject(dense));
    std::printf("upsampled %s at rate %d with %d steps -> %s\n", input_path.c_str(), rate,
                cfg.get_int("sample.steps"), dir.string().c_str());
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& method, const std::string& ckpt_path,
             const std::vector<std::string>& data_dirs, int synth_count, const std::string& part,
             const std::string& ids_path) {
    RunConfig cfg = resolve_config(o);
    fs::path dir = prepare_out(cfg, o.out_dir);
    auto data = build_dataset(cfg, data_dirs, synth_count, "synth");
    int rate = cfg.get_int("eval.rate");

    // Split selection: explicit id list wins, otherwise the seeded ratio split.
    std::vector<std::string> ids;
    if (!ids_path.empty()) {
        ids = read_id_list(ids_path);
    } else {
        DatasetSplit split = make_split(data->ids(), cfg.get_double("split.train"),
                                        cfg.get_double("split.val"), cfg.get_double("split.test"),
                                        derive_seed(cfg.seed(), "split"));
        if (part == "train") ids = split.train;
        else if (part == "val") ids = split.val;
        else if (part == "test") ids = split.test;
        else throw ConfigError("unknown split part '" + part + "' (valid: train, val, test)");
    }
    std::vector<std::size_t> indices = dataset_indices(*data, ids);

    UpsampleFn fn;
    std::unique_ptr<DenoiserNet<float>> net;
    NoiseSchedule sched;
    if (method == "model") {
        if (ckpt_path.empty()) throw ConfigError("--method model requires --ckpt");
        DenoiserCheckpoint ckpt = load_checkpoint(ckpt_path);
        net = std::make_unique<DenoiserNet<float>>(net_from_checkpoint(ckpt));
        sched = build_schedule(ckpt.t_train, ckpt.sched_kind);
        if (sched.fingerprint() != ckpt.sched_fingerprint)
            throw CheckpointError("checkpoint schedule fingerprint mismatch");
        int steps = cfg.get_int("sample.steps");
        double eta = cfg.get_double("sample.eta");
        fn = [&net, &sched, steps, eta](const RangeImage& sparse, const Mask& m,
                                        std::uint64_t seed) {
            auto den = [&](const TensorF& u, const Mask& mm, int t) {
                return net->predict(u, mm, t);
            };
            return conditional_sample_image(sparse, m, den, sched, SamplerConfig{steps, eta, seed});
        };
    } else if (method == "nearest" || method == "bilinear" || method == "bicubic") {
        fn = baseline_fn(interp_method_from_name(method), rate);
    } else if (method == "gt") {
        fn = nullptr; // handled inside evaluate
    } else {
        throw ConfigError("unknown method '" + method +
                          "' (valid: model, nearest, bilinear, bicubic, gt)");
    }

    EvalReport report = evaluate(method, fn, *data, indices, rate, derive_seed(cfg.seed(), "eval"));
    std::ofstream(dir / "report.txt") << report.text_table();
    std::ofstream(dir / "records.tsv") << report.records();
    std::ofstream(dir / "timing.tsv") << report.timing_records();
    std::fputs(report.text_table().c_str(), stdout);
    return 0;
}

int cmd_bench(const CommonOpts& o, const std::string& ckpt_path) {
    RunConfig cfg = resolve_config(o);
    fs::path dir = prepare_out(cfg, o.out_dir);

    DenoiserCheckpoint ckpt = load_checkpoint(ckpt_path);
    DenoiserNet<float> net = net_from_checkpoint(ckpt);
    NoiseSchedule sched = build_schedule(ckpt.t_train, ckpt.sched_kind);

    RangeImage observed = synth_scan(cfg.scene(), cfg.projection(), derive_seed(cfg.seed(), "bench"));
    Mask mask = upsampling_mask(observed.height(), observed.width(), cfg.get_int("eval.rate"));
    RangeImage sparse = apply_mask(observed, mask);

    auto den = [&](const TensorF& u, const Mask& m, int t) { return net.predict(u, m, t); };
    std::vector<BenchRow> rows =
        bench_sampler(den, sparse, mask, sched, cfg.get_int_list("bench.steps"),
                      cfg.get_int("bench.warmup"), cfg.get_int("bench.runs"),
                      cfg.get_double("sample.eta"), derive_seed(cfg.seed(), "bench-run"));

    std::string table = bench_table(rows);
    std::ofstream(dir / "bench.txt") << table;
    std::ofstream tsv(dir / "bench.tsv");
    tsv << "steps\tmedian_s\tmean_s\tstdev_s\tfps\truns\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\t%.4f\t%d\n", r.steps, r.median_s,
                      r.mean_s, r.stdev_s, r.fps, r.runs);
        tsv << buf;
    }
    std::fputs(table.c_str(), stdout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LiDAR range-image upsampling with a conditional diffusion model"};
    app.require_subcommand(1);

    CommonOpts synth_o, train_o, up_o, eval_o, bench_o;
    int synth_count_flag = 0;
    std::vector<std::string> train_dirs, eval_dirs;
    int train_synth = 0, eval_synth = 0;
    std::string resume_path, up_ckpt, up_input, eval_method = "model", eval_ckpt, eval_part = "test";
    std::string eval_ids, bench_ckpt;
    int up_rate = 4;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scan directory");
    add_common(synth, synth_o);
    synth->add_option("--count", synth_count_flag, "number of scans (overrides synth.count)");

    CLI::App* train = app.add_subcommand("train", "train the denoiser");
    add_common(train, train_o);
    train->add_option("--data", train_dirs, "scan directory (repeat for multiple sources)")
        ->take_all();
    train->add_option("--synth", train_synth, "add N procedurally generated training scans");
    train->add_option("--resume", resume_path, "checkpoint to resume from");

    CLI::App* up = app.add_subcommand("upsample", "upsample one scan with a trained model");
    add_common(up, up_o);
    up->add_option("--ckpt", up_ckpt, "trained checkpoint")->required();
    up->add_option("--input", up_input, "input .lri or .bin")->required();
    up->add_option("--rate", up_rate, "upsampling rate (default 4)");

    CLI::App* ev = app.add_subcommand("eval", "masked-region metrics for a method on a split");
    add_common(ev, eval_o);
    ev->add_option("--method", eval_method, "model | nearest | bilinear | bicubic | gt");
    ev->add_option("--ckpt", eval_ckpt, "trained checkpoint (for --method model)");
    ev->add_option("--data", eval_dirs, "scan directory (repeatable)")->take_all();
    ev->add_option("--synth", eval_synth, "evaluate on N procedural scans");
    ev->add_option("--part", eval_part, "split part: train | val | test (default test)");
    ev->add_option("--ids", eval_ids, "explicit id list file (overrides the ratio split)");

    CLI::App* bench = app.add_subcommand("bench", "inference-speed benchmark");
    add_common(bench, bench_o);
    bench->add_option("--ckpt", bench_ckpt, "trained checkpoint")->required();

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(synth_o, synth_count_flag);
        if (train->parsed()) return cmd_train(train_o, train_dirs, train_synth, resume_path);
        if (up->parsed()) return cmd_upsample(up_o, up_ckpt, up_input, up_rate);
        if (ev->parsed())
            return cmd_eval(eval_o, eval_method, eval_ckpt, eval_dirs, eval_synth, eval_part,
                            eval_ids);
        if (bench->parsed()) return cmd_bench(bench_o, bench_ckpt);
        return kExitConfig;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help / --version
        app.exit(e);
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const RangeError& e) {
        std::fprintf(stderr, "range error: %s\n", e.what());
        return kExitConfig;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const Error& e) { // IoError, ParseError, CheckpointError
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
