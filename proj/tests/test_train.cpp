#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "lidarup/checkpoint.hpp"
#include "lidarup/grad_check.hpp"
#include "lidarup/train.hpp"

using namespace lidarup;
namespace fs = std::filesystem;

namespace {

NetConfig tiny_config() {
    NetConfig nc;
    nc.base_channels = 4;
    nc.channel_mults = {1, 2};
    nc.res_blocks = {1, 1};
    nc.temb_dim = 8;
    return nc;
}

SceneConfig fast_scene() {
    SceneConfig s;
    s.boxes = 2;
    s.cylinders = 1;
    s.walls = 1;
    return s;
}

ProjectionConfig small_proj() { return ProjectionConfig{16, 64, 3.0, -25.0, 80.0}; }

fs::path temp_dir() {
    fs::path dir = fs::temp_directory_path() / "lidarup_train_test";
    fs::create_directories(dir);
    return dir;
}

} // namespace

// --- gradient checks ---------------------------------------------------------

TEST(GradCheck, LinearSingleLayer) {
    // A 1x1 convolution is a per-pixel linear map; its gradients against the
    // masked loss must match finite differences to near machine precision.
    Conv2d<double> conv;
    Rng rng(3);
    conv.init(2, 2, 1, rng);
    Tensor<double> x = gaussian_tensor<double>(2, 6, 10, rng);
    Tensor<double> target = gaussian_tensor<double>(2, 6, 10, rng);
    Mask m = pepper_mask(6, 10, 0.5, 5);
    ASSERT_GT(m.unknown_count(), 0u);

    std::vector<ParamRef<double>> params;
    conv.collect("conv", params);

    auto eval_loss = [&]() { return masked_loss(conv.forward(x), target, m); };
    auto eval_with_grads = [&]() {
        std::fill(conv.gw.begin(), conv.gw.end(), 0.0);
        std::fill(conv.gb.begin(), conv.gb.end(), 0.0);
        Tensor<double> out = conv.forward(x);
        double loss = masked_loss(out, target, m);
        Tensor<double> gout(2, 6, 10);
        double unknown = double(m.unknown_count());
        for (int ch = 0; ch < 2; ++ch)
            for (std::size_t i = 0; i < gout.plane_size(); ++i)
                if (!m.bits[i])
                    gout.plane(ch)[i] = (out.plane(ch)[i] - target.plane(ch)[i]) / unknown;
        conv.backward(x, gout, false);
        return loss;
    };
    GradCheckReport rep = finite_difference_check(params, eval_with_grads, eval_loss, 1e-4);
    EXPECT_LT(rep.max_rel_err, 1e-7) << rep.worst_param;
}

TEST(GradCheck, FullTinyUnet) {
    GradCheckReport rep = grad_check_net(tiny_config(), 8, 16, 123);
    EXPECT_LT(rep.max_rel_err, 1e-4) << rep.worst_param;
    EXPECT_EQ(rep.params_checked, param_count(tiny_config()));
}

TEST(GradCheck, KnownPixelsCarryNoGradient) {
    // Perturbing predictions/targets on known pixels must leave every
    // parameter gradient bit-identical: those terms are outside the loss.
    DenoiserNet<double> net(tiny_config(), 7);
    Rng rng(11);
    const int h = 8, w = 16;
    Tensor<double> u = gaussian_tensor<double>(2, h, w, rng);
    Tensor<double> target = gaussian_tensor<double>(2, h, w, rng);
    Mask m = pepper_mask(h, w, 0.5, 13);
    Tensor<double> input = net.assemble_input(u, m, make_coord_channels<double>(h, w));

    auto run = [&](const Tensor<double>& tgt) {
        net.zero_grads();
        NetTape<double> tape;
        Tensor<double> out = net.forward_raw(input, 5, &tape);
        Tensor<double> gout(2, h, w);
        for (int ch = 0; ch < 2; ++ch)
            for (std::size_t i = 0; i < gout.plane_size(); ++i)
                if (!m.bits[i])
                    gout.plane(ch)[i] =
                        (out.plane(ch)[i] - tgt.plane(ch)[i]) / double(m.unknown_count());
        net.backward(tape, gout);
        std::vector<std::vector<double>> grads;
        for (auto& p : net.params()) grads.push_back(*p.grad);
        return grads;
    };

    auto base = run(target);
    Tensor<double> poked = target;
    for (int ch = 0; ch < 2; ++ch)
        for (std::size_t i = 0; i < poked.plane_size(); ++i)
            if (m.bits[i]) poked.plane(ch)[i] += 17.0; // known pixels only
    auto perturbed = run(poked);
    ASSERT_EQ(base.size(), perturbed.size());
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(base[i], perturbed[i]);
}

// --- trainer ------------------------------------------------------------------

TEST(Trainer, LossDecreasesOnSyntheticData) {
    // 200 steps on small synthetic scans; later losses must undercut the
    // opening ones. Repeated across seeds to keep the check meaningful.
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        SyntheticDataset data(fast_scene(), small_proj(), derive_seed(seed, "data"), 64);
        NoiseSchedule sched = build_schedule(256, ScheduleKind::cosine);
        DenoiserNet<float> net(tiny_config(), derive_seed(seed, "net"));
        TrainConfig tc;
        tc.steps = 200;
        tc.batch = 1;
        tc.seed = seed;
        Trainer trainer(net, sched, TaskConfig{}, tc);
        std::vector<double> losses;
        TrainHooks hooks;
        hooks.on_step = [&](int, double loss) { losses.push_back(loss); };
        trainer.run(data, hooks);
        ASSERT_EQ(losses.size(), 200u);
        double first = 0.0, last = 0.0;
        for (int i = 0; i < 50; ++i) {
            first += losses[i];
            last += losses[150 + i];
        }
        EXPECT_LT(last, first) << "seed " << seed;
    }
}

TEST(Trainer, AllKnownMasksRejected) {
    SyntheticDataset data(fast_scene(), small_proj(), 3, 4);
    NoiseSchedule sched = build_schedule(256, ScheduleKind::cosine);
    DenoiserNet<float> net(tiny_config(), 1);
    TaskConfig task;
    task.rates = {1}; // every drawn mask keeps all pixels
    TrainConfig tc;
    tc.steps = 1;
    Trainer trainer(net, sched, task, tc);
    EXPECT_THROW(trainer.step(data), ConfigError);
}

TEST(Trainer, NonFiniteLossAborts) {
    SyntheticDataset data(fast_scene(), small_proj(), 3, 4);
    NoiseSchedule sched = build_schedule(256, ScheduleKind::cosine);
    DenoiserNet<float> net(tiny_config(), 1);
    TrainConfig tc;
    tc.steps = 2;
    Trainer trainer(net, sched, TaskConfig{}, tc);
    EXPECT_NO_THROW(trainer.step(data));
    (*net.params()[3].value)[0] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(trainer.step(data), Error);
}

TEST(Trainer, ResumeReproducesNextLossBitExactly) {
    SyntheticDataset data(fast_scene(), small_proj(), 17, 16);
    NoiseSchedule sched = build_schedule(256, ScheduleKind::cosine);
    TaskConfig task;
    TrainConfig tc;
    tc.steps = 5;
    tc.batch = 2;
    tc.seed = 99;

    DenoiserNet<float> net_a(tiny_config(), 5);
    Trainer trainer_a(net_a, sched, task, tc);
    for (int i = 0; i < 5; ++i) trainer_a.step(data);
    DenoiserCheckpoint ckpt = trainer_a.make_checkpoint();
    double next_a = trainer_a.step(data);

    fs::path path = temp_dir() / "resume.ckpt";
    save_checkpoint(ckpt, path);
    DenoiserCheckpoint loaded = load_checkpoint(path);

    DenoiserNet<float> net_b(tiny_config(), 6); // different init, overwritten
    load_net_params(net_b, loaded);
    Trainer trainer_b(net_b, sched, task, tc);
    trainer_b.restore(loaded);
    double next_b = trainer_b.step(data);

    EXPECT_EQ(next_a, next_b);
    for (std::size_t i = 0; i < net_a.params().size(); ++i)
        EXPECT_EQ(*net_a.params()[i].value, *net_b.params()[i].value);
}

// --- checkpoint I/O -------------------------------------------------------------

TEST(Checkpoint, RoundTripBitExactForward) {
    DenoiserNet<float> net(tiny_config(), 21);
    NoiseSchedule sched = build_schedule(256, ScheduleKind::cosine);
    Trainer trainer(net, sched, TaskConfig{}, TrainConfig{});
    SyntheticDataset data(fast_scene(), small_proj(), 5, 4);
    trainer.step(data);

    fs::path path = temp_dir() / "roundtrip.ckpt";
    save_checkpoint(trainer.make_checkpoint(), path);
    DenoiserCheckpoint loaded = load_checkpoint(path);
    DenoiserNet<float> restored = net_from_checkpoint(loaded);

    Rng rng(2);
    Tensor<float> u = gaussian_tensor<float>(2, 16, 64, rng);
    Mask m = upsampling_mask(16, 64, 4);
    Tensor<float> a = net.predict(u, m, 33);
    Tensor<float> b = restored.predict(u, m, 33);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(loaded.step, 1u);
}

TEST(Checkpoint, TruncatedFileRejected) {
    DenoiserNet<float> net(tiny_config(), 22);
    NoiseSchedule sched = build_schedule(256, ScheduleKind::cosine);
    Trainer trainer(net, sched, TaskConfig{}, TrainConfig{});
    fs::path path = temp_dir() / "trunc.ckpt";
    save_checkpoint(trainer.make_checkpoint(), path);

    std::ifstream is(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), {});
    is.close();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    os.close();
    EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, BadMagicRejected) {
    fs::path path = temp_dir() / "magic.ckpt";
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "NOTACKPTFILE-----------------------------";
    os.close();
    EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, FingerprintMismatchNamesBothValues) {
    DenoiserNet<float> net(tiny_config(), 23);
    NoiseSchedule sched = build_schedule(256, ScheduleKind::cosine);
    Trainer trainer(net, sched, TaskConfig{}, TrainConfig{});
    fs::path path = temp_dir() / "fp.ckpt";
    save_checkpoint(trainer.make_checkpoint(), path);

    // Corrupt the stored fingerprint (8 bytes after magic + version).
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(12);
    std::uint64_t wrong = 0xdeadbeefcafef00dull;
    f.write(reinterpret_cast<const char*>(&wrong), sizeof wrong);
    f.close();
    try {
        load_checkpoint(path);
        FAIL() << "expected CheckpointError";
    } catch (const CheckpointError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find(std::to_string(wrong)), std::string::npos);
        EXPECT_NE(msg.find(std::to_string(tiny_config().fingerprint())), std::string::npos);
    }

    // Same refusal when a consumer expects a different architecture.
    DenoiserCheckpoint ok = trainer.make_checkpoint();
    NetConfig other = tiny_config();
    other.base_channels = 6;
    EXPECT_THROW(require_net_fingerprint(ok, other), CheckpointError);
}

TEST(Checkpoint, MissingFileIsIoError) {
    EXPECT_THROW(load_checkpoint(temp_dir() / "does_not_exist.ckpt"), IoError);
}
