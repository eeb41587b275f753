#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lidarup/checkpoint.hpp"
#include "lidarup/dataset.hpp"
#include "lidarup/diffusion.hpp"
#include "lidarup/net.hpp"

namespace lidarup {

struct TrainConfig {
    int steps = 2000;
    int batch = 2;
    AdamConfig adam;
    std::uint64_t seed = 42;
    int checkpoint_every = 0; // 0 = final checkpoint only
    int mask_resample_limit = 64;
    // Cosine decay of the learning rate toward lr * lr_floor_frac at the
    // configured step count; 1.0 keeps the rate constant.
    double lr_floor_frac = 0.1;
};

struct TrainHooks {
    std::function<void(int step, double loss)> on_step;
    std::function<void(int step, const DenoiserCheckpoint&)> on_checkpoint;
};

// Adam with global gradient-norm clipping over masked-noise regression
// batches. The trainer is the sole writer of the network parameters;
// everything it draws comes from one splitmix stream, so a (seed, step,
// rng-state) triple fully determines the run.
class Trainer {
public:
    Trainer(DenoiserNet<float>& net, NoiseSchedule sched, TaskConfig task, TrainConfig cfg)
        : net_(net), sched_(std::move(sched)), task_(task), cfg_(cfg),
          rng_(derive_seed(cfg.seed, "trainer")) {
        sched_.validate();
        task_.validate();
        if (cfg.batch < 1) throw ConfigError("trainer: batch must be >= 1");
        if (cfg.steps < 0) throw ConfigError("trainer: steps must be >= 0");
        for (auto& p : net_.params()) {
            adam_m_.emplace_back(p.value->size(), 0.0f);
            adam_v_.emplace_back(p.value->size(), 0.0f);
        }
    }

    std::uint64_t step_count() const { return step_; }
    const NoiseSchedule& schedule() const { return sched_; }

    /// One optimization step over `batch` examples; returns the batch-mean loss.
    double step(const Dataset& data) {
        if (data.size() == 0) throw ConfigError("trainer: empty dataset");
        net_.zero_grads();
        double total = 0.0;
        for (int b = 0; b < cfg_.batch; ++b) {
            std::size_t idx = rng_.uniform_index(data.size());
            TensorF x0 = to_tensor<float>(data.get(idx));
            TrainingExample<float> ex = draw_example(x0);
            TensorF input =
                net_.assemble_input(ex.net_input, ex.mask, make_coord_channels<float>(x0.h, x0.w));
            NetTape<float> tape;
            TensorF out = net_.forward_raw(input, ex.t, &tape);
            total += masked_loss(out, ex.eps, ex.mask);

            TensorF gout(2, x0.h, x0.w);
            float scale = 1.0f / (static_cast<float>(ex.mask.unknown_count()) * cfg_.batch);
            for (int ci = 0; ci < 2; ++ci) {
                const float* op = out.plane(ci);
                const float* ep = ex.eps.plane(ci);
                float* gp = gout.plane(ci);
                for (std::size_t i = 0; i < gout.plane_size(); ++i)
                    if (!ex.mask.bits[i]) gp[i] = (op[i] - ep[i]) * scale;
            }
            net_.backward(tape, gout);
        }
        double loss = total / cfg_.batch;
        if (!std::isfinite(loss))
            throw NumericError("training diverged: non-finite loss at step " +
                               std::to_string(step_ + 1));
        adam_update();
        return loss;
    }

    /// Runs the configured number of steps with optional per-step and
    /// periodic-checkpoint callbacks.
    void run(const Dataset& data, const TrainHooks& hooks = {}) {
        for (int s = 0; s < cfg_.steps; ++s) {
            double loss = step(data);
            if (hooks.on_step) hooks.on_step(static_cast<int>(step_), loss);
            if (hooks.on_checkpoint && cfg_.checkpoint_every > 0 &&
                step_ % cfg_.checkpoint_every == 0)
                hooks.on_checkpoint(static_cast<int>(step_), make_checkpoint());
        }
    }

    DenoiserCheckpoint make_checkpoint() const {
        DenoiserCheckpoint ckpt;
        ckpt.net = net_.config();
        ckpt.t_train = sched_.t_train;
        ckpt.sched_kind = sched_.kind;
        ckpt.sched_fingerprint = sched_.fingerprint();
        ckpt.step = step_;
        ckpt.rng_state = rng_.state();
        ckpt.adam = cfg_.adam;
        const auto& params = net_.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            ckpt.tensors.emplace_back(params[i].name, *params[i].value);
            ckpt.tensors.emplace_back("adam.m/" + params[i].name, adam_m_[i]);
            ckpt.tensors.emplace_back("adam.v/" + params[i].name, adam_v_[i]);
        }
        return ckpt;
    }

    /// Restores optimizer state and RNG position from a checkpoint whose
    /// parameters are already loaded into the net.
    void restore(const DenoiserCheckpoint& ckpt) {
        require_net_fingerprint(ckpt, net_.config());
        if (ckpt.sched_fingerprint != sched_.fingerprint())
            throw CheckpointError("trainer: schedule fingerprint mismatch (checkpoint " +
                                  std::to_string(ckpt.sched_fingerprint) + ", configured " +
                                  std::to_string(sched_.fingerprint()) + ")");
        const auto& params = net_.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            const std::vector<float>* m = ckpt.find("adam.m/" + params[i].name);
            const std::vector<float>* v = ckpt.find("adam.v/" + params[i].name);
            if (m == nullptr || v == nullptr || m->size() != adam_m_[i].size() ||
                v->size() != adam_v_[i].size())
                throw CheckpointError("trainer: optimizer state missing for '" + params[i].name +
                                      "'");
            adam_m_[i] = *m;
            adam_v_[i] = *v;
        }
        step_ = ckpt.step;
        rng_.set_state(ckpt.rng_state);
    }

private:
    TrainingExample<float> draw_example(const TensorF& x0) {
        for (int attempt = 0; attempt < cfg_.mask_resample_limit; ++attempt) {
            TrainingExample<float> ex = make_training_example(x0, task_, sched_, rng_.next_u64());
            if (ex.mask.unknown_count() > 0) return ex;
            // all-known mask: unusable for the masked objective, redraw
        }
        throw ConfigError("trainer: task config keeps producing all-known masks "
                          "(is an upsample rate of 1 enabled?)");
    }

    void adam_update() {
        ++step_;
        const auto& params = net_.params();

        double norm_sq = 0.0;
        for (const auto& p : params)
            for (float g : *p.grad) norm_sq += static_cast<double>(g) * g;
        double norm = std::sqrt(norm_sq);
        double scale = (cfg_.adam.grad_clip > 0.0 && norm > cfg_.adam.grad_clip)
                           ? cfg_.adam.grad_clip / norm
                           : 1.0;

        double bc1 = 1.0 - std::pow(cfg_.adam.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg_.adam.beta2, static_cast<double>(step_));
        double lr = cfg_.adam.lr;
        if (cfg_.lr_floor_frac < 1.0 && cfg_.steps > 0) {
            double u = std::min(1.0, static_cast<double>(step_) / cfg_.steps);
            double floor = cfg_.adam.lr * cfg_.lr_floor_frac;
            lr = floor + (cfg_.adam.lr - floor) * 0.5 * (1.0 + std::cos(u * kPi));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::vector<float>& w = *params[i].value;
            std::vector<float>& g = *params[i].grad;
            std::vector<float>& m = adam_m_[i];
            std::vector<float>& v = adam_v_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                double gj = static_cast<double>(g[j]) * scale;
                double mj = cfg_.adam.beta1 * m[j] + (1.0 - cfg_.adam.beta1) * gj;
                double vj = cfg_.adam.beta2 * v[j] + (1.0 - cfg_.adam.beta2) * gj * gj;
                m[j] = static_cast<float>(mj);
                v[j] = static_cast<float>(vj);
                w[j] -= static_cast<float>(lr * (mj / bc1) /
                                           (std::sqrt(vj / bc2) + cfg_.adam.eps));
            }
        }
    }

    DenoiserNet<float>& net_;
    NoiseSchedule sched_;
    TaskConfig task_;
    TrainConfig cfg_;
    Rng rng_;
    std::uint64_t step_ = 0;
    std::vector<std::vector<float>> adam_m_, adam_v_;
};

} // namespace lidarup
