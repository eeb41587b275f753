#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lidarup/diffusion.hpp"
#include "lidarup/net.hpp"

namespace lidarup {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t params_checked = 0;
};

/// Central-difference validation of analytic gradients. `eval_with_grads`
/// must zero the gradients, run forward+backward and return the loss;
/// `eval_loss` runs the loss alone. 64-bit arithmetic throughout.
inline GradCheckReport finite_difference_check(std::vector<ParamRef<double>>& params,
                                               const std::function<double()>& eval_with_grads,
                                               const std::function<double()>& eval_loss,
                                               double step = 1e-4) {
    eval_with_grads();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(*p.grad);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        std::vector<double>& w = *params[pi].value;
        for (std::size_t j = 0; j < w.size(); ++j) {
            double saved = w[j];
            w[j] = saved + step;
            double lp = eval_loss();
            w[j] = saved - step;
            double lm = eval_loss();
            w[j] = saved;
            double numeric = (lp - lm) / (2.0 * step);
            double a = analytic[pi][j];
            double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            double rel = std::abs(a - numeric) / denom;
            ++report.params_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params[pi].name + "[" + std::to_string(j) + "]";
            }
        }
    }
    return report;
}

/// Gradient check of the full denoiser against the masked training loss on a
/// fixed random input. Intended for tiny configurations (finite differences
/// evaluate the loss twice per parameter).
inline GradCheckReport grad_check_net(const NetConfig& cfg, int h, int w, std::uint64_t seed,
                                      double step = 1e-4) {
    DenoiserNet<double> net(cfg, seed);
    Rng rng(derive_seed(seed, "grad_check"));

    Tensor<double> u = gaussian_tensor<double>(2, h, w, rng);
    Tensor<double> target = gaussian_tensor<double>(2, h, w, rng);
    Mask mask = pepper_mask(h, w, 0.5, rng.next_u64());
    if (mask.unknown_count() == 0 || mask.known_count() == 0)
        mask = pepper_mask(h, w, 0.5, rng.next_u64());
    const int t = 37;
    Tensor<double> input = net.assemble_input(u, mask, make_coord_channels<double>(h, w));

    auto loss_of = [&](const Tensor<double>& out) { return masked_loss(out, target, mask); };
    auto eval_loss = [&]() { return loss_of(net.forward_raw(input, t, nullptr)); };
    auto eval_with_grads = [&]() {
        net.zero_grads();
        NetTape<double> tape;
        Tensor<double> out = net.forward_raw(input, t, &tape);
        double loss = loss_of(out);
        Tensor<double> gout(2, h, w);
        double unknown = static_cast<double>(mask.unknown_count());
        for (int ci = 0; ci < 2; ++ci)
            for (std::size_t i = 0; i < gout.plane_size(); ++i)
                if (!mask.bits[i])
                    gout.plane(ci)[i] = (out.plane(ci)[i] - target.plane(ci)[i]) / unknown;
        net.backward(tape, gout);
        return loss;
    };

    return finite_difference_check(net.params(), eval_with_grads, eval_loss, step);
}

} // namespace lidarup
