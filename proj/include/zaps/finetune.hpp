#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "zaps/errors.hpp"
#include "zaps/image.hpp"
#include "zaps/metrics.hpp"
#include "zaps/operators.hpp"
#include "zaps/params.hpp"
#include "zaps/prior.hpp"
#include "zaps/sampler.hpp"
#include "zaps/schedule.hpp"
#include "zaps/wavelet.hpp"

namespace zaps {

// L(y, x0) = || y - A x0 ||_2^2
inline double measurement_loss(const ImageTensor& y, const LinearOperator& A,
                               const ImageTensor& x0) {
    ImageTensor r = y;
    r -= A.apply(x0);
    return norm2_sq(r);
}

struct ZapsGrads {
    std::vector<double> zetas;
    std::vector<std::vector<double>> diags;
};

namespace detail {

// Ties a diagonal-gradient row across channels: each tied parameter appears
// once per channel, so its gradient is the channel sum, replicated.
inline void tie_channels(std::vector<double>& row, int channels) {
    if (channels <= 1) return;
    const std::size_t per = row.size() / static_cast<std::size_t>(channels);
    for (std::size_t j = 0; j < per; ++j) {
        double s = 0.0;
        for (int c = 0; c < channels; ++c) s += row[static_cast<std::size_t>(c) * per + j];
        for (int c = 0; c < channels; ++c) row[static_cast<std::size_t>(c) * per + j] = s;
    }
}

}  // namespace detail

// Reverse sweep over the recorded chain. Score evaluations are constants of
// the backward pass, so every step is the affine map
//   x_{i-1} = c1 x_i + c2 x0_hat(x_i) + const + zeta_i G_i A^T (y - A x0_hat(x_i)),
// with x0_hat linear in x_i at slope 1/sqrt(abar) and
// G_i = (1/sqrt(abar)) (I + (1-abar) W D_i W^T).
inline ZapsGrads backprop_unroll(const Trajectory& traj, const ZapsParams& params,
                                 const LinearOperator& A, const ImageTensor& y,
                                 const WaveletBasis& basis, const NoiseSchedule& sched,
                                 const SubSchedule& sub) {
    const int S = sub.steps();
    if (static_cast<int>(traj.steps.size()) != S || params.steps != S)
        throw std::invalid_argument("backprop: trajectory/params step count mismatch");
    if (params.n != traj.x0.size())
        throw std::invalid_argument("backprop: params n does not match image size");

    ZapsGrads g;
    g.zetas.assign(static_cast<std::size_t>(params.zeta_rows()), 0.0);
    g.diags.assign(static_cast<std::size_t>(params.diag_rows()),
                   std::vector<double>(static_cast<std::size_t>(params.n), 0.0));

    // dL/dx0 = 2 A^T (A x0 - y)
    ImageTensor r = A.apply(traj.x0);
    r -= y;
    ImageTensor lambda = A.adjoint(r);
    lambda *= 2.0;

    // records sit in execution order (i = S..1); walk them backwards
    for (int k = S - 1; k >= 0; --k) {
        const StepRecord& rec = traj.steps[static_cast<std::size_t>(k)];
        const int i = S - k;
        const int t = rec.tau_i;
        const double abar = sched.alpha_bar(t);
        const double inv_sab = 1.0 / std::sqrt(abar);
        const double zeta_i = params.zeta(i);
        const std::vector<double>& diag_i = params.diag(i);

        // d L / d zeta_i = lambda . g_i
        const double gz = dot(lambda, rec.guidance);
        g.zetas[params.shared_zeta ? 0 : static_cast<std::size_t>(i - 1)] += gz;

        // d L / d D_i = zeta_i (1-abar)/sqrt(abar) * (W^T u) .* (W^T lambda)
        ImageTensor u = y;
        u -= A.apply(rec.x0_hat);
        u = A.adjoint(u);
        const ImageTensor cu = dwt2_forward(u, basis);
        const ImageTensor cl = dwt2_forward(lambda, basis);
        const double dscale = zeta_i * (1.0 - abar) * inv_sab;
        auto& drow = g.diags[params.shared_diag ? 0 : static_cast<std::size_t>(i - 1)];
        auto fu = cu.flat();
        auto fl = cl.flat();
        for (std::size_t j = 0; j < drow.size(); ++j) drow[j] += dscale * fu[j] * fl[j];

        // lambda <- (c1 + c2/sqrt(abar)) lambda - (zeta_i/sqrt(abar)) A^T A G_i lambda
        ImageTensor gl = lambda;
        axpy(1.0 - abar, apply_diagonalized_hessian(diag_i, lambda, basis), gl);
        gl *= inv_sab;
        ImageTensor aag = A.adjoint(A.apply(gl));
        lambda *= rec.c1 + rec.c2 * inv_sab;
        axpy(-zeta_i * inv_sab, aag, lambda);
    }

    if (params.shared_diag_channels)
        for (auto& row : g.diags) detail::tie_channels(row, params.channels);
    return g;
}

// Replays the recorded chain with frozen scores and noise under (possibly
// perturbed) parameters: the exact forward map the backward sweep
// differentiates. Finite-difference checks probe this function.
inline ImageTensor replay_score_stop(const Trajectory& traj, const ZapsParams& params,
                                     const LinearOperator& A, const ImageTensor& y,
                                     const WaveletBasis& basis, const NoiseSchedule& sched,
                                     const std::optional<double>& ddim_eta = std::nullopt) {
    const int S = static_cast<int>(traj.steps.size());
    ImageTensor x = traj.steps.front().x_t;
    for (int k = 0; k < S; ++k) {
        const StepRecord& rec = traj.steps[static_cast<std::size_t>(k)];
        const int i = S - k;
        const int t = rec.tau_i;
        const double abar = sched.alpha_bar(t);
        const ImageTensor x0_hat = tweedie_denoise(x, t, sched, rec.score);
        ImageTensor x_prime;
        if (ddim_eta.has_value()) {
            ImageTensor eps_hat = rec.score;
            eps_hat *= -std::sqrt(1.0 - abar);
            x_prime = ddim_step(x, t, rec.tau_prev, sched, x0_hat, eps_hat, *ddim_eta,
                                rec.z);
        } else {
            x_prime = ddpm_jump_step(x, t, rec.tau_prev, sched, x0_hat, rec.z);
        }
        x = zaps_guided_step(x_prime, x0_hat, A, y, params.zeta(i), params.diag(i),
                             basis, sched, t);
    }
    return x;
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> m_zeta, v_zeta;
    std::vector<std::vector<double>> m_diag, v_diag;
    long step = 0;

    static AdamState zeros_like(const ZapsParams& p) {
        AdamState s;
        s.m_zeta.assign(p.zetas.size(), 0.0);
        s.v_zeta.assign(p.zetas.size(), 0.0);
        s.m_diag.assign(p.diags.size(),
                        std::vector<double>(static_cast<std::size_t>(p.n), 0.0));
        s.v_diag = s.m_diag;
        return s;
    }
};

// One bias-corrected Adam step on a single parameter.
inline double adam_step(double p, double grad, double& m, double& v, long t,
                        const AdamConfig& cfg) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
    const double mhat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(t)));
    return p - cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
}

inline void adam_update(ZapsParams& params, const ZapsGrads& grads, AdamState& state,
                        const AdamConfig& cfg) {
    if (grads.zetas.size() != params.zetas.size() ||
        grads.diags.size() != params.diags.size())
        throw std::invalid_argument("adam: gradient shape mismatch");
    state.step += 1;
    for (std::size_t i = 0; i < params.zetas.size(); ++i)
        params.zetas[i] = adam_step(params.zetas[i], grads.zetas[i], state.m_zeta[i],
                                    state.v_zeta[i], state.step, cfg);
    for (std::size_t i = 0; i < params.diags.size(); ++i)
        for (std::size_t j = 0; j < params.diags[i].size(); ++j)
            params.diags[i][j] =
                adam_step(params.diags[i][j], grads.diags[i][j], state.m_diag[i][j],
                          state.v_diag[i][j], state.step, cfg);
}

enum class NoisePolicy { fixed_bank, resample_per_epoch };

struct ZapsConfig {
    int epochs = 10;
    AdamConfig adam{};
    TaskKind task = TaskKind::inpaint;
    double zeta_init = -1.0;  // < 0: task default
    double diag_init = kDefaultDiagInit;
    bool shared_zeta = false;
    bool shared_diag = false;
    bool shared_diag_channels = false;
    NoisePolicy noise_policy = NoisePolicy::fixed_bank;
    bool grad_check = false;
    std::optional<double> ddim_eta;  // nullopt = ddpm
};

struct EpochRow {
    int epoch = 0;  // 1-based
    double loss = 0.0;
    double psnr = std::numeric_limits<double>::quiet_NaN();
    double ssim = std::numeric_limits<double>::quiet_NaN();
};

struct FinetuneResult {
    ImageTensor x0;
    ZapsParams params;
    std::vector<EpochRow> rows;
    long nfe = 0;
    double grad_check_rel_err = std::numeric_limits<double>::quiet_NaN();
};

class CountingScoreProvider final : public ScoreProvider {
public:
    explicit CountingScoreProvider(const ScoreProvider& inner) : inner_(inner) {}
    ImageTensor score(const ImageTensor& x_t, int t,
                      const NoiseSchedule& sched) const override {
        ++count_;
        return inner_.score(x_t, t, sched);
    }
    bool has_exact_hessian() const override { return inner_.has_exact_hessian(); }
    ImageTensor exact_hessian_apply(const ImageTensor& x_t, int t,
                                    const NoiseSchedule& sched,
                                    const ImageTensor& v) const override {
        return inner_.exact_hessian_apply(x_t, t, sched, v);
    }
    long count() const { return count_; }

private:
    const ScoreProvider& inner_;
    mutable long count_ = 0;
};

// The zero-shot epoch loop: the initial state is drawn once, each epoch
// unrolls the S guided steps with the current parameters, evaluates the
// measurement loss on the final estimate, backpropagates through the
// score-stop graph, and takes one Adam step.
inline FinetuneResult finetune(const ImageTensor& y, const LinearOperator& A,
                               const ScoreProvider& prior, const NoiseSchedule& sched,
                               const SubSchedule& sub, const WaveletBasis& basis,
                               const ZapsConfig& cfg, std::uint64_t seed,
                               const ImageTensor* reference = nullptr,
                               int ssim_window = 11) {
    if (cfg.epochs < 1) throw config_error("finetune: epochs must be >= 1");
    if (!(cfg.adam.lr > 0.0)) throw config_error("finetune: learning rate must be > 0");

    const Shape shape = A.input_shape();
    const int S = sub.steps();
    const int n = shape.size();

    ZapsParams params =
        init_params(cfg.task, S, n, shape.channels, cfg.shared_zeta, cfg.shared_diag,
                    cfg.shared_diag_channels, cfg.zeta_init, cfg.diag_init);
    AdamState state = AdamState::zeros_like(params);

    CountingScoreProvider counting(prior);
    GuidanceConfig gcfg;
    gcfg.method = GuidanceMethod::zaps;
    gcfg.basis = &basis;
    gcfg.zaps_params = &params;
    gcfg.ddim_eta = cfg.ddim_eta;

    NoiseBank bank = NoiseBank::make(shape, S, seed);

    FinetuneResult result;
    result.rows.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.noise_policy == NoisePolicy::resample_per_epoch && epoch > 1)
            bank.resample_steps(shape, S, seed, epoch - 1);

        auto [x0, traj] =
            run_reverse_with_bank(sched, sub, counting, &A, &y, gcfg, bank, true);
        const double loss = measurement_loss(y, A, x0);

        EpochRow row;
        row.epoch = epoch;
        row.loss = loss;
        if (reference) {
            row.psnr = psnr(x0, *reference);
            row.ssim = ssim(x0, *reference, ssim_window);
        }
        result.rows.push_back(row);

        const ZapsGrads grads = backprop_unroll(traj, params, A, y, basis, sched, sub);

        if (cfg.grad_check && epoch == 1) {
            // spot-check a few coordinates against central differences of the
            // frozen-score replay
            const double h = 1e-4;
            double max_rel = 0.0;
            auto probe = [&](auto getter, auto setter, double analytic) {
                const double p0 = getter();
                setter(p0 + h);
                const double lp = measurement_loss(
                    y, A, replay_score_stop(traj, params, A, y, basis, sched, cfg.ddim_eta));
                setter(p0 - h);
                const double lm = measurement_loss(
                    y, A, replay_score_stop(traj, params, A, y, basis, sched, cfg.ddim_eta));
                setter(p0);
                const double fd = (lp - lm) / (2.0 * h);
                const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-12});
                max_rel = std::max(max_rel, std::abs(fd - analytic) / denom);
            };
            probe([&] { return params.zetas[0]; }, [&](double v) { params.zetas[0] = v; },
                  grads.zetas[0]);
            // perturb a whole tied group when diagonals are shared across channels
            const std::size_t per = params.diags[0].size() /
                                    static_cast<std::size_t>(params.channels);
            const std::size_t mid = per / 2;
            auto set_diag = [&](double v) {
                if (params.shared_diag_channels)
                    for (int c = 0; c < params.channels; ++c)
                        params.diags[0][static_cast<std::size_t>(c) * per + mid] = v;
                else
                    params.diags[0][mid] = v;
            };
            probe([&] { return params.diags[0][mid]; }, set_diag, grads.diags[0][mid]);
            result.grad_check_rel_err = max_rel;
        }

        adam_update(params, grads, state, cfg.adam);

        if (epoch == cfg.epochs) result.x0 = std::move(x0);
    }

    result.params = std::move(params);
    result.nfe = counting.count();
    return result;
}

}  // namespace zaps
