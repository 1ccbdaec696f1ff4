#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "zaps/errors.hpp"
#include "zaps/image.hpp"
#include "zaps/operators.hpp"
#include "zaps/params.hpp"
#include "zaps/prior.hpp"
#include "zaps/rng.hpp"
#include "zaps/schedule.hpp"
#include "zaps/wavelet.hpp"

namespace zaps {

enum class GuidanceMethod { none, pocs, mcg, dps, pigdm, zaps };

inline std::string_view guidance_method_name(GuidanceMethod m) {
    switch (m) {
        case GuidanceMethod::none: return "none";
        case GuidanceMethod::pocs: return "pocs";
        case GuidanceMethod::mcg: return "mcg";
        case GuidanceMethod::dps: return "dps";
        case GuidanceMethod::pigdm: return "pigdm";
        case GuidanceMethod::zaps: return "zaps";
    }
    return "?";
}

inline GuidanceMethod parse_guidance_method(std::string_view s) {
    if (s == "none") return GuidanceMethod::none;
    if (s == "pocs") return GuidanceMethod::pocs;
    if (s == "mcg") return GuidanceMethod::mcg;
    if (s == "dps") return GuidanceMethod::dps;
    if (s == "pigdm") return GuidanceMethod::pigdm;
    if (s == "zaps") return GuidanceMethod::zaps;
    throw config_error("unknown guidance method '" + std::string(s) + "'");
}

enum class JacobianMode { identity, wavelet_diag, exact_oracle };

// r_t^2 for the measurement-likelihood Gaussian. Default is the
// signal-to-noise form (1 - abar_t) / abar_t.
struct RSquareRule {
    enum class Kind { snr, constant };
    Kind kind = Kind::snr;
    double value = 1.0;

    double operator()(int t, const NoiseSchedule& sched) const {
        if (kind == Kind::constant) return value;
        const double abar = sched.alpha_bar(t);
        return (1.0 - abar) / abar;
    }
};

// The linearization of the denoiser around x_t: identity mode drops the
// Hessian term, wavelet_diag substitutes W D W^T, exact_oracle asks the
// prior for the true Hessian.
struct JacobianSpec {
    JacobianMode mode = JacobianMode::identity;
    const WaveletBasis* basis = nullptr;
    std::span<const double> diag{};
    const ScoreProvider* prior = nullptr;
};

// (d x0_hat / d x_t) v = (1/sqrt(abar)) (v + (1-abar) H v)
inline ImageTensor apply_x0_jacobian(const JacobianSpec& spec, const ImageTensor& v,
                                     const ImageTensor& x_t, int t,
                                     const NoiseSchedule& sched) {
    const double abar = sched.alpha_bar(t);
    ImageTensor out = v;
    switch (spec.mode) {
        case JacobianMode::identity:
            break;
        case JacobianMode::wavelet_diag:
            if (!spec.basis) throw std::invalid_argument("jacobian: missing wavelet basis");
            axpy(1.0 - abar, apply_diagonalized_hessian(spec.diag, v, *spec.basis), out);
            break;
        case JacobianMode::exact_oracle:
            if (!spec.prior || !spec.prior->has_exact_hessian())
                throw std::invalid_argument("jacobian: no exact hessian available");
            axpy(1.0 - abar, spec.prior->exact_hessian_apply(x_t, t, sched, v), out);
            break;
    }
    out *= 1.0 / std::sqrt(abar);
    return out;
}

// Reverse transition generalized to schedule jumps:
//   x' = sqrt(alpha_t)(1-abar_prev)/(1-abar_t) x_t
//      + sqrt(abar_prev) beta_t/(1-abar_t) x0_hat + postsigma_t z,
// with abar_prev read at the previous sub-schedule index. Contiguous
// schedules recover plain ancestral sampling.
inline ImageTensor ddpm_jump_step(const ImageTensor& x_cur, int tau_i, int tau_prev,
                                  const NoiseSchedule& sched, const ImageTensor& x0_hat,
                                  const ImageTensor& z) {
    if (!(tau_prev < tau_i))
        throw std::invalid_argument("ddpm step: tau_prev must be < tau_i");
    const double abar = sched.alpha_bar(tau_i);
    const double abar_prev = sched.alpha_bar(tau_prev);
    const double c1 = std::sqrt(sched.alpha(tau_i)) * (1.0 - abar_prev) / (1.0 - abar);
    const double c2 = std::sqrt(abar_prev) * sched.beta(tau_i) / (1.0 - abar);
    ImageTensor x = x_cur;
    x *= c1;
    axpy(c2, x0_hat, x);
    axpy(sched.posterior_sigma(tau_i), z, x);
    return x;
}

// DDIM transition: x' = sqrt(abar_prev) x0_hat
//   + sqrt(1-abar_prev-sigma^2) eps_hat + sigma z, with
// sigma = eta sqrt((1-abar_prev)/(1-abar) (1 - abar/abar_prev)).
inline double ddim_sigma(int tau_i, int tau_prev, const NoiseSchedule& sched, double eta) {
    const double abar = sched.alpha_bar(tau_i);
    const double abar_prev = sched.alpha_bar(tau_prev);
    return eta * std::sqrt((1.0 - abar_prev) / (1.0 - abar) * (1.0 - abar / abar_prev));
}

inline ImageTensor ddim_step(const ImageTensor& x_cur, int tau_i, int tau_prev,
                             const NoiseSchedule& sched, const ImageTensor& x0_hat,
                             const ImageTensor& eps_hat, double eta,
                             const ImageTensor& z) {
    (void)x_cur;
    if (!(tau_prev < tau_i))
        throw std::invalid_argument("ddim step: tau_prev must be < tau_i");
    if (!(eta >= 0.0 && eta <= 1.0))
        throw std::invalid_argument("ddim step: eta must be in [0,1]");
    const double abar_prev = sched.alpha_bar(tau_prev);
    const double sigma = ddim_sigma(tau_i, tau_prev, sched, eta);
    ImageTensor x = x0_hat;
    x *= std::sqrt(abar_prev);
    axpy(std::sqrt(std::max(0.0, 1.0 - abar_prev - sigma * sigma)), eps_hat, x);
    if (sigma > 0.0) axpy(sigma, z, x);
    return x;
}

// x_next = x' + zeta J A^T (y - A x0_hat)
inline ImageTensor dps_guidance(const ImageTensor& x_prime, const ImageTensor& x_t,
                                const ImageTensor& x0_hat, const LinearOperator& A,
                                const ImageTensor& y, double zeta,
                                const JacobianSpec& jac, int t,
                                const NoiseSchedule& sched) {
    ImageTensor residual = y;
    residual -= A.apply(x0_hat);
    const ImageTensor g = apply_x0_jacobian(jac, A.adjoint(residual), x_t, t, sched);
    ImageTensor out = x_prime;
    axpy(zeta, g, out);
    return out;
}

// x_next = x' + zeta J (A^T A + eta I)^{-1} A^T (y - A x0_hat) with
// eta = sigma_y^2 / r^2; the noiseless variant uses r^{-2} J A^dagger (...)
// when an exact pseudo-inverse exists.
inline ImageTensor pigdm_guidance(const ImageTensor& x_prime, const ImageTensor& x_t,
                                  const ImageTensor& x0_hat, const LinearOperator& A,
                                  const ImageTensor& y, double zeta, double r_sq,
                                  double sigma_y, const JacobianSpec& jac, int t,
                                  const NoiseSchedule& sched, double cg_tol = 1e-10,
                                  int cg_max_iters = 1000) {
    if (!(r_sq > 0.0)) throw std::invalid_argument("pigdm: r_sq must be > 0");
    ImageTensor residual = y;
    residual -= A.apply(x0_hat);

    ImageTensor direction(x_t.shape());
    if (sigma_y == 0.0 && A.has_pseudo_inverse()) {
        direction = A.pseudo_inverse(residual);
        direction *= 1.0 / r_sq;
    } else if (sigma_y == 0.0) {
        throw numeric_error(
            "pigdm: sigma_y = 0 requires an operator with an exact pseudo-inverse");
    } else {
        const double eta = sigma_y * sigma_y / r_sq;
        direction = solve_regularized_normal(A, eta, A.adjoint(residual), cg_tol,
                                             cg_max_iters)
                        .x;
    }
    const ImageTensor g = apply_x0_jacobian(jac, direction, x_t, t, sched);
    ImageTensor out = x_prime;
    axpy(zeta, g, out);
    return out;
}

// Replaces measured coordinates with the noise-level-matched measurement:
//   x <- (I - A^T A) x + A^T (sqrt(abar_prev) y + sqrt(1-abar_prev) eps)
inline ImageTensor pocs_projection(const ImageTensor& x_prime, const LinearOperator& A,
                                   const ImageTensor& y, int tau_prev,
                                   const NoiseSchedule& sched, const ImageTensor& eps) {
    if (!A.is_mask())
        throw std::invalid_argument("projection requires a mask-type operator");
    const double abar_prev = sched.alpha_bar(tau_prev);
    ImageTensor target = y;
    target *= std::sqrt(abar_prev);
    axpy(std::sqrt(1.0 - abar_prev), eps, target);
    ImageTensor out = x_prime;
    out -= A.apply(x_prime);          // (I - A^T A) x
    out += A.apply(target);           // A^T (noise-matched y)
    return out;
}

// Gradient correction followed by the data projection.
inline ImageTensor mcg_step(const ImageTensor& x_t, const ImageTensor& x_prime,
                            const ImageTensor& x0_hat, const LinearOperator& A,
                            const ImageTensor& y, double zeta, const JacobianSpec& jac,
                            int t, int tau_prev, const NoiseSchedule& sched,
                            const ImageTensor& eps) {
    if (!A.is_mask())
        throw std::invalid_argument("mcg requires a mask-type operator");
    const ImageTensor corrected =
        dps_guidance(x_prime, x_t, x0_hat, A, y, zeta, jac, t, sched);
    return pocs_projection(corrected, A, y, tau_prev, sched, eps);
}

// Guided update with the learnable wavelet-diagonal Hessian surrogate:
//   x_next = x' + zeta (1/sqrt(abar))(I + (1-abar) W D W^T) A^T (y - A x0_hat)
inline ImageTensor zaps_guided_step(const ImageTensor& x_prime, const ImageTensor& x0_hat,
                                    const LinearOperator& A, const ImageTensor& y,
                                    double zeta_t, std::span<const double> diag_t,
                                    const WaveletBasis& basis, const NoiseSchedule& sched,
                                    int tau_i) {
    const double abar = sched.alpha_bar(tau_i);
    ImageTensor residual = y;
    residual -= A.apply(x0_hat);
    const ImageTensor u = A.adjoint(residual);
    ImageTensor g = u;
    axpy(1.0 - abar, apply_diagonalized_hessian(diag_t, u, basis), g);
    g *= 1.0 / std::sqrt(abar);
    ImageTensor out = x_prime;
    axpy(zeta_t, g, out);
    return out;
}

struct GuidanceConfig {
    GuidanceMethod method = GuidanceMethod::none;
    std::vector<double> zeta;  // per-step weights, size S (ignored for zaps/none/pocs)
    RSquareRule r_sq_rule{};
    double sigma_y = 0.0;
    JacobianMode jacobian_mode = JacobianMode::identity;
    std::optional<double> ddim_eta;  // nullopt = ddpm transitions
    bool normalize_residual = false;  // zeta' / ||y - A x0_hat|| variant

    // machinery for zaps / wavelet_diag / exact_oracle
    const WaveletBasis* basis = nullptr;
    const ZapsParams* zaps_params = nullptr;
    const ScoreProvider* hessian_oracle = nullptr;
    const std::vector<double>* jacobian_diag = nullptr;  // wavelet_diag baselines

    double cg_tol = 1e-10;
    int cg_max_iters = 1000;
};

// One recorded sampling step. c1/c2 are the affine coefficients of the
// transition in (x_t, x0_hat) so the fine-tuner can replay the chain.
struct StepRecord {
    int tau_i = 0;
    int tau_prev = 0;
    double c1 = 0.0;
    double c2 = 0.0;
    ImageTensor x_t;
    ImageTensor score;
    ImageTensor x0_hat;
    ImageTensor x_prime;
    ImageTensor z;
    ImageTensor guidance;  // direction before the zeta multiplier
};

struct Trajectory {
    std::vector<StepRecord> steps;  // execution order: i = S down to 1
    ImageTensor x0;
};

// Frozen per-run Gaussian draws: the initial state, one z per step, and one
// projection draw per step. Freezing these makes a run a deterministic
// function of its parameters.
struct NoiseBank {
    ImageTensor x_init;
    std::vector<ImageTensor> z;
    std::vector<ImageTensor> proj_eps;

    static NoiseBank make(Shape shape, int steps, std::uint64_t seed) {
        NoiseBank bank;
        rng::NormalStream init(rng::substream_seed(seed, "init-noise"));
        bank.x_init = init.draw_normal(shape);
        bank.resample_steps(shape, steps, seed, 0);
        return bank;
    }

    // Epoch-indexed redraw of the per-step noise, leaving x_init untouched.
    void resample_steps(Shape shape, int steps, std::uint64_t seed, int epoch) {
        rng::NormalStream stream(rng::substream_seed(
            rng::substream_seed(seed, "step-noise"), "epoch-" + std::to_string(epoch)));
        z.clear();
        proj_eps.clear();
        z.reserve(static_cast<std::size_t>(steps));
        proj_eps.reserve(static_cast<std::size_t>(steps));
        for (int i = 0; i < steps; ++i) z.push_back(stream.draw_normal(shape));
        for (int i = 0; i < steps; ++i) proj_eps.push_back(stream.draw_normal(shape));
    }
};

namespace detail {

inline double effective_zeta(double zeta, bool normalize, const ImageTensor& residual) {
    if (!normalize) return zeta;
    const double nr = norm2(residual);
    return zeta / std::max(nr, 1e-12);
}

}  // namespace detail

// Runs the S guided reverse steps of the sub-schedule from bank.x_init and
// returns the final x0, recording the chain when asked. Deterministic given
// the bank.
inline std::pair<ImageTensor, Trajectory> run_reverse_with_bank(
    const NoiseSchedule& sched, const SubSchedule& sub, const ScoreProvider& prior,
    const LinearOperator* A, const ImageTensor* y, const GuidanceConfig& cfg,
    const NoiseBank& bank, bool record) {
    const int S = sub.steps();
    if (cfg.method != GuidanceMethod::none && (!A || !y))
        throw std::invalid_argument("run_reverse: guidance needs operator and measurement");
    if (cfg.method == GuidanceMethod::zaps && (!cfg.zaps_params || !cfg.basis))
        throw std::invalid_argument("run_reverse: zaps needs params and basis");
    const bool needs_zeta = cfg.method == GuidanceMethod::dps ||
                            cfg.method == GuidanceMethod::pigdm ||
                            cfg.method == GuidanceMethod::mcg;
    if (needs_zeta && static_cast<int>(cfg.zeta.size()) != S)
        throw std::invalid_argument("run_reverse: zeta size must equal S");

    Trajectory traj;
    if (record) traj.steps.reserve(static_cast<std::size_t>(S));

    ImageTensor x = bank.x_init;
    const ImageTensor zero(x.shape());

    for (int i = S; i >= 1; --i) {
        const int t = sub.tau_at(i);
        const int t_prev = sub.tau_at(i - 1);
        const double abar = sched.alpha_bar(t);
        const double abar_prev = sched.alpha_bar(t_prev);

        const ImageTensor s = prior.score(x, t, sched);
        const ImageTensor x0_hat = tweedie_denoise(x, t, sched, s);

        // no fresh noise into the final (lowest-noise) transition
        const bool last = (i == 1);
        const ImageTensor& z = last ? zero : bank.z[static_cast<std::size_t>(S - i)];

        ImageTensor x_prime;
        double c1 = 0.0, c2 = 0.0;
        if (cfg.ddim_eta.has_value()) {
            ImageTensor eps_hat = s;
            eps_hat *= -std::sqrt(1.0 - abar);
            x_prime = ddim_step(x, t, t_prev, sched, x0_hat, eps_hat, *cfg.ddim_eta, z);
            c1 = 0.0;
            c2 = std::sqrt(abar_prev);
        } else {
            x_prime = ddpm_jump_step(x, t, t_prev, sched, x0_hat, z);
            c1 = std::sqrt(sched.alpha(t)) * (1.0 - abar_prev) / (1.0 - abar);
            c2 = std::sqrt(abar_prev) * sched.beta(t) / (1.0 - abar);
        }

        ImageTensor residual;
        ImageTensor guidance_dir;
        ImageTensor x_next;
        switch (cfg.method) {
            case GuidanceMethod::none:
                x_next = x_prime;
                break;
            case GuidanceMethod::pocs:
                x_next = pocs_projection(x_prime, *A, *y, t_prev, sched,
                                         bank.proj_eps[static_cast<std::size_t>(S - i)]);
                break;
            case GuidanceMethod::mcg: {
                residual = *y;
                residual -= A->apply(x0_hat);
                JacobianSpec jac{cfg.jacobian_mode, cfg.basis,
                                 cfg.jacobian_diag ? std::span<const double>(*cfg.jacobian_diag)
                                                   : std::span<const double>{},
                                 cfg.hessian_oracle};
                const double zeff = detail::effective_zeta(
                    cfg.zeta[static_cast<std::size_t>(i - 1)], cfg.normalize_residual,
                    residual);
                x_next = mcg_step(x, x_prime, x0_hat, *A, *y, zeff, jac, t, t_prev, sched,
                                  bank.proj_eps[static_cast<std::size_t>(S - i)]);
                break;
            }
            case GuidanceMethod::dps: {
                residual = *y;
                residual -= A->apply(x0_hat);
                JacobianSpec jac{cfg.jacobian_mode, cfg.basis,
                                 cfg.jacobian_diag ? std::span<const double>(*cfg.jacobian_diag)
                                                   : std::span<const double>{},
                                 cfg.hessian_oracle};
                const double zeff = detail::effective_zeta(
                    cfg.zeta[static_cast<std::size_t>(i - 1)], cfg.normalize_residual,
                    residual);
                x_next = dps_guidance(x_prime, x, x0_hat, *A, *y, zeff, jac, t, sched);
                break;
            }
            case GuidanceMethod::pigdm: {
                residual = *y;
                residual -= A->apply(x0_hat);
                JacobianSpec jac{cfg.jacobian_mode, cfg.basis,
                                 cfg.jacobian_diag ? std::span<const double>(*cfg.jacobian_diag)
                                                   : std::span<const double>{},
                                 cfg.hessian_oracle};
                const double zeff = detail::effective_zeta(
                    cfg.zeta[static_cast<std::size_t>(i - 1)], cfg.normalize_residual,
                    residual);
                x_next = pigdm_guidance(x_prime, x, x0_hat, *A, *y, zeff,
                                        cfg.r_sq_rule(t, sched), cfg.sigma_y, jac, t,
                                        sched, cfg.cg_tol, cfg.cg_max_iters);
                break;
            }
            case GuidanceMethod::zaps: {
                const ZapsParams& p = *cfg.zaps_params;
                x_next = zaps_guided_step(x_prime, x0_hat, *A, *y, p.zeta(i),
                                          p.diag(i), *cfg.basis, sched, t);
                break;
            }
        }

        if (record) {
            StepRecord rec;
            rec.tau_i = t;
            rec.tau_prev = t_prev;
            rec.c1 = c1;
            rec.c2 = c2;
            rec.x_t = x;
            rec.score = s;
            rec.x0_hat = x0_hat;
            rec.x_prime = x_prime;
            rec.z = z;
            if (cfg.method == GuidanceMethod::zaps || cfg.method == GuidanceMethod::dps ||
                cfg.method == GuidanceMethod::pigdm || cfg.method == GuidanceMethod::mcg) {
                // direction before zeta: (x_next - x_prime) / zeta would lose
                // the zeta = 0 case, so recompute cheaply for zaps only.
                if (cfg.method == GuidanceMethod::zaps) {
                    const ZapsParams& p = *cfg.zaps_params;
                    ImageTensor r = *y;
                    r -= A->apply(x0_hat);
                    const ImageTensor u = A->adjoint(r);
                    ImageTensor g = u;
                    axpy(1.0 - abar,
                         apply_diagonalized_hessian(p.diag(i), u, *cfg.basis), g);
                    g *= 1.0 / std::sqrt(abar);
                    rec.guidance = g;
                } else {
                    rec.guidance = x_next - x_prime;
                }
            }
            traj.steps.push_back(std::move(rec));
        }
        x = std::move(x_next);
    }

    traj.x0 = x;
    return {traj.x0, std::move(traj)};
}

inline std::pair<ImageTensor, Trajectory> run_reverse(
    const NoiseSchedule& sched, const SubSchedule& sub, const ScoreProvider& prior,
    const LinearOperator* A, const ImageTensor* y, const GuidanceConfig& cfg,
    Shape shape, std::uint64_t seed, bool record = false) {
    const NoiseBank bank = NoiseBank::make(shape, sub.steps(), seed);
    return run_reverse_with_bank(sched, sub, prior, A, y, cfg, bank, record);
}

}  // namespace zaps
