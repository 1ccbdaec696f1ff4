#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include "zaps/errors.hpp"
#include "zaps/image.hpp"
#include "zaps/rng.hpp"
#include "zaps/schedule.hpp"
#include "zaps/wavelet.hpp"

namespace zaps {

// Score of the noise-level-t marginal, grad_x log p_t(x_t). Implementations
// must be pure; the exact Hessian hook exists so approximation quality can
// be measured against ground truth.
class ScoreProvider {
public:
    virtual ~ScoreProvider() = default;

    virtual ImageTensor score(const ImageTensor& x_t, int t,
                              const NoiseSchedule& sched) const = 0;

    virtual bool has_exact_hessian() const { return false; }

    // (d^2 log p_t / dx^2) v
    virtual ImageTensor exact_hessian_apply(const ImageTensor& x_t, int t,
                                            const NoiseSchedule& sched,
                                            const ImageTensor& v) const {
        (void)x_t; (void)t; (void)sched; (void)v;
        throw std::logic_error("score provider has no exact hessian");
    }
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps; t = 0 returns x0.
inline ImageTensor forward_diffuse(const ImageTensor& x0, int t,
                                   const NoiseSchedule& sched, const ImageTensor& eps) {
    if (t < 0 || t > sched.T)
        throw std::invalid_argument("forward_diffuse: t out of range");
    const double abar = sched.alpha_bar(t);
    ImageTensor x = x0;
    x *= std::sqrt(abar);
    axpy(std::sqrt(1.0 - abar), eps, x);
    return x;
}

// x0_hat = (x_t + (1 - abar_t) s) / sqrt(abar_t)
inline ImageTensor tweedie_denoise(const ImageTensor& x_t, int t,
                                   const NoiseSchedule& sched, const ImageTensor& score) {
    const double abar = sched.alpha_bar(t);
    ImageTensor x0 = x_t;
    axpy(1.0 - abar, score, x0);
    x0 *= 1.0 / std::sqrt(abar);
    return x0;
}

// Per-component covariance: either s * I or W diag(d) W^T in a fixed
// orthogonal wavelet basis. Diffusion shifts every eigenvalue lambda to
// abar * lambda + (1 - abar).
class GmmCovariance {
public:
    static GmmCovariance scalar(double variance) {
        if (!(variance > 0.0)) throw config_error("gmm: variance must be > 0");
        GmmCovariance c;
        c.scalar_ = variance;
        return c;
    }
    static GmmCovariance wavelet_diagonal(WaveletBasis basis, std::vector<double> diag) {
        for (double v : diag)
            if (!(v > 0.0)) throw config_error("gmm: covariance diagonal must be > 0");
        GmmCovariance c;
        c.basis_ = std::move(basis);
        c.diag_ = std::move(diag);
        return c;
    }

    bool is_scalar() const { return diag_.empty(); }
    double scalar_variance() const { return scalar_; }
    const std::vector<double>& diagonal() const { return diag_; }
    const WaveletBasis& basis() const { return basis_; }

    // log det of (abar * Sigma + (1-abar) I)
    double diffused_log_det(double abar, int n) const {
        if (is_scalar())
            return n * std::log(abar * scalar_ + (1.0 - abar));
        double s = 0.0;
        for (double d : diag_) s += std::log(abar * d + (1.0 - abar));
        return s;
    }

    // (abar * Sigma + (1-abar) I)^{-1} v
    ImageTensor diffused_solve(double abar, const ImageTensor& v) const {
        if (is_scalar()) {
            ImageTensor out = v;
            out *= 1.0 / (abar * scalar_ + (1.0 - abar));
            return out;
        }
        ImageTensor c = dwt2_forward(v, basis_);
        auto fc = c.flat();
        for (std::size_t k = 0; k < fc.size(); ++k)
            fc[k] /= abar * diag_[k] + (1.0 - abar);
        return dwt2_inverse(c, basis_);
    }

    // Sigma^{1/2} xi, for sampling from the component.
    ImageTensor sqrt_apply(const ImageTensor& xi) const {
        if (is_scalar()) {
            ImageTensor out = xi;
            out *= std::sqrt(scalar_);
            return out;
        }
        ImageTensor c = dwt2_forward(xi, basis_);
        auto fc = c.flat();
        for (std::size_t k = 0; k < fc.size(); ++k) fc[k] *= std::sqrt(diag_[k]);
        return dwt2_inverse(c, basis_);
    }

private:
    double scalar_ = 1.0;
    WaveletBasis basis_{};
    std::vector<double> diag_{};
};

struct GmmComponent {
    double weight = 1.0;
    ImageTensor mean;
    GmmCovariance cov;
};

// Mixture of Gaussians with closed-form diffused score, posterior mean and
// Hessian. The diffused marginal at level t is
//   p_t(x) = sum_k w_k N(x; sqrt(abar) mu_k, abar Sigma_k + (1-abar) I).
class GaussianMixturePrior final : public ScoreProvider {
public:
    GaussianMixturePrior(Shape shape, std::vector<GmmComponent> components)
        : shape_(shape), comps_(std::move(components)) {
        if (comps_.empty()) throw config_error("gmm: no components");
        double wsum = 0.0;
        for (const auto& c : comps_) {
            if (!(c.weight > 0.0)) throw config_error("gmm: weights must be positive");
            if (!(c.mean.shape() == shape)) throw config_error("gmm: mean shape mismatch");
            if (!c.cov.is_scalar() &&
                static_cast<int>(c.cov.diagonal().size()) != shape.size())
                throw config_error("gmm: covariance diagonal length mismatch");
            wsum += c.weight;
        }
        if (std::abs(wsum - 1.0) > 1e-12)
            throw config_error("gmm: weights must sum to 1");
    }

    static GaussianMixturePrior single_gaussian(ImageTensor mean, GmmCovariance cov) {
        Shape shape = mean.shape();
        std::vector<GmmComponent> comps;
        comps.push_back(GmmComponent{1.0, std::move(mean), std::move(cov)});
        return GaussianMixturePrior(shape, std::move(comps));
    }

    const Shape& shape() const { return shape_; }
    const std::vector<GmmComponent>& components() const { return comps_; }

    // Log responsibilities log r_k(x_t) via log-sum-exp.
    std::vector<double> log_responsibilities(const ImageTensor& x_t, int t,
                                             const NoiseSchedule& sched) const {
        const double abar = sched.alpha_bar(t);
        const int n = shape_.size();
        std::vector<double> lp(comps_.size());
        for (std::size_t k = 0; k < comps_.size(); ++k) {
            const auto& c = comps_[k];
            ImageTensor r = x_t;
            axpy(-std::sqrt(abar), c.mean, r);
            const ImageTensor sr = c.cov.diffused_solve(abar, r);
            const double quad = dot(r, sr);
            lp[k] = std::log(c.weight) -
                    0.5 * (n * std::log(2.0 * std::numbers::pi) +
                           c.cov.diffused_log_det(abar, n) + quad);
        }
        double lmax = -std::numeric_limits<double>::infinity();
        for (double v : lp) lmax = std::max(lmax, v);
        double sum = 0.0;
        for (double v : lp) sum += std::exp(v - lmax);
        const double lse = lmax + std::log(sum);
        for (double& v : lp) v -= lse;
        return lp;
    }

    ImageTensor score(const ImageTensor& x_t, int t,
                      const NoiseSchedule& sched) const override {
        const double abar = sched.alpha_bar(t);
        const std::vector<double> lr = log_responsibilities(x_t, t, sched);
        ImageTensor s(shape_);
        for (std::size_t k = 0; k < comps_.size(); ++k) {
            if (lr[k] < kLogRespCutoff) continue;
            const auto& c = comps_[k];
            ImageTensor r = x_t;
            axpy(-std::sqrt(abar), c.mean, r);
            const ImageTensor g = c.cov.diffused_solve(abar, r);
            axpy(-std::exp(lr[k]), g, s);
        }
        return s;
    }

    bool has_exact_hessian() const override { return true; }

    // sum_k r_k (-P_k v + g_k (g_k . v)) - m (m . v), with P_k the diffused
    // component precision, g_k its score contribution, m the mixture score.
    ImageTensor exact_hessian_apply(const ImageTensor& x_t, int t,
                                    const NoiseSchedule& sched,
                                    const ImageTensor& v) const override {
        const double abar = sched.alpha_bar(t);
        const std::vector<double> lr = log_responsibilities(x_t, t, sched);
        ImageTensor out(shape_);
        ImageTensor mix_score(shape_);
        for (std::size_t k = 0; k < comps_.size(); ++k) {
            if (lr[k] < kLogRespCutoff) continue;
            const double rk = std::exp(lr[k]);
            const auto& c = comps_[k];
            ImageTensor r = x_t;
            axpy(-std::sqrt(abar), c.mean, r);
            ImageTensor gk = c.cov.diffused_solve(abar, r);
            gk *= -1.0;
            axpy(-rk, c.cov.diffused_solve(abar, v), out);  // -r_k P_k v
            axpy(rk * dot(gk, v), gk, out);                 // r_k g_k g_k^T v
            axpy(rk, gk, mix_score);
        }
        axpy(-dot(mix_score, v), mix_score, out);
        return out;
    }

    // Posterior mean E[x0 | x_t] from the responsibility-weighted component
    // conditionals; used by tests as an independent route to Tweedie.
    ImageTensor posterior_mean_x0(const ImageTensor& x_t, int t,
                                  const NoiseSchedule& sched) const {
        const double abar = sched.alpha_bar(t);
        const double sab = std::sqrt(abar);
        const std::vector<double> lr = log_responsibilities(x_t, t, sched);
        ImageTensor out(shape_);
        for (std::size_t k = 0; k < comps_.size(); ++k) {
            if (lr[k] < kLogRespCutoff) continue;
            const double rk = std::exp(lr[k]);
            const auto& c = comps_[k];
            // E[x0 | x_t, k] = mu_k + sqrt(abar) Sigma_k C_k^{-1} (x_t - sqrt(abar) mu_k)
            ImageTensor r = x_t;
            axpy(-sab, c.mean, r);
            ImageTensor w = c.cov.diffused_solve(abar, r);
            ImageTensor sw;
            if (c.cov.is_scalar()) {
                sw = w;
                sw *= c.cov.scalar_variance();
            } else {
                ImageTensor cw = dwt2_forward(w, c.cov.basis());
                auto f = cw.flat();
                for (std::size_t j = 0; j < f.size(); ++j)
                    f[j] *= c.cov.diagonal()[j];
                sw = dwt2_inverse(cw, c.cov.basis());
            }
            ImageTensor cond = c.mean;
            axpy(sab, sw, cond);
            axpy(rk, cond, out);
        }
        return out;
    }

    // Draws x0 ~ prior: pick a component by weight, then mean + Sigma^{1/2} xi.
    ImageTensor sample(rng::NormalStream& stream) const {
        const double u = stream.uniform();
        double acc = 0.0;
        std::size_t pick = comps_.size() - 1;
        for (std::size_t k = 0; k < comps_.size(); ++k) {
            acc += comps_[k].weight;
            if (u <= acc) {
                pick = k;
                break;
            }
        }
        const ImageTensor xi = stream.draw_normal(shape_);
        ImageTensor x = comps_[pick].cov.sqrt_apply(xi);
        x += comps_[pick].mean;
        return x;
    }

private:
    static constexpr double kLogRespCutoff = -40.0;  // nats

    Shape shape_;
    std::vector<GmmComponent> comps_;
};

inline ImageTensor gmm_score(const GaussianMixturePrior& prior, const ImageTensor& x_t,
                             int t, const NoiseSchedule& sched) {
    return prior.score(x_t, t, sched);
}

inline ImageTensor gmm_exact_hessian_apply(const GaussianMixturePrior& prior,
                                           const ImageTensor& x_t, int t,
                                           const NoiseSchedule& sched,
                                           const ImageTensor& v) {
    return prior.exact_hessian_apply(x_t, t, sched, v);
}

}  // namespace zaps
