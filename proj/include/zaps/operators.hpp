#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "zaps/errors.hpp"
#include "zaps/image.hpp"
#include "zaps/rng.hpp"

namespace zaps {

// Linear forward model A with apply/adjoint and, for structured operators,
// an exact pseudo-inverse. Immutable after construction.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;

    virtual Shape input_shape() const = 0;
    virtual Shape output_shape() const = 0;
    virtual ImageTensor apply(const ImageTensor& x) const = 0;
    virtual ImageTensor adjoint(const ImageTensor& v) const = 0;

    virtual bool has_pseudo_inverse() const { return false; }
    virtual ImageTensor pseudo_inverse(const ImageTensor& v) const {
        (void)v;
        throw std::logic_error("operator has no exact pseudo-inverse");
    }

    // True for diagonal 0/1 operators, which admit an exact data projection.
    virtual bool is_mask() const { return false; }

protected:
    void check_input(const ImageTensor& x) const {
        if (!(x.shape() == input_shape()))
            throw std::invalid_argument("operator: input shape " + x.shape().str() +
                                        ", expected " + input_shape().str());
    }
    void check_output(const ImageTensor& v) const {
        if (!(v.shape() == output_shape()))
            throw std::invalid_argument("operator: output shape " + v.shape().str() +
                                        ", expected " + output_shape().str());
    }
};

class IdentityOperator final : public LinearOperator {
public:
    explicit IdentityOperator(Shape shape) : shape_(shape) {}
    Shape input_shape() const override { return shape_; }
    Shape output_shape() const override { return shape_; }
    ImageTensor apply(const ImageTensor& x) const override {
        check_input(x);
        return x;
    }
    ImageTensor adjoint(const ImageTensor& v) const override {
        check_output(v);
        return v;
    }
    bool has_pseudo_inverse() const override { return true; }
    ImageTensor pseudo_inverse(const ImageTensor& v) const override {
        check_output(v);
        return v;
    }
    bool is_mask() const override { return true; }

private:
    Shape shape_;
};

namespace detail {

// Circular 2-D convolution with a centered kernel, one channel at a time.
// sign=+1 convolves, sign=-1 correlates (the adjoint of convolution).
inline ImageTensor conv2_periodic(const ImageTensor& x,
                                  const std::vector<std::vector<double>>& kernel,
                                  int sign) {
    const Shape sh = x.shape();
    const int kh = static_cast<int>(kernel.size());
    const int kw = static_cast<int>(kernel[0].size());
    const int cu = kh / 2, cv = kw / 2;
    ImageTensor y(sh);
    for (int c = 0; c < sh.channels; ++c)
        for (int i = 0; i < sh.height; ++i)
            for (int j = 0; j < sh.width; ++j) {
                double acc = 0.0;
                for (int u = 0; u < kh; ++u) {
                    const int di = sign * (u - cu);
                    const int ii = ((i - di) % sh.height + sh.height) % sh.height;
                    const auto& krow = kernel[static_cast<std::size_t>(u)];
                    for (int v = 0; v < kw; ++v) {
                        const int dj = sign * (v - cv);
                        const int jj = ((j - dj) % sh.width + sh.width) % sh.width;
                        acc += krow[static_cast<std::size_t>(v)] * x(c, ii, jj);
                    }
                }
                y(c, i, j) = acc;
            }
    return y;
}

inline void conv1_periodic(const double* x, double* y, int n, int stride,
                           const std::vector<double>& kernel) {
    const int K = static_cast<int>(kernel.size());
    const int c = K / 2;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = 0; k < K; ++k) {
            const int ii = ((i - (k - c)) % n + n) % n;
            acc += kernel[static_cast<std::size_t>(k)] *
                   x[static_cast<std::size_t>(ii * stride)];
        }
        y[static_cast<std::size_t>(i * stride)] = acc;
    }
}

}  // namespace detail

// Separable Gaussian blur with periodic boundary. The symmetric kernel makes
// the operator self-adjoint.
class GaussianBlurOperator final : public LinearOperator {
public:
    GaussianBlurOperator(Shape shape, int kernel_size, double sigma) : shape_(shape) {
        if (kernel_size % 2 == 0)
            throw config_error("gaussian blur: kernel size must be odd");
        if (kernel_size > std::min(shape.height, shape.width))
            throw config_error("gaussian blur: kernel larger than image side");
        if (!(sigma > 0.0)) throw config_error("gaussian blur: sigma must be > 0");
        kernel_.resize(static_cast<std::size_t>(kernel_size));
        const int c = kernel_size / 2;
        double sum = 0.0;
        for (int k = 0; k < kernel_size; ++k) {
            const double d = static_cast<double>(k - c);
            kernel_[static_cast<std::size_t>(k)] = std::exp(-0.5 * d * d / (sigma * sigma));
            sum += kernel_[static_cast<std::size_t>(k)];
        }
        for (double& v : kernel_) v /= sum;
    }

    const std::vector<double>& kernel1d() const { return kernel_; }

    Shape input_shape() const override { return shape_; }
    Shape output_shape() const override { return shape_; }

    ImageTensor apply(const ImageTensor& x) const override {
        check_input(x);
        ImageTensor y(shape_);
        std::vector<double> tmp(static_cast<std::size_t>(shape_.pixels()));
        for (int c = 0; c < shape_.channels; ++c) {
            for (int i = 0; i < shape_.height; ++i)
                detail::conv1_periodic(&x(c, i, 0), &tmp[static_cast<std::size_t>(
                                                        i * shape_.width)],
                                       shape_.width, 1, kernel_);
            for (int j = 0; j < shape_.width; ++j)
                detail::conv1_periodic(&tmp[static_cast<std::size_t>(j)], &y(c, 0, j),
                                       shape_.height, shape_.width, kernel_);
        }
        return y;
    }
    ImageTensor adjoint(const ImageTensor& v) const override { return apply(v); }

private:
    Shape shape_;
    std::vector<double> kernel_;
};

// Arbitrary-kernel 2-D convolution with periodic boundary; the adjoint
// correlates with the same kernel. Kernels are renormalized to unit sum.
class MotionBlurOperator final : public LinearOperator {
public:
    MotionBlurOperator(Shape shape, std::vector<std::vector<double>> kernel)
        : shape_(shape), kernel_(std::move(kernel)) {
        if (kernel_.empty() || kernel_[0].empty())
            throw config_error("motion blur: empty kernel");
        const std::size_t kw = kernel_[0].size();
        double sum = 0.0;
        for (const auto& row : kernel_) {
            if (row.size() != kw) throw config_error("motion blur: ragged kernel rows");
            for (double v : row) {
                if (!std::isfinite(v)) throw config_error("motion blur: non-finite kernel");
                sum += v;
            }
        }
        if (!(sum > 0.0)) throw config_error("motion blur: kernel sum must be positive");
        for (auto& row : kernel_)
            for (double& v : row) v /= sum;
        if (static_cast<int>(kernel_.size()) > shape.height ||
            static_cast<int>(kw) > shape.width)
            throw config_error("motion blur: kernel larger than image");
    }

    Shape input_shape() const override { return shape_; }
    Shape output_shape() const override { return shape_; }
    ImageTensor apply(const ImageTensor& x) const override {
        check_input(x);
        return detail::conv2_periodic(x, kernel_, +1);
    }
    ImageTensor adjoint(const ImageTensor& v) const override {
        check_output(v);
        return detail::conv2_periodic(v, kernel_, -1);
    }

private:
    Shape shape_;
    std::vector<std::vector<double>> kernel_;
};

// Diagonal 0/1 keep-mask shared across channels. A = A^T = A^2 = A^dagger.
class MaskOperator : public LinearOperator {
public:
    MaskOperator(Shape shape, std::vector<std::uint8_t> keep)
        : shape_(shape), keep_(std::move(keep)) {
        if (static_cast<int>(keep_.size()) != shape.pixels())
            throw std::invalid_argument("mask: size mismatch");
    }

    const std::vector<std::uint8_t>& keep_mask() const { return keep_; }
    int kept_count() const {
        return static_cast<int>(std::count(keep_.begin(), keep_.end(), std::uint8_t(1)));
    }

    Shape input_shape() const override { return shape_; }
    Shape output_shape() const override { return shape_; }
    ImageTensor apply(const ImageTensor& x) const override {
        check_input(x);
        ImageTensor y(shape_);
        for (int c = 0; c < shape_.channels; ++c)
            for (int p = 0; p < shape_.pixels(); ++p) {
                const int i = p / shape_.width, j = p % shape_.width;
                y(c, i, j) = keep_[static_cast<std::size_t>(p)] ? x(c, i, j) : 0.0;
            }
        return y;
    }
    ImageTensor adjoint(const ImageTensor& v) const override { return apply(v); }
    bool has_pseudo_inverse() const override { return true; }
    ImageTensor pseudo_inverse(const ImageTensor& v) const override { return apply(v); }
    bool is_mask() const override { return true; }

private:
    Shape shape_;
    std::vector<std::uint8_t> keep_;
};

// Keeps exactly round(keep_fraction * H * W) pixels, chosen by a seeded
// Fisher-Yates shuffle so the count is deterministic.
inline MaskOperator random_mask_operator(Shape shape, double keep_fraction,
                                         std::uint64_t seed) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw config_error("random mask: keep_fraction must be in (0,1]");
    const int n = shape.pixels();
    const int kept = static_cast<int>(std::lround(keep_fraction * n));
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    rng::NormalStream stream(rng::substream_seed(seed, "mask"));
    for (int i = n - 1; i > 0; --i) {
        const auto j = static_cast<int>(stream.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(n), 0);
    for (int k = 0; k < kept; ++k) keep[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 1;
    return MaskOperator(shape, std::move(keep));
}

// Zeroes a rectangular box, identity elsewhere.
inline MaskOperator box_mask_operator(Shape shape, int top, int left, int box_h,
                                      int box_w) {
    if (box_h < 0 || box_w < 0 || top < 0 || left < 0 || top + box_h > shape.height ||
        left + box_w > shape.width)
        throw config_error("box mask: box out of bounds");
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(shape.pixels()), 1);
    for (int i = top; i < top + box_h; ++i)
        for (int j = left; j < left + box_w; ++j)
            keep[static_cast<std::size_t>(i * shape.width + j)] = 0;
    return MaskOperator(shape, std::move(keep));
}

// Block-average downsampling. The adjoint upsamples and scales by 1/f^2, and
// f^2 * adjoint is an exact right inverse (tight frame).
class DownsampleOperator final : public LinearOperator {
public:
    DownsampleOperator(Shape shape, int factor) : in_(shape), factor_(factor) {
        if (factor < 1) throw config_error("downsample: factor must be >= 1");
        if (shape.height % factor != 0 || shape.width % factor != 0)
            throw config_error("downsample: shape " + shape.str() +
                               " not divisible by factor " + std::to_string(factor));
        out_ = Shape{shape.channels, shape.height / factor, shape.width / factor};
    }

    Shape input_shape() const override { return in_; }
    Shape output_shape() const override { return out_; }

    ImageTensor apply(const ImageTensor& x) const override {
        check_input(x);
        ImageTensor y(out_);
        const double scale = 1.0 / (static_cast<double>(factor_) * factor_);
        for (int c = 0; c < out_.channels; ++c)
            for (int i = 0; i < out_.height; ++i)
                for (int j = 0; j < out_.width; ++j) {
                    double acc = 0.0;
                    for (int di = 0; di < factor_; ++di)
                        for (int dj = 0; dj < factor_; ++dj)
                            acc += x(c, i * factor_ + di, j * factor_ + dj);
                    y(c, i, j) = acc * scale;
                }
        return y;
    }

    ImageTensor adjoint(const ImageTensor& v) const override {
        check_output(v);
        ImageTensor x(in_);
        const double scale = 1.0 / (static_cast<double>(factor_) * factor_);
        for (int c = 0; c < out_.channels; ++c)
            for (int i = 0; i < out_.height; ++i)
                for (int j = 0; j < out_.width; ++j) {
                    const double v0 = v(c, i, j) * scale;
                    for (int di = 0; di < factor_; ++di)
                        for (int dj = 0; dj < factor_; ++dj)
                            x(c, i * factor_ + di, j * factor_ + dj) = v0;
                }
        return x;
    }

    bool has_pseudo_inverse() const override { return true; }
    ImageTensor pseudo_inverse(const ImageTensor& v) const override {
        ImageTensor x = adjoint(v);
        x *= static_cast<double>(factor_) * factor_;
        return x;
    }

private:
    Shape in_, out_;
    int factor_;
};

namespace detail {

// Keys cubic interpolation weight, a = -1/2.
inline double cubic_weight(double s) {
    const double a = -0.5;
    const double t = std::abs(s);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
    return 0.0;
}

}  // namespace detail

// Bicubic downsampling by point sampling on the Keys kernel grid, periodic
// boundary. No exact pseudo-inverse; offered for parity behind the same
// interface as the block-average operator.
class BicubicDownsampleOperator final : public LinearOperator {
public:
    BicubicDownsampleOperator(Shape shape, int factor) : in_(shape), factor_(factor) {
        if (factor < 1) throw config_error("bicubic: factor must be >= 1");
        if (shape.height % factor != 0 || shape.width % factor != 0)
            throw config_error("bicubic: shape not divisible by factor");
        out_ = Shape{shape.channels, shape.height / factor, shape.width / factor};
        build_taps(out_.height, in_.height, row_taps_);
        build_taps(out_.width, in_.width, col_taps_);
    }

    Shape input_shape() const override { return in_; }
    Shape output_shape() const override { return out_; }

    ImageTensor apply(const ImageTensor& x) const override {
        check_input(x);
        ImageTensor tmp(Shape{in_.channels, out_.height, in_.width});
        resample_axis(x, tmp, row_taps_, /*rows=*/true, /*forward=*/true);
        ImageTensor y(out_);
        resample_axis(tmp, y, col_taps_, /*rows=*/false, /*forward=*/true);
        return y;
    }

    ImageTensor adjoint(const ImageTensor& v) const override {
        check_output(v);
        ImageTensor tmp(Shape{in_.channels, out_.height, in_.width});
        resample_axis(v, tmp, col_taps_, /*rows=*/false, /*forward=*/false);
        ImageTensor x(in_);
        resample_axis(tmp, x, row_taps_, /*rows=*/true, /*forward=*/false);
        return x;
    }

private:
    struct Tap {
        int src[4];
        double w[4];
    };

    void build_taps(int n_out, int n_in, std::vector<Tap>& taps) const {
        taps.resize(static_cast<std::size_t>(n_out));
        const double f = static_cast<double>(factor_);
        for (int i = 0; i < n_out; ++i) {
            const double src = (static_cast<double>(i) + 0.5) * f - 0.5;
            const int base = static_cast<int>(std::floor(src));
            Tap t{};
            double sum = 0.0;
            for (int k = 0; k < 4; ++k) {
                const int p = base - 1 + k;
                t.src[k] = ((p % n_in) + n_in) % n_in;
                t.w[k] = detail::cubic_weight(src - static_cast<double>(p));
                sum += t.w[k];
            }
            for (double& w : t.w) w /= sum;
            taps[static_cast<std::size_t>(i)] = t;
        }
    }

    // forward: out[i] = sum_k w_k in[src_k]; adjoint scatters the same taps.
    static void resample_axis(const ImageTensor& in, ImageTensor& out,
                              const std::vector<Tap>& taps, bool rows, bool forward) {
        const Shape si = in.shape(), so = out.shape();
        for (int c = 0; c < so.channels; ++c) {
            if (rows) {
                const int n = static_cast<int>(taps.size());
                for (int j = 0; j < (forward ? si.width : so.width); ++j)
                    for (int i = 0; i < n; ++i) {
                        const Tap& t = taps[static_cast<std::size_t>(i)];
                        if (forward) {
                            double acc = 0.0;
                            for (int k = 0; k < 4; ++k) acc += t.w[k] * in(c, t.src[k], j);
                            out(c, i, j) = acc;
                        } else {
                            for (int k = 0; k < 4; ++k)
                                out(c, t.src[k], j) += t.w[k] * in(c, i, j);
                        }
                    }
            } else {
                const int n = static_cast<int>(taps.size());
                for (int i = 0; i < (forward ? si.height : so.height); ++i)
                    for (int j = 0; j < n; ++j) {
                        const Tap& t = taps[static_cast<std::size_t>(j)];
                        if (forward) {
                            double acc = 0.0;
                            for (int k = 0; k < 4; ++k) acc += t.w[k] * in(c, i, t.src[k]);
                            out(c, i, j) = acc;
                        } else {
                            for (int k = 0; k < 4; ++k)
                                out(c, i, t.src[k]) += t.w[k] * in(c, i, j);
                        }
                    }
            }
        }
    }

    Shape in_, out_;
    int factor_;
    std::vector<Tap> row_taps_, col_taps_;
};

// Dense matrix-backed operator on flattened tensors; test and oracle work.
class DenseOperator final : public LinearOperator {
public:
    DenseOperator(Shape in, Shape out, std::vector<double> row_major)
        : in_(in), out_(out), a_(std::move(row_major)) {
        if (static_cast<long>(a_.size()) !=
            static_cast<long>(in.size()) * static_cast<long>(out.size()))
            throw std::invalid_argument("dense operator: matrix size mismatch");
    }

    Shape input_shape() const override { return in_; }
    Shape output_shape() const override { return out_; }

    ImageTensor apply(const ImageTensor& x) const override {
        check_input(x);
        const int m = out_.size(), n = in_.size();
        ImageTensor y(out_);
        auto fx = x.flat();
        auto fy = y.flat();
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j)
                acc += a_[static_cast<std::size_t>(i) * n + j] * fx[static_cast<std::size_t>(j)];
            fy[static_cast<std::size_t>(i)] = acc;
        }
        return y;
    }

    ImageTensor adjoint(const ImageTensor& v) const override {
        check_output(v);
        const int m = out_.size(), n = in_.size();
        ImageTensor x(in_);
        auto fv = v.flat();
        auto fx = x.flat();
        for (int i = 0; i < m; ++i) {
            const double vi = fv[static_cast<std::size_t>(i)];
            for (int j = 0; j < n; ++j)
                fx[static_cast<std::size_t>(j)] += a_[static_cast<std::size_t>(i) * n + j] * vi;
        }
        return x;
    }

private:
    Shape in_, out_;
    std::vector<double> a_;
};

struct Measurement {
    ImageTensor y;
    double sigma_y = 0.0;
    std::uint64_t seed = 0;
};

// y = A x0 + sigma_y * eps with eps from the "measurement-noise" substream
// of the given seed. Deterministic.
inline Measurement measure(const LinearOperator& A, const ImageTensor& x0,
                           double sigma_y, std::uint64_t seed) {
    if (sigma_y < 0.0) throw config_error("measure: sigma_y must be >= 0");
    ImageTensor y = A.apply(x0);
    if (sigma_y > 0.0) {
        rng::NormalStream stream(rng::substream_seed(seed, "measurement-noise"));
        for (double& v : y.flat()) v += sigma_y * stream.normal();
    }
    return Measurement{std::move(y), sigma_y, seed};
}

struct CgResult {
    ImageTensor x;
    int iterations = 0;
    double relative_residual = 0.0;
};

// Conjugate gradients on (A^T A + eta I) w = v, eta > 0. Throws cg_failure
// with the achieved residual if the relative residual does not reach tol
// within max_iters.
inline CgResult solve_regularized_normal(const LinearOperator& A, double eta,
                                         const ImageTensor& v, double tol = 1e-10,
                                         int max_iters = 1000) {
    if (!(eta > 0.0)) throw std::invalid_argument("solve_regularized_normal: eta must be > 0");
    if (!(v.shape() == A.input_shape()))
        throw std::invalid_argument("solve_regularized_normal: rhs shape mismatch");

    auto normal_apply = [&](const ImageTensor& w) {
        ImageTensor out = A.adjoint(A.apply(w));
        axpy(eta, w, out);
        return out;
    };

    const double vnorm = norm2(v);
    CgResult res{ImageTensor(v.shape()), 0, 0.0};
    if (vnorm == 0.0) return res;

    ImageTensor r = v;  // residual of x = 0
    ImageTensor p = r;
    double rs = norm2_sq(r);
    for (int it = 1; it <= max_iters; ++it) {
        ImageTensor mp = normal_apply(p);
        const double denom = dot(p, mp);
        if (!(denom > 0.0))
            throw cg_failure("cg: operator not positive definite", std::sqrt(rs) / vnorm, it);
        const double alpha = rs / denom;
        axpy(alpha, p, res.x);
        axpy(-alpha, mp, r);
        const double rs_new = norm2_sq(r);
        res.iterations = it;
        res.relative_residual = std::sqrt(rs_new) / vnorm;
        if (res.relative_residual <= tol) return res;
        p *= rs_new / rs;
        p += r;
        rs = rs_new;
    }
    throw cg_failure("cg: no convergence after " + std::to_string(max_iters) +
                         " iterations, relative residual " +
                         std::to_string(res.relative_residual),
                     res.relative_residual, res.iterations);
}

}  // namespace zaps
