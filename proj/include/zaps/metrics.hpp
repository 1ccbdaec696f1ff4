#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "zaps/image.hpp"

namespace zaps {

inline double mse(const ImageTensor& x, const ImageTensor& ref) {
    if (!(x.shape() == ref.shape()))
        throw std::invalid_argument("mse: shape mismatch");
    double s = 0.0;
    auto fx = x.flat(), fr = ref.flat();
    for (std::size_t k = 0; k < fx.size(); ++k) {
        const double d = fx[k] - fr[k];
        s += d * d;
    }
    return s / static_cast<double>(fx.size());
}

// Peak fixed at 1.0; identical images report +infinity.
inline double psnr(const ImageTensor& x, const ImageTensor& ref) {
    const double m = mse(x, ref);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

// Mean local SSIM over a Gaussian window (sigma = 1.5), valid positions
// only, per channel then averaged. k1/k2 are the standard constants.
inline double ssim(const ImageTensor& x, const ImageTensor& ref, int window = 11,
                   double k1 = 0.01, double k2 = 0.03) {
    const Shape sh = x.shape();
    if (!(sh == ref.shape())) throw std::invalid_argument("ssim: shape mismatch");
    if (window > sh.height || window > sh.width)
        throw std::invalid_argument("ssim: window larger than image");

    std::vector<double> w(static_cast<std::size_t>(window) * window);
    {
        const double sigma = 1.5;
        const int c = window / 2;
        double sum = 0.0;
        for (int i = 0; i < window; ++i)
            for (int j = 0; j < window; ++j) {
                const double d2 = static_cast<double>((i - c) * (i - c) + (j - c) * (j - c));
                const double v = std::exp(-0.5 * d2 / (sigma * sigma));
                w[static_cast<std::size_t>(i * window + j)] = v;
                sum += v;
            }
        for (double& v : w) v /= sum;
    }

    const double c1 = (k1 * 1.0) * (k1 * 1.0);
    const double c2 = (k2 * 1.0) * (k2 * 1.0);

    double channel_sum = 0.0;
    for (int ch = 0; ch < sh.channels; ++ch) {
        double acc = 0.0;
        int count = 0;
        for (int i0 = 0; i0 + window <= sh.height; ++i0)
            for (int j0 = 0; j0 + window <= sh.width; ++j0) {
                double mx = 0.0, my = 0.0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        const double wij = w[static_cast<std::size_t>(i * window + j)];
                        mx += wij * x(ch, i0 + i, j0 + j);
                        my += wij * ref(ch, i0 + i, j0 + j);
                    }
                double vx = 0.0, vy = 0.0, cxy = 0.0;
                for (int i = 0; i < window; ++i)
                    for (int j = 0; j < window; ++j) {
                        const double wij = w[static_cast<std::size_t>(i * window + j)];
                        const double dx = x(ch, i0 + i, j0 + j) - mx;
                        const double dy = ref(ch, i0 + i, j0 + j) - my;
                        vx += wij * dx * dx;
                        vy += wij * dy * dy;
                        cxy += wij * dx * dy;
                    }
                const double num = (2.0 * mx * my + c1) * (2.0 * cxy + c2);
                const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                acc += num / den;
                ++count;
            }
        channel_sum += acc / static_cast<double>(count);
    }
    return channel_sum / static_cast<double>(sh.channels);
}

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double mse = 0.0;
};

inline MetricReport compute_metrics(const ImageTensor& x, const ImageTensor& ref,
                                    int ssim_window = 11) {
    return MetricReport{psnr(x, ref), ssim(x, ref, ssim_window), mse(x, ref)};
}

}  // namespace zaps
