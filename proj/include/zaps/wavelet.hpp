#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zaps/errors.hpp"
#include "zaps/image.hpp"

namespace zaps {

enum class WaveletFamily { db2, db4, db6, db8 };

inline std::string_view wavelet_family_name(WaveletFamily f) {
    switch (f) {
        case WaveletFamily::db2: return "db2";
        case WaveletFamily::db4: return "db4";
        case WaveletFamily::db6: return "db6";
        case WaveletFamily::db8: return "db8";
    }
    return "?";
}

inline WaveletFamily parse_wavelet_family(std::string_view name) {
    if (name == "db2") return WaveletFamily::db2;
    if (name == "db4") return WaveletFamily::db4;
    if (name == "db6") return WaveletFamily::db6;
    if (name == "db8") return WaveletFamily::db8;
    throw config_error("unknown wavelet family '" + std::string(name) + "'");
}

namespace detail {

// Orthonormal Daubechies scaling filters (minimum phase), sum = sqrt(2),
// unit l2 norm, exact even-shift orthogonality at double precision.
inline constexpr std::array<double, 4> kDb2 = {
    0.48296291314453414, 0.83651630373780791, 0.22414386804201338,
    -0.12940952255126038};

inline constexpr std::array<double, 8> kDb4 = {
    0.23037781330889650, 0.71484657055291565, 0.63088076792985891,
    -0.027983769416859854, -0.18703481171909308, 0.030841381835560764,
    0.032883011666885200, -0.010597401785069032};

inline constexpr std::array<double, 12> kDb6 = {
    0.11154074335010946, 0.49462389039845309, 0.75113390802109535,
    0.31525035170919763, -0.22626469396543982, -0.12976686756726194,
    0.097501605587323049, 0.027522865530305729, -0.031582039317486030,
    0.00055384220116149614, 0.0047772575109455106, -0.0010773010853084796};

inline constexpr std::array<double, 16> kDb8 = {
    0.054415842243104010, 0.31287159091429997, 0.67563073629728981,
    0.58535468365420671, -0.015829105256349306, -0.28401554296154693,
    0.00047248457391328277, 0.12874742662047846, -0.017369301001807546,
    -0.044088253930794752, 0.013981027917398282, 0.0087460940474057767,
    -0.0048703529934515743, -0.00039174037337694705, 0.00067544940645056937,
    -0.00011747678412476953};

}  // namespace detail

// Orthonormal 2-D DWT basis: Daubechies family, multi-level, periodic
// boundary. Periodization keeps the transform exactly orthogonal for any
// even signal length, which symmetric extension would not.
struct WaveletBasis {
    WaveletFamily family = WaveletFamily::db4;
    int levels = 2;
    std::vector<double> lo;  // scaling (analysis low-pass)
    std::vector<double> hi;  // quadrature mirror high-pass

    WaveletBasis() { set_family(family); }
    WaveletBasis(WaveletFamily f, int levels_) : levels(levels_) {
        if (levels_ < 1) throw config_error("wavelet: levels must be >= 1");
        set_family(f);
    }

    void set_family(WaveletFamily f) {
        family = f;
        auto assign = [this](std::span<const double> h) {
            lo.assign(h.begin(), h.end());
            hi.resize(lo.size());
            const std::size_t L = lo.size();
            for (std::size_t k = 0; k < L; ++k)
                hi[k] = (k % 2 == 0 ? 1.0 : -1.0) * lo[L - 1 - k];
        };
        switch (f) {
            case WaveletFamily::db2: assign(detail::kDb2); break;
            case WaveletFamily::db4: assign(detail::kDb4); break;
            case WaveletFamily::db6: assign(detail::kDb6); break;
            case WaveletFamily::db8: assign(detail::kDb8); break;
        }
    }
};

// Per-coefficient diagonal for the wavelet-domain Hessian surrogate, flat
// over (channel, coefficient) in transform order.
struct HessianDiagonal {
    std::vector<double> entries;
};

namespace detail {

// One analysis step along a length-n strided slice: first half of the output
// holds scaling coefficients, second half wavelet coefficients.
inline void dwt_step(std::span<double> buf, const double* x, int n, int stride,
                     const WaveletBasis& basis) {
    const int half = n / 2;
    const int L = static_cast<int>(basis.lo.size());
    for (int i = 0; i < half; ++i) {
        double a = 0.0, d = 0.0;
        for (int k = 0; k < L; ++k) {
            const double v = x[static_cast<std::size_t>(((2 * i + k) % n) * stride)];
            a += basis.lo[static_cast<std::size_t>(k)] * v;
            d += basis.hi[static_cast<std::size_t>(k)] * v;
        }
        buf[static_cast<std::size_t>(i)] = a;
        buf[static_cast<std::size_t>(half + i)] = d;
    }
}

inline void idwt_step(std::span<double> buf, const double* c, int n, int stride,
                      const WaveletBasis& basis) {
    const int half = n / 2;
    const int L = static_cast<int>(basis.lo.size());
    for (int j = 0; j < n; ++j) buf[static_cast<std::size_t>(j)] = 0.0;
    for (int i = 0; i < half; ++i) {
        const double a = c[static_cast<std::size_t>(i * stride)];
        const double d = c[static_cast<std::size_t>((half + i) * stride)];
        for (int k = 0; k < L; ++k) {
            buf[static_cast<std::size_t>((2 * i + k) % n)] +=
                basis.lo[static_cast<std::size_t>(k)] * a +
                basis.hi[static_cast<std::size_t>(k)] * d;
        }
    }
}

inline void check_dwt_shape(const Shape& s, int levels) {
    const int div = 1 << levels;
    if (s.height % div != 0 || s.width % div != 0)
        throw std::invalid_argument("dwt: shape " + s.str() + " not divisible by 2^" +
                                    std::to_string(levels));
    if ((s.height >> levels) < 1 || (s.width >> levels) < 1)
        throw std::invalid_argument("dwt: too many levels for shape " + s.str());
}

}  // namespace detail

// Multi-level separable 2-D analysis transform, per channel. The output has
// the same element count; the coarse scaling block sits in the top-left
// (H/2^levels) x (W/2^levels) corner, each level's LH/HL/HH blocks fill the
// standard quadrant layout around it.
inline ImageTensor dwt2_forward(const ImageTensor& x, const WaveletBasis& basis) {
    detail::check_dwt_shape(x.shape(), basis.levels);
    ImageTensor c = x;
    const Shape sh = x.shape();
    std::vector<double> buf(static_cast<std::size_t>(std::max(sh.height, sh.width)));
    for (int ch = 0; ch < sh.channels; ++ch) {
        int h = sh.height, w = sh.width;
        for (int lvl = 0; lvl < basis.levels; ++lvl) {
            for (int i = 0; i < h; ++i) {  // rows
                detail::dwt_step(buf, &c(ch, i, 0), w, 1, basis);
                for (int j = 0; j < w; ++j) c(ch, i, j) = buf[static_cast<std::size_t>(j)];
            }
            for (int j = 0; j < w; ++j) {  // columns
                detail::dwt_step(buf, &c(ch, 0, j), h, sh.width, basis);
                for (int i = 0; i < h; ++i) c(ch, i, j) = buf[static_cast<std::size_t>(i)];
            }
            h /= 2;
            w /= 2;
        }
    }
    return c;
}

inline ImageTensor dwt2_inverse(const ImageTensor& c, const WaveletBasis& basis) {
    detail::check_dwt_shape(c.shape(), basis.levels);
    ImageTensor x = c;
    const Shape sh = c.shape();
    std::vector<double> buf(static_cast<std::size_t>(std::max(sh.height, sh.width)));
    for (int ch = 0; ch < sh.channels; ++ch) {
        for (int lvl = basis.levels - 1; lvl >= 0; --lvl) {
            const int h = sh.height >> lvl;
            const int w = sh.width >> lvl;
            for (int j = 0; j < w; ++j) {  // columns first (mirror of forward)
                detail::idwt_step(buf, &x(ch, 0, j), h, sh.width, basis);
                for (int i = 0; i < h; ++i) x(ch, i, j) = buf[static_cast<std::size_t>(i)];
            }
            for (int i = 0; i < h; ++i) {  // rows
                detail::idwt_step(buf, &x(ch, i, 0), w, 1, basis);
                for (int j = 0; j < w; ++j) x(ch, i, j) = buf[static_cast<std::size_t>(j)];
            }
        }
    }
    return x;
}

// W diag(d) W^T v with W the orthogonal synthesis transform: analyze v,
// scale per coefficient, synthesize. Symmetric by construction.
inline ImageTensor apply_diagonalized_hessian(std::span<const double> d,
                                              const ImageTensor& v,
                                              const WaveletBasis& basis) {
    if (static_cast<int>(d.size()) != v.size())
        throw std::invalid_argument("diagonalized hessian: diagonal length " +
                                    std::to_string(d.size()) + " vs image size " +
                                    std::to_string(v.size()));
    ImageTensor c = dwt2_forward(v, basis);
    auto fc = c.flat();
    for (std::size_t k = 0; k < fc.size(); ++k) fc[k] *= d[k];
    return dwt2_inverse(c, basis);
}

inline ImageTensor apply_diagonalized_hessian(const HessianDiagonal& d,
                                              const ImageTensor& v,
                                              const WaveletBasis& basis) {
    return apply_diagonalized_hessian(std::span<const double>(d.entries), v, basis);
}

// Depth of each flat coefficient in the quadrant layout: finest detail
// blocks are 0, each coarser level adds 1, the scaling block is `levels`.
inline std::vector<int> wavelet_depth_map(Shape shape, int levels) {
    detail::check_dwt_shape(shape, levels);
    std::vector<int> depth(static_cast<std::size_t>(shape.size()), 0);
    for (int c = 0; c < shape.channels; ++c)
        for (int i = 0; i < shape.height; ++i)
            for (int j = 0; j < shape.width; ++j) {
                int d = 0;
                for (int lvl = 1; lvl <= levels; ++lvl) {
                    const int h = shape.height >> lvl;
                    const int w = shape.width >> lvl;
                    if (i < h && j < w)
                        d = (lvl == levels) ? levels : d;  // still in the LL block
                    else if (i < 2 * h && j < 2 * w) {
                        d = lvl - 1;  // detail block produced at this level
                        break;
                    }
                }
                depth[static_cast<std::size_t>((c * shape.height + i) * shape.width + j)] = d;
            }
    return depth;
}

}  // namespace zaps
