#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zaps {

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;

    int pixels() const { return height * width; }
    int size() const { return channels * height * width; }
    bool operator==(const Shape&) const = default;

    std::string str() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" +
               std::to_string(width);
    }
};

// Planar (channel, row, column) tensor of doubles. Values are unconstrained
// reals; clean images nominally live in [0,1].
class ImageTensor {
public:
    ImageTensor() = default;
    explicit ImageTensor(Shape shape, double fill = 0.0)
        : shape_(shape), data_(static_cast<std::size_t>(shape.size()), fill) {
        if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0)
            throw std::invalid_argument("ImageTensor: non-positive shape " + shape.str());
    }
    ImageTensor(Shape shape, std::vector<double> data)
        : shape_(shape), data_(std::move(data)) {
        if (static_cast<int>(data_.size()) != shape.size())
            throw std::invalid_argument("ImageTensor: data size does not match shape " +
                                        shape.str());
    }

    const Shape& shape() const { return shape_; }
    int size() const { return shape_.size(); }

    double& operator()(int c, int i, int j) {
        return data_[static_cast<std::size_t>((c * shape_.height + i) * shape_.width + j)];
    }
    double operator()(int c, int i, int j) const {
        return data_[static_cast<std::size_t>((c * shape_.height + i) * shape_.width + j)];
    }
    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }

    ImageTensor& operator+=(const ImageTensor& o) {
        check_same(o);
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
        return *this;
    }
    ImageTensor& operator-=(const ImageTensor& o) {
        check_same(o);
        for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
        return *this;
    }
    ImageTensor& operator*=(double a) {
        for (double& v : data_) v *= a;
        return *this;
    }

    friend ImageTensor operator+(ImageTensor a, const ImageTensor& b) { return a += b; }
    friend ImageTensor operator-(ImageTensor a, const ImageTensor& b) { return a -= b; }
    friend ImageTensor operator*(double a, ImageTensor x) { return x *= a; }

    bool finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    void check_same(const ImageTensor& o) const {
        if (!(shape_ == o.shape_))
            throw std::invalid_argument("ImageTensor: shape mismatch " + shape_.str() +
                                        " vs " + o.shape_.str());
    }

    Shape shape_{};
    std::vector<double> data_;
};

inline double dot(const ImageTensor& a, const ImageTensor& b) {
    if (!(a.shape() == b.shape()))
        throw std::invalid_argument("dot: shape mismatch");
    double s = 0.0;
    auto fa = a.flat(), fb = b.flat();
    for (std::size_t k = 0; k < fa.size(); ++k) s += fa[k] * fb[k];
    return s;
}

inline double norm2_sq(const ImageTensor& a) { return dot(a, a); }
inline double norm2(const ImageTensor& a) { return std::sqrt(norm2_sq(a)); }

// y += alpha * x
inline void axpy(double alpha, const ImageTensor& x, ImageTensor& y) {
    if (!(x.shape() == y.shape()))
        throw std::invalid_argument("axpy: shape mismatch");
    auto fx = x.flat();
    auto fy = y.flat();
    for (std::size_t k = 0; k < fx.size(); ++k) fy[k] += alpha * fx[k];
}

}  // namespace zaps
