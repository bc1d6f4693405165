#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace softmesh {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

// Error type for everything raised by the tensor layer.
class TensorError : public std::runtime_error {
public:
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense row-major array of doubles.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape)
        : shape_(std::move(shape)), data_(static_cast<size_t>(numel(shape_)), 0.0) {}
    Array(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel(shape_) != static_cast<int64_t>(data_.size()))
            throw TensorError("Array: shape " + shape_str(shape_) + " does not match data size " +
                              std::to_string(data_.size()));
    }
    Array(Shape shape, double fill)
        : shape_(std::move(shape)), data_(static_cast<size_t>(numel(shape_)), fill) {}

    static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }

    const Shape& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double item() const {
        if (data_.size() != 1)
            throw TensorError("Array::item on non-scalar of shape " + shape_str(shape_));
        return data_[0];
    }

    bool same_shape(const Array& o) const { return shape_ == o.shape_; }

    Array reshaped(Shape s) const {
        if (numel(s) != size())
            throw TensorError("reshape: " + shape_str(shape_) + " -> " + shape_str(s));
        return Array(std::move(s), data_);
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

bool all_finite(const Array& a);

}  // namespace softmesh
