#include "baccae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "baccae/error.hpp"

namespace baccae::nn {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) throw Error(ErrorKind::Dimension, "tensor shape must have at least one axis");
    for (auto d : shape) {
        if (d == 0) throw Error(ErrorKind::Dimension, "tensor axes must be positive, got " + shape_string(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
        throw Error(ErrorKind::Dimension, "data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace baccae::nn
