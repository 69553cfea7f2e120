#include "a2fm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace a2fm {

static void check_extents(const Shape& shape) {
    for (int e : shape) {
        if (e < 1) {
            throw std::invalid_argument("tensor extent must be >= 1, got shape " + shape_str(shape));
        }
    }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_extents(shape_);
    if (data_.size() != shape_numel(shape_)) {
        throw std::invalid_argument("value count " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::zeros_like(const Tensor& other) {
    return other.rank() == 0 ? Tensor() : Tensor(other.shape());
}

int Tensor::extent(int axis) const {
    if (axis < 0 || axis >= rank()) {
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::offset4(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::quantize_f32() {
    for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return shape.empty() ? 0 : n;
}

std::uint64_t Rng::mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace a2fm
