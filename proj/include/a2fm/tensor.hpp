#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace a2fm {

using Shape = std::vector<int>;

// Dense row-major tensor of doubles. Extents must be >= 1 except for the
// special empty tensor (rank 0, no elements), which append_frames accepts
// as "no dummy frames".
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, double fill);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros_like(const Tensor& other);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int extent(int axis) const;
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Row-major offset for rank-4 indexing (the video/weight layout).
    std::size_t offset4(int a, int b, int c, int d) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Round every element to its nearest f32 value (still stored as double).
    void quantize_f32();

private:
    Shape shape_;
    std::vector<double> data_;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Deterministic uniform doubles from raw mt19937_64 output bits.
// std:: distributions are implementation-defined, so the mapping is
// hand-rolled: u = (x >> 11) * 2^-53 in [0,1).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased-enough for toy sizes; n must be >= 1.
    int uniform_int(int n) { return static_cast<int>(raw() % static_cast<std::uint64_t>(n)); }

    // Derive a child seed; splitmix64 finalizer keeps siblings uncorrelated.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt);

private:
    std::mt19937_64 engine_;
};

}  // namespace a2fm
