#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dprune/errors.hpp"

namespace dprune {

// Ordered list of positive extents. Row-major layout everywhere: the last
// axis is fastest.
struct Shape {
    std::vector<std::size_t> dims;

    Shape() = default;
    Shape(std::initializer_list<std::size_t> d) : dims(d) {}
    explicit Shape(std::vector<std::size_t> d) : dims(std::move(d)) {}

    std::size_t rank() const { return dims.size(); }
    std::size_t operator[](std::size_t axis) const { return dims[axis]; }

    // product of extents; throws ShapeError on a zero extent and SizeError
    // when the product overflows
    std::size_t count() const;

    bool operator==(const Shape&) const = default;

    std::string str() const;
};

std::size_t flat_index(const Shape& shape, std::span<const std::size_t> coords);
std::vector<std::size_t> unflatten(const Shape& shape, std::size_t flat);

// Dense 64-bit float array. No broadcasting, no views; all arithmetic is
// explicit about shapes.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);              // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(const Shape& shape) { return Tensor(shape); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // bounds-checked coordinate access; convenient in tests, avoid in hot loops
    double& at(std::initializer_list<std::size_t> coords);
    double at(std::initializer_list<std::size_t> coords) const;

    std::span<const double> span() const { return {data_.data(), data_.size()}; }
    std::span<double> span() { return {data_.data(), data_.size()}; }

    void fill(double v);

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// standard product of two rank-2 tensors [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
inline double dot(const Tensor& a, const Tensor& b) { return dot(a.span(), b.span()); }
inline double norm(const Tensor& a) { return norm(a.span()); }

}  // namespace dprune
