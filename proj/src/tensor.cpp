#include "dprune/tensor.hpp"

#include <cmath>
#include <sstream>

namespace dprune {

std::size_t Shape::count() const {
    std::size_t n = 1;
    for (std::size_t d : dims) {
        if (d == 0) throw ShapeError("zero extent in shape " + str());
        if (__builtin_mul_overflow(n, d, &n))
            throw SizeError("element count overflows for shape " + str());
    }
    return n;
}

std::string Shape::str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

std::size_t flat_index(const Shape& shape, std::span<const std::size_t> coords) {
    if (coords.size() != shape.rank())
        throw ShapeError("coordinate rank " + std::to_string(coords.size()) +
                         " does not match shape " + shape.str());
    std::size_t idx = 0;
    for (std::size_t axis = 0; axis < coords.size(); ++axis) {
        if (coords[axis] >= shape[axis])
            throw ShapeError("coordinate out of range for shape " + shape.str());
        idx = idx * shape[axis] + coords[axis];
    }
    return idx;
}

std::vector<std::size_t> unflatten(const Shape& shape, std::size_t flat) {
    std::vector<std::size_t> coords(shape.rank());
    for (std::size_t axis = shape.rank(); axis-- > 0;) {
        coords[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    return coords;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_.count(), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.count())
        throw ShapeError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
}

double& Tensor::at(std::initializer_list<std::size_t> coords) {
    return data_[flat_index(shape_, {coords.begin(), coords.size()})];
}

double Tensor::at(std::initializer_list<std::size_t> coords) const {
    return data_[flat_index(shape_, {coords.begin(), coords.size()})];
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                         " vs " + b.shape().str());
}

template <typename F>
Tensor pointwise(const Tensor& a, const Tensor& b, F f, const char* op) {
    require_same_shape(a, b, op);
    Tensor c(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < a.size(); ++i) pc[i] = f(pa[i], pb[i]);
    return c;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return pointwise(a, b, [](double x, double y) { return x + y; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return pointwise(a, b, [](double x, double y) { return x - y; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return pointwise(a, b, [](double x, double y) { return x * y; }, "mul");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2)
        throw ShapeError("matmul: expected rank-2 operands, got " + a.shape().str() +
                         " and " + b.shape().str());
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner extents differ, " + a.shape().str() + " vs " +
                         b.shape().str());
    Tensor c(Shape{m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = pa[i * k + l];
            const double* brow = pb + l * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) {
    if (a.empty()) throw ShapeError("norm: empty vector");
    return std::sqrt(dot(a, a));
}

}  // namespace dprune
