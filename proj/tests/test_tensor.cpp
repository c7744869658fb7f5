#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "dprune/rng.hpp"
#include "dprune/tensor.hpp"
#include "testutil.hpp"

using namespace dprune;
using testing::random_tensor;

TEST_CASE("zeros fills every element") {
    const Tensor sq = Tensor::zeros(Shape{2, 2});
    CHECK(sq.size() == 4);
    for (double v : sq.span()) CHECK(v == 0.0);
    CHECK(Tensor::zeros(Shape{1}).size() == 1);
    const Tensor t = Tensor::zeros(Shape{3, 1, 1, 1});
    CHECK(t.size() == 3);
    for (double v : t.span()) CHECK(v == 0.0);
}

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(Shape({2, 0, 3}).count(), ShapeError);
    const std::size_t big = std::size_t(1) << 33;
    CHECK_THROWS_AS(Shape({big, big}).count(), SizeError);
}

TEST_CASE("elementwise arithmetic") {
    const Tensor a(Shape{2}, {1, 2});
    const Tensor b(Shape{2}, {3, 4});
    CHECK(add(a, b)[0] == 4);
    CHECK(add(a, b)[1] == 6);

    Rng rng(7);
    const Tensor x = random_tensor(Shape{3, 4}, rng);
    const Tensor zero = sub(x, x);
    for (double v : zero.span()) CHECK(v == 0.0);

    const Tensor m = mul(Tensor(Shape{2}, {2, 3}), Tensor(Shape{2}, {0, 5}));
    CHECK(m[0] == 0);
    CHECK(m[1] == 15);

    CHECK_THROWS_AS(add(a, Tensor(Shape{3})), ShapeError);
}

TEST_CASE("elementwise ops are pointwise under permutation") {
    Rng rng(11);
    const Tensor a = random_tensor(Shape{24}, rng);
    const Tensor b = random_tensor(Shape{24}, rng);
    std::vector<std::size_t> perm(24);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 24; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);

    Tensor pa(Shape{24}), pb(Shape{24});
    for (std::size_t i = 0; i < 24; ++i) {
        pa[i] = a[perm[i]];
        pb[i] = b[perm[i]];
    }
    const Tensor c = mul(a, b);
    const Tensor pc = mul(pa, pb);
    for (std::size_t i = 0; i < 24; ++i) CHECK(pc[i] == c[perm[i]]);
}

TEST_CASE("matmul basics") {
    Tensor eye(Shape{3, 3});
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    Rng rng(3);
    const Tensor x = random_tensor(Shape{3, 5}, rng);
    const Tensor ix = matmul(eye, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(ix[i] == x[i]);

    const Tensor a(Shape{2, 2}, {1, 2, 3, 4});
    const Tensor ones(Shape{2, 1}, {1, 1});
    const Tensor r = matmul(a, ones);
    CHECK(r.at({0, 0}) == 3);
    CHECK(r.at({1, 0}) == 7);

    CHECK_THROWS_AS(matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), ShapeError);
}

namespace {

// independent oracle: naive triple loop, explicit index arithmetic
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor c(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[l * n + j];
            c[i * n + j] = s;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul agrees with triple-loop oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t m = 1 + rng.index(16), k = 1 + rng.index(16), n = 1 + rng.index(16);
        const Tensor a = random_tensor(Shape{m, k}, rng);
        const Tensor b = random_tensor(Shape{k, n}, rng);
        const Tensor got = matmul(a, b);
        const Tensor want = matmul_oracle(a, b);
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::abs(got[i] - want[i]) <= 1e-12);
    }
}

TEST_CASE("dot and norm") {
    CHECK(dot(Tensor(Shape{2}, {1, 0}), Tensor(Shape{2}, {0, 1})) == 0.0);
    CHECK(norm(Tensor(Shape{2}, {3, 4})) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK_THROWS_AS(dot(Tensor(Shape{2}), Tensor(Shape{3})), ShapeError);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor v = random_tensor(Shape{1 + rng.index(32)}, rng);
        const double n = norm(v);
        CHECK(std::abs(dot(v, v) - n * n) <= 1e-12);
    }
}

TEST_CASE("row-major index round-trip") {
    const Shape shapes[] = {Shape{5}, Shape{3, 4}, Shape{2, 3, 4}, Shape{2, 3, 2, 4}};
    for (const Shape& s : shapes) {
        for (std::size_t flat = 0; flat < s.count(); ++flat) {
            const auto coords = unflatten(s, flat);
            CHECK(flat_index(s, coords) == flat);
        }
    }
    // [i,j,k] -> (i*J + j)*K + k
    const Shape s{4, 5, 6};
    const std::size_t coords[] = {2, 3, 4};
    CHECK(flat_index(s, coords) == (2 * 5 + 3) * 6 + 4);
}
