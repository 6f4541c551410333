#include <doctest.h>

#include <cmath>
#include <set>

#include "drnet/error.hpp"
#include "drnet/tensor.hpp"

using namespace drnet;

TEST_SUITE("tensor") {
  TEST_CASE("shape basics") {
    const Shape s{2, 3, 4};
    CHECK(s.rank() == 3);
    CHECK(s.numel() == 24);
    CHECK(s.str() == "[2,3,4]");
    CHECK(s == Shape{2, 3, 4});
    CHECK_FALSE(s == Shape{2, 4, 3});
  }

  TEST_CASE("construction validates shape and data length") {
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    Tensor<double> t(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
    CHECK(t.sum() == 10.0);
    CHECK(t.reshaped(Shape{4})[3] == 4.0);
    CHECK_THROWS_AS(t.reshaped(Shape{3}), ShapeError);
    CHECK_THROWS_AS(t.item(), ShapeError);
    CHECK(Tensor<float>::scalar(2.5f).item() == 2.5f);
  }

  TEST_CASE("NCHW indexing is row-major") {
    Tensor<float> t(Shape{2, 3, 4, 5});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i);
    CHECK(t.at(1, 2, 3, 4) == static_cast<float>(((1 * 3 + 2) * 4 + 3) * 5 + 4));
  }

  TEST_CASE("cast preserves values") {
    Tensor<double> t(Shape{3}, std::vector<double>{0.5, -1.25, 3.0});
    const auto f = t.cast<float>();
    CHECK(f[1] == -1.25f);
  }
}

TEST_SUITE("tensor") {
  TEST_CASE("rng streams are reproducible and independent") {
    RngStream a(7, 1), b(7, 1), c(7, 2);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      seen.insert(x);
    }
    CHECK(seen.size() == 100);
    RngStream a2(7, 1);
    CHECK(a2.next_u64() != c.next_u64());
  }

  TEST_CASE("rng uniform and normal moments") {
    RngStream r(123);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, lo = 1, hi = 0;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      lo = std::min(lo, u);
      hi = std::max(hi, u);
      su += u;
      const double z = r.normal();
      sn += z;
      sn2 += z * z;
    }
    CHECK(lo >= 0.0);
    CHECK(hi < 1.0);
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(sn / n) < 0.01);
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  }

  TEST_CASE("rng below stays in range and hits every value") {
    RngStream r(5);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
      const auto v = r.below(7);
      CHECK(v < 7);
      seen.insert(v);
    }
    CHECK(seen.size() == 7);
  }

  TEST_CASE("mix is order sensitive") {
    CHECK(RngStream::mix({1, 2}) != RngStream::mix({2, 1}));
    CHECK(RngStream::mix({1, 2}) == RngStream::mix({1, 2}));
  }
}
