#include <doctest.h>

#include <cmath>

#include "flash/ops.hpp"
#include "flash/tensor.hpp"

using namespace flash;

TEST_SUITE("tensor") {

TEST_CASE("construction and shape") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.rank() == 2);
    CHECK(t.numel() == 6);
    CHECK(t.size(1) == 3);
    CHECK(t.at(5) == 1.5);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
    CHECK(Tensor::scalar(4.0).item() == 4.0);
    CHECK(shape_str({2, 3}) == "[2, 3]");
}

TEST_CASE("handles share storage, clone does not") {
    Tensor a({2}, std::vector<double>{1, 2});
    Tensor b = a;
    b.mutable_data()[0] = 9;
    CHECK(a.at(0) == 9);
    Tensor c = a.clone();
    c.mutable_data()[1] = 7;
    CHECK(a.at(1) == 2);
}

TEST_CASE("sum backward gives ones") {
    Tensor x = Tensor::parameter({3}, {1, -2, 3});
    ops::sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("sum of squares backward gives 2x") {
    Tensor x = Tensor::parameter({4}, {0.5, -1, 2, 3});
    ops::sum(ops::square(x)).backward();
    for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x.at(i)));
}

TEST_CASE("leaf gradients accumulate until zeroed") {
    Tensor x = Tensor::parameter({2}, {1, 2});
    Tensor loss = ops::sum(ops::scale(x, 3.0));
    loss.backward();
    loss.backward();
    CHECK(x.grad()[0] == 6.0);
    x.zero_grad();
    loss.backward();
    CHECK(x.grad()[0] == 3.0);
}

TEST_CASE("backward requires a scalar") {
    Tensor x = Tensor::parameter({2}, {1, 2});
    CHECK_THROWS_AS(ops::scale(x, 2.0).backward(), std::logic_error);
}

TEST_CASE("diamond graph sums both paths") {
    Tensor x = Tensor::parameter({1}, {3.0});
    Tensor y = ops::mul(x, x);
    ops::sum(ops::add(y, x)).backward();
    CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("no-grad guard builds no graph") {
    Tensor x = Tensor::parameter({2}, {1, 2});
    {
        NoGradGuard g;
        CHECK_FALSE(grad_mode_enabled());
        Tensor y = ops::scale(x, 2.0);
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(grad_mode_enabled());
    CHECK(ops::scale(x, 2.0).requires_grad());
}

TEST_CASE("detach cuts the graph") {
    Tensor x = Tensor::parameter({2}, {1, 2});
    Tensor d = ops::scale(x, 2.0).detach();
    CHECK_FALSE(d.requires_grad());
    CHECK(d.at(1) == 4.0);
}

TEST_CASE("rng is deterministic and split streams differ") {
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng s1 = Rng(42).split(1), s2 = Rng(42).split(2), s1b = Rng(42).split(1);
    CHECK(s1.seed() == s1b.seed());
    CHECK(s1.seed() != s2.seed());
    double sum = 0;
    Rng u(3);
    for (int i = 0; i < 10000; ++i) {
        const double x = u.uniform();
        CHECK((x >= 0.0 && x < 1.0));
        sum += x;
    }
    CHECK(sum / 10000 == doctest::Approx(0.5).epsilon(0.02));
}

}
