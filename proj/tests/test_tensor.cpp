#include <doctest.h>

#include <cmath>
#include <vector>

#include "cob/rng.hpp"
#include "cob/tensor.hpp"

using cob::Tape;
using cob::Tensor;

namespace {

Tensor randn_like(int rows, int cols, std::uint64_t seed, bool requires_grad,
                  double lo = -1.0, double hi = 1.0) {
    cob::Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_values(rows, cols, std::move(v), requires_grad);
}

// Keep relu inputs away from the kink so finite differences stay valid.
Tensor randn_no_kink(int rows, int cols, std::uint64_t seed) {
    cob::Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (double& x : v) {
        do {
            x = rng.uniform(-1.0, 1.0);
        } while (std::abs(x) < 1e-3);
    }
    return Tensor::from_values(rows, cols, std::move(v), true);
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
    Tape tape;
    const Tensor x = Tensor::from_values(1, 3, {0.0, 0.0, 0.0});
    const Tensor y = tape.row_softmax(x);
    for (int c = 0; c < 3; ++c) CHECK(y.at(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax is shift invariant and row stochastic") {
    Tape tape;
    const Tensor a = Tensor::from_values(1, 3, {1.0, 2.0, 3.0});
    const Tensor b = Tensor::from_values(1, 3, {101.0, 102.0, 103.0});
    const Tensor ya = tape.row_softmax(a);
    const Tensor yb = tape.row_softmax(b);
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
        CHECK(ya.at(0, c) == doctest::Approx(yb.at(0, c)).epsilon(1e-12));
        sum += ya.at(0, c);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("identity matmul returns its argument") {
    Tape tape;
    const Tensor eye = Tensor::from_values(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const Tensor m = randn_like(3, 4, 7, false);
    const Tensor y = tape.matmul(eye, m);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) CHECK(y.at(r, c) == doctest::Approx(m.at(r, c)).epsilon(1e-14));
}

TEST_CASE("matmul transpose flags agree with explicit transposes") {
    const Tensor a = randn_like(3, 2, 11, false);
    const Tensor b = randn_like(3, 4, 12, false);
    Tape tape;
    const Tensor y = tape.matmul(a, b, true, false);  // (2x3)(3x4)
    REQUIRE(y.rows() == 2);
    REQUIRE(y.cols() == 4);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) {
            double want = 0.0;
            for (int k = 0; k < 3; ++k) want += a.at(k, r) * b.at(k, c);
            CHECK(y.at(r, c) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("layer norm of a constant row gives beta") {
    Tape tape;
    const Tensor x = Tensor::from_values(2, 4, {5, 5, 5, 5, -2, -2, -2, -2});
    const Tensor gamma = Tensor::from_values(1, 4, {1, 1, 1, 1});
    const Tensor beta = Tensor::from_values(1, 4, {0, 0, 0, 0});
    const Tensor y = tape.layer_norm(x, gamma, beta);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) CHECK(std::abs(y.at(r, c)) < 1e-12);
}

TEST_CASE("layer norm output is standardized") {
    Tape tape;
    const Tensor x = randn_like(1, 8, 21, false, -3.0, 3.0);
    const Tensor gamma = Tensor::from_values(1, 8, std::vector<double>(8, 1.0));
    const Tensor beta = Tensor::from_values(1, 8, std::vector<double>(8, 0.0));
    const Tensor y = tape.layer_norm(x, gamma, beta);
    double mean = 0.0, var = 0.0;
    for (int c = 0; c < 8; ++c) mean += y.at(0, c);
    mean /= 8.0;
    for (int c = 0; c < 8; ++c) var += (y.at(0, c) - mean) * (y.at(0, c) - mean);
    var /= 8.0;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("dropout keeps scale and freezes its mask by seed") {
    const Tensor x = Tensor::from_values(4, 5, std::vector<double>(20, 1.0), true);
    Tape t1, t2;
    const Tensor y1 = t1.dropout(x, 0.4, true, 77);
    const Tensor y2 = t2.dropout(x, 0.4, true, 77);
    bool any_zero = false;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 5; ++c) {
            CHECK(y1.at(r, c) == y2.at(r, c));
            const double v = y1.at(r, c);
            CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.6).epsilon(1e-12)));
            if (v == 0.0) any_zero = true;
        }
    CHECK(any_zero);

    Tape t3;
    const Tensor y3 = t3.dropout(x, 0.4, false, 77);
    CHECK(y3.d.get() == x.d.get());
    Tape t4;
    const Tensor y4 = t4.dropout(x, 0.0, true, 77);
    CHECK(y4.d.get() == x.d.get());
}

TEST_CASE("backward through sum of squares doubles the input") {
    const Tensor x = Tensor::from_values(1, 2, {1.0, 2.0}, true);
    Tape tape;
    const Tensor loss = tape.sum_all(tape.elementwise_mul(x, x));
    CHECK(loss.item() == doctest::Approx(5.0));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("sum of a softmax row has vanishing gradient") {
    const Tensor x = Tensor::from_values(1, 4, {0.3, -0.7, 1.1, 0.2}, true);
    Tape tape;
    const Tensor loss = tape.sum_all(tape.row_softmax(x));
    tape.backward(loss);
    for (double g : x.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("backward is linear in the loss weights") {
    const Tensor x = Tensor::from_values(1, 1, {0.5}, true);
    const Tensor y = Tensor::from_values(1, 1, {-1.5}, true);
    Tape tape;
    const Tensor loss = tape.add(tape.scale(x, 3.0), tape.scale(y, -2.0));
    tape.backward(tape.sum_all(loss));
    CHECK(x.grad()[0] == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(y.grad()[0] == doctest::Approx(-2.0).epsilon(1e-10));
}

TEST_CASE("a tape can only be walked backward once") {
    const Tensor x = Tensor::from_values(1, 1, {2.0}, true);
    Tape tape;
    const Tensor loss = tape.sum_all(tape.elementwise_mul(x, x));
    tape.backward(loss);
    CHECK(tape.consumed());
    CHECK_THROWS_AS(tape.backward(loss), cob::ContractError);
}

TEST_CASE("backward rejects a non-scalar root") {
    const Tensor x = Tensor::from_values(1, 2, {1.0, 2.0}, true);
    Tape tape;
    const Tensor y = tape.scale(x, 2.0);
    CHECK_THROWS_AS(tape.backward(y), cob::ContractError);
}

TEST_CASE("empty tape backward is rejected") {
    Tape tape;
    const Tensor x = Tensor::from_values(1, 1, {1.0}, true);
    CHECK_THROWS_AS(tape.backward(x), cob::ContractError);
}

TEST_CASE("grad_check on a quadratic is nearly exact") {
    const Tensor w = Tensor::from_values(2, 2, {0.5, -1.0, 2.0, 0.25}, true);
    const auto build = [&](Tape& t) {
        return t.sum_all(t.elementwise_mul(w, w));
    };
    const auto res = cob::grad_check(build, {w});
    CHECK(res.coords_checked == 4);
    CHECK(res.max_rel_error < 1e-9);
}

TEST_CASE("finite differences validate every primitive") {
    const Tensor a = randn_no_kink(3, 4, 100);
    const Tensor b = randn_no_kink(4, 5, 101);
    const Tensor c = randn_no_kink(3, 4, 102);
    const Tensor gamma = randn_like(1, 4, 103, true, 0.5, 1.5);
    const Tensor beta = randn_like(1, 4, 104, true, -0.5, 0.5);

    SUBCASE("matmul") {
        const auto build = [&](Tape& t) { return t.sum_all(t.elementwise_mul(t.matmul(a, b), t.matmul(a, b))); };
        CHECK(cob::grad_check(build, {a, b}).max_rel_error < 1e-6);
    }
    SUBCASE("matmul transposed") {
        const auto build = [&](Tape& t) { return t.sum_all(t.matmul(a, c, true, false)); };
        CHECK(cob::grad_check(build, {a, c}).max_rel_error < 1e-6);
    }
    SUBCASE("add with bias broadcast") {
        const Tensor bias = randn_like(1, 4, 105, true);
        const auto build = [&](Tape& t) {
            const Tensor s = t.add(a, bias);
            return t.sum_all(t.elementwise_mul(s, s));
        };
        CHECK(cob::grad_check(build, {a, bias}).max_rel_error < 1e-6);
    }
    SUBCASE("relu") {
        const auto build = [&](Tape& t) { return t.sum_all(t.elementwise_mul(t.relu(a), t.relu(a))); };
        CHECK(cob::grad_check(build, {a}).max_rel_error < 1e-6);
    }
    SUBCASE("row softmax") {
        const auto build = [&](Tape& t) {
            const Tensor y = t.row_softmax(a);
            return t.sum_all(t.elementwise_mul(y, c));
        };
        CHECK(cob::grad_check(build, {a}).max_rel_error < 1e-6);
    }
    SUBCASE("layer norm") {
        const auto build = [&](Tape& t) {
            const Tensor y = t.layer_norm(a, gamma, beta);
            return t.sum_all(t.elementwise_mul(y, c));
        };
        CHECK(cob::grad_check(build, {a, gamma, beta}).max_rel_error < 1e-6);
    }
    SUBCASE("log") {
        const Tensor pos = randn_like(2, 3, 106, true, 0.2, 2.0);
        const auto build = [&](Tape& t) { return t.sum_all(t.log(pos)); };
        CHECK(cob::grad_check(build, {pos}).max_rel_error < 1e-6);
    }
    SUBCASE("scale and concat") {
        const auto build = [&](Tape& t) {
            const Tensor s = t.concat_cols(t.scale(a, -1.7), c);
            return t.sum_all(t.elementwise_mul(s, s));
        };
        CHECK(cob::grad_check(build, {a, c}).max_rel_error < 1e-6);
    }
    SUBCASE("mean_rows and row_gather") {
        const std::vector<int> groups{0, 1, 0};
        const std::vector<int> gather{1, 0, 1, 1};
        const auto build = [&](Tape& t) {
            const Tensor m = t.mean_rows(a, groups, 2);
            const Tensor g = t.row_gather(m, gather);
            return t.sum_all(t.elementwise_mul(g, g));
        };
        CHECK(cob::grad_check(build, {a}).max_rel_error < 1e-6);
    }
    SUBCASE("dropout with frozen seed") {
        const auto build = [&](Tape& t) {
            const Tensor y = t.dropout(a, 0.3, true, 55);
            return t.sum_all(t.elementwise_mul(y, y));
        };
        CHECK(cob::grad_check(build, {a}).max_rel_error < 1e-6);
    }
}

TEST_CASE("unused parameters receive exactly zero gradient") {
    const Tensor used = Tensor::from_values(1, 2, {1.0, 2.0}, true);
    const Tensor unused = Tensor::from_values(1, 2, {3.0, 4.0}, true);
    Tape tape;
    const Tensor loss = tape.sum_all(tape.elementwise_mul(used, used));
    tape.backward(loss);
    cob::zero_grad({unused});
    CHECK(unused.grad()[0] == 0.0);
    CHECK(unused.grad()[1] == 0.0);
    const auto build = [&](Tape& t) { return t.sum_all(t.elementwise_mul(used, used)); };
    const auto res = cob::grad_check(build, {used, unused});
    CHECK(res.coords_checked == 4);
    CHECK(res.max_rel_error < 1e-9);
}

TEST_CASE("sparse multiply matches a dense reference") {
    // 3x3: [[2,0,1],[0,0,3],[1,1,0]]
    cob::SparseMatrix s;
    s.rows = 3;
    s.cols = 3;
    s.offsets = {0, 2, 3, 5};
    s.col_index = {0, 2, 2, 0, 1};
    s.weights = {2.0, 1.0, 3.0, 1.0, 1.0};
    const Tensor x = randn_like(3, 2, 200, true);
    Tape tape;
    const Tensor y = tape.spmm(s, x);
    const double dense[3][3] = {{2, 0, 1}, {0, 0, 3}, {1, 1, 0}};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) {
            double want = 0.0;
            for (int k = 0; k < 3; ++k) want += dense[r][k] * x.at(k, c);
            CHECK(y.at(r, c) == doctest::Approx(want).epsilon(1e-12));
        }
    const auto build = [&](Tape& t) {
        const Tensor z = t.spmm(s, x);
        return t.sum_all(t.elementwise_mul(z, z));
    };
    CHECK(cob::grad_check(build, {x}).max_rel_error < 1e-6);
}

TEST_CASE("row_select keeps masked rows in order") {
    const Tensor x = Tensor::from_values(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
    Tape tape;
    const Tensor y = tape.row_select(x, {1, 0, 0, 1});
    REQUIRE(y.rows() == 2);
    CHECK(y.at(0, 0) == 1);
    CHECK(y.at(0, 1) == 2);
    CHECK(y.at(1, 0) == 7);
    CHECK(y.at(1, 1) == 8);
}

TEST_CASE("row_gather accumulates gradient over duplicate rows") {
    const Tensor x = Tensor::from_values(2, 1, {1.0, 10.0}, true);
    Tape tape;
    const Tensor y = tape.row_gather(x, {0, 0, 1});
    const Tensor loss = tape.sum_all(y);
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(1.0));
}

TEST_CASE("detach blocks gradient flow") {
    const Tensor x = Tensor::from_values(1, 1, {3.0}, true);
    Tape tape;
    const Tensor d = tape.detach(x);
    CHECK_FALSE(d.requires_grad());
    const Tensor loss = tape.sum_all(tape.elementwise_mul(d, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(3.0));
}

TEST_CASE("mean_rows averages groups and concat composes shapes") {
    const Tensor x = Tensor::from_values(3, 2, {1, 2, 3, 4, 5, 6});
    Tape tape;
    const Tensor m = tape.mean_rows(x, {0, 1, 0}, 2);
    REQUIRE(m.rows() == 2);
    CHECK(m.at(0, 0) == doctest::Approx(3.0));
    CHECK(m.at(0, 1) == doctest::Approx(4.0));
    CHECK(m.at(1, 0) == doctest::Approx(3.0));
    CHECK(m.at(1, 1) == doctest::Approx(4.0));
    CHECK_THROWS_AS(tape.mean_rows(x, {0, 0, 0}, 2), cob::ValidationError);
    const Tensor joined = tape.concat_rows({m, m, m});
    CHECK(joined.rows() == 6);
    const Tensor wide = tape.concat_cols(m, m);
    CHECK(wide.cols() == 4);
}

TEST_CASE("shape mismatches are rejected") {
    Tape tape;
    const Tensor a = Tensor::from_values(2, 2, {1, 2, 3, 4});
    const Tensor b = Tensor::from_values(3, 2, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(tape.add(a, b), cob::ShapeError);
    CHECK_THROWS_AS(tape.matmul(a, b), cob::ShapeError);
    CHECK_THROWS_AS(tape.elementwise_mul(a, b), cob::ShapeError);
}

TEST_CASE("non-finite results raise a numerical fault") {
    Tape tape;
    const Tensor big = Tensor::from_values(1, 1, {1e308});
    CHECK_THROWS_AS(tape.elementwise_mul(big, big), cob::NumericalFault);
}
