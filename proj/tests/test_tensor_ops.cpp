#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dafd/errors.hpp"
#include "dafd/ops.hpp"
#include "dafd/tensor.hpp"
#include "support/oracles.hpp"

using namespace dafd;
using dafd::testing::GradCheck;
using dafd::testing::random_tensor;

TEST_CASE("tensor shape and data invariants") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
    CHECK(Tensor::scalar(4.5).item() == 4.5);
    CHECK_THROWS_AS(Tensor({2, 2}).item(), UsageError);
    CHECK_FALSE(t.has_grad());
    t.grad_data()[0] = 1.0;
    CHECK(t.has_grad());
    CHECK(t.grad().size() == 6);
    t.drop_grad();
    CHECK_FALSE(t.has_grad());
}

TEST_CASE("backward of sum gives ones") {
    Tensor x({3}, {5.0, -1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum(&tape, x);
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of sum(x*x) doubles the input") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum(&tape, mul(&tape, x, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("repeated backward accumulates into leaves") {
    Tensor x({2}, {3.0, 4.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor loss = sum(&tape, mul(&tape, x, x));
    tape.backward(loss);
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(12.0));  // 2 * (2*3)
    CHECK(x.grad()[1] == doctest::Approx(16.0));
}

TEST_CASE("backward requires a scalar loss") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = mul(&tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), UsageError);
}

TEST_CASE("dense identity weight reproduces the input") {
    Tensor x({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor b({2});
    Tensor y = dense(nullptr, x, w, b);
    for (size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("dense hand arithmetic") {
    Tensor x({1, 2}, {1.0, 2.0});
    Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor b({2}, {3.0, 4.0});
    Tensor y = dense(nullptr, x, w, b);
    CHECK(y.data()[0] == 4.0);
    CHECK(y.data()[1] == 6.0);
}

TEST_CASE("dense shape mismatch is rejected") {
    Tensor x({1, 3});
    Tensor w({2, 2});
    Tensor b({2});
    CHECK_THROWS_AS(dense(nullptr, x, w, b), ShapeError);
}

TEST_CASE("dense gradients match finite differences") {
    SeededRng rng(42);
    Tensor x = random_tensor(rng, {3, 4});
    Tensor w = random_tensor(rng, {4, 5});
    Tensor b = random_tensor(rng, {5});
    GradCheck gc{[&](Tape& t) { return sum(&t, mul(&t, dense(&t, x, w, b), dense(&t, x, w, b))); },
                 {x, w, b}};
    CHECK(gc.max_rel_err() < 1e-4);
}

TEST_CASE("conv1d zero input yields the channel bias") {
    Tensor x({2, 5, 3});
    SeededRng rng(7);
    Tensor k = random_tensor(rng, {3, 3, 4}, -1, 1, false);
    Tensor b({4}, {0.5, -1.0, 2.0, 0.0});
    Tensor y = conv1d(nullptr, x, k, b);
    REQUIRE(y.shape() == Shape{2, 5, 4});
    for (size_t r = 0; r < 10; ++r)
        for (size_t o = 0; o < 4; ++o) CHECK(y.data()[r * 4 + o] == b.data()[o]);
}

TEST_CASE("conv1d identity kernel reproduces the input") {
    Tensor x({1, 4, 1}, {1.0, -2.0, 3.0, 0.5});
    Tensor k({3, 1, 1}, {0.0, 1.0, 0.0});
    Tensor b({1});
    Tensor y = conv1d(nullptr, x, k, b);
    for (size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv1d matches the direct convolution and finite differences") {
    SeededRng rng(3);
    Tensor x = random_tensor(rng, {2, 8, 3});
    Tensor k = random_tensor(rng, {3, 3, 2});
    Tensor b = random_tensor(rng, {2});
    Tensor y = conv1d(nullptr, x, k, b);
    const auto oracle =
        dafd::testing::naive_conv1d(x.values(), 2, 8, 3, k.values(), 3, 2, b.values());
    for (size_t i = 0; i < oracle.size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(oracle[i]).epsilon(1e-12));

    GradCheck gc{[&](Tape& t) {
                     Tensor c = conv1d(&t, x, k, b);
                     return sum(&t, mul(&t, c, c));
                 },
                 {x, k, b}};
    CHECK(gc.max_rel_err() < 1e-4);
}

TEST_CASE("conv1d channel mismatch is a configuration error") {
    Tensor x({1, 4, 2});
    Tensor k({3, 3, 1});
    Tensor b({1});
    CHECK_THROWS_AS(conv1d(nullptr, x, k, b), ConfigError);
}

TEST_CASE("activations hit their anchor values") {
    Tensor x({3}, {0.0, -3.0, 3.0});
    Tensor s = sigmoid(nullptr, x);
    CHECK(s.data()[0] == 0.5);
    Tensor r = relu(nullptr, x);
    CHECK(r.data()[0] == 0.0);
    CHECK(r.data()[1] == 0.0);
    CHECK(r.data()[2] == 3.0);
}

TEST_CASE("sigmoid gradient at zero is a quarter") {
    Tensor x({1}, {0.0});
    x.set_requires_grad(true);
    GradCheck gc{[&](Tape& t) { return sum(&t, sigmoid(&t, x)); }, {x}};
    CHECK(gc.max_rel_err() < 1e-4);
    Tape tape;
    Tensor loss = sum(&tape, sigmoid(&tape, x));
    x.drop_grad();
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("activation gradients match finite differences on random input") {
    SeededRng rng(11);
    Tensor x = random_tensor(rng, {4, 6}, -2.0, 2.0);
    GradCheck gs{[&](Tape& t) { return sum(&t, mul(&t, sigmoid(&t, x), sigmoid(&t, x))); }, {x}};
    CHECK(gs.max_rel_err() < 1e-4);
    // Keep clear of the kink at zero for the ReLU check.
    for (auto& v : x.values())
        if (std::abs(v) < 0.1) v += 0.5;
    GradCheck gr{[&](Tape& t) { return sum(&t, mul(&t, relu(&t, x), relu(&t, x))); }, {x}};
    CHECK(gr.max_rel_err() < 1e-4);
}

TEST_CASE("dropout eval mode returns the input unchanged") {
    SeededRng rng(1);
    Tensor x = random_tensor(rng, {10});
    SeededRng drop(2);
    Tensor y = dropout(nullptr, x, 0.5, false, drop);
    CHECK(y.same_node(x));
}

TEST_CASE("dropout rate zero is the identity in training mode") {
    SeededRng rng(1);
    Tensor x = random_tensor(rng, {10});
    SeededRng drop(2);
    Tensor y = dropout(nullptr, x, 0.0, true, drop);
    for (size_t i = 0; i < 10; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("dropout rejects rates at or above one") {
    Tensor x({2});
    SeededRng drop(2);
    CHECK_THROWS_AS(dropout(nullptr, x, 1.0, true, drop), ConfigError);
}

TEST_CASE("dropout survivor statistics at rate one half") {
    const size_t n = 100000;
    Tensor x = Tensor::full({n}, 1.0);
    SeededRng drop(1234);
    Tensor y = dropout(nullptr, x, 0.5, true, drop);
    size_t survivors = 0;
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (y.data()[i] != 0.0) ++survivors;
        mean += y.data()[i];
    }
    mean /= (double)n;
    const double fraction = (double)survivors / (double)n;
    CHECK(fraction > 0.49);
    CHECK(fraction < 0.51);
    CHECK(std::abs(mean - 1.0) < 0.02);
}

TEST_CASE("dropout gradient equals its mask") {
    SeededRng rng(5);
    Tensor x = random_tensor(rng, {64});
    Tape tape;
    SeededRng drop(99);
    Tensor y = dropout(&tape, x, 0.5, true, drop);
    Tensor loss = sum(&tape, y);
    tape.backward(loss);
    for (size_t i = 0; i < 64; ++i) {
        const double mask = y.data()[i] == 0.0 ? 0.0 : 2.0;
        CHECK(x.grad()[i] == mask);
    }
}

TEST_CASE("softmax cross entropy on uniform logits is log C") {
    Tensor logits({2, 10});
    Tensor loss = softmax_cross_entropy(nullptr, logits, {3, 7});
    CHECK(loss.item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy saturates to zero on confident logits") {
    Tensor logits({1, 10});
    logits.data()[4] = 1000.0;
    Tensor loss = softmax_cross_entropy(nullptr, logits, {4});
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::isfinite(loss.item()));
}

TEST_CASE("softmax cross entropy rejects out-of-range labels") {
    Tensor logits({1, 10});
    CHECK_THROWS_AS(softmax_cross_entropy(nullptr, logits, {10}), DataError);
    CHECK_THROWS_AS(softmax_cross_entropy(nullptr, logits, {-1}), DataError);
}

TEST_CASE("softmax cross entropy gradients match finite differences") {
    SeededRng rng(17);
    Tensor logits = random_tensor(rng, {4, 10}, -2.0, 2.0);
    const std::vector<int> labels = {0, 3, 9, 3};
    GradCheck gc{[&](Tape& t) { return softmax_cross_entropy(&t, logits, labels); }, {logits}};
    CHECK(gc.max_rel_err() < 1e-4);
}

TEST_CASE("gradient reversal is the identity forward") {
    SeededRng rng(21);
    Tensor x = random_tensor(rng, {3, 4});
    Tensor y = gradient_reversal(nullptr, x, 1.0);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
    CHECK_THROWS_AS(gradient_reversal(nullptr, x, -0.5), UsageError);
}

TEST_CASE("gradient reversal negates the upstream gradient exactly") {
    Tensor x({3}, {1.0, 2.0, 3.0});
    x.set_requires_grad(true);
    Tensor c({3}, {2.0, -3.0, 5.0});
    Tape tape;
    Tensor y = gradient_reversal(&tape, x, 1.0);
    Tensor loss = sum(&tape, mul(&tape, y, c));
    tape.backward(loss);
    CHECK(x.grad()[0] == -2.0);
    CHECK(x.grad()[1] == 3.0);
    CHECK(x.grad()[2] == -5.0);
}

TEST_CASE("gradient reversal scales a composed chain by minus lambda") {
    Tensor x({1}, {0.7});
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = scale(&tape, gradient_reversal(&tape, x, 0.1), 3.0);
    Tensor loss = sum(&tape, y);
    tape.backward(loss);
    // d/dx of 3x is 3; through the reversal: -0.1 * 3.
    CHECK(x.grad()[0] == doctest::Approx(-0.3).epsilon(1e-15));
}

TEST_CASE("gradient reversal at lambda zero leaves no trace") {
    Tensor x({2}, {1.0, -1.0});
    x.set_requires_grad(true);
    Tape tape;
    Tensor y = gradient_reversal(&tape, x, 0.0);
    Tensor loss = sum(&tape, y);
    tape.backward(loss);
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("batch norm train mode standardizes the batch") {
    SeededRng rng(31);
    Tensor x = random_tensor(rng, {32, 5}, -4.0, 4.0, false);
    Tensor gamma = Tensor::full({5}, 1.0);
    Tensor beta({5});
    std::vector<double> bm, bv;
    Tensor y = batch_norm_train(nullptr, x, gamma, beta, 1e-12, &bm, &bv);
    for (size_t j = 0; j < 5; ++j) {
        double m = 0.0, v = 0.0;
        for (size_t r = 0; r < 32; ++r) m += y.data()[r * 5 + j];
        m /= 32.0;
        for (size_t r = 0; r < 32; ++r) {
            const double d = y.data()[r * 5 + j] - m;
            v += d * d;
        }
        v /= 32.0;
        CHECK(std::abs(m) < 1e-6);
        CHECK(std::abs(v - 1.0) < 1e-6);
    }
}

TEST_CASE("batch norm affine transform shifts mean and spread") {
    SeededRng rng(37);
    Tensor x = random_tensor(rng, {64, 3}, -1.0, 1.0, false);
    Tensor gamma = Tensor::full({3}, 2.0);
    Tensor beta = Tensor::full({3}, 3.0);
    Tensor y = batch_norm_train(nullptr, x, gamma, beta, 1e-12, nullptr, nullptr);
    for (size_t j = 0; j < 3; ++j) {
        double m = 0.0, v = 0.0;
        for (size_t r = 0; r < 64; ++r) m += y.data()[r * 3 + j];
        m /= 64.0;
        for (size_t r = 0; r < 64; ++r) {
            const double d = y.data()[r * 3 + j] - m;
            v += d * d;
        }
        v /= 64.0;
        CHECK(m == doctest::Approx(3.0).epsilon(1e-6));
        CHECK(std::sqrt(v) == doctest::Approx(2.0).epsilon(1e-6));
    }
}

TEST_CASE("batch norm eval with unit statistics is the identity up to epsilon") {
    SeededRng rng(41);
    Tensor x = random_tensor(rng, {8, 4}, -2.0, 2.0, false);
    Tensor gamma = Tensor::full({4}, 1.0);
    Tensor beta({4});
    const std::vector<double> mean(4, 0.0), var(4, 1.0);
    Tensor y = batch_norm_eval(nullptr, x, gamma, beta, mean, var, 1e-5);
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-4));
}

TEST_CASE("batch norm train mode needs two rows") {
    Tensor x({1, 4});
    Tensor gamma = Tensor::full({4}, 1.0);
    Tensor beta({4});
    CHECK_THROWS_AS(batch_norm_train(nullptr, x, gamma, beta, 1e-5, nullptr, nullptr),
                    TrainingError);
}

TEST_CASE("batch norm gradients match finite differences") {
    SeededRng rng(43);
    Tensor x = random_tensor(rng, {6, 3}, -2.0, 2.0);
    Tensor gamma = random_tensor(rng, {3}, 0.5, 1.5);
    Tensor beta = random_tensor(rng, {3}, -0.5, 0.5);
    GradCheck gc{[&](Tape& t) {
                     Tensor y =
                         batch_norm_train(&t, x, gamma, beta, 1e-5, nullptr, nullptr);
                     return sum(&t, mul(&t, y, y));
                 },
                 {x, gamma, beta}};
    CHECK(gc.max_rel_err() < 1e-4);
}

TEST_CASE("concat and reshape route gradients back to their sources") {
    SeededRng rng(47);
    Tensor a = random_tensor(rng, {2, 3});
    Tensor b = random_tensor(rng, {4, 3});
    GradCheck gc{[&](Tape& t) {
                     Tensor cat = concat_rows(&t, a, b);
                     Tensor flat = reshape(&t, cat, {18});
                     return sum(&t, mul(&t, flat, flat));
                 },
                 {a, b}};
    CHECK(gc.max_rel_err() < 1e-4);
}

TEST_CASE("finite checks flag non-finite forward values when enabled") {
    Tensor t({2}, {1.0, std::nan("")});
    CHECK_FALSE(all_finite(t));
    CHECK_THROWS_AS(check_finite(t, "test"), TrainingError);
}
