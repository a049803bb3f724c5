#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fd.hpp"
#include "mlp.hpp"
#include "rng.hpp"

using namespace dht;

TEST_CASE("seeded rng reproduces its stream") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i)
        CHECK(a.uniform() == b.uniform());
}

TEST_CASE("different seeds diverge quickly") {
    Rng a(1), b(2);
    bool differ = false;
    for (int i = 0; i < 10 && !differ; ++i)
        differ = a.uniform() != b.uniform();
    CHECK(differ);
}

TEST_CASE("normal sample mean within the CLT bound") {
    Rng rng(99);
    double total = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        total += rng.normal();
    const double mean = total / n;
    CHECK(mean >= -0.02);
    CHECK(mean <= 0.02);
}

TEST_CASE("choice is unbiased enough and in range") {
    Rng rng(5);
    int counts[7] = {0};
    for (int i = 0; i < 70000; ++i) {
        const std::size_t c = rng.choice(7);
        REQUIRE(c < 7);
        counts[c]++;
    }
    for (int c : counts)
        CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("zero-weight mlp maps anything to zero") {
    Rng rng(1);
    TinyMlp net({4, 8, 3}, Activation::Relu, 0.0, rng);
    Vector flat = net.flatten_params();
    std::fill(flat.begin(), flat.end(), 0.0);
    net.set_params(flat);
    const Vector out = net.forward(Vector{1.0, -2.0, 3.0, 0.5});
    for (double v : out)
        CHECK(v == 0.0);
}

TEST_CASE("identity-initialized linear layer is the identity") {
    Rng rng(1);
    TinyMlp net({3, 3}, Activation::Relu, 0.0, rng);
    Matrix eye(3, 3);
    for (int i = 0; i < 3; ++i)
        eye(i, i) = 1.0;
    net.weight(0) = eye;
    net.bias(0) = Vector(3, 0.0);
    const Vector in{0.3, -1.2, 5.0};
    const Vector out = net.forward(in);
    for (int i = 0; i < 3; ++i)
        CHECK(out[i] == in[i]);
}

TEST_CASE("mlp tape gradient matches finite differences (8-32-16-2)") {
    Rng rng(21);
    TinyMlp net({8, 32, 16, 2}, Activation::Relu, 0.0, rng);
    Vector input(8);
    for (double& v : input)
        v = rng.normal();

    auto f = [&](const Vector& flat) {
        TinyMlp probe = net;
        probe.set_params(flat);
        const Vector out = probe.forward(input);
        return out[0] + out[1];
    };

    Tape tape;
    const auto params = net.register_params(tape);
    const int out = net.forward_tape(tape, params, tape.constant(input));
    tape.backward(tape.sum(out));
    const Vector grad = net.collect_grad(tape, params);
    for (double v : tape.value(out))
        CHECK(std::isfinite(v));
    CHECK(testing::rel_err(grad, testing::fd_grad(f, net.flatten_params())) <= 1e-5);
}

TEST_CASE("dimension mismatch rejected") {
    Rng rng(3);
    TinyMlp net({4, 2}, Activation::Relu, 0.0, rng);
    CHECK_THROWS_AS(net.forward(Vector{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("inverted dropout expectation matches eval forward") {
    Rng rng(17);
    TinyMlp net({4, 32, 1}, Activation::Tanh, 0.3, rng);
    const Vector input{0.5, -0.25, 1.0, 2.0};
    const double eval_out = net.forward(input)[0];
    double total = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i)
        total += net.forward(input, true, &rng)[0];
    const double mean = total / n;
    CHECK(std::abs(mean - eval_out) <= 0.02 * std::max(1.0, std::abs(eval_out)));
}

TEST_CASE("adam: zero gradient leaves params unchanged") {
    AdamState adam(2, {0.02, 0.8, 0.999, 1e-8});
    Vector params{1.0, -2.0};
    adam.step(params, Vector{0.0, 0.0});
    CHECK(params[0] == 1.0);
    CHECK(params[1] == -2.0);
    CHECK(adam.t() == 1);
}

TEST_CASE("adam: one bias-corrected unit step") {
    AdamState adam(1, {0.02, 0.8, 0.999, 1e-8});
    Vector params{0.5};
    adam.step(params, Vector{1.0});
    // m_hat = v_hat = 1 after bias correction, so the step is
    // -lr / (1 + eps) regardless of the betas.
    CHECK(params[0] == doctest::Approx(0.5 - 0.02).epsilon(1e-6));
}

TEST_CASE("adam: constant gradient approaches step_size per update") {
    AdamState adam(1, {0.02, 0.8, 0.999, 1e-8});
    Vector params{0.0};
    double prev = params[0];
    for (int i = 0; i < 200; ++i)
        adam.step(params, Vector{3.0});
    prev = params[0];
    adam.step(params, Vector{3.0});
    CHECK(params[0] < prev);
    CHECK(std::abs((prev - params[0]) - 0.02) <= 1e-3);
}

TEST_CASE("adam: NaN gradient aborts with diagnostic") {
    AdamState adam(1, {0.02, 0.8, 0.999, 1e-8});
    Vector params{0.0};
    CHECK_THROWS_AS(adam.step(params, Vector{std::nan("")}), std::runtime_error);
}

TEST_CASE("mlp round-trips through the text checkpoint") {
    Rng rng(9);
    TinyMlp net({3, 5, 2}, Activation::LeakyRelu, 0.1, rng);
    std::stringstream ss;
    net.save(ss, "w,x,y");
    std::string layout;
    const TinyMlp back = TinyMlp::load(ss, &layout);
    CHECK(layout == "w,x,y");
    CHECK(back.layer_dims() == net.layer_dims());
    CHECK(back.activation() == net.activation());
    const Vector in{0.1, 0.2, 0.3};
    const Vector a = net.forward(in), b = back.forward(in);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
}
