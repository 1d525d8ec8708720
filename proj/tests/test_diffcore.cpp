#include "spl/diffcore.hpp"
#include "spl/errors.hpp"
#include "spl/losses.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace spl;

namespace {

ModelParams fixed_mlp() {
    ModelParams p;
    Layer l1, l2, l3;
    l1.weight.resize(4, 3);
    l1.weight << 0.5, -0.25, 1.0, -0.75, 0.5, 0.125, 0.3, 0.8, -0.6, -1.1, 0.2, 0.4;
    l1.bias.resize(4);
    l1.bias << 0.1, -0.2, 0.05, 0.0;
    l2.weight.resize(2, 4);
    l2.weight << 0.7, -0.3, 0.2, 0.9, -0.4, 0.6, -0.8, 0.1;
    l2.bias.resize(2);
    l2.bias << 0.01, -0.02;
    l3.weight.resize(3, 2);
    l3.weight << 1.5, -0.5, -0.7, 0.9, 0.2, 0.3;
    l3.bias.resize(3);
    l3.bias << 0.0, 0.1, -0.1;
    p.layers = {l1, l2, l3};
    p.activations = {Activation::relu, Activation::tanh};
    return p;
}

ModelParams single_param(double theta) {
    ModelParams p;
    Layer l;
    l.weight = Matrix::Constant(1, 1, theta);
    l.bias = Vector::Zero(1);
    p.layers = {l};
    return p;
}

}  // namespace

TEST_CASE("forward pass of trivial nets") {
    ModelParams p;
    Layer l;
    l.weight = Matrix::Identity(2, 2);
    l.bias = Vector::Zero(2);
    p.layers = {l};
    Vector x(2);
    x << 1.0, 2.0;
    CHECK(mlp_forward(p, x) == x);

    p.layers[0].weight.setZero();
    p.layers[0].bias << 0.3, -0.7;
    CHECK(mlp_forward(p, x) == p.layers[0].bias);
}

TEST_CASE("forward pass matches high precision evaluation") {
    const ModelParams p = fixed_mlp();
    Vector x(3);
    x << 0.3, -1.2, 0.7;
    const Vector y = mlp_forward(p, x);
    CHECK(y(0) == doctest::Approx(1.3022230192733531325).epsilon(1e-13));
    CHECK(y(1) == doctest::Approx(-0.82617075043989676423).epsilon(1e-13));
    CHECK(y(2) == doctest::Approx(-0.10152693522533550555).epsilon(1e-13));

    Tape tape;
    const BoundParams bound = bind(tape, p);
    Var out = mlp_forward(bound, tape.constant(x.transpose()));
    CHECK((out.value().row(0).transpose() - y).norm() < 1e-14);
}

TEST_CASE("softmax cross-entropy values") {
    Vector logits = Vector::Zero(10);
    Vector target = Vector::Zero(10);
    target(3) = 1.0;
    CHECK(softmax_ce(logits, target) == doctest::Approx(2.302585092994046));

    Vector two(2);
    two << 1.0, 0.0;
    Vector t0(2);
    t0 << 1.0, 0.0;
    CHECK(softmax_ce(two, t0) == doctest::Approx(0.31326168751822286).epsilon(1e-14));

    two << 800.0, 0.0;
    CHECK(softmax_ce(two, t0) == doctest::Approx(0.0));

    Vector bad(2);
    bad << 0.5, 0.5;
    CHECK_THROWS_AS(softmax_ce(two, bad), InputError);
}

TEST_CASE("reverse mode basics") {
    Tape tape;
    Var t = tape.scalar_variable(3.0);
    Var sq = tape.mul(t, t);
    tape.backward(sq);
    CHECK(tape.adjoint(t)(0, 0) == doctest::Approx(6.0));

    Tape tape2;
    Var u = tape2.scalar_variable(3.0);
    Var half = tape2.mul(tape2.stop_gradient(u), u);
    tape2.backward(half);
    CHECK(tape2.adjoint(u)(0, 0) == doctest::Approx(3.0));
    CHECK_FALSE(tape2.differentiable(tape2.stop_gradient(u)));
    CHECK(tape2.stop_gradient_values().size() == 2);
}

TEST_CASE("stop_gradient replay") {
    Tape tape;
    tape.replay_stop_gradients({Matrix::Constant(1, 1, 5.0)});
    Var u = tape.scalar_variable(3.0);
    Var prod = tape.mul(tape.stop_gradient(u), u);
    CHECK(prod.scalar() == doctest::Approx(15.0));
    tape.backward(prod);
    CHECK(tape.adjoint(u)(0, 0) == doctest::Approx(5.0));
    CHECK(tape.stop_gradient(u).scalar() == 3.0);

    Tape bad;
    bad.replay_stop_gradients({Matrix::Zero(2, 2)});
    CHECK_THROWS_AS(bad.stop_gradient(bad.scalar_variable(1.0)), InputError);
}

TEST_CASE("backward needs a scalar root") {
    Tape tape;
    Var v = tape.variable(Matrix::Ones(2, 2));
    CHECK_THROWS_AS(tape.backward(v), InputError);
}

TEST_CASE("mlp cross-entropy gradient agrees with finite differences") {
    std::mt19937_64 rng(7);
    const std::size_t sizes[] = {3, 8, 8, 4};
    for (auto act : {Activation::relu, Activation::tanh}) {
        const ModelParams p = init_he_uniform(sizes, act, rng);
        Matrix x = Matrix::Random(5, 3);
        std::vector<int> labels{0, 1, 2, 3, 1};
        LossBuilder build = [&](Tape& tape, const BoundParams& b) {
            return softmax_ce(tape, mlp_forward(b, tape.constant(x)), labels);
        };
        CHECK(grad_check(build, p, 1e-5) < 1e-4);
    }
}

TEST_CASE("gradient check on a quadratic") {
    LossBuilder build = [](Tape& tape, const BoundParams& b) {
        Var w = b.weights[0];
        return tape.sum(tape.mul(w, w));
    };
    CHECK(grad_check(build, single_param(1.7), 1e-5) < 1e-8);
}

TEST_CASE("gradient check exposes the hard threshold") {
    // Weak-view score just above tau: central differences straddle the jump.
    const double tau = 0.95;
    ModelParams p;
    Layer l;
    l.weight = Matrix(2, 1);
    l.weight << std::log(tau / (1.0 - tau)) + 1e-7, 0.0;
    l.bias = Vector::Zero(2);
    p.layers = {l};
    LossConfig cfg;
    cfg.variant = Variant::pl;
    cfg.tau = tau;
    const Matrix x = Matrix::Ones(1, 1);
    const std::vector<int> labels{0};
    LossBuilder build = [&](Tape& tape, const BoundParams& b) {
        Var logits = mlp_forward(b, tape.constant(x));
        return batch_loss(tape, logits, labels, logits, std::nullopt, cfg).total;
    };
    CHECK(grad_check(build, p, 1e-5, false) > 1e-4);
    // Frozen pseudo-labels make the same loss smooth again.
    CHECK(grad_check(build, p, 1e-5) < 1e-4);

    cfg.variant = Variant::spl;
    CHECK(grad_check(build, p, 1e-5) < 1e-4);
}

TEST_CASE("sgd update rules") {
    SUBCASE("plain step") {
        ModelParams p = single_param(1.0);
        Gradients g = single_param(2.0);
        OptimConfig c{0.1, 0.0, 0.0, 0.999, Schedule::constant, 10};
        OptimState s = OptimState::init(p, c);
        sgd_step(p, g, s);
        CHECK(p.layers[0].weight(0, 0) == doctest::Approx(0.8));
        CHECK(s.step == 1);
    }
    SUBCASE("momentum accumulates") {
        ModelParams p = single_param(0.0);
        Gradients g = single_param(1.0);
        OptimConfig c{1.0, 0.9, 0.0, 0.999, Schedule::constant, 10};
        OptimState s = OptimState::init(p, c);
        sgd_step(p, g, s);
        sgd_step(p, g, s);
        CHECK(p.layers[0].weight(0, 0) == doctest::Approx(-2.9));
    }
    SUBCASE("weight decay alone") {
        ModelParams p = single_param(2.0);
        Gradients g = single_param(0.0);
        OptimConfig c{1.0, 0.0, 0.5, 0.999, Schedule::constant, 10};
        OptimState s = OptimState::init(p, c);
        sgd_step(p, g, s);
        CHECK(p.layers[0].weight(0, 0) == doctest::Approx(1.0));
    }
    SUBCASE("ema follows the parameters") {
        ModelParams p = single_param(1.0);
        Gradients g = single_param(1.0);
        OptimConfig c{0.5, 0.0, 0.0, 0.9, Schedule::constant, 10};
        OptimState s = OptimState::init(p, c);
        sgd_step(p, g, s);
        CHECK(s.ema.layers[0].weight(0, 0) == doctest::Approx(0.9 * 1.0 + 0.1 * 0.5));
    }
    SUBCASE("non-finite gradient leaves the state untouched") {
        ModelParams p = single_param(1.0);
        Gradients g = single_param(std::numeric_limits<double>::quiet_NaN());
        OptimConfig c{0.1, 0.9, 0.0, 0.999, Schedule::constant, 10};
        OptimState s = OptimState::init(p, c);
        const ModelParams before = p;
        CHECK_THROWS_AS(sgd_step(p, g, s), TrainingFault);
        CHECK(p == before);
        CHECK(s.step == 0);
    }
}

TEST_CASE("cosine schedule") {
    CHECK(lr_schedule(0, 100, 0.03) == doctest::Approx(0.03));
    CHECK(lr_schedule(100, 100, 1.0) == doctest::Approx(0.19509032201612833).epsilon(1e-14));
    CHECK(lr_schedule(50, 100, 0.0) == 0.0);
    CHECK(lr_schedule(50, 100, 1.0) == doctest::Approx(std::cos(7.0 * std::numbers::pi / 32.0)));
    CHECK_THROWS_AS(lr_schedule(1, 0, 1.0), InputError);
    CHECK_THROWS_AS(lr_schedule(101, 100, 1.0), InputError);
}

TEST_CASE("parameter layout helpers") {
    std::mt19937_64 rng(1);
    const std::size_t sizes[] = {2, 64, 64, 10};
    const ModelParams p = init_he_uniform(sizes, Activation::relu, rng);
    CHECK(p.input_dim() == 2);
    CHECK(p.output_dim() == 10);
    CHECK(p.parameter_count() == 2 * 64 + 64 + 64 * 64 + 64 + 64 * 10 + 10);
    CHECK_NOTHROW(p.validate());
    CHECK(zeros_like(p).same_shape(p));
    const double limit = std::sqrt(6.0 / 2.0);
    CHECK(p.layers[0].weight.cwiseAbs().maxCoeff() <= limit);

    ModelParams broken = p;
    broken.activations.pop_back();
    CHECK_THROWS_AS(broken.validate(), InputError);
}
