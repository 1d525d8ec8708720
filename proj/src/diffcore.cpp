#include "spl/diffcore.hpp"

#include "spl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace spl {

// --- ModelParams ------------------------------------------------------------

std::size_t ModelParams::input_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t ModelParams::output_dim() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void ModelParams::validate() const {
    if (layers.empty()) throw InputError("model has no layers");
    if (activations.size() + 1 != layers.size())
        throw InputError("expected one activation per hidden layer");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.bias.size() != l.weight.rows())
            throw InputError("layer " + std::to_string(k) + ": bias length differs from output width");
        if (k + 1 < layers.size() && layers[k + 1].weight.cols() != l.weight.rows())
            throw InputError("layer " + std::to_string(k) + " does not chain into layer " +
                             std::to_string(k + 1));
        if (!l.weight.allFinite() || !l.bias.allFinite())
            throw InputError("layer " + std::to_string(k) + " has non-finite entries");
    }
}

bool ModelParams::same_shape(const ModelParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& a = layers[k];
        const auto& b = other.layers[k];
        if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
            a.bias.size() != b.bias.size())
            return false;
    }
    return true;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams z;
    z.activations = params.activations;
    z.layers.reserve(params.layers.size());
    for (const auto& l : params.layers)
        z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    return z;
}

ModelParams init_he_uniform(std::span<const std::size_t> sizes, Activation hidden,
                            std::mt19937_64& rng) {
    if (sizes.size() < 2) throw InputError("need at least input and output sizes");
    ModelParams p;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        const auto fan_in = sizes[k];
        const auto fan_out = sizes[k + 1];
        if (fan_in == 0 || fan_out == 0) throw InputError("layer sizes must be positive");
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Layer l{Matrix(fan_out, fan_in), Vector::Zero(static_cast<Eigen::Index>(fan_out))};
        // Fill row by row so the draw order does not depend on Eigen's storage order.
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = dist(rng);
        p.layers.push_back(std::move(l));
        if (k + 2 < sizes.size()) p.activations.push_back(hidden);
    }
    return p;
}

// --- Var / Tape -------------------------------------------------------------

const Matrix& Var::value() const {
    if (tape_ == nullptr) throw InputError("unbound Var");
    return tape_->value(*this);
}

double Var::scalar() const {
    const auto& v = value();
    if (v.size() != 1) throw InputError("Var is not a scalar");
    return v(0, 0);
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
    if (v.tape_ != this || v.id_ >= nodes_.size()) throw InputError("Var belongs to another tape");
}

const Tape::Node& Tape::node(Var v) const {
    check_owner(v);
    return nodes_[v.id_];
}

const Matrix& Tape::value(Var v) const { return node(v).value; }
const Matrix& Tape::adjoint(Var v) const { return node(v).adjoint; }
bool Tape::differentiable(Var v) const { return node(v).differentiable; }

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::variable(Matrix value) {
    Node n;
    n.value = std::move(value);
    n.differentiable = true;
    return push(std::move(n));
}

Var Tape::scalar_variable(double v) { return variable(Matrix::Constant(1, 1, v)); }

Var Tape::stop_gradient(Var x) {
    Node n;
    n.op = Op::stop_gradient;
    n.a = x.id();
    const std::size_t k = sg_values_.size();
    if (k < sg_replay_.size()) {
        if (sg_replay_[k].rows() != node(x).value.rows() || sg_replay_[k].cols() != node(x).value.cols())
            throw InputError("replayed stop_gradient value has the wrong shape");
        n.value = sg_replay_[k];
    } else {
        n.value = node(x).value;
    }
    sg_values_.push_back(n.value);
    return push(std::move(n));
}

void Tape::replay_stop_gradients(std::vector<Matrix> values) { sg_replay_ = std::move(values); }

Var Tape::matmul_transposed(Var x, Var w) {
    const auto& xv = node(x).value;
    const auto& wv = node(w).value;
    if (xv.cols() != wv.cols())
        throw InputError("matmul: input width " + std::to_string(xv.cols()) + " != weight width " +
                         std::to_string(wv.cols()));
    Node n;
    n.op = Op::matmul_t;
    n.a = x.id();
    n.b = w.id();
    n.value = xv * wv.transpose();
    n.differentiable = node(x).differentiable || node(w).differentiable;
    return push(std::move(n));
}

Var Tape::add_bias(Var y, Var b) {
    const auto& yv = node(y).value;
    const auto& bv = node(b).value;
    if (bv.cols() != 1 || bv.rows() != yv.cols()) throw InputError("add_bias: bias shape mismatch");
    Node n;
    n.op = Op::add_bias;
    n.a = y.id();
    n.b = b.id();
    n.value = yv.rowwise() + bv.col(0).transpose();
    n.differentiable = node(y).differentiable || node(b).differentiable;
    return push(std::move(n));
}

Var Tape::relu(Var x) {
    Node n;
    n.op = Op::relu;
    n.a = x.id();
    n.value = node(x).value.cwiseMax(0.0);
    n.differentiable = node(x).differentiable;
    return push(std::move(n));
}

Var Tape::tanh(Var x) {
    Node n;
    n.op = Op::tanh;
    n.a = x.id();
    n.value = node(x).value.array().tanh().matrix();
    n.differentiable = node(x).differentiable;
    return push(std::move(n));
}

Var Tape::exp(Var x) {
    Node n;
    n.op = Op::exp;
    n.a = x.id();
    n.value = node(x).value.array().exp().matrix();
    n.differentiable = node(x).differentiable;
    return push(std::move(n));
}

Var Tape::log_softmax(Var logits) {
    const auto& z = node(logits).value;
    Node n;
    n.op = Op::log_softmax;
    n.a = logits.id();
    n.value.resize(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double m = z.row(r).maxCoeff();
        const double lse = m + std::log((z.row(r).array() - m).exp().sum());
        n.value.row(r) = z.row(r).array() - lse;
    }
    n.differentiable = node(logits).differentiable;
    return push(std::move(n));
}

Var Tape::pick(Var x, std::span<const int> cols) {
    const auto& xv = node(x).value;
    if (static_cast<Eigen::Index>(cols.size()) != xv.rows())
        throw InputError("pick: one column index per row required");
    Node n;
    n.op = Op::pick;
    n.a = x.id();
    n.cols.assign(cols.begin(), cols.end());
    n.value.resize(xv.rows(), 1);
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const int c = n.cols[static_cast<std::size_t>(r)];
        if (c < 0 || c >= xv.cols()) throw InputError("pick: column index out of range");
        n.value(r, 0) = xv(r, c);
    }
    n.differentiable = node(x).differentiable;
    return push(std::move(n));
}

Var Tape::shape_factor(Var x, double tau, double mu) {
    if (!(tau < 1.0)) throw InputError("shape factor needs tau < 1");
    if (!(mu > 0.0)) throw InputError("shape factor needs mu > 0");
    Node n;
    n.op = Op::shape_factor;
    n.a = x.id();
    n.p0 = tau;
    n.p1 = mu;
    n.value = node(x).value.unaryExpr([tau, mu](double s) {
        const double lin = std::max(0.0, (s - tau) / (1.0 - tau));
        return mu == 1.0 ? lin : std::pow(lin, mu);
    });
    n.differentiable = node(x).differentiable;
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    const auto& av = node(a).value;
    const auto& bv = node(b).value;
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw InputError("mul: shape mismatch");
    Node n;
    n.op = Op::mul;
    n.a = a.id();
    n.b = b.id();
    n.value = av.cwiseProduct(bv);
    n.differentiable = node(a).differentiable || node(b).differentiable;
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    const auto& av = node(a).value;
    const auto& bv = node(b).value;
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw InputError("add: shape mismatch");
    Node n;
    n.op = Op::add;
    n.a = a.id();
    n.b = b.id();
    n.value = av + bv;
    n.differentiable = node(a).differentiable || node(b).differentiable;
    return push(std::move(n));
}

Var Tape::scale(Var x, double c) {
    Node n;
    n.op = Op::scale;
    n.a = x.id();
    n.p0 = c;
    n.value = node(x).value * c;
    n.differentiable = node(x).differentiable;
    return push(std::move(n));
}

Var Tape::sum(Var x) {
    Node n;
    n.op = Op::sum;
    n.a = x.id();
    n.value = Matrix::Constant(1, 1, node(x).value.sum());
    n.differentiable = node(x).differentiable;
    return push(std::move(n));
}

Var Tape::weighted_sum(Var x, const Vector& weights) {
    const auto& xv = node(x).value;
    if (xv.cols() != 1 || xv.rows() != weights.size())
        throw InputError("weighted_sum: expects a column vector matching the weights");
    Node n;
    n.op = Op::weighted_sum;
    n.a = x.id();
    n.weights = weights;
    n.value = Matrix::Constant(1, 1, xv.col(0).dot(weights));
    n.differentiable = node(x).differentiable;
    return push(std::move(n));
}

void Tape::backward(Var root) {
    check_owner(root);
    if (nodes_[root.id_].value.size() != 1) throw InputError("backward: root must be a scalar");

    for (auto& n : nodes_) {
        if (n.differentiable)
            n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
        else
            n.adjoint.resize(0, 0);
    }
    if (!nodes_[root.id_].differentiable) return;
    nodes_[root.id_].adjoint(0, 0) = 1.0;

    auto accumulate = [this](std::size_t id, const auto& delta) {
        if (nodes_[id].differentiable) nodes_[id].adjoint += delta;
    };

    for (std::size_t i = root.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.differentiable) continue;
        const Matrix& g = n.adjoint;
        switch (n.op) {
            case Op::leaf:
            case Op::stop_gradient:
                break;
            case Op::matmul_t: {
                const Matrix& x = nodes_[n.a].value;
                const Matrix& w = nodes_[n.b].value;
                if (nodes_[n.a].differentiable) accumulate(n.a, g * w);
                if (nodes_[n.b].differentiable) accumulate(n.b, g.transpose() * x);
                break;
            }
            case Op::add_bias:
                accumulate(n.a, g);
                if (nodes_[n.b].differentiable) accumulate(n.b, g.colwise().sum().transpose());
                break;
            case Op::relu: {
                const Matrix& x = nodes_[n.a].value;
                accumulate(n.a, g.cwiseProduct(x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; })));
                break;
            }
            case Op::tanh:
                accumulate(n.a, g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
                break;
            case Op::exp:
                accumulate(n.a, g.cwiseProduct(n.value));
                break;
            case Op::log_softmax: {
                const Matrix soft = n.value.array().exp().matrix();
                const Vector row_sums = g.rowwise().sum();
                Matrix delta = g;
                for (Eigen::Index r = 0; r < delta.rows(); ++r) delta.row(r) -= soft.row(r) * row_sums(r);
                accumulate(n.a, delta);
                break;
            }
            case Op::pick: {
                Matrix delta = Matrix::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
                for (Eigen::Index r = 0; r < delta.rows(); ++r)
                    delta(r, n.cols[static_cast<std::size_t>(r)]) = g(r, 0);
                accumulate(n.a, delta);
                break;
            }
            case Op::shape_factor: {
                const double tau = n.p0;
                const double mu = n.p1;
                const Matrix& x = nodes_[n.a].value;
                const Matrix d = x.unaryExpr([tau, mu](double s) {
                    if (s <= tau) return 0.0;
                    const double lin = (s - tau) / (1.0 - tau);
                    return (mu == 1.0 ? 1.0 : mu * std::pow(lin, mu - 1.0)) / (1.0 - tau);
                });
                accumulate(n.a, g.cwiseProduct(d));
                break;
            }
            case Op::mul:
                if (nodes_[n.a].differentiable) accumulate(n.a, g.cwiseProduct(nodes_[n.b].value));
                if (nodes_[n.b].differentiable) accumulate(n.b, g.cwiseProduct(nodes_[n.a].value));
                break;
            case Op::add:
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            case Op::scale:
                accumulate(n.a, g * n.p0);
                break;
            case Op::sum: {
                const auto& x = nodes_[n.a].value;
                accumulate(n.a, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
                break;
            }
            case Op::weighted_sum:
                accumulate(n.a, Matrix(n.weights * g(0, 0)));
                break;
        }
    }
}

// --- MLP --------------------------------------------------------------------

BoundParams bind(Tape& tape, const ModelParams& params) {
    BoundParams b;
    b.params = &params;
    for (const auto& l : params.layers) {
        b.weights.push_back(tape.variable(l.weight));
        b.biases.push_back(tape.variable(Matrix(l.bias)));
    }
    return b;
}

Var mlp_forward(const BoundParams& bound, Var x) {
    const ModelParams& p = *bound.params;
    if (static_cast<std::size_t>(x.value().cols()) != p.input_dim())
        throw InputError("input dimension " + std::to_string(x.value().cols()) + " != model input " +
                         std::to_string(p.input_dim()));
    Tape& tape = *x.tape();
    Var h = x;
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        h = tape.add_bias(tape.matmul_transposed(h, bound.weights[k]), bound.biases[k]);
        if (k + 1 < p.layers.size())
            h = p.activations[k] == Activation::relu ? tape.relu(h) : tape.tanh(h);
    }
    return h;
}

Matrix mlp_forward(const ModelParams& params, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != params.input_dim())
        throw InputError("input dimension " + std::to_string(x.cols()) + " != model input " +
                         std::to_string(params.input_dim()));
    Matrix h = x;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const auto& l = params.layers[k];
        Matrix next = h * l.weight.transpose();
        next.rowwise() += l.bias.transpose();
        if (k + 1 < params.layers.size()) {
            if (params.activations[k] == Activation::relu)
                next = next.cwiseMax(0.0);
            else
                next = next.array().tanh().matrix();
        }
        h = std::move(next);
    }
    return h;
}

Vector mlp_forward(const ModelParams& params, const Vector& x) {
    return mlp_forward(params, Matrix(x.transpose())).row(0).transpose();
}

double softmax_ce(const Vector& logits, const Vector& target) {
    if (logits.size() != target.size()) throw InputError("softmax_ce: logits and target differ in length");
    int hot = -1;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        if (target(i) == 1.0) {
            if (hot >= 0) throw InputError("softmax_ce: target has more than one hot entry");
            hot = static_cast<int>(i);
        } else if (target(i) != 0.0) {
            throw InputError("softmax_ce: target is not one-hot");
        }
    }
    if (hot < 0) throw InputError("softmax_ce: target has no hot entry");
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits(hot);
}

Var softmax_ce(Tape& tape, Var logits, std::span<const int> labels) {
    const auto rows = logits.value().rows();
    if (rows == 0) throw InputError("softmax_ce: empty batch");
    Var picked = tape.pick(tape.log_softmax(logits), labels);
    return tape.weighted_sum(picked, Vector::Constant(rows, -1.0 / static_cast<double>(rows)));
}

Gradients backward(Tape& tape, Var root, const BoundParams& bound) {
    tape.backward(root);
    Gradients g = zeros_like(*bound.params);
    for (std::size_t k = 0; k < g.layers.size(); ++k) {
        const auto& dw = tape.adjoint(bound.weights[k]);
        const auto& db = tape.adjoint(bound.biases[k]);
        if (dw.size() != 0) g.layers[k].weight = dw;
        if (db.size() != 0) g.layers[k].bias = db.col(0);
    }
    return g;
}

// --- optimizer --------------------------------------------------------------

void OptimConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw InputError("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InputError("weight decay must be >= 0");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw InputError("ema decay must lie in [0, 1)");
    if (total_steps <= 0) throw InputError("total steps must be positive");
}

OptimState OptimState::init(const ModelParams& params, const OptimConfig& config) {
    config.validate();
    OptimState s;
    s.config = config;
    s.velocity = zeros_like(params);
    s.ema = params;
    s.step = 0;
    return s;
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, double base) {
    if (total_steps <= 0) throw InputError("lr_schedule: total_steps must be positive");
    if (step < 0 || step > total_steps) throw InputError("lr_schedule: step outside [0, total_steps]");
    return base * std::cos(7.0 * std::numbers::pi * static_cast<double>(step) /
                           (16.0 * static_cast<double>(total_steps)));
}

double current_learning_rate(const OptimState& state) {
    const auto& c = state.config;
    if (c.schedule == Schedule::constant) return c.learning_rate;
    return lr_schedule(std::min(state.step, c.total_steps), c.total_steps, c.learning_rate);
}

void sgd_step(ModelParams& params, const Gradients& grads, OptimState& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.velocity) || !params.same_shape(state.ema))
        throw InputError("sgd_step: parameter, gradient and state shapes differ");
    for (const auto& l : grads.layers)
        if (!l.weight.allFinite() || !l.bias.allFinite())
            throw TrainingFault("non-finite gradient", state.step);

    const double lr = current_learning_rate(state);
    const double beta = state.config.momentum;
    const double wd = state.config.weight_decay;
    const double d = state.config.ema_decay;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        auto& p = params.layers[k];
        auto& v = state.velocity.layers[k];
        auto& e = state.ema.layers[k];
        const auto& g = grads.layers[k];
        v.weight = beta * v.weight + (g.weight + wd * p.weight);
        v.bias = beta * v.bias + (g.bias + wd * p.bias);
        p.weight -= lr * v.weight;
        p.bias -= lr * v.bias;
        e.weight = d * e.weight + (1.0 - d) * p.weight;
        e.bias = d * e.bias + (1.0 - d) * p.bias;
    }
    ++state.step;
}

double grad_check(const LossBuilder& build, const ModelParams& params, double eps,
                  bool freeze_stop_gradients) {
    if (!(eps > 0.0)) throw InputError("grad_check: eps must be positive");
    Gradients analytic;
    std::vector<Matrix> frozen;
    {
        Tape tape;
        auto bound = bind(tape, params);
        Var root = build(tape, bound);
        analytic = backward(tape, root, bound);
        if (freeze_stop_gradients) frozen = tape.stop_gradient_values();
    }
    auto eval = [&](const ModelParams& p) {
        Tape tape;
        tape.replay_stop_gradients(frozen);
        auto bound = bind(tape, p);
        return build(tape, bound).scalar();
    };
    auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
    };

    double worst = 0.0;
    ModelParams probe = params;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        auto& w = probe.layers[k].weight;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double orig = w.data()[i];
            w.data()[i] = orig + eps;
            const double up = eval(probe);
            w.data()[i] = orig - eps;
            const double down = eval(probe);
            w.data()[i] = orig;
            worst = std::max(worst, rel(analytic.layers[k].weight.data()[i], (up - down) / (2.0 * eps)));
        }
        auto& b = probe.layers[k].bias;
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            const double orig = b(i);
            b(i) = orig + eps;
            const double up = eval(probe);
            b(i) = orig - eps;
            const double down = eval(probe);
            b(i) = orig;
            worst = std::max(worst, rel(analytic.layers[k].bias(i), (up - down) / (2.0 * eps)));
        }
    }
    return worst;
}

}  // namespace spl
