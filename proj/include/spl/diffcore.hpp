#pragma once

// Reverse-mode differentiation over dense matrices, just enough for MLP
// classifiers trained with pseudo-label style losses. Values are row-major
// batches: one example per row.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace spl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh };

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out

    bool operator==(const Layer& o) const { return weight == o.weight && bias == o.bias; }
};

struct ModelParams {
    std::vector<Layer> layers;
    // One entry per hidden layer; the output layer is linear.
    std::vector<Activation> activations;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t parameter_count() const;

    // Throws InputError when consecutive layers do not chain, the activation
    // list has the wrong length, or any entry is non-finite.
    void validate() const;

    bool same_shape(const ModelParams& other) const;
    bool operator==(const ModelParams& o) const {
        return layers == o.layers && activations == o.activations;
    }
};

// Gradients share the parameter layout.
using Gradients = ModelParams;

ModelParams zeros_like(const ModelParams& params);

// He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
// `sizes` lists every width including input and output, e.g. {2, 64, 64, 10}.
ModelParams init_he_uniform(std::span<const std::size_t> sizes, Activation hidden,
                            std::mt19937_64& rng);

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    std::size_t id() const { return id_; }
    const Matrix& value() const;
    double scalar() const;
    Tape* tape() const { return tape_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var variable(Matrix value);
    Var scalar_variable(double v);

    // Same value as `x`; no adjoint ever flows back through it.
    Var stop_gradient(Var x);

    // Values seen by stop_gradient so far, in call order.
    const std::vector<Matrix>& stop_gradient_values() const { return sg_values_; }
    // The k-th later stop_gradient call returns values[k] instead of its input.
    void replay_stop_gradients(std::vector<Matrix> values);

    Var matmul_transposed(Var x, Var w);  // x * w^T
    Var add_bias(Var y, Var b);           // b (column) broadcast over rows
    Var relu(Var x);
    Var tanh(Var x);
    Var exp(Var x);
    Var log_softmax(Var logits);  // row-wise, log-sum-exp shifted
    Var pick(Var x, std::span<const int> cols);  // column vector of x(i, cols[i])
    // Elementwise max(0, (x - tau) / (1 - tau))^mu.
    Var shape_factor(Var x, double tau, double mu);
    Var mul(Var a, Var b);  // elementwise, same shape
    Var add(Var a, Var b);  // same shape
    Var scale(Var x, double c);
    Var sum(Var x);
    // Scalar sum_i w_i * x_i for a column vector x.
    Var weighted_sum(Var x, const Vector& weights);

    // Reverse sweep from a 1x1 root. Adjoints are reset on every call.
    void backward(Var root);

    const Matrix& value(Var v) const;
    // Zero-sized until backward() has run.
    const Matrix& adjoint(Var v) const;
    bool differentiable(Var v) const;
    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        leaf,
        stop_gradient,
        matmul_t,
        add_bias,
        relu,
        tanh,
        exp,
        log_softmax,
        pick,
        shape_factor,
        mul,
        add,
        scale,
        sum,
        weighted_sum,
    };

    struct Node {
        Op op = Op::leaf;
        std::size_t a = 0;
        std::size_t b = 0;
        Matrix value;
        Matrix adjoint;
        bool differentiable = false;
        std::vector<int> cols;
        Vector weights;
        double p0 = 0.0;
        double p1 = 0.0;
    };

    Var push(Node node);
    const Node& node(Var v) const;
    void check_owner(Var v) const;

    std::vector<Node> nodes_;
    std::vector<Matrix> sg_values_;
    std::vector<Matrix> sg_replay_;
};

// Parameter leaves of one ModelParams recorded on a tape.
struct BoundParams {
    const ModelParams* params = nullptr;
    std::vector<Var> weights;
    std::vector<Var> biases;
};

BoundParams bind(Tape& tape, const ModelParams& params);

Var mlp_forward(const BoundParams& bound, Var x);
Matrix mlp_forward(const ModelParams& params, const Matrix& x);
Vector mlp_forward(const ModelParams& params, const Vector& x);

// -log softmax(logits)[argmax target]. Throws InputError for a non-one-hot target.
double softmax_ce(const Vector& logits, const Vector& target);
// Mean cross-entropy over rows, labels as class indices.
Var softmax_ce(Tape& tape, Var logits, std::span<const int> labels);

// Adjoints of the bound parameter leaves after tape.backward(root).
Gradients backward(Tape& tape, Var root, const BoundParams& bound);

// --- optimization ---------------------------------------------------------

enum class Schedule { constant, cosine };

struct OptimConfig {
    double learning_rate = 0.03;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double ema_decay = 0.999;
    Schedule schedule = Schedule::cosine;
    std::int64_t total_steps = 1;

    void validate() const;
    bool operator==(const OptimConfig&) const = default;
};

struct OptimState {
    OptimConfig config;
    ModelParams velocity;
    ModelParams ema;
    std::int64_t step = 0;

    static OptimState init(const ModelParams& params, const OptimConfig& config);
};

// base * cos(7 pi step / (16 total)).
double lr_schedule(std::int64_t step, std::int64_t total_steps, double base);
double current_learning_rate(const OptimState& state);

// v <- beta v + (g + wd theta); theta <- theta - lr(step) v;
// ema <- d ema + (1 - d) theta; step += 1.
// Throws TrainingFault if any gradient entry is non-finite; nothing is modified then.
void sgd_step(ModelParams& params, const Gradients& grads, OptimState& state);

using LossBuilder = std::function<Var(Tape&, const BoundParams&)>;

// Worst parameter-wise relative error between backward() and central differences.
// Relative error is |a - b| / max(|a|, |b|, 1e-6). With `freeze_stop_gradients`
// the probes reuse the stop-gradient values of the unperturbed evaluation, which
// is the function backward() differentiates; without it they see the raw loss.
double grad_check(const LossBuilder& build, const ModelParams& params, double eps,
                  bool freeze_stop_gradients = true);

}  // namespace spl
