#pragma once

// Dense tensors, a reverse-mode tape, attention blocks and optimizer steps.
// Everything is double precision and single-threaded per tape.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tlvd::num {

using Rng = std::mt19937_64;

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor row(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    [[nodiscard]] std::size_t size() const { return data.size(); }
    /// 1-D tensors are viewed as a single row.
    [[nodiscard]] std::size_t rows() const;
    [[nodiscard]] std::size_t cols() const;
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    [[nodiscard]] double item() const;
    [[nodiscard]] bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::string shape_string(const std::vector<std::size_t>& shape);

struct Parameter {
    Tensor value;
    Tensor gradient;
    Tensor first_moment;
    Tensor second_moment;
    std::uint64_t step_count = 0;

    Parameter() = default;
    explicit Parameter(Tensor initial);

    void zero_grad();
};

struct NamedParameter {
    std::string name;
    Parameter* param;
};
using ParameterList = std::vector<NamedParameter>;

ParameterList prefixed(const std::string& prefix, ParameterList list);
void append(ParameterList& into, const ParameterList& more);
void zero_grad(const ParameterList& params);

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); weights are stored [out x in].
Parameter init_weight(std::size_t out, std::size_t in, Rng& rng);
Parameter init_bias(std::size_t out);

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

/// Records a forward computation and replays it backwards. Parameters bound with
/// param() are referenced, not copied, and must outlive the tape.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Var param(Parameter& p);
    /// Leaf referencing a parameter value with no gradient path (target networks).
    Var frozen(const Parameter& p);
    Var constant(Tensor value);

    [[nodiscard]] const Tensor& value(Var v) const;
    [[nodiscard]] const Tensor& grad(Var v) const;
    [[nodiscard]] bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    /// Populates gradients of every reachable parameter. Repeated calls accumulate into
    /// Parameter::gradient until zero_grad() is called on the parameter.
    void backward(Var loss);

    [[nodiscard]] std::size_t node_count() const { return nodes_.size(); }

    // Used by operation implementations.
    Var push(Tensor value, std::vector<int> parents, BackwardFn fn);
    Tensor& grad_of(int id);
    [[nodiscard]] bool needs(int id) const { return nodes_[id].requires_grad; }
    [[nodiscard]] const Tensor& value_of(int id) const;
    [[nodiscard]] const std::vector<int>& parents_of(int id) const { return nodes_[id].parents; }

private:
    struct Node {
        Tensor own;
        const Tensor* external = nullptr;
        Tensor grad;
        bool grad_ready = false;
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::vector<int> parents;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

// Differentiable operations. All matrices are row-major [rows x cols].
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a [1 x n] row to every row of a [m x n] matrix.
Var add_row(Var a, Var row);
/// x W^T + b with W [out x in], b [out]; x is [m x in].
Var affine(Var x, Var w, Var b);
Var affine(Tape& tape, Var x, Parameter& w, Parameter& b);
Var sigmoid(Var a);
Var tanh(Var a);
Var square(Var a);
Var softmax_rows(Var a);
Var concat_cols(Var a, Var b);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var mean_rows(Var a);
Var sum(Var a);
Var mean(Var a);

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);

struct AttentionVars {
    Var values;
    Var weights;
};

struct AttentionOutput {
    Tensor values;
    Tensor weights;
};

/// weights = row_softmax(Q K^T / sqrt(d_k)); values = weights V.
AttentionVars scaled_dot_attention(Var q, Var k, Var v);
AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// Projections for multi-head attention. wq/wk/wv are [d_model x d_in], wo is [d_out x d_model].
struct MultiHeadParams {
    Parameter wq;
    Parameter wk;
    Parameter wv;
    Parameter wo;
    std::size_t heads = 1;

    static MultiHeadParams create(std::size_t d_in, std::size_t d_model, std::size_t d_out,
                                  std::size_t heads, Rng& rng);
    ParameterList parameters();
    [[nodiscard]] std::size_t model_dim() const { return wq.value.rows(); }
};

enum class Binding { Trainable, Frozen };

Var bind(Tape& tape, Parameter& p, Binding mode);

/// Concatenated per-head attention over the rows of `inputs`, then the output projection.
/// No positional encoding, so the result is equivariant under row permutation.
Var multi_head_attention(Tape& tape, Var inputs, MultiHeadParams& params,
                         Binding mode = Binding::Trainable);

/// Returns 0 when either vector has zero norm.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

void adam_step(const ParameterList& params, double learning_rate, const AdamConfig& cfg = {});

/// target <- rate * online + (1 - rate) * target, matched by position.
void soft_update(const ParameterList& target, const ParameterList& online, double rate);

bool all_finite(const Tensor& t);

}  // namespace tlvd::num
