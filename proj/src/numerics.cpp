#include "tlvd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "tlvd/errors.hpp"

namespace tlvd::num {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(const Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.rows()),
                                         static_cast<Eigen::Index>(t.cols())}; }
MutMap view(Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.rows()),
                                 static_cast<Eigen::Index>(t.cols())}; }

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

Tensor matrix_shape(std::size_t r, std::size_t c) { return Tensor({r, c}, 0.0); }

void accumulate(Tensor& into, const Tensor& g) {
    for (std::size_t i = 0; i < into.data.size(); ++i) into.data[i] += g.data[i];
}

Tape& same_tape(Var a, Var b) {
    if (a.tape == nullptr || a.tape != b.tape) throw UsageError("variables belong to different tapes");
    return *a.tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape) + " vs " +
                             shape_string(b.shape));
}

template <class F, class D>
Var unary(Var a, F forward, D derivative) {
    Tape& tape = *a.tape;
    const Tensor& x = tape.value(a);
    Tensor out(std::vector<std::size_t>{x.rows(), x.cols()});
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = forward(x.data[i]);
    return tape.push(std::move(out), {a.id}, [derivative](Tape& t, int self) {
        const int p = t.parents_of(self)[0];
        if (!t.needs(p)) return;
        const Tensor& g = t.grad_of(self);
        const Tensor& y = t.value_of(self);
        const Tensor& x = t.value_of(p);
        Tensor& gp = t.grad_of(p);
        for (std::size_t i = 0; i < g.size(); ++i) gp.data[i] += g.data[i] * derivative(x.data[i], y.data[i]);
    });
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)) {
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
    data.assign(product(shape), fill);
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    for (auto dim : shape)
        if (dim == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
    if (product(shape) != data.size())
        throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_string(shape));
}

Tensor Tensor::row(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    if (shape.size() <= 1) return 1;
    if (shape.size() == 2) return shape[0];
    throw DimensionError("rank-" + std::to_string(shape.size()) + " tensor used as a matrix");
}

std::size_t Tensor::cols() const {
    if (shape.empty()) return 0;
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw DimensionError("rank-" + std::to_string(shape.size()) + " tensor used as a matrix");
}

double Tensor::item() const {
    if (data.size() != 1) throw UsageError("item() on non-scalar tensor " + shape_string(shape));
    return data[0];
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Parameter::Parameter(Tensor initial)
    : value(std::move(initial)),
      gradient(zeros_like(value)),
      first_moment(zeros_like(value)),
      second_moment(zeros_like(value)) {}

void Parameter::zero_grad() { std::fill(gradient.data.begin(), gradient.data.end(), 0.0); }

ParameterList prefixed(const std::string& prefix, ParameterList list) {
    for (auto& p : list) p.name = prefix + p.name;
    return list;
}

void append(ParameterList& into, const ParameterList& more) { into.insert(into.end(), more.begin(), more.end()); }

void zero_grad(const ParameterList& params) {
    for (const auto& p : params) p.param->zero_grad();
}

Parameter init_weight(std::size_t out, std::size_t in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({out, in});
    for (auto& x : w.data) x = dist(rng);
    return Parameter(std::move(w));
}

Parameter init_bias(std::size_t out) { return Parameter(Tensor({out}, 0.0)); }

// ---------------------------------------------------------------------------
// Tape

Var Tape::param(Parameter& p) {
    Node n;
    n.external = &p.value;
    n.requires_grad = true;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::frozen(const Parameter& p) {
    Node n;
    n.external = &p.value;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) {
    Node n;
    n.own = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::value(Var v) const {
    if (v.tape != this) throw UsageError("variable does not belong to this tape");
    return value_of(v.id);
}

const Tensor& Tape::value_of(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.own;
}

const Tensor& Tape::grad(Var v) const {
    if (v.tape != this) throw UsageError("variable does not belong to this tape");
    const Node& n = nodes_[v.id];
    if (!n.grad_ready) throw UsageError("gradient requested before backward()");
    return n.grad;
}

Var Tape::push(Tensor value, std::vector<int> parents, BackwardFn fn) {
    Node n;
    n.own = std::move(value);
    n.requires_grad = std::any_of(parents.begin(), parents.end(), [&](int p) { return nodes_[p].requires_grad; });
    n.parents = std::move(parents);
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_of(int id) {
    Node& n = nodes_[id];
    if (!n.grad_ready) {
        n.grad = zeros_like(value_of(id));
        n.grad_ready = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw UsageError("loss does not belong to this tape");
    if (value(loss).size() != 1) throw UsageError("backward() needs a scalar loss, got " +
                                                  shape_string(value(loss).shape));
    for (auto& n : nodes_) n.grad_ready = false;
    grad_of(loss.id).data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.grad_ready || !n.requires_grad) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param) accumulate(n.param->gradient, n.grad);
    }
}

// ---------------------------------------------------------------------------
// Operations

Var matmul(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    if (x.cols() != y.rows())
        throw DimensionError("matmul: inner dimensions " + shape_string(x.shape) + " * " + shape_string(y.shape));
    Tensor out = matrix_shape(x.rows(), y.cols());
    view(out).noalias() = view(x) * view(y);
    return tape.push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const int pa = t.parents_of(self)[0];
        const int pb = t.parents_of(self)[1];
        const Tensor& g = t.grad_of(self);
        if (t.needs(pa)) view(t.grad_of(pa)).noalias() += view(g) * view(t.value_of(pb)).transpose();
        if (t.needs(pb)) view(t.grad_of(pb)).noalias() += view(t.value_of(pa)).transpose() * view(g);
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    if (x.cols() != y.cols())
        throw DimensionError("matmul_nt: inner dimensions " + shape_string(x.shape) + " * " +
                             shape_string(y.shape) + "^T");
    Tensor out = matrix_shape(x.rows(), y.rows());
    view(out).noalias() = view(x) * view(y).transpose();
    return tape.push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const int pa = t.parents_of(self)[0];
        const int pb = t.parents_of(self)[1];
        const Tensor& g = t.grad_of(self);
        if (t.needs(pa)) view(t.grad_of(pa)).noalias() += view(g) * view(t.value_of(pb));
        if (t.needs(pb)) view(t.grad_of(pb)).noalias() += view(g).transpose() * view(t.value_of(pa));
    });
}

Var add(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    require_same_shape(x, y, "add");
    Tensor out = matrix_shape(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] + y.data[i];
    return tape.push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        for (int p : t.parents_of(self))
            if (t.needs(p)) accumulate(t.grad_of(p), g);
    });
}

Var sub(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    require_same_shape(x, y, "sub");
    Tensor out = matrix_shape(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] - y.data[i];
    return tape.push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        const int pa = t.parents_of(self)[0];
        const int pb = t.parents_of(self)[1];
        if (t.needs(pa)) accumulate(t.grad_of(pa), g);
        if (t.needs(pb)) {
            Tensor& gb = t.grad_of(pb);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    require_same_shape(x, y, "mul");
    Tensor out = matrix_shape(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] * y.data[i];
    return tape.push(std::move(out), {a.id, b.id}, [](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        const int pa = t.parents_of(self)[0];
        const int pb = t.parents_of(self)[1];
        if (t.needs(pa)) {
            const Tensor& y = t.value_of(pb);
            Tensor& ga = t.grad_of(pa);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
        }
        if (t.needs(pb)) {
            const Tensor& x = t.value_of(pa);
            Tensor& gb = t.grad_of(pb);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * x.data[i];
        }
    });
}

Var scale(Var a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_row(Var a, Var row) {
    Tape& tape = same_tape(a, row);
    const Tensor& x = tape.value(a);
    const Tensor& r = tape.value(row);
    if (r.size() != x.cols())
        throw DimensionError("add_row: row " + shape_string(r.shape) + " does not fit " + shape_string(x.shape));
    Tensor out = matrix_shape(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) + r.data[j];
    return tape.push(std::move(out), {a.id, row.id}, [](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        const int pa = t.parents_of(self)[0];
        const int pr = t.parents_of(self)[1];
        if (t.needs(pa)) accumulate(t.grad_of(pa), g);
        if (t.needs(pr)) {
            Tensor& gr = t.grad_of(pr);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gr.data[j] += g.at(i, j);
        }
    });
}

Var affine(Var x, Var w, Var b) {
    const Tensor& wv = x.tape->value(w);
    const Tensor& xv = x.tape->value(x);
    if (xv.cols() != wv.cols())
        throw DimensionError("affine: input " + shape_string(xv.shape) + " does not conform to weight " +
                             shape_string(wv.shape));
    if (x.tape->value(b).size() != wv.rows())
        throw DimensionError("affine: bias " + shape_string(x.tape->value(b).shape) + " does not match weight " +
                             shape_string(wv.shape));
    return add_row(matmul_nt(x, w), b);
}

Var affine(Tape& tape, Var x, Parameter& w, Parameter& b) { return affine(x, tape.param(w), tape.param(b)); }

double sigmoid(double x) {
    // Clamped so saturated outputs stay strictly inside (0,1).
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    double y;
    if (x >= 0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    return std::clamp(y, lo, hi);
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.data) v = sigmoid(v);
    return out;
}

Var sigmoid(Var a) {
    return unary(a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax_rows(Var a) {
    Tape& tape = *a.tape;
    const Tensor& x = tape.value(a);
    Tensor out = matrix_shape(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = x.at(i, 0);
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) total += (out.at(i, j) = std::exp(x.at(i, j) - mx));
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) /= total;
    }
    return tape.push(std::move(out), {a.id}, [](Tape& t, int self) {
        const int p = t.parents_of(self)[0];
        const Tensor& g = t.grad_of(self);
        const Tensor& y = t.value_of(self);
        Tensor& gp = t.grad_of(p);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j) gp.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var concat_cols(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = tape.value(a);
    const Tensor& y = tape.value(b);
    if (x.rows() != y.rows())
        throw DimensionError("concat_cols: row counts " + shape_string(x.shape) + " vs " + shape_string(y.shape));
    const std::size_t ca = x.cols();
    Tensor out = matrix_shape(x.rows(), ca + y.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = x.at(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) out.at(i, ca + j) = y.at(i, j);
    }
    return tape.push(std::move(out), {a.id, b.id}, [ca](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        const int pa = t.parents_of(self)[0];
        const int pb = t.parents_of(self)[1];
        if (t.needs(pa)) {
            Tensor& ga = t.grad_of(pa);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
        }
        if (t.needs(pb)) {
            Tensor& gb = t.grad_of(pb);
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < gb.cols(); ++j) gb.at(i, j) += g.at(i, ca + j);
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw UsageError("concat_rows: no inputs");
    Tape& tape = *parts.front().tape;
    const std::size_t cols = tape.value(parts.front()).cols();
    std::size_t rows = 0;
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    for (const Var& p : parts) {
        const Tensor& v = tape.value(p);
        if (v.cols() != cols) throw DimensionError("concat_rows: column counts differ");
        offsets.push_back(rows);
        rows += v.rows();
        ids.push_back(p.id);
    }
    Tensor out = matrix_shape(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& v = tape.value(parts[k]);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<long>(offsets[k] * cols));
    }
    return tape.push(std::move(out), ids, [offsets, cols](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        const auto& ps = t.parents_of(self);
        for (std::size_t k = 0; k < ps.size(); ++k) {
            if (!t.needs(ps[k])) continue;
            Tensor& gp = t.grad_of(ps[k]);
            for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += g.data[offsets[k] * cols + i];
        }
    });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
    Tape& tape = *a.tape;
    const Tensor& x = tape.value(a);
    if (count == 0 || start + count > x.cols()) throw DimensionError("slice_cols: range out of bounds");
    Tensor out = matrix_shape(x.rows(), count);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out.at(i, j) = x.at(i, start + j);
    return tape.push(std::move(out), {a.id}, [start, count](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        Tensor& gp = t.grad_of(t.parents_of(self)[0]);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < count; ++j) gp.at(i, start + j) += g.at(i, j);
    });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
    Tape& tape = *a.tape;
    const Tensor& x = tape.value(a);
    if (count == 0 || start + count > x.rows()) throw DimensionError("slice_rows: range out of bounds");
    const std::size_t cols = x.cols();
    Tensor out = matrix_shape(count, cols);
    std::copy_n(x.data.begin() + static_cast<long>(start * cols), count * cols, out.data.begin());
    return tape.push(std::move(out), {a.id}, [start, cols](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        Tensor& gp = t.grad_of(t.parents_of(self)[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gp.data[start * cols + i] += g.data[i];
    });
}

Var mean_rows(Var a) {
    Tape& tape = *a.tape;
    const Tensor& x = tape.value(a);
    const std::size_t rows = x.rows();
    Tensor out = matrix_shape(1, x.cols());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out.data[j] += x.at(i, j);
    for (auto& v : out.data) v /= static_cast<double>(rows);
    return tape.push(std::move(out), {a.id}, [rows](Tape& t, int self) {
        const Tensor& g = t.grad_of(self);
        Tensor& gp = t.grad_of(t.parents_of(self)[0]);
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) gp.at(i, j) += g.data[j] * inv;
    });
}

Var sum(Var a) {
    Tape& tape = *a.tape;
    const Tensor& x = tape.value(a);
    double total = 0.0;
    for (double v : x.data) total += v;
    return tape.push(Tensor::scalar(total), {a.id}, [](Tape& t, int self) {
        const double g = t.grad_of(self).data[0];
        Tensor& gp = t.grad_of(t.parents_of(self)[0]);
        for (auto& v : gp.data) v += g;
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.tape->value(a).size())); }

// ---------------------------------------------------------------------------
// Attention

AttentionVars scaled_dot_attention(Var q, Var k, Var v) {
    Tape& tape = same_tape(q, k);
    const Tensor& qv = tape.value(q);
    const Tensor& kv = tape.value(k);
    const Tensor& vv = tape.value(v);
    if (qv.cols() != kv.cols())
        throw DimensionError("attention: query dim " + std::to_string(qv.cols()) + " != key dim " +
                             std::to_string(kv.cols()));
    if (kv.rows() != vv.rows())
        throw DimensionError("attention: " + std::to_string(kv.rows()) + " keys but " +
                             std::to_string(vv.rows()) + " values");
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(kv.cols()));
    Var weights = softmax_rows(scale(matmul_nt(q, k), inv_sqrt));
    Var values = matmul(weights, v);
    return {values, weights};
}

AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    Tape tape;
    auto out = scaled_dot_attention(tape.constant(q), tape.constant(k), tape.constant(v));
    return {tape.value(out.values), tape.value(out.weights)};
}

MultiHeadParams MultiHeadParams::create(std::size_t d_in, std::size_t d_model, std::size_t d_out,
                                        std::size_t heads, Rng& rng) {
    if (heads == 0 || d_model % heads != 0)
        throw ConfigError("model dimension " + std::to_string(d_model) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    MultiHeadParams p;
    p.wq = init_weight(d_model, d_in, rng);
    p.wk = init_weight(d_model, d_in, rng);
    p.wv = init_weight(d_model, d_in, rng);
    p.wo = init_weight(d_out, d_model, rng);
    p.heads = heads;
    return p;
}

ParameterList MultiHeadParams::parameters() { return {{"wq", &wq}, {"wk", &wk}, {"wv", &wv}, {"wo", &wo}}; }

Var bind(Tape& tape, Parameter& p, Binding mode) {
    return mode == Binding::Trainable ? tape.param(p) : tape.frozen(p);
}

Var multi_head_attention(Tape& tape, Var inputs, MultiHeadParams& params, Binding mode) {
    const std::size_t d_model = params.model_dim();
    if (params.heads == 0 || d_model % params.heads != 0)
        throw ConfigError("model dimension " + std::to_string(d_model) + " is not divisible by " +
                          std::to_string(params.heads) + " heads");
    const Tensor& x = tape.value(inputs);
    if (x.cols() != params.wq.value.cols())
        throw DimensionError("multi-head attention: input width " + std::to_string(x.cols()) + " != " +
                             std::to_string(params.wq.value.cols()));
    Var q = matmul_nt(inputs, bind(tape, params.wq, mode));
    Var k = matmul_nt(inputs, bind(tape, params.wk, mode));
    Var v = matmul_nt(inputs, bind(tape, params.wv, mode));
    Var merged;
    if (params.heads == 1) {
        merged = scaled_dot_attention(q, k, v).values;
    } else {
        const std::size_t width = d_model / params.heads;
        for (std::size_t h = 0; h < params.heads; ++h) {
            const std::size_t s = h * width;
            Var head = scaled_dot_attention(slice_cols(q, s, width), slice_cols(k, s, width),
                                            slice_cols(v, s, width)).values;
            merged = h == 0 ? head : concat_cols(merged, head);
        }
    }
    return matmul_nt(merged, bind(tape, params.wo, mode));
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw DimensionError("cosine_similarity: lengths " + std::to_string(u.size()) + " and " +
                             std::to_string(v.size()));
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Optimizers

void adam_step(const ParameterList& params, double learning_rate, const AdamConfig& cfg) {
    for (const auto& np : params) {
        Parameter& p = *np.param;
        p.step_count += 1;
        const double t = static_cast<double>(p.step_count);
        const double c1 = 1.0 - std::pow(cfg.beta1, t);
        const double c2 = 1.0 - std::pow(cfg.beta2, t);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.gradient.data[i];
            double& m = p.first_moment.data[i];
            double& v = p.second_moment.data[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            p.value.data[i] -= learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon);
        }
    }
}

void soft_update(const ParameterList& target, const ParameterList& online, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("soft update rate must lie in [0,1], got " +
                                                         std::to_string(rate));
    if (target.size() != online.size()) throw DimensionError("soft_update: parameter counts differ");
    for (std::size_t k = 0; k < target.size(); ++k) {
        Tensor& t = target[k].param->value;
        const Tensor& o = online[k].param->value;
        if (!t.same_shape(o))
            throw DimensionError("soft_update: " + target[k].name + " " + shape_string(t.shape) + " vs " +
                                 shape_string(o.shape));
        for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = rate * o.data[i] + (1.0 - rate) * t.data[i];
    }
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace tlvd::num
