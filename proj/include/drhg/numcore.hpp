#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace drhg::nc {

/// Dense row-major matrix; every tensor in the model is two-dimensional
/// (scalars are 1 x 1).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

/// Ordered record of primitive operations. Single-threaded; use one tape per
/// worker.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    explicit Tape(bool record_grad = true) : record_grad_(record_grad) { nodes_.reserve(1024); }

    Var constant(Matrix value);
    /// Differentiable leaf that refers to (does not copy) `value`.
    Var param(const Matrix& value);
    Var leaf(Matrix value, bool requires_grad);

    Var push(Matrix value, bool requires_grad, BackwardFn backward);

    const Matrix& value(int id) const;
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    bool recording() const { return record_grad_; }

    /// Gradient buffer of a node; zero matrix when nothing flowed into it.
    const Matrix& grad(int id);
    /// Adds `g` into the gradient buffer of node `id` (allocating on first use).
    void accumulate(int id, const Matrix& g);
    /// Mutable gradient buffer (zero on first use) for in-place accumulation.
    /// Only valid for nodes that require a gradient.
    Matrix& grad_buffer(int id);
    bool has_grad(int id) const { return nodes_[id].has_grad; }

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        Matrix owned;
        const Matrix* ref = nullptr;
        Matrix grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    bool record_grad_;
};

// --- instrumentation -------------------------------------------------------------

/// Multiply-accumulate count of matmul and attention kernels on this thread.
std::uint64_t& mac_counter();

// --- primitives ----------------------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a (n x c) + row vector b (1 x c) broadcast over rows.
Var add_row(Var a, Var b);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var gather_rows(Var a, std::span<const int> rows);
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
Var relu(Var a);
Var tanh(Var a);
Var scale(Var a, double s);
/// Row-wise softmax; masked entries (mask false) are exactly 0.
Var masked_softmax(Var logits, const Mask& mask);
/// Row-wise log-softmax; masked entries are -inf and receive no gradient.
Var masked_log_softmax(Var logits, const Mask& mask);
/// Element (r, c) as a 1 x 1 value.
Var pick(Var a, Eigen::Index r, Eigen::Index c);
/// Sum of 1 x 1 values.
Var sum_scalars(std::span<const Var> xs);
/// x / rms(x) * gain per row, gain is 1 x c.
Var rms_norm(Var x, Var gain, double eps = 1e-6);
/// softmax(Q_h K_h^T / sqrt(d_h)) V_h per head, heads concatenated by columns.
/// Inputs are already projected: Q is nq x d, K and V are nk x d.
Var multihead_sdpa(Var q, Var k, Var v, int heads);

/// Projections + multi-head scaled dot-product attention + output projection.
Var attention(Var queries, Var keys_values_src_k, Var keys_values_src_v, Var w_q, Var w_k, Var w_v, Var w_out,
              int heads);

// --- optimisation ------------------------------------------------------------------------

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long step = 0;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update of every parameter in place.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

/// lr0 * decay^epoch.
double learning_rate(double lr0, double decay, int epoch);

std::string shape_string(const Matrix& m);

}  // namespace drhg::nc
