#include "drhg/numcore.hpp"

#include <cmath>
#include <limits>

#include "drhg/errors.hpp"

namespace drhg::nc {

std::string shape_string(const Matrix& m) {
    return "[" + std::to_string(m.rows()) + " x " + std::to_string(m.cols()) + "]";
}

std::uint64_t& mac_counter() {
    thread_local std::uint64_t counter = 0;
    return counter;
}

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::param(const Matrix& value) {
    Node n;
    n.ref = &value;
    n.requires_grad = record_grad_;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Matrix value, bool requires_grad) { return push(std::move(value), requires_grad, nullptr); }

Var Tape::push(Matrix value, bool requires_grad, BackwardFn backward) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad && record_grad_;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

const Matrix& Tape::value(int id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.owned;
}

const Matrix& Tape::grad(int id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        const Matrix& v = value(id);
        n.grad = Matrix::Zero(v.rows(), v.cols());
        n.has_grad = true;
    }
    return n.grad;
}

Matrix& Tape::grad_buffer(int id) {
    grad(id);
    return nodes_[id].grad;
}

void Tape::accumulate(int id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        n.grad += g;
    }
}

void Tape::backward(Var loss) {
    const Matrix& lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ShapeError("backward needs a scalar loss, got " + shape_string(lv));
    }
    if (!nodes_[loss.id].requires_grad) return;
    accumulate(loss.id, Matrix::Ones(1, 1));
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.has_grad && n.backward) n.backward(*this, id);
    }
}

// --- helpers ----------------------------------------------------------------------

namespace {

void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape || a.tape == nullptr) throw ShapeError("operands live on different tapes");
}

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

bool needs(Var v) { return v.tape->requires_grad(v.id); }

}  // namespace

// --- primitives -----------------------------------------------------------------------

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
    mac_counter() += static_cast<std::uint64_t>(av.rows() * av.cols() * bv.cols());
    Matrix out = av * bv;
    const bool rg = needs(a) || needs(b);
    return a.tape->push(std::move(out), rg, [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(a.id)) t.grad_buffer(a.id).noalias() += g * t.value(b.id).transpose();
        if (t.requires_grad(b.id)) t.grad_buffer(b.id).noalias() += t.value(a.id).transpose() * g;
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_mismatch("add", av, bv);
    Matrix out = av + bv;
    return a.tape->push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a.id, g);
        t.accumulate(b.id, g);
    });
}

Var add_row(Var a, Var b) {
    require_same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (bv.rows() != 1 || av.cols() != bv.cols()) shape_mismatch("add_row", av, bv);
    Matrix out = av.rowwise() + bv.row(0);
    return a.tape->push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a.id, g);
        if (t.requires_grad(b.id)) t.accumulate(b.id, g.colwise().sum());
    });
}

Var concat_rows(Var a, Var b) {
    require_same_tape(a, b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.cols()) shape_mismatch("concat_rows", av, bv);
    Matrix out(av.rows() + bv.rows(), av.cols());
    out.topRows(av.rows()) = av;
    out.bottomRows(bv.rows()) = bv;
    const Eigen::Index ar = av.rows();
    return a.tape->push(std::move(out), needs(a) || needs(b), [a, b, ar](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(a.id)) t.accumulate(a.id, g.topRows(ar));
        if (t.requires_grad(b.id)) t.accumulate(b.id, g.bottomRows(g.rows() - ar));
    });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
    const Matrix& av = a.value();
    if (begin < 0 || count < 0 || begin + count > av.rows()) {
        throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_string(av));
    }
    Matrix out = av.middleRows(begin, count);
    return a.tape->push(std::move(out), needs(a), [a, begin, count](Tape& t, int self) {
        const Matrix& av = t.value(a.id);
        Matrix g = Matrix::Zero(av.rows(), av.cols());
        g.middleRows(begin, count) = t.grad(self);
        t.accumulate(a.id, g);
    });
}

Var gather_rows(Var a, std::span<const int> rows) {
    const Matrix& av = a.value();
    Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= av.rows()) throw ShapeError("gather_rows: row index out of range");
        out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
    }
    std::vector<int> idx(rows.begin(), rows.end());
    return a.tape->push(std::move(out), needs(a), [a, idx = std::move(idx)](Tape& t, int self) {
        const Matrix& av = t.value(a.id);
        const Matrix& g = t.grad(self);
        Matrix ga = Matrix::Zero(av.rows(), av.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accumulate(a.id, ga);
    });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
    const Matrix& av = a.value();
    if (rows * cols != av.size()) {
        throw ShapeError("reshape: cannot view " + shape_string(av) + " as [" + std::to_string(rows) + " x " +
                         std::to_string(cols) + "]");
    }
    Matrix out = Eigen::Map<const Matrix>(av.data(), rows, cols);
    const Eigen::Index r0 = av.rows(), c0 = av.cols();
    return a.tape->push(std::move(out), needs(a), [a, r0, c0](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        t.accumulate(a.id, Eigen::Map<const Matrix>(g.data(), r0, c0));
    });
}

Var relu(Var a) {
    Matrix out = a.value().cwiseMax(0.0);
    return a.tape->push(std::move(out), needs(a), [a](Tape& t, int self) {
        const Matrix& av = t.value(a.id);
        t.accumulate(a.id, (av.array() > 0.0).select(t.grad(self), 0.0));
    });
}

Var tanh(Var a) {
    Matrix out = a.value().array().tanh().matrix();
    return a.tape->push(std::move(out), needs(a), [a](Tape& t, int self) {
        const Matrix& y = t.value(self);
        t.accumulate(a.id, (t.grad(self).array() * (1.0 - y.array().square())).matrix());
    });
}

Var scale(Var a, double s) {
    Matrix out = a.value() * s;
    return a.tape->push(std::move(out), needs(a), [a, s](Tape& t, int self) { t.accumulate(a.id, t.grad(self) * s); });
}

namespace {

void check_mask(const char* op, const Matrix& z, const Mask& mask) {
    if (mask.rows() != z.rows() || mask.cols() != z.cols()) {
        throw ShapeError(std::string(op) + ": mask shape [" + std::to_string(mask.rows()) + " x " +
                         std::to_string(mask.cols()) + "] vs logits " + shape_string(z));
    }
}

/// Row max over unmasked entries; InfeasibleError for a fully masked row.
double masked_row_max(const Matrix& z, const Mask& mask, Eigen::Index r) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        if (mask(r, c)) {
            mx = std::max(mx, z(r, c));
            any = true;
        }
    }
    if (!any) throw InfeasibleError("softmax row " + std::to_string(r) + " is fully masked");
    return mx;
}

}  // namespace

Var masked_softmax(Var logits, const Mask& mask) {
    const Matrix& z = logits.value();
    check_mask("masked_softmax", z, mask);
    Matrix p = Matrix::Zero(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mx = masked_row_max(z, mask, r);
        double sum = 0.0;
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            if (mask(r, c)) {
                p(r, c) = std::exp(z(r, c) - mx);
                sum += p(r, c);
            }
        }
        p.row(r) /= sum;
    }
    return logits.tape->push(std::move(p), needs(logits), [logits](Tape& t, int self) {
        const Matrix& p = t.value(self);
        const Matrix& g = t.grad(self);
        const Eigen::VectorXd dot = (g.array() * p.array()).rowwise().sum();
        Matrix dz = p.array() * (g.colwise() - dot).array();
        t.accumulate(logits.id, dz);
    });
}

Var masked_log_softmax(Var logits, const Mask& mask) {
    const Matrix& z = logits.value();
    check_mask("masked_log_softmax", z, mask);
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    Matrix ls = Matrix::Constant(z.rows(), z.cols(), ninf);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mx = masked_row_max(z, mask, r);
        double sum = 0.0;
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            if (mask(r, c)) sum += std::exp(z(r, c) - mx);
        }
        const double lse = mx + std::log(sum);
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            if (mask(r, c)) ls(r, c) = z(r, c) - lse;
        }
    }
    return logits.tape->push(std::move(ls), needs(logits), [logits](Tape& t, int self) {
        const Matrix& ls = t.value(self);
        const Matrix& g = t.grad(self);
        Matrix dz = Matrix::Zero(ls.rows(), ls.cols());
        for (Eigen::Index r = 0; r < ls.rows(); ++r) {
            double gsum = 0.0;
            for (Eigen::Index c = 0; c < ls.cols(); ++c) {
                if (ls(r, c) != -std::numeric_limits<double>::infinity()) gsum += g(r, c);
            }
            for (Eigen::Index c = 0; c < ls.cols(); ++c) {
                if (ls(r, c) != -std::numeric_limits<double>::infinity()) {
                    dz(r, c) = g(r, c) - std::exp(ls(r, c)) * gsum;
                }
            }
        }
        t.accumulate(logits.id, dz);
    });
}

Var pick(Var a, Eigen::Index r, Eigen::Index c) {
    const Matrix& av = a.value();
    if (r < 0 || c < 0 || r >= av.rows() || c >= av.cols()) throw ShapeError("pick: index outside " + shape_string(av));
    Matrix out(1, 1);
    out(0, 0) = av(r, c);
    return a.tape->push(std::move(out), needs(a), [a, r, c](Tape& t, int self) {
        const Matrix& av = t.value(a.id);
        Matrix g = Matrix::Zero(av.rows(), av.cols());
        g(r, c) = t.grad(self)(0, 0);
        t.accumulate(a.id, g);
    });
}

Var sum_scalars(std::span<const Var> xs) {
    if (xs.empty()) throw ShapeError("sum_scalars: empty input");
    Matrix out = Matrix::Zero(1, 1);
    bool rg = false;
    for (const Var& x : xs) {
        const Matrix& xv = x.value();
        if (xv.rows() != 1 || xv.cols() != 1) throw ShapeError("sum_scalars: non-scalar " + shape_string(xv));
        out(0, 0) += xv(0, 0);
        rg = rg || needs(x);
    }
    std::vector<int> ids;
    for (const Var& x : xs) ids.push_back(x.id);
    return xs.front().tape->push(std::move(out), rg, [ids = std::move(ids)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (int id : ids) t.accumulate(id, g);
    });
}

Var rms_norm(Var x, Var gain, double eps) {
    require_same_tape(x, gain);
    const Matrix& xv = x.value();
    const Matrix& gv = gain.value();
    if (gv.rows() != 1 || gv.cols() != xv.cols()) shape_mismatch("rms_norm", xv, gv);
    const double d = static_cast<double>(xv.cols());
    Eigen::VectorXd inv = ((xv.array().square().rowwise().sum() / d) + eps).rsqrt();
    Matrix out = (xv.array().colwise() * inv.array()).rowwise() * gv.row(0).array();
    return x.tape->push(std::move(out), needs(x) || needs(gain), [x, gain, inv, d](Tape& t, int self) {
        const Matrix& xv = t.value(x.id);
        const Matrix& gv = t.value(gain.id);
        const Matrix& g = t.grad(self);
        const Matrix xhat = xv.array().colwise() * inv.array();
        if (t.requires_grad(gain.id)) t.accumulate(gain.id, (g.array() * xhat.array()).colwise().sum().matrix());
        if (t.requires_grad(x.id)) {
            const Matrix gy = g.array().rowwise() * gv.row(0).array();
            const Eigen::VectorXd dot = (gy.array() * xhat.array()).rowwise().sum() / d;
            Matrix dx = (gy - (xhat.array().colwise() * dot.array()).matrix()).array().colwise() * inv.array();
            t.accumulate(x.id, dx);
        }
    });
}

Var multihead_sdpa(Var q, Var k, Var v, int heads) {
    require_same_tape(q, k);
    require_same_tape(q, v);
    const Matrix& qv = q.value();
    const Matrix& kv = k.value();
    const Matrix& vv = v.value();
    const Eigen::Index d = qv.cols();
    if (heads <= 0 || d % heads != 0) {
        throw ConfigError("attention: dimension " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                          " heads");
    }
    if (kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows()) shape_mismatch("multihead_sdpa", kv, vv);
    const Eigen::Index dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const Eigen::Index nq = qv.rows(), nk = kv.rows();
    mac_counter() += static_cast<std::uint64_t>(2 * nq * nk * d);

    std::vector<Matrix> probs(heads);
    Matrix out(nq, d);
    for (int h = 0; h < heads; ++h) {
        Matrix s = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * inv_sqrt;
        const Eigen::VectorXd mx = s.rowwise().maxCoeff();
        s = (s.colwise() - mx).array().exp().matrix();
        const Eigen::VectorXd sum = s.rowwise().sum();
        s = s.array().colwise() / sum.array();
        out.middleCols(h * dh, dh) = s * vv.middleCols(h * dh, dh);
        probs[h] = std::move(s);
    }
    const bool rg = needs(q) || needs(k) || needs(v);
    return q.tape->push(std::move(out), rg, [q, k, v, heads, dh, inv_sqrt, probs = std::move(probs)](Tape& t, int self) {
        const Matrix& qv = t.value(q.id);
        const Matrix& kv = t.value(k.id);
        const Matrix& vv = t.value(v.id);
        const Matrix& g = t.grad(self);
        Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
        Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
        Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
        for (int h = 0; h < heads; ++h) {
            const Matrix& p = probs[h];
            const auto go = g.middleCols(h * dh, dh);
            dv.middleCols(h * dh, dh).noalias() += p.transpose() * go;
            const Matrix dp = go * vv.middleCols(h * dh, dh).transpose();
            const Eigen::VectorXd dot = (dp.array() * p.array()).rowwise().sum();
            const Matrix ds = (p.array() * (dp.colwise() - dot).array()).matrix() * inv_sqrt;
            dq.middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
            dk.middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
        }
        t.accumulate(q.id, dq);
        t.accumulate(k.id, dk);
        t.accumulate(v.id, dv);
    });
}

Var attention(Var queries, Var keys_src, Var values_src, Var w_q, Var w_k, Var w_v, Var w_out, int heads) {
    const Var q = matmul(queries, w_q);
    const Var k = matmul(keys_src, w_k);
    const Var v = matmul(values_src, w_v);
    return matmul(multihead_sdpa(q, k, v, heads), w_out);
}

// --- optimisation ----------------------------------------------------------------------

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const Matrix* p : params) {
            state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
            state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match parameters");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = grads[i];
        if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].rows() != p.rows() ||
            state.m[i].cols() != p.cols()) {
            throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
        }
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseAbs2();
        p.array() -= lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + cfg.eps);
    }
}

double learning_rate(double lr0, double decay, int epoch) { return lr0 * std::pow(decay, epoch); }

}  // namespace drhg::nc
