#include <doctest.h>

#include <cmath>
#include <numeric>

#include "drhg/errors.hpp"
#include "drhg/numcore.hpp"
#include "drhg/random.hpp"
#include "oracles.hpp"

using namespace drhg;
using nc::Matrix;
using nc::Tape;
using nc::Var;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (2.0 * uniform01(rng) - 1.0) * scale;
    return m;
}

// Builds an op over `inputs`, reduces it to a scalar through a fixed bilinear
// form and compares every input gradient with central differences.
double max_fd_error(std::vector<Matrix> inputs, const std::function<Var(Tape&, const std::vector<Var>&)>& op,
                    double h = 1e-6, std::uint64_t seed = 1) {
    Rng rng = make_rng(seed);
    Matrix u, v;
    auto loss = [&](Tape& t, const std::vector<Var>& xs) {
        const Var y = op(t, xs);
        if (u.size() == 0) {
            u = random_matrix(1, y.rows(), rng);
            v = random_matrix(y.cols(), 1, rng);
        }
        return nc::matmul(nc::matmul(t.constant(u), y), t.constant(v));
    };
    Tape tape(true);
    std::vector<Var> xs;
    for (const auto& m : inputs) xs.push_back(tape.param(m));
    tape.backward(loss(tape, xs));
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Matrix analytic = tape.grad(xs[i].id);
        const Matrix numeric = oracle::finite_difference(
            inputs[i],
            [&] {
                Tape t(false);
                std::vector<Var> ys;
                for (const auto& m : inputs) ys.push_back(t.constant(m));
                return loss(t, ys).value()(0, 0);
            },
            h);
        for (Eigen::Index j = 0; j < analytic.size(); ++j) {
            worst = std::max(worst, oracle::rel_err(analytic.data()[j], numeric.data()[j], 1e-6));
        }
    }
    return worst;
}

nc::Mask full_mask(Eigen::Index r, Eigen::Index c) { return nc::Mask::Constant(r, c, true); }

}  // namespace

TEST_CASE("forward identities") {
    Rng rng = make_rng(1);
    const Matrix x = random_matrix(3, 4, rng);
    Tape t(false);
    CHECK(nc::matmul(t.constant(Matrix::Identity(3, 3)), t.constant(x)).value() == x);
    CHECK(nc::add(t.constant(x), t.constant(Matrix::Zero(3, 4))).value() == x);
    CHECK(nc::reshape(t.constant(x), 2, 6).value().row(0).head(4) == x.row(0));
    CHECK(nc::concat_rows(t.constant(x), t.constant(x)).value().rows() == 6);
    CHECK(nc::relu(t.constant(x)).value() == x.cwiseMax(0.0));
    CHECK(nc::scale(t.constant(x), 2.0).value() == 2.0 * x);
}

TEST_CASE("shape errors name both shapes") {
    Tape t(false);
    const Var a = t.constant(Matrix::Zero(2, 3));
    const Var b = t.constant(Matrix::Zero(2, 3));
    try {
        nc::matmul(a, b);
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2 x 3") != std::string::npos);
    }
    CHECK_THROWS_AS(nc::add(a, t.constant(Matrix::Zero(3, 2))), ShapeError);
    CHECK_THROWS_AS(nc::reshape(a, 4, 2), ShapeError);
    CHECK_THROWS_AS(nc::slice_rows(a, 1, 2), ShapeError);
    Tape g(true);
    CHECK_THROWS_AS(g.backward(g.param(Matrix::Zero(2, 2))), ShapeError);
}

TEST_CASE("primitive gradients against central differences") {
    Rng rng = make_rng(2);
    // linear in every single entry: a wide step has no truncation error and little rounding
    CHECK(max_fd_error({random_matrix(4, 5, rng), random_matrix(5, 3, rng)},
                       [](Tape&, const auto& x) { return nc::matmul(x[0], x[1]); }, 1e-3) <= 1e-8);
    CHECK(max_fd_error({random_matrix(3, 4, rng), random_matrix(3, 4, rng)},
                       [](Tape&, const auto& x) { return nc::add(x[0], x[1]); }) <= 1e-8);
    CHECK(max_fd_error({random_matrix(3, 4, rng), random_matrix(1, 4, rng)},
                       [](Tape&, const auto& x) { return nc::add_row(x[0], x[1]); }) <= 1e-8);
    CHECK(max_fd_error({random_matrix(2, 4, rng), random_matrix(3, 4, rng)},
                       [](Tape&, const auto& x) { return nc::concat_rows(x[0], x[1]); }) <= 1e-8);
    CHECK(max_fd_error({random_matrix(5, 3, rng)}, [](Tape&, const auto& x) { return nc::slice_rows(x[0], 1, 3); }) <=
          1e-8);
    CHECK(max_fd_error({random_matrix(5, 3, rng)},
                       [](Tape&, const auto& x) {
                           static const std::vector<int> rows = {4, 0, 4, 2};
                           return nc::gather_rows(x[0], rows);
                       }) <= 1e-8);
    CHECK(max_fd_error({random_matrix(2, 6, rng)}, [](Tape&, const auto& x) { return nc::reshape(x[0], 4, 3); }) <=
          1e-8);
    // keep relu inputs away from the kink
    Matrix r = random_matrix(3, 3, rng);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] += r.data()[i] > 0 ? 0.1 : -0.1;
    CHECK(max_fd_error({r}, [](Tape&, const auto& x) { return nc::relu(x[0]); }) <= 1e-8);
    CHECK(max_fd_error({random_matrix(3, 3, rng, 2.0)}, [](Tape&, const auto& x) { return nc::tanh(x[0]); }) <= 1e-7);
    CHECK(max_fd_error({random_matrix(3, 3, rng)}, [](Tape&, const auto& x) { return nc::scale(x[0], -1.7); }) <=
          1e-8);
    CHECK(max_fd_error({random_matrix(2, 5, rng)},
                       [](Tape&, const auto& x) { return nc::masked_softmax(x[0], full_mask(2, 5)); }) <= 1e-7);
    CHECK(max_fd_error({random_matrix(4, 6, rng), random_matrix(1, 6, rng)},
                       [](Tape&, const auto& x) { return nc::rms_norm(x[0], x[1]); }) <= 1e-6);
    CHECK(max_fd_error({random_matrix(3, 4, rng), random_matrix(5, 4, rng), random_matrix(5, 4, rng)},
                       [](Tape&, const auto& x) { return nc::multihead_sdpa(x[0], x[1], x[2], 2); }) <= 1e-6);
}

TEST_CASE("masked log-softmax and scalar helpers") {
    Rng rng = make_rng(3);
    nc::Mask mask = full_mask(1, 6);
    mask(0, 1) = mask(0, 4) = false;
    const Matrix z = random_matrix(1, 6, rng);
    const double e = max_fd_error(
        {z},
        [&](Tape& t, const auto& x) {
            const Var ls = nc::masked_log_softmax(x[0], mask);
            const std::vector<Var> picks = {nc::pick(ls, 0, 0), nc::pick(ls, 0, 3), nc::pick(ls, 0, 5)};
            return nc::sum_scalars(picks);
        });
    CHECK(e <= 1e-7);

    Tape t(true);
    const Var x = t.param(z);
    const Var ls = nc::masked_log_softmax(x, mask);
    CHECK(std::isinf(ls.value()(0, 1)));
    t.backward(nc::pick(ls, 0, 2));
    CHECK(t.grad(x.id)(0, 1) == 0.0);
    CHECK(t.grad(x.id)(0, 4) == 0.0);
}

TEST_CASE("masked softmax") {
    Tape t(false);
    const Matrix s3 = nc::masked_softmax(t.constant(Matrix::Zero(1, 3)), full_mask(1, 3)).value();
    for (int i = 0; i < 3; ++i) CHECK(s3(0, i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    Matrix big(1, 2);
    big << 1000.0, 0.0;
    const Matrix sb = nc::masked_softmax(t.constant(big), full_mask(1, 2)).value();
    CHECK(sb(0, 0) == 1.0);
    CHECK(sb(0, 1) == doctest::Approx(0.0).epsilon(1e-300));
    CHECK(std::isfinite(sb(0, 1)));

    Rng rng = make_rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = uniform_int(rng, 1, 40);
        const Matrix z = random_matrix(1, n, rng, 20.0);
        nc::Mask m(1, n);
        std::vector<char> keep(n);
        for (int i = 0; i < n; ++i) keep[i] = m(0, i) = uniform01(rng) < 0.6;
        keep[uniform_int(rng, 0, n - 1)] = 1;
        for (int i = 0; i < n; ++i) m(0, i) = keep[i];
        const Matrix p = nc::masked_softmax(t.constant(z), m).value();
        const auto ref = oracle::softmax_ld(std::vector<double>(z.data(), z.data() + n), keep);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            REQUIRE(std::abs(p(0, i) - static_cast<double>(ref[i])) <= 1e-12);
            if (!keep[i]) REQUIRE(p(0, i) == 0.0);
            sum += p(0, i);
        }
        REQUIRE(std::abs(sum - 1.0) <= 1e-12);
    }

    nc::Mask none = nc::Mask::Constant(1, 3, false);
    CHECK_THROWS_AS(nc::masked_softmax(t.constant(Matrix::Zero(1, 3)), none), InfeasibleError);
}

TEST_CASE("attention") {
    Rng rng = make_rng(5);
    const int d = 8;
    const Matrix wq = random_matrix(d, d, rng), wk = random_matrix(d, d, rng), wv = random_matrix(d, d, rng),
                 wo = random_matrix(d, d, rng);
    Tape t(false);
    auto att = [&](const Matrix& q, const Matrix& kv, int heads) {
        return nc::attention(t.constant(q), t.constant(kv), t.constant(kv), t.constant(wq), t.constant(wk),
                             t.constant(wv), t.constant(wo), heads)
            .value();
    };

    // a single key: output is the projected value row
    const Matrix q1 = random_matrix(1, d, rng), kv1 = random_matrix(1, d, rng);
    CHECK((att(q1, kv1, 2) - kv1 * wv * wo).cwiseAbs().maxCoeff() <= 1e-12);

    const Matrix q = random_matrix(4, d, rng), kv = random_matrix(7, d, rng);
    for (int heads : {1, 2, 4}) {
        const Matrix ref = oracle::dense_attention(q, kv, wq, wk, wv, wo, heads);
        CHECK((att(q, kv, heads) - ref).cwiseAbs().maxCoeff() <= 1e-10);
    }

    // permuting key/value rows together leaves the output unchanged
    Matrix perm(7, d);
    const std::vector<int> order = {3, 6, 0, 2, 5, 1, 4};
    for (int i = 0; i < 7; ++i) perm.row(i) = kv.row(order[i]);
    CHECK((att(q, perm, 2) - att(q, kv, 2)).cwiseAbs().maxCoeff() <= 1e-12);

    CHECK_THROWS_AS(att(q, kv, 3), ConfigError);
}

TEST_CASE("gradients accumulate additively") {
    Rng rng = make_rng(6);
    const Matrix x = random_matrix(2, 2, rng);
    Tape t(true);
    const Var a = t.param(x);
    const Var y = nc::add(a, a);
    t.backward(nc::pick(y, 1, 0));
    CHECK(t.grad(a.id)(1, 0) == 2.0);
    CHECK(t.grad(a.id)(0, 0) == 0.0);
}

TEST_CASE("Adam and the learning-rate schedule") {
    CHECK(nc::learning_rate(1e-4, 0.97, 0) == 1e-4);
    CHECK(nc::learning_rate(1e-4, 0.97, 1) == doctest::Approx(9.7e-5).epsilon(1e-12));

    Rng rng = make_rng(7);
    Matrix p = random_matrix(3, 3, rng);
    const Matrix before = p;
    std::vector<Matrix*> params = {&p};
    std::vector<Matrix> zero = {Matrix::Zero(3, 3)};
    nc::AdamState st;
    nc::adam_step(params, zero, st, 1e-3);
    CHECK(p == before);

    // one step with gradient g moves each entry by lr * sign(g) (bias-corrected first step)
    std::vector<Matrix> g = {random_matrix(3, 3, rng)};
    nc::AdamState fresh;
    nc::adam_step(params, g, fresh, 1e-2);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double gi = g[0].data()[i];
        const double expect = before.data()[i] - 1e-2 * gi / (std::abs(gi) + 1e-8);
        CHECK(p.data()[i] == doctest::Approx(expect).epsilon(1e-12));
    }

    // minimises a quadratic
    Matrix w = Matrix::Constant(1, 1, 5.0);
    std::vector<Matrix*> ws = {&w};
    nc::AdamState s2;
    for (int i = 0; i < 2000; ++i) {
        std::vector<Matrix> gw = {2.0 * w};
        nc::adam_step(ws, gw, s2, 0.05);
    }
    CHECK(std::abs(w(0, 0)) < 1e-2);

    std::vector<Matrix> wrong = {Matrix::Zero(2, 2)};
    nc::AdamState s3;
    CHECK_THROWS_AS(nc::adam_step(params, wrong, s3, 1e-3), ShapeError);
}

TEST_CASE("forward passes are bitwise deterministic") {
    Rng rng = make_rng(8);
    const Matrix q = random_matrix(5, 8, rng), kv = random_matrix(9, 8, rng), w = random_matrix(8, 8, rng);
    auto run = [&] {
        Tape t(false);
        const Var wv = t.constant(w);
        return nc::attention(t.constant(q), t.constant(kv), t.constant(kv), wv, wv, wv, wv, 4).value();
    };
    CHECK(run() == run());
}

TEST_CASE("MAC counter") {
    Tape t(false);
    nc::mac_counter() = 0;
    nc::matmul(t.constant(Matrix::Zero(3, 4)), t.constant(Matrix::Zero(4, 5)));
    CHECK(nc::mac_counter() == 60u);
}
