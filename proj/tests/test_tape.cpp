#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "murrenet/rng.hpp"
#include "murrenet/tape.hpp"

using murre::Mat;
using murre::ParamSet;
using murre::Rng;
using murre::Tape;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
    Mat m(r, c);
    for (double& v : m.a) v = scale * rng.normal();
    return m;
}

// Central finite differences of a scalar-valued graph against every input's
// tape gradient. The builder gets a fresh tape each evaluation.
void check_grads(const std::function<Tape::Var(Tape&, std::vector<Tape::Var>&)>& build, std::vector<Mat> inputs,
                 double tol = 2e-6, double h = 1e-5) {
    auto eval = [&](const std::vector<Mat>& xs, std::vector<Mat>* grads) {
        Tape t;
        std::vector<Tape::Var> vars;
        for (const Mat& x : xs) vars.push_back(t.input(x));
        Tape::Var loss = build(t, vars);
        const double value = t.scalar(loss);
        if (grads) {
            t.backward(loss);
            grads->clear();
            for (Tape::Var v : vars) grads->push_back(t.grad_of(v));
        }
        return value;
    };

    std::vector<Mat> analytic;
    eval(inputs, &analytic);
    for (size_t which = 0; which < inputs.size(); ++which) {
        for (size_t i = 0; i < inputs[which].size(); ++i) {
            const double old = inputs[which].a[i];
            inputs[which].a[i] = old + h;
            const double lp = eval(inputs, nullptr);
            inputs[which].a[i] = old - h;
            const double lm = eval(inputs, nullptr);
            inputs[which].a[i] = old;
            const double fd = (lp - lm) / (2.0 * h);
            const double a = analytic[which].a[i];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
            INFO("input ", which, " element ", i, " analytic ", a, " fd ", fd);
            CHECK(rel < tol);
        }
    }
}

}  // namespace

TEST_CASE("forward values of basic ops") {
    Tape t;
    Tape::Var a = t.input(Mat(2, 2, {1, 2, 3, 4}));
    Tape::Var b = t.input(Mat(2, 2, {5, 6, 7, 8}));
    CHECK(t.val(t.add(a, b))(1, 1) == 12);
    CHECK(t.val(t.matmul(a, b))(0, 0) == 19);
    CHECK(t.val(t.mean_rows(a))(0, 0) == 2.0);
    CHECK(t.val(t.row_means(a))(0, 0) == doctest::Approx(1.5));
    CHECK(t.val(t.col_means(a))(0, 0) == doctest::Approx(2.0));
    CHECK(t.scalar(t.sum_all(a)) == 10.0);
    CHECK(t.val(t.transpose(a))(0, 1) == 3);
    CHECK(t.val(t.slice_rows(a, 1, 2))(0, 0) == 3);
    CHECK(t.val(t.pad_repeat_rows(a, 3))(2, 0) == 1);
}

TEST_CASE("gradients of arithmetic and linear ops") {
    Rng rng(5);
    Mat x = random_mat(3, 4, rng);
    Mat y = random_mat(3, 4, rng);
    Mat w = random_mat(5, 4, rng);
    Mat b = random_mat(1, 5, rng);
    Mat m = random_mat(4, 6, rng);
    Mat probe = random_mat(3, 6, rng);

    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var s = t.add(t.hadamard(v[0], v[1]), t.scale(t.sub(v[0], v[1]), 0.7));
            return t.sum_all(t.hadamard(s, s));
        },
        {x, y});

    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var prod = t.matmul(v[0], v[1]);  // 3x6
            return t.sum_all(t.hadamard(prod, v[2]));
        },
        {x, m, probe});

    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var out = t.affine(v[0], v[1], v[2]);  // 3x5
            return t.mean_all(t.hadamard(out, out));
        },
        {x, w, b});

    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            return t.sum_all(t.hadamard(t.matmul_nt(v[0], v[1]), t.matmul_nt(v[0], v[1])));
        },
        {x, y});

    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.sum_all(t.hadamard(t.transpose(v[0]), t.transpose(v[0]))); },
                {x});
}

TEST_CASE("gradients of nonlinearities") {
    Rng rng(6);
    Mat x = random_mat(4, 5, rng);
    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.sum_all(t.gelu(v[0])); }, {x});
    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.sum_all(t.hadamard(t.sigmoid(v[0]), v[0])); }, {x});
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var sm = t.softmax_rows(v[0]);
            return t.sum_all(t.hadamard(sm, t.log_clamped(sm, 1e-300)));
        },
        {x});
    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.mean_all(t.abs(v[0])); }, {x});
}

TEST_CASE("gradients of layernorm") {
    Rng rng(7);
    Mat x = random_mat(4, 6, rng);
    Mat gamma = random_mat(1, 6, rng);
    Mat beta = random_mat(1, 6, rng);
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var y = t.layernorm(v[0], v[1], v[2]);
            return t.sum_all(t.hadamard(y, y));
        },
        {x, gamma, beta});
}

TEST_CASE("gradients of shape ops") {
    Rng rng(8);
    Mat a = random_mat(3, 4, rng);
    Mat b = random_mat(2, 4, rng);
    Mat c = random_mat(3, 2, rng);
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var cat = t.concat_rows(v[0], v[1]);
            Tape::Var sl = t.slice_rows(cat, 1, 4);
            return t.sum_all(t.hadamard(sl, sl));
        },
        {a, b});
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var cat = t.concat_cols(v[0], v[1]);
            Tape::Var sl = t.slice_cols(cat, 2, 6);
            return t.sum_all(t.hadamard(sl, sl));
        },
        {a, c});
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var padded = t.pad_repeat_rows(v[0], 9);
            return t.sum_all(t.hadamard(padded, padded));
        },
        {a});
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var seg = t.segment_mean_rows(v[0], 2);
            return t.sum_all(t.hadamard(seg, seg));
        },
        {a});
    // m >= n: segment means reduce to the identity.
    Tape t;
    Tape::Var v = t.input(a);
    Tape::Var seg = t.segment_mean_rows(v, 10);
    for (size_t i = 0; i < a.size(); ++i) CHECK(t.val(seg).a[i] == a.a[i]);
}

TEST_CASE("gradients of reductions and broadcasts") {
    Rng rng(9);
    Mat x = random_mat(4, 5, rng);
    Mat g = random_mat(4, 1, rng);
    Mat s = Mat(1, 1, {2.3});
    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.sum_all(t.hadamard(t.mean_rows(v[0]), t.mean_rows(v[0]))); }, {x});
    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.sum_all(t.hadamard(t.row_means(v[0]), t.row_means(v[0]))); }, {x});
    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.sum_all(t.hadamard(t.col_means(v[0]), t.col_means(v[0]))); }, {x});
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var y = t.col_broadcast_mul(v[1], v[0]);
            return t.sum_all(t.hadamard(y, y));
        },
        {x, g});
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var y = t.div_by_scalar(v[0], v[1], 1e-8);
            return t.sum_all(t.hadamard(y, y));
        },
        {x, s});
    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.max_rowsum(v[0]); }, {x});
    check_grads([&](Tape& t, std::vector<Tape::Var>& v) { return t.max_colsum(v[0]); }, {x});
}

TEST_CASE("gradients of depthwise conv") {
    Rng rng(10);
    Mat tokens = random_mat(9, 3, rng);
    Mat kernel = random_mat(9, 3, rng);
    check_grads(
        [&](Tape& t, std::vector<Tape::Var>& v) {
            Tape::Var y = t.depthwise_conv_grid(v[0], v[1], 3, 3);
            return t.sum_all(t.hadamard(y, y));
        },
        {tokens, kernel});
}

TEST_CASE("gradients of the survival NLL node") {
    Mat hazards(1, 4, {0.2, 0.4, 0.3, 0.6});
    for (int bin = 0; bin < 4; ++bin) {
        for (bool event : {true, false}) {
            check_grads(
                [&](Tape& t, std::vector<Tape::Var>& v) { return t.nll_survival(v[0], bin, event, 1e-12); },
                {hazards});
        }
    }
}

TEST_CASE("parameters accumulate gradients across multiple uses") {
    ParamSet ps;
    murre::Parameter& p = ps.add("w", 2, 2);
    p.value = Mat(2, 2, {1, 2, 3, 4});
    Tape t;
    Tape::Var w1 = t.param(p);
    Tape::Var w2 = t.param(p);
    Tape::Var loss = t.sum_all(t.add(w1, t.scale(w2, 2.0)));
    t.backward(loss);
    for (double g : p.grad.a) CHECK(g == 3.0);  // 1 from w1, 2 from w2
}

TEST_CASE("backward can run only once") {
    Tape t;
    Tape::Var x = t.input(Mat(1, 1, {2.0}));
    Tape::Var loss = t.sum_all(x);
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), std::logic_error);
}
