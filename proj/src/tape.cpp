#include "murrenet/tape.hpp"

#include <cmath>

#include "murrenet/kernels.hpp"

namespace murre {

Parameter& ParamSet::add(const std::string& name, int rows, int cols) {
    if (find(name)) throw std::runtime_error("ParamSet: duplicate parameter '" + name + "'");
    items_.push_back(std::make_unique<Parameter>(Parameter{name, Mat(rows, cols), Mat(rows, cols)}));
    return *items_.back();
}

Parameter* ParamSet::find(const std::string& name) {
    for (auto& p : items_)
        if (p->name == name) return p.get();
    return nullptr;
}

const Parameter* ParamSet::find(const std::string& name) const {
    for (auto& p : items_)
        if (p->name == name) return p.get();
    return nullptr;
}

size_t ParamSet::total_elements() const {
    size_t n = 0;
    for (auto& p : items_) n += p->value.size();
    return n;
}

void ParamSet::zero_grads() {
    for (auto& p : items_) std::fill(p->grad.a.begin(), p->grad.a.end(), 0.0);
}

Tape::Var Tape::push(Mat val, std::function<void(Tape&)> back, Parameter* bound) {
    Node n;
    n.grad = Mat(val.rows, val.cols);
    n.val = std::move(val);
    n.back = std::move(back);
    n.bound = bound;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::input(Mat v) { return push(std::move(v)); }

Tape::Var Tape::param(Parameter& p) { return push(p.value, {}, &p); }

Tape::Var Tape::identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return input(std::move(m));
}

double Tape::scalar(Var v) const {
    const Mat& m = val(v);
    if (m.rows != 1 || m.cols != 1) throw ShapeError("scalar: node is " + shape_str(m));
    return m.a[0];
}

Tape::Var Tape::add(Var a, Var b) {
    Mat y;
    kern::add(v(a.i), v(b.i), y);
    return push(std::move(y), [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        kern::axpy(1.0, t.g(out), t.g(a.i));
        kern::axpy(1.0, t.g(out), t.g(b.i));
    });
}

Tape::Var Tape::sub(Var a, Var b) {
    Mat y;
    kern::sub(v(a.i), v(b.i), y);
    return push(std::move(y), [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        kern::axpy(1.0, t.g(out), t.g(a.i));
        kern::axpy(-1.0, t.g(out), t.g(b.i));
    });
}

Tape::Var Tape::scale(Var a, double s) {
    Mat y;
    kern::scale(v(a.i), s, y);
    return push(std::move(y), [a, s, out = static_cast<int>(nodes_.size())](Tape& t) {
        kern::axpy(s, t.g(out), t.g(a.i));
    });
}

Tape::Var Tape::hadamard(Var a, Var b) {
    Mat y;
    kern::hadamard(v(a.i), v(b.i), y);
    return push(std::move(y), [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        Mat tmp;
        kern::hadamard(t.g(out), t.v(b.i), tmp);
        kern::axpy(1.0, tmp, t.g(a.i));
        kern::hadamard(t.g(out), t.v(a.i), tmp);
        kern::axpy(1.0, tmp, t.g(b.i));
    });
}

Tape::Var Tape::matmul(Var a, Var b) {
    Mat y;
    kern::matmul_nn(v(a.i), v(b.i), y);
    return push(std::move(y), [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        Mat tmp;
        kern::matmul_nt(t.g(out), t.v(b.i), tmp);
        kern::axpy(1.0, tmp, t.g(a.i));
        kern::matmul_tn(t.v(a.i), t.g(out), tmp);
        kern::axpy(1.0, tmp, t.g(b.i));
    });
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
    Mat y;
    kern::matmul_nt(v(a.i), v(b.i), y);
    return push(std::move(y), [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        Mat tmp;
        kern::matmul_nn(t.g(out), t.v(b.i), tmp);
        kern::axpy(1.0, tmp, t.g(a.i));
        kern::matmul_tn(t.g(out), t.v(a.i), tmp);
        kern::axpy(1.0, tmp, t.g(b.i));
    });
}

Tape::Var Tape::transpose(Var a) {
    const Mat& x = v(a.i);
    Mat y(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) y(j, i) = x(i, j);
    return push(std::move(y), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        Mat& ga = t.g(a.i);
        for (int i = 0; i < gy.rows; ++i)
            for (int j = 0; j < gy.cols; ++j) ga(j, i) += gy(i, j);
    });
}

Tape::Var Tape::affine(Var x, Var w, Var b) {
    Mat y;
    kern::affine(v(x.i), v(w.i), v(b.i), y);
    return push(std::move(y), [x, w, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        Mat tmp;
        kern::matmul_nn(t.g(out), t.v(w.i), tmp);
        kern::axpy(1.0, tmp, t.g(x.i));
        kern::matmul_tn(t.g(out), t.v(x.i), tmp);
        kern::axpy(1.0, tmp, t.g(w.i));
        const Mat& gy = t.g(out);
        Mat& gb = t.g(b.i);
        for (int i = 0; i < gy.rows; ++i)
            for (int j = 0; j < gy.cols; ++j) gb(0, j) += gy(i, j);
    });
}

Tape::Var Tape::gelu(Var a) {
    Mat y;
    kern::gelu(v(a.i), y);
    return push(std::move(y), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
        kern::gelu_bwd(t.v(a.i), t.g(out), t.g(a.i));
    });
}

Tape::Var Tape::sigmoid(Var a) {
    Mat y;
    kern::sigmoid(v(a.i), y);
    return push(std::move(y), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
        kern::sigmoid_bwd(t.v(out), t.g(out), t.g(a.i));
    });
}

Tape::Var Tape::log_clamped(Var a, double floor) {
    const Mat& x = v(a.i);
    Mat y(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) y.a[i] = std::log(std::max(x.a[i], floor));
    return push(std::move(y), [a, floor, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& x = t.v(a.i);
        const Mat& gy = t.g(out);
        Mat& gx = t.g(a.i);
        for (size_t i = 0; i < x.size(); ++i)
            if (x.a[i] > floor) gx.a[i] += gy.a[i] / x.a[i];
    });
}

Tape::Var Tape::abs(Var a) {
    const Mat& x = v(a.i);
    Mat y(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) y.a[i] = std::abs(x.a[i]);
    return push(std::move(y), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& x = t.v(a.i);
        const Mat& gy = t.g(out);
        Mat& gx = t.g(a.i);
        for (size_t i = 0; i < x.size(); ++i) {
            const double s = x.a[i] > 0.0 ? 1.0 : (x.a[i] < 0.0 ? -1.0 : 0.0);
            gx.a[i] += s * gy.a[i];
        }
    });
}

Tape::Var Tape::softmax_rows(Var a) {
    Mat y;
    kern::softmax_rows(v(a.i), y);
    return push(std::move(y), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
        kern::softmax_rows_bwd(t.v(out), t.g(out), t.g(a.i));
    });
}

Tape::Var Tape::layernorm(Var x, Var gamma, Var beta, double eps) {
    Mat y, xhat, rstd;
    kern::layernorm_rows(v(x.i), v(gamma.i), v(beta.i), eps, y, xhat, rstd);
    return push(std::move(y),
                [x, gamma, beta, xh = std::move(xhat), rs = std::move(rstd), out = static_cast<int>(nodes_.size())](
                    Tape& t) {
                    kern::layernorm_rows_bwd(xh, rs, t.v(gamma.i), t.g(out), t.g(x.i), t.g(gamma.i), t.g(beta.i));
                });
}

Tape::Var Tape::concat_rows(Var a, Var b) {
    const Mat& x = v(a.i);
    const Mat& y = v(b.i);
    if (x.cols != y.cols) throw ShapeError("concat_rows: width mismatch " + shape_str(x) + " vs " + shape_str(y));
    Mat z(x.rows + y.rows, x.cols);
    std::copy(x.a.begin(), x.a.end(), z.a.begin());
    std::copy(y.a.begin(), y.a.end(), z.a.begin() + x.size());
    return push(std::move(z), [a, b, na = x.rows, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gz = t.g(out);
        Mat& ga = t.g(a.i);
        Mat& gb = t.g(b.i);
        for (size_t i = 0; i < ga.size(); ++i) ga.a[i] += gz.a[i];
        const size_t off = static_cast<size_t>(na) * gz.cols;
        for (size_t i = 0; i < gb.size(); ++i) gb.a[i] += gz.a[off + i];
    });
}

Tape::Var Tape::slice_rows(Var a, int r0, int r1) {
    const Mat& x = v(a.i);
    if (r0 < 0 || r1 > x.rows || r0 >= r1) throw ShapeError("slice_rows: bad range on " + shape_str(x));
    Mat y(r1 - r0, x.cols);
    std::copy(x.row(r0), x.row(r0) + y.size(), y.a.begin());
    return push(std::move(y), [a, r0, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        Mat& ga = t.g(a.i);
        double* dst = ga.row(r0);
        for (size_t i = 0; i < gy.size(); ++i) dst[i] += gy.a[i];
    });
}

Tape::Var Tape::concat_cols(Var a, Var b) {
    const Mat& x = v(a.i);
    const Mat& y = v(b.i);
    if (x.rows != y.rows) throw ShapeError("concat_cols: height mismatch " + shape_str(x) + " vs " + shape_str(y));
    Mat z(x.rows, x.cols + y.cols);
    for (int i = 0; i < x.rows; ++i) {
        std::copy(x.row(i), x.row(i) + x.cols, z.row(i));
        std::copy(y.row(i), y.row(i) + y.cols, z.row(i) + x.cols);
    }
    return push(std::move(z), [a, b, ca = x.cols, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gz = t.g(out);
        Mat& ga = t.g(a.i);
        Mat& gb = t.g(b.i);
        for (int i = 0; i < ga.rows; ++i) {
            const double* src = gz.row(i);
            double* da = ga.row(i);
            double* db = gb.row(i);
            for (int j = 0; j < ga.cols; ++j) da[j] += src[j];
            for (int j = 0; j < gb.cols; ++j) db[j] += src[ca + j];
        }
    });
}

Tape::Var Tape::slice_cols(Var a, int c0, int c1) {
    const Mat& x = v(a.i);
    if (c0 < 0 || c1 > x.cols || c0 >= c1) throw ShapeError("slice_cols: bad range on " + shape_str(x));
    Mat y(x.rows, c1 - c0);
    for (int i = 0; i < x.rows; ++i) std::copy(x.row(i) + c0, x.row(i) + c1, y.row(i));
    return push(std::move(y), [a, c0, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        Mat& ga = t.g(a.i);
        for (int i = 0; i < gy.rows; ++i) {
            const double* src = gy.row(i);
            double* dst = ga.row(i) + c0;
            for (int j = 0; j < gy.cols; ++j) dst[j] += src[j];
        }
    });
}

Tape::Var Tape::pad_repeat_rows(Var a, int m) {
    const Mat& x = v(a.i);
    if (m < x.rows) throw ShapeError("pad_repeat_rows: target smaller than input");
    Mat y(m, x.cols);
    for (int i = 0; i < m; ++i) std::copy(x.row(i % x.rows), x.row(i % x.rows) + x.cols, y.row(i));
    return push(std::move(y), [a, m, n = x.rows, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        Mat& ga = t.g(a.i);
        for (int i = 0; i < m; ++i) {
            const double* src = gy.row(i);
            double* dst = ga.row(i % n);
            for (int j = 0; j < gy.cols; ++j) dst[j] += src[j];
        }
    });
}

namespace {
// First `n % m` segments get the extra row when m does not divide n.
inline void segment_bounds(int n, int m, int s, int& lo, int& hi) {
    const int base = n / m, rem = n % m;
    lo = s * base + std::min(s, rem);
    hi = lo + base + (s < rem ? 1 : 0);
}
}  // namespace

Tape::Var Tape::segment_mean_rows(Var a, int m) {
    const Mat& x = v(a.i);
    const int me = std::min(m, x.rows);
    if (me < 1) throw ShapeError("segment_mean_rows: empty input");
    Mat y(me, x.cols);
    for (int s = 0; s < me; ++s) {
        int lo, hi;
        segment_bounds(x.rows, me, s, lo, hi);
        double* ys = y.row(s);
        for (int i = lo; i < hi; ++i) {
            const double* xi = x.row(i);
            for (int j = 0; j < x.cols; ++j) ys[j] += xi[j];
        }
        const double inv = 1.0 / (hi - lo);
        for (int j = 0; j < x.cols; ++j) ys[j] *= inv;
    }
    return push(std::move(y), [a, me, n = x.rows, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        Mat& ga = t.g(a.i);
        for (int s = 0; s < me; ++s) {
            int lo, hi;
            segment_bounds(n, me, s, lo, hi);
            const double inv = 1.0 / (hi - lo);
            const double* gs = gy.row(s);
            for (int i = lo; i < hi; ++i) {
                double* gi = ga.row(i);
                for (int j = 0; j < gy.cols; ++j) gi[j] += gs[j] * inv;
            }
        }
    });
}

Tape::Var Tape::mean_rows(Var a) {
    const Mat& x = v(a.i);
    Mat y(1, x.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) y(0, j) += x(i, j);
    const double inv = 1.0 / x.rows;
    for (int j = 0; j < x.cols; ++j) y(0, j) *= inv;
    return push(std::move(y), [a, n = x.rows, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        Mat& ga = t.g(a.i);
        const double inv = 1.0 / n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < gy.cols; ++j) ga(i, j) += gy(0, j) * inv;
    });
}

Tape::Var Tape::row_means(Var a) {
    const Mat& x = v(a.i);
    Mat y(x.rows, 1);
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) s += x(i, j);
        y(i, 0) = s / x.cols;
    }
    return push(std::move(y), [a, d = x.cols, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        Mat& ga = t.g(a.i);
        const double inv = 1.0 / d;
        for (int i = 0; i < ga.rows; ++i)
            for (int j = 0; j < d; ++j) ga(i, j) += gy(i, 0) * inv;
    });
}

Tape::Var Tape::col_means(Var a) {
    const Mat& x = v(a.i);
    Mat y(x.cols, 1);
    for (int j = 0; j < x.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < x.rows; ++i) s += x(i, j);
        y(j, 0) = s / x.rows;
    }
    return push(std::move(y), [a, n = x.rows, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        Mat& ga = t.g(a.i);
        const double inv = 1.0 / n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < ga.cols; ++j) ga(i, j) += gy(j, 0) * inv;
    });
}

Tape::Var Tape::sum_all(Var a) {
    Mat y(1, 1);
    y.a[0] = kern::sum_all(v(a.i));
    return push(std::move(y), [a, out = static_cast<int>(nodes_.size())](Tape& t) {
        const double gy = t.g(out).a[0];
        Mat& ga = t.g(a.i);
        for (double& v : ga.a) v += gy;
    });
}

Tape::Var Tape::mean_all(Var a) {
    const size_t n = v(a.i).size();
    Mat y(1, 1);
    y.a[0] = kern::sum_all(v(a.i)) / static_cast<double>(n);
    return push(std::move(y), [a, n, out = static_cast<int>(nodes_.size())](Tape& t) {
        const double gy = t.g(out).a[0] / static_cast<double>(n);
        Mat& ga = t.g(a.i);
        for (double& v : ga.a) v += gy;
    });
}

Tape::Var Tape::col_broadcast_mul(Var gcol, Var x) {
    const Mat& gv = v(gcol.i);
    const Mat& xv = v(x.i);
    if (gv.cols != 1 || gv.rows != xv.rows)
        throw ShapeError("col_broadcast_mul: gate " + shape_str(gv) + " vs tokens " + shape_str(xv));
    Mat y(xv.rows, xv.cols);
    for (int i = 0; i < xv.rows; ++i) {
        const double gi = gv(i, 0);
        for (int j = 0; j < xv.cols; ++j) y(i, j) = gi * xv(i, j);
    }
    return push(std::move(y), [gcol, x, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        const Mat& gv = t.v(gcol.i);
        const Mat& xv = t.v(x.i);
        Mat& dg = t.g(gcol.i);
        Mat& dx = t.g(x.i);
        for (int i = 0; i < xv.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < xv.cols; ++j) {
                s += gy(i, j) * xv(i, j);
                dx(i, j) += gv(i, 0) * gy(i, j);
            }
            dg(i, 0) += s;
        }
    });
}

Tape::Var Tape::div_by_scalar(Var x, Var s, double eps) {
    const Mat& sv = v(s.i);
    if (sv.rows != 1 || sv.cols != 1) throw ShapeError("div_by_scalar: scalar is " + shape_str(sv));
    const double denom = sv.a[0] + eps;
    Mat y;
    kern::scale(v(x.i), 1.0 / denom, y);
    return push(std::move(y), [x, s, denom, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Mat& gy = t.g(out);
        const Mat& xv = t.v(x.i);
        kern::axpy(1.0 / denom, gy, t.g(x.i));
        double dot = 0.0;
        for (size_t i = 0; i < xv.size(); ++i) dot += gy.a[i] * xv.a[i];
        t.g(s.i).a[0] -= dot / (denom * denom);
    });
}

Tape::Var Tape::max_rowsum(Var a) {
    const Mat& x = v(a.i);
    int best = 0;
    double bestv = -HUGE_VAL;
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) s += x(i, j);
        if (s > bestv) {
            bestv = s;
            best = i;
        }
    }
    Mat y(1, 1);
    y.a[0] = bestv;
    return push(std::move(y), [a, best, out = static_cast<int>(nodes_.size())](Tape& t) {
        const double gy = t.g(out).a[0];
        Mat& ga = t.g(a.i);
        for (int j = 0; j < ga.cols; ++j) ga(best, j) += gy;
    });
}

Tape::Var Tape::max_colsum(Var a) {
    const Mat& x = v(a.i);
    int best = 0;
    double bestv = -HUGE_VAL;
    for (int j = 0; j < x.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < x.rows; ++i) s += x(i, j);
        if (s > bestv) {
            bestv = s;
            best = j;
        }
    }
    Mat y(1, 1);
    y.a[0] = bestv;
    return push(std::move(y), [a, best, out = static_cast<int>(nodes_.size())](Tape& t) {
        const double gy = t.g(out).a[0];
        Mat& ga = t.g(a.i);
        for (int i = 0; i < ga.rows; ++i) ga(i, best) += gy;
    });
}

Tape::Var Tape::depthwise_conv_grid(Var tokens, Var kernel, int side, int ksize) {
    Mat y;
    kern::depthwise_conv_grid(v(tokens.i), v(kernel.i), side, ksize, y);
    return push(std::move(y), [tokens, kernel, side, ksize, out = static_cast<int>(nodes_.size())](Tape& t) {
        kern::depthwise_conv_grid_bwd(t.v(tokens.i), t.v(kernel.i), side, ksize, t.g(out), t.g(tokens.i),
                                      t.g(kernel.i));
    });
}

Tape::Var Tape::nll_survival(Var hazards, int time_bin, bool event_observed, double log_floor) {
    const Mat& h = v(hazards.i);
    if (h.rows != 1) throw ShapeError("nll_survival: hazards must be a row vector, got " + shape_str(h));
    const int T = h.cols;
    if (time_bin < 0 || time_bin >= T)
        throw std::out_of_range("nll_survival: time_bin " + std::to_string(time_bin) + " outside [0, " +
                                std::to_string(T) + ")");
    double loss = 0.0;
    const int last_surv_bin = event_observed ? time_bin - 1 : time_bin;
    for (int u = 0; u <= last_surv_bin; ++u) loss -= std::log(std::max(1.0 - h(0, u), log_floor));
    if (event_observed) loss -= std::log(std::max(h(0, time_bin), log_floor));
    Mat y(1, 1);
    y.a[0] = loss;
    return push(std::move(y),
                [hazards, time_bin, event_observed, log_floor, last_surv_bin,
                 out = static_cast<int>(nodes_.size())](Tape& t) {
                    const double gy = t.g(out).a[0];
                    const Mat& h = t.v(hazards.i);
                    Mat& gh = t.g(hazards.i);
                    for (int u = 0; u <= last_surv_bin; ++u)
                        if (1.0 - h(0, u) > log_floor) gh(0, u) += gy / (1.0 - h(0, u));
                    if (event_observed && h(0, time_bin) > log_floor) gh(0, time_bin) -= gy / h(0, time_bin);
                });
}

void Tape::backward(Var loss) {
    if (backward_done_) throw std::logic_error("Tape::backward called twice");
    backward_done_ = true;
    const Mat& lv = val(loss);
    if (lv.rows != 1 || lv.cols != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(lv));
    nodes_[loss.i].grad.a[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        if (nodes_[i].back) nodes_[i].back(*this);
        if (nodes_[i].bound) kern::axpy(1.0, nodes_[i].grad, nodes_[i].bound->grad);
    }
}

}  // namespace murre
