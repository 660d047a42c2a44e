#include "murrenet/kernels.hpp"

#include <cmath>

namespace murre::kern {

namespace {
// Work threshold below which OpenMP dispatch costs more than it saves.
constexpr long kGrain = 16384;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

inline double gelu_one(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
inline double gelu_grad_one(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}
}  // namespace

void matmul_nn(const Mat& A, const Mat& B, Mat& C) {
    if (A.cols != B.rows) throw ShapeError("matmul_nn: inner dims " + shape_str(A) + " * " + shape_str(B));
    C = Mat(A.rows, B.cols);
    const long work = static_cast<long>(A.rows) * A.cols * B.cols;
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int i = 0; i < A.rows; ++i) {
        double* ci = C.row(i);
        const double* ai = A.row(i);
        for (int k = 0; k < A.cols; ++k) {
            const double aik = ai[k];
            const double* bk = B.row(k);
            for (int j = 0; j < B.cols; ++j) ci[j] += aik * bk[j];
        }
    }
}

void matmul_nt(const Mat& A, const Mat& B, Mat& C) {
    if (A.cols != B.cols) throw ShapeError("matmul_nt: inner dims " + shape_str(A) + " * " + shape_str(B) + "^T");
    C = Mat(A.rows, B.rows);
    const long work = static_cast<long>(A.rows) * A.cols * B.rows;
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        double* ci = C.row(i);
        for (int j = 0; j < B.rows; ++j) {
            const double* bj = B.row(j);
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += ai[k] * bj[k];
            ci[j] = s;
        }
    }
}

void matmul_tn(const Mat& A, const Mat& B, Mat& C) {
    if (A.rows != B.rows) throw ShapeError("matmul_tn: inner dims " + shape_str(A) + "^T * " + shape_str(B));
    C = Mat(A.cols, B.cols);
    const long work = static_cast<long>(A.rows) * A.cols * B.cols;
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int i = 0; i < A.cols; ++i) {
        double* ci = C.row(i);
        for (int k = 0; k < A.rows; ++k) {
            const double aki = A(k, i);
            const double* bk = B.row(k);
            for (int j = 0; j < B.cols; ++j) ci[j] += aki * bk[j];
        }
    }
}

void affine(const Mat& X, const Mat& W, const Mat& b, Mat& Y) {
    if (X.cols != W.cols) throw ShapeError("affine: input width " + shape_str(X) + " vs W " + shape_str(W));
    if (b.rows != 1 || b.cols != W.rows) throw ShapeError("affine: bias " + shape_str(b) + " vs W " + shape_str(W));
    Y = Mat(X.rows, W.rows);
    const long work = static_cast<long>(X.rows) * X.cols * W.rows;
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int i = 0; i < X.rows; ++i) {
        const double* xi = X.row(i);
        double* yi = Y.row(i);
        for (int j = 0; j < W.rows; ++j) {
            const double* wj = W.row(j);
            double s = b(0, j);
            for (int k = 0; k < X.cols; ++k) s += xi[k] * wj[k];
            yi[j] = s;
        }
    }
}

void add(const Mat& A, const Mat& B, Mat& Y) {
    require_same_shape(A, B, "add");
    Y = Mat(A.rows, A.cols);
    const long n = static_cast<long>(A.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) Y.a[i] = A.a[i] + B.a[i];
}

void sub(const Mat& A, const Mat& B, Mat& Y) {
    require_same_shape(A, B, "sub");
    Y = Mat(A.rows, A.cols);
    const long n = static_cast<long>(A.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) Y.a[i] = A.a[i] - B.a[i];
}

void hadamard(const Mat& A, const Mat& B, Mat& Y) {
    require_same_shape(A, B, "hadamard");
    Y = Mat(A.rows, A.cols);
    const long n = static_cast<long>(A.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) Y.a[i] = A.a[i] * B.a[i];
}

void scale(const Mat& A, double s, Mat& Y) {
    Y = Mat(A.rows, A.cols);
    const long n = static_cast<long>(A.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) Y.a[i] = s * A.a[i];
}

void axpy(double s, const Mat& A, Mat& Y) {
    require_same_shape(A, Y, "axpy");
    const long n = static_cast<long>(A.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) Y.a[i] += s * A.a[i];
}

void gelu(const Mat& X, Mat& Y) {
    Y = Mat(X.rows, X.cols);
    const long n = static_cast<long>(X.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) Y.a[i] = gelu_one(X.a[i]);
}

void gelu_bwd(const Mat& X, const Mat& dY, Mat& dX) {
    require_same_shape(X, dY, "gelu_bwd");
    require_same_shape(X, dX, "gelu_bwd");
    const long n = static_cast<long>(X.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) dX.a[i] += dY.a[i] * gelu_grad_one(X.a[i]);
}

void sigmoid(const Mat& X, Mat& Y) {
    Y = Mat(X.rows, X.cols);
    const long n = static_cast<long>(X.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) Y.a[i] = 1.0 / (1.0 + std::exp(-X.a[i]));
}

void sigmoid_bwd(const Mat& Y, const Mat& dY, Mat& dX) {
    require_same_shape(Y, dY, "sigmoid_bwd");
    require_same_shape(Y, dX, "sigmoid_bwd");
    const long n = static_cast<long>(Y.size());
#pragma omp parallel for schedule(static) if (n > kGrain)
    for (long i = 0; i < n; ++i) dX.a[i] += dY.a[i] * Y.a[i] * (1.0 - Y.a[i]);
}

void softmax_rows(const Mat& X, Mat& Y) {
    Y = Mat(X.rows, X.cols);
    const long work = static_cast<long>(X.size());
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int i = 0; i < X.rows; ++i) {
        const double* xi = X.row(i);
        double* yi = Y.row(i);
        double mx = xi[0];
        for (int j = 1; j < X.cols; ++j) mx = std::max(mx, xi[j]);
        double z = 0.0;
        for (int j = 0; j < X.cols; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            z += yi[j];
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < X.cols; ++j) yi[j] *= inv;
    }
}

void softmax_rows_bwd(const Mat& Y, const Mat& dY, Mat& dX) {
    require_same_shape(Y, dY, "softmax_rows_bwd");
    require_same_shape(Y, dX, "softmax_rows_bwd");
    const long work = static_cast<long>(Y.size());
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int i = 0; i < Y.rows; ++i) {
        const double* yi = Y.row(i);
        const double* gi = dY.row(i);
        double* di = dX.row(i);
        double dot = 0.0;
        for (int j = 0; j < Y.cols; ++j) dot += yi[j] * gi[j];
        for (int j = 0; j < Y.cols; ++j) di[j] += yi[j] * (gi[j] - dot);
    }
}

void layernorm_rows(const Mat& X, const Mat& gamma, const Mat& beta, double eps, Mat& Y, Mat& xhat, Mat& rstd) {
    if (gamma.rows != 1 || gamma.cols != X.cols || !gamma.same_shape(beta))
        throw ShapeError("layernorm_rows: scale/shift must be 1x" + std::to_string(X.cols));
    Y = Mat(X.rows, X.cols);
    xhat = Mat(X.rows, X.cols);
    rstd = Mat(X.rows, 1);
    const long work = static_cast<long>(X.size());
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int i = 0; i < X.rows; ++i) {
        const double* xi = X.row(i);
        double mu = 0.0;
        for (int j = 0; j < X.cols; ++j) mu += xi[j];
        mu /= X.cols;
        double var = 0.0;
        for (int j = 0; j < X.cols; ++j) {
            const double c = xi[j] - mu;
            var += c * c;
        }
        var /= X.cols;
        const double r = 1.0 / std::sqrt(var + eps);
        rstd(i, 0) = r;
        double* hi = xhat.row(i);
        double* yi = Y.row(i);
        for (int j = 0; j < X.cols; ++j) {
            hi[j] = (xi[j] - mu) * r;
            yi[j] = gamma(0, j) * hi[j] + beta(0, j);
        }
    }
}

void layernorm_rows_bwd(const Mat& xhat, const Mat& rstd, const Mat& gamma, const Mat& dY, Mat& dX, Mat& dGamma,
                        Mat& dBeta) {
    const int n = xhat.rows, d = xhat.cols;
    // Column-parallel scale/shift grads keep the row-order accumulation fixed.
#pragma omp parallel for schedule(static) if (static_cast<long>(n) * d > kGrain)
    for (int j = 0; j < d; ++j) {
        double sg = 0.0, sb = 0.0;
        for (int i = 0; i < n; ++i) {
            sg += dY(i, j) * xhat(i, j);
            sb += dY(i, j);
        }
        dGamma(0, j) += sg;
        dBeta(0, j) += sb;
    }
#pragma omp parallel for schedule(static) if (static_cast<long>(n) * d > kGrain)
    for (int i = 0; i < n; ++i) {
        const double* hi = xhat.row(i);
        const double* gi = dY.row(i);
        double* di = dX.row(i);
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dh = gi[j] * gamma(0, j);
            m1 += dh;
            m2 += dh * hi[j];
        }
        m1 /= d;
        m2 /= d;
        const double r = rstd(i, 0);
        for (int j = 0; j < d; ++j) {
            const double dh = gi[j] * gamma(0, j);
            di[j] += r * (dh - m1 - hi[j] * m2);
        }
    }
}

void depthwise_conv_grid(const Mat& tokens, const Mat& kernel, int S, int k, Mat& Y) {
    if (tokens.rows != S * S) throw ShapeError("depthwise_conv_grid: tokens " + shape_str(tokens));
    if (kernel.rows != k * k || kernel.cols != tokens.cols)
        throw ShapeError("depthwise_conv_grid: kernel " + shape_str(kernel));
    const int d = tokens.cols;
    const int half = k / 2;
    Y = Mat(S * S, d);
    const long work = static_cast<long>(S) * S * d * k * k;
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            double* yo = Y.row(r * S + c);
            for (int dr = 0; dr < k; ++dr) {
                const int rr = r + dr - half;
                if (rr < 0 || rr >= S) continue;
                for (int dc = 0; dc < k; ++dc) {
                    const int cc = c + dc - half;
                    if (cc < 0 || cc >= S) continue;
                    const double* ti = tokens.row(rr * S + cc);
                    const double* kv = kernel.row(dr * k + dc);
                    for (int ch = 0; ch < d; ++ch) yo[ch] += ti[ch] * kv[ch];
                }
            }
        }
    }
}

void depthwise_conv_grid_bwd(const Mat& tokens, const Mat& kernel, int S, int k, const Mat& dY, Mat& dTokens,
                             Mat& dKernel) {
    const int d = tokens.cols;
    const int half = k / 2;
    // dTokens: correlation of dY with the flipped kernel, parallel over cells.
#pragma omp parallel for schedule(static) if (static_cast<long>(S) * S * d * k * k > kGrain)
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            double* dt = dTokens.row(r * S + c);
            for (int dr = 0; dr < k; ++dr) {
                const int rr = r - (dr - half);
                if (rr < 0 || rr >= S) continue;
                for (int dc = 0; dc < k; ++dc) {
                    const int cc = c - (dc - half);
                    if (cc < 0 || cc >= S) continue;
                    const double* gy = dY.row(rr * S + cc);
                    const double* kv = kernel.row(dr * k + dc);
                    for (int ch = 0; ch < d; ++ch) dt[ch] += gy[ch] * kv[ch];
                }
            }
        }
    }
    // dKernel: one tap per task, serial over the grid for fixed accumulation order.
#pragma omp parallel for schedule(static) if (static_cast<long>(S) * S * d * k * k > kGrain)
    for (int t = 0; t < k * k; ++t) {
        const int dr = t / k, dc = t % k;
        double* dk = dKernel.row(t);
        for (int r = 0; r < S; ++r) {
            const int rr = r + dr - half;
            if (rr < 0 || rr >= S) continue;
            for (int c = 0; c < S; ++c) {
                const int cc = c + dc - half;
                if (cc < 0 || cc >= S) continue;
                const double* gy = dY.row(r * S + c);
                const double* ti = tokens.row(rr * S + cc);
                for (int ch = 0; ch < d; ++ch) dk[ch] += gy[ch] * ti[ch];
            }
        }
    }
}

double sum_all(const Mat& X) {
    std::vector<double> partial(X.rows, 0.0);
    const long work = static_cast<long>(X.size());
#pragma omp parallel for schedule(static) if (work > kGrain)
    for (int i = 0; i < X.rows; ++i) {
        const double* xi = X.row(i);
        double s = 0.0;
        for (int j = 0; j < X.cols; ++j) s += xi[j];
        partial[i] = s;
    }
    double total = 0.0;
    for (int i = 0; i < X.rows; ++i) total += partial[i];
    return total;
}

namespace ref {

void matmul_nn(const Mat& A, const Mat& B, Mat& C) {
    C = Mat(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < B.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += A(i, k) * B(k, j);
            C(i, j) = s;
        }
}

void matmul_nt(const Mat& A, const Mat& B, Mat& C) {
    C = Mat(A.rows, B.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < B.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < A.cols; ++k) s += A(i, k) * B(j, k);
            C(i, j) = s;
        }
}

void matmul_tn(const Mat& A, const Mat& B, Mat& C) {
    C = Mat(A.cols, B.cols);
    for (int i = 0; i < A.cols; ++i)
        for (int j = 0; j < B.cols; ++j) {
            double s = 0.0;
            for (int k = 0; k < A.rows; ++k) s += A(k, i) * B(k, j);
            C(i, j) = s;
        }
}

void affine(const Mat& X, const Mat& W, const Mat& b, Mat& Y) {
    Y = Mat(X.rows, W.rows);
    for (int i = 0; i < X.rows; ++i)
        for (int j = 0; j < W.rows; ++j) {
            double s = b(0, j);
            for (int k = 0; k < X.cols; ++k) s += X(i, k) * W(j, k);
            Y(i, j) = s;
        }
}

void gelu(const Mat& X, Mat& Y) {
    Y = Mat(X.rows, X.cols);
    for (size_t i = 0; i < X.size(); ++i) Y.a[i] = gelu_one(X.a[i]);
}

void softmax_rows(const Mat& X, Mat& Y) {
    Y = Mat(X.rows, X.cols);
    for (int i = 0; i < X.rows; ++i) {
        double mx = X(i, 0);
        for (int j = 1; j < X.cols; ++j) mx = std::max(mx, X(i, j));
        double z = 0.0;
        for (int j = 0; j < X.cols; ++j) {
            Y(i, j) = std::exp(X(i, j) - mx);
            z += Y(i, j);
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < X.cols; ++j) Y(i, j) *= inv;
    }
}

void layernorm_rows(const Mat& X, const Mat& gamma, const Mat& beta, double eps, Mat& Y, Mat& xhat, Mat& rstd) {
    Y = Mat(X.rows, X.cols);
    xhat = Mat(X.rows, X.cols);
    rstd = Mat(X.rows, 1);
    for (int i = 0; i < X.rows; ++i) {
        double mu = 0.0;
        for (int j = 0; j < X.cols; ++j) mu += X(i, j);
        mu /= X.cols;
        double var = 0.0;
        for (int j = 0; j < X.cols; ++j) var += (X(i, j) - mu) * (X(i, j) - mu);
        var /= X.cols;
        const double r = 1.0 / std::sqrt(var + eps);
        rstd(i, 0) = r;
        for (int j = 0; j < X.cols; ++j) {
            xhat(i, j) = (X(i, j) - mu) * r;
            Y(i, j) = gamma(0, j) * xhat(i, j) + beta(0, j);
        }
    }
}

void depthwise_conv_grid(const Mat& tokens, const Mat& kernel, int S, int k, Mat& Y) {
    const int d = tokens.cols;
    const int half = k / 2;
    Y = Mat(S * S, d);
    for (int r = 0; r < S; ++r)
        for (int c = 0; c < S; ++c)
            for (int dr = 0; dr < k; ++dr)
                for (int dc = 0; dc < k; ++dc) {
                    const int rr = r + dr - half, cc = c + dc - half;
                    if (rr < 0 || rr >= S || cc < 0 || cc >= S) continue;
                    for (int ch = 0; ch < d; ++ch)
                        Y(r * S + c, ch) += tokens(rr * S + cc, ch) * kernel(dr * k + dc, ch);
                }
}

double sum_all(const Mat& X) {
    double total = 0.0;
    for (int i = 0; i < X.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < X.cols; ++j) s += X(i, j);
        total += s;
    }
    return total;
}

}  // namespace ref

}  // namespace murre::kern
