#pragma once

#include "murrenet/mat.hpp"

// Dense kernels used by the autodiff tape. kern:: versions parallelize over
// independent output rows with OpenMP; kern::ref:: are the serial reference
// implementations kept for testing and benchmarking. Per-element summation
// order is identical in both, so outputs are required to match bitwise
// (which also makes results independent of the thread count).

namespace murre::kern {

// C = A * B
void matmul_nn(const Mat& A, const Mat& B, Mat& C);
// C = A * B^T
void matmul_nt(const Mat& A, const Mat& B, Mat& C);
// C = A^T * B
void matmul_tn(const Mat& A, const Mat& B, Mat& C);
// Y = X * W^T + 1 b   (W: out x in, b: 1 x out)
void affine(const Mat& X, const Mat& W, const Mat& b, Mat& Y);

void add(const Mat& A, const Mat& B, Mat& Y);
void sub(const Mat& A, const Mat& B, Mat& Y);
void hadamard(const Mat& A, const Mat& B, Mat& Y);
void scale(const Mat& A, double s, Mat& Y);
// Y += s * A
void axpy(double s, const Mat& A, Mat& Y);

void gelu(const Mat& X, Mat& Y);
// dX += dY .* gelu'(X)
void gelu_bwd(const Mat& X, const Mat& dY, Mat& dX);
void sigmoid(const Mat& X, Mat& Y);
// dX += dY .* Y .* (1 - Y), where Y = sigmoid(X)
void sigmoid_bwd(const Mat& Y, const Mat& dY, Mat& dX);

void softmax_rows(const Mat& X, Mat& Y);
// dX += Y .* (dY - rowdot(dY, Y))
void softmax_rows_bwd(const Mat& Y, const Mat& dY, Mat& dX);

// Per-row layer norm with learnable scale/shift (1 x d each).
// rstd receives 1/sqrt(var + eps) per row, xhat the normalized input.
void layernorm_rows(const Mat& X, const Mat& gamma, const Mat& beta, double eps, Mat& Y, Mat& xhat, Mat& rstd);
void layernorm_rows_bwd(const Mat& xhat, const Mat& rstd, const Mat& gamma, const Mat& dY, Mat& dX, Mat& dGamma,
                        Mat& dBeta);

// Depthwise 2-D convolution on an S x S grid with d channels. tokens is
// (S*S) x d row-major over the grid, kernel is (k*k) x d, zero same-padding.
void depthwise_conv_grid(const Mat& tokens, const Mat& kernel, int S, int k, Mat& Y);
void depthwise_conv_grid_bwd(const Mat& tokens, const Mat& kernel, int S, int k, const Mat& dY, Mat& dTokens,
                             Mat& dKernel);

// Deterministic full reduction: per-row partials combined serially in row order.
double sum_all(const Mat& X);

namespace ref {
void matmul_nn(const Mat& A, const Mat& B, Mat& C);
void matmul_nt(const Mat& A, const Mat& B, Mat& C);
void matmul_tn(const Mat& A, const Mat& B, Mat& C);
void affine(const Mat& X, const Mat& W, const Mat& b, Mat& Y);
void gelu(const Mat& X, Mat& Y);
void softmax_rows(const Mat& X, Mat& Y);
void layernorm_rows(const Mat& X, const Mat& gamma, const Mat& beta, double eps, Mat& Y, Mat& xhat, Mat& rstd);
void depthwise_conv_grid(const Mat& tokens, const Mat& kernel, int S, int k, Mat& Y);
double sum_all(const Mat& X);
}  // namespace ref

}  // namespace murre::kern
