// Times the OpenMP kernels against the serial reference implementations and
// reports speedups. Sizes roughly bracket the shapes the model produces.

#include <chrono>
#include <cstdio>
#include <functional>

#include "murrenet/kernels.hpp"
#include "murrenet/rng.hpp"

using murre::Mat;
namespace kern = murre::kern;

namespace {

Mat random_mat(int r, int c, murre::Rng& rng) {
    Mat m(r, c);
    for (double& v : m.a) v = rng.normal();
    return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-24s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main() {
    murre::Rng rng(20240701);

    {
        const int n = 512;
        Mat a = random_mat(n, n, rng), b = random_mat(n, n, rng), c;
        report("matmul_nn 512x512",
               time_ms([&] { kern::ref::matmul_nn(a, b, c); }, 3),
               time_ms([&] { kern::matmul_nn(a, b, c); }, 3));
    }
    {
        Mat x = random_mat(2048, 256, rng);
        Mat w = random_mat(256, 256, rng);
        Mat bias = random_mat(1, 256, rng);
        Mat y;
        report("affine 2048x256",
               time_ms([&] { kern::ref::affine(x, w, bias, y); }, 5),
               time_ms([&] { kern::affine(x, w, bias, y); }, 5));
    }
    {
        Mat x = random_mat(4096, 512, rng), y;
        report("softmax_rows 4096x512",
               time_ms([&] { kern::ref::softmax_rows(x, y); }, 5),
               time_ms([&] { kern::softmax_rows(x, y); }, 5));
    }
    {
        Mat x = random_mat(4096, 512, rng), y;
        report("gelu 4096x512",
               time_ms([&] { kern::ref::gelu(x, y); }, 5),
               time_ms([&] { kern::gelu(x, y); }, 5));
    }
    {
        Mat x = random_mat(4096, 256, rng);
        Mat gamma = Mat::full(1, 256, 1.0), beta(1, 256);
        Mat y, xh, rs;
        report("layernorm 4096x256",
               time_ms([&] { kern::ref::layernorm_rows(x, gamma, beta, 1e-5, y, xh, rs); }, 5),
               time_ms([&] { kern::layernorm_rows(x, gamma, beta, 1e-5, y, xh, rs); }, 5));
    }
    {
        const int side = 64, d = 64;
        Mat tokens = random_mat(side * side, d, rng);
        Mat kernel = random_mat(49, d, rng);
        Mat y;
        report("depthwise_conv 64x64x64",
               time_ms([&] { kern::ref::depthwise_conv_grid(tokens, kernel, side, 7, y); }, 3),
               time_ms([&] { kern::depthwise_conv_grid(tokens, kernel, side, 7, y); }, 3));
    }
    return 0;
}
