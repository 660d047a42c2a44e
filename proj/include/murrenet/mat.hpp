#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace murre {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Row vectors are 1xN, column vectors Nx1.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
    Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), a(std::move(data)) {
        if (a.size() != static_cast<size_t>(r) * c) throw ShapeError("Mat: data size does not match shape");
    }

    static Mat full(int r, int c, double v) {
        Mat m(r, c);
        std::fill(m.a.begin(), m.a.end(), v);
        return m;
    }

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : a)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : a) m = std::max(m, std::abs(v));
        return m;
    }
};

inline std::string shape_str(const Mat& m) {
    return "(" + std::to_string(m.rows) + "x" + std::to_string(m.cols) + ")";
}

inline void require_shape(const Mat& m, int r, int c, const char* what) {
    if (m.rows != r || m.cols != c)
        throw ShapeError(std::string(what) + ": expected (" + std::to_string(r) + "x" + std::to_string(c) +
                         "), got " + shape_str(m));
}

inline void require_same_shape(const Mat& x, const Mat& y, const char* what) {
    if (!x.same_shape(y))
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(x) + " vs " + shape_str(y));
}

}  // namespace murre
