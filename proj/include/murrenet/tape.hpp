#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "murrenet/mat.hpp"

namespace murre {

struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
};

// Owns named trainable arrays with stable addresses.
class ParamSet {
public:
    Parameter& add(const std::string& name, int rows, int cols);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    const std::vector<std::unique_ptr<Parameter>>& items() const { return items_; }
    size_t total_elements() const;
    void zero_grads();

private:
    std::vector<std::unique_ptr<Parameter>> items_;
};

// Reverse-mode autodiff over Mat values. A tape is built per forward pass and
// supports a single backward() sweep; parameter gradients accumulate into the
// bound Parameter::grad arrays.
class Tape {
public:
    struct Var {
        int i = -1;
        bool ok() const { return i >= 0; }
    };

    Var input(Mat v);
    Var param(Parameter& p);
    Var identity(int n);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var hadamard(Var a, Var b);
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);
    Var transpose(Var a);
    Var affine(Var x, Var w, Var b);
    Var gelu(Var a);
    Var sigmoid(Var a);
    Var log_clamped(Var a, double floor);
    Var abs(Var a);
    Var softmax_rows(Var a);
    Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);

    Var concat_rows(Var a, Var b);
    Var slice_rows(Var a, int r0, int r1);
    Var concat_cols(Var a, Var b);
    Var slice_cols(Var a, int c0, int c1);
    Var pad_repeat_rows(Var a, int m);
    Var segment_mean_rows(Var a, int m);

    Var mean_rows(Var a);
    Var row_means(Var a);
    Var col_means(Var a);
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var col_broadcast_mul(Var g, Var x);
    Var div_by_scalar(Var x, Var s, double eps);
    Var max_rowsum(Var a);
    Var max_colsum(Var a);

    Var depthwise_conv_grid(Var tokens, Var kernel, int side, int ksize);
    Var nll_survival(Var hazards, int time_bin, bool event_observed, double log_floor);

    const Mat& val(Var v) const { return nodes_[v.i].val; }
    Mat& grad_of(Var v) { return nodes_[v.i].grad; }
    double scalar(Var v) const;

    void backward(Var loss);
    size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void(Tape&)> back;
        Parameter* bound = nullptr;
    };
    std::vector<Node> nodes_;
    bool backward_done_ = false;

    Var push(Mat val, std::function<void(Tape&)> back = {}, Parameter* bound = nullptr);
    Mat& g(int i) { return nodes_[i].grad; }
    const Mat& v(int i) const { return nodes_[i].val; }
};

}  // namespace murre
