#pragma once

#include <string>

#include "murrenet/rng.hpp"
#include "murrenet/tape.hpp"

namespace murre {

// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void init_fan_in(Mat& w, int fan_in, Rng& rng);

struct AffineBlock {
    Parameter* w = nullptr;  // out x in
    Parameter* b = nullptr;  // 1 x out

    AffineBlock() = default;
    AffineBlock(ParamSet& ps, const std::string& name, int in, int out, Rng& rng);

    Tape::Var apply(Tape& t, Tape::Var x) const { return t.affine(x, t.param(*w), t.param(*b)); }
    int in_dim() const { return w->value.cols; }
    int out_dim() const { return w->value.rows; }
};

struct LayerNormBlock {
    Parameter* gamma = nullptr;
    Parameter* beta = nullptr;

    LayerNormBlock() = default;
    LayerNormBlock(ParamSet& ps, const std::string& name, int d);

    Tape::Var apply(Tape& t, Tape::Var x) const { return t.layernorm(x, t.param(*gamma), t.param(*beta)); }
};

// fc1 -> layer norm -> GELU -> fc2, optional residual (requires in == out).
struct MlpBlock {
    AffineBlock fc1;
    LayerNormBlock ln;
    AffineBlock fc2;
    bool residual = false;

    MlpBlock() = default;
    MlpBlock(ParamSet& ps, const std::string& name, int in, int hidden, int out, bool residual_, Rng& rng);

    Tape::Var apply(Tape& t, Tape::Var x) const;
};

// Per-token scalar gate: 1 -> hidden -> 1, GELU in between, no norm
// (layer norm over a single scalar would zero its own input).
struct GateMlp {
    AffineBlock fc1, fc2;

    GateMlp() = default;
    GateMlp(ParamSet& ps, const std::string& name, int hidden, Rng& rng);

    Tape::Var apply(Tape& t, Tape::Var x) const { return fc2.apply(t, t.gelu(fc1.apply(t, x))); }
};

}  // namespace murre
