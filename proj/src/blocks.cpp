#include "murrenet/blocks.hpp"

#include <cmath>

namespace murre {

void init_fan_in(Mat& w, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.a) v = rng.uniform(-bound, bound);
}

AffineBlock::AffineBlock(ParamSet& ps, const std::string& name, int in, int out, Rng& rng) {
    w = &ps.add(name + ".w", out, in);
    b = &ps.add(name + ".b", 1, out);
    init_fan_in(w->value, in, rng);
    init_fan_in(b->value, in, rng);
}

LayerNormBlock::LayerNormBlock(ParamSet& ps, const std::string& name, int d) {
    gamma = &ps.add(name + ".gamma", 1, d);
    beta = &ps.add(name + ".beta", 1, d);
    std::fill(gamma->value.a.begin(), gamma->value.a.end(), 1.0);
}

MlpBlock::MlpBlock(ParamSet& ps, const std::string& name, int in, int hidden, int out, bool residual_, Rng& rng)
    : fc1(ps, name + ".fc1", in, hidden, rng),
      ln(ps, name + ".ln", hidden),
      fc2(ps, name + ".fc2", hidden, out, rng),
      residual(residual_) {
    if (residual && in != out) throw std::invalid_argument("MlpBlock '" + name + "': residual requires in == out");
}

Tape::Var MlpBlock::apply(Tape& t, Tape::Var x) const {
    Tape::Var y = fc2.apply(t, t.gelu(ln.apply(t, fc1.apply(t, x))));
    return residual ? t.add(y, x) : y;
}

GateMlp::GateMlp(ParamSet& ps, const std::string& name, int hidden, Rng& rng)
    : fc1(ps, name + ".fc1", 1, hidden, rng), fc2(ps, name + ".fc2", hidden, 1, rng) {}

}  // namespace murre
