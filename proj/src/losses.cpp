#include "murrenet/losses.hpp"

#include <cmath>

namespace murre {

namespace {
// KL(softmax(a) || softmax(b)) of two pooled row vectors.
Tape::Var kl_of_softmaxed(Tape& t, Tape::Var a, Tape::Var b) {
    Tape::Var p = t.softmax_rows(a);
    Tape::Var q = t.softmax_rows(b);
    Tape::Var log_ratio = t.sub(t.log_clamped(p, 0.0), t.log_clamped(q, 0.0));
    return t.sum_all(t.hadamard(p, log_ratio));
}
}  // namespace

Tape::Var similarity_loss(Tape& t, Tape::Var h_p_c, Tape::Var h_g_c) {
    const Mat& p = t.val(h_p_c);
    const Mat& g = t.val(h_g_c);
    if (p.cols != g.cols)
        throw ShapeError("similarity_loss: width mismatch " + shape_str(p) + " vs " + shape_str(g));
    return t.mean_all(t.abs(t.sub(t.mean_rows(h_p_c), t.mean_rows(h_g_c))));
}

Tape::Var similarity_loss_literal(Tape& t, Tape::Var h_p_o, Tape::Var h_p_c) {
    require_same_shape(t.val(h_p_o), t.val(h_p_c), "similarity_loss_literal");
    return t.mean_all(t.abs(t.sub(h_p_o, h_p_c)));
}

Tape::Var difference_loss(Tape& t, Tape::Var h_p_c, Tape::Var h_p_s, Tape::Var h_g_c, Tape::Var h_g_s) {
    Tape::Var kpath = kl_of_softmaxed(t, t.mean_rows(h_p_c), t.mean_rows(h_p_s));
    Tape::Var kgen = kl_of_softmaxed(t, t.mean_rows(h_g_c), t.mean_rows(h_g_s));
    return t.add(kpath, kgen);
}

Tape::Var reconstruction_loss(Tape& t, Tape::Var h_p_o, Tape::Var h_p_r, Tape::Var h_g_o, Tape::Var h_g_r) {
    require_same_shape(t.val(h_p_o), t.val(h_p_r), "reconstruction_loss (pathology)");
    require_same_shape(t.val(h_g_o), t.val(h_g_r), "reconstruction_loss (genomics)");
    Tape::Var dp = t.sub(h_p_o, h_p_r);
    Tape::Var dg = t.sub(h_g_o, h_g_r);
    Tape::Var mse_p = t.mean_all(t.hadamard(dp, dp));
    Tape::Var mse_g = t.mean_all(t.hadamard(dg, dg));
    return t.scale(t.add(mse_p, mse_g), 0.5);
}

Tape::Var nll_survival_loss(Tape& t, Tape::Var hazards, int time_bin, bool event_observed) {
    const Mat& h = t.val(hazards);
    for (double x : h.a)
        if (!(x >= 0.0 && x < 1.0))
            throw std::domain_error("nll_survival_loss: hazard " + std::to_string(x) + " outside [0, 1)");
    return t.nll_survival(hazards, time_bin, event_observed, kNllLogFloor);
}

double similarity_loss(const Mat& h_p_c, const Mat& h_g_c) {
    Tape t;
    return t.scalar(similarity_loss(t, t.input(h_p_c), t.input(h_g_c)));
}

double similarity_loss_literal(const Mat& h_p_o, const Mat& h_p_c) {
    Tape t;
    return t.scalar(similarity_loss_literal(t, t.input(h_p_o), t.input(h_p_c)));
}

double difference_loss(const Mat& h_p_c, const Mat& h_p_s, const Mat& h_g_c, const Mat& h_g_s) {
    Tape t;
    return t.scalar(difference_loss(t, t.input(h_p_c), t.input(h_p_s), t.input(h_g_c), t.input(h_g_s)));
}

double reconstruction_loss(const Mat& h_p_o, const Mat& h_p_r, const Mat& h_g_o, const Mat& h_g_r) {
    Tape t;
    return t.scalar(reconstruction_loss(t, t.input(h_p_o), t.input(h_p_r), t.input(h_g_o), t.input(h_g_r)));
}

double nll_survival_loss(const Mat& hazards, int time_bin, bool event_observed) {
    Tape t;
    return t.scalar(nll_survival_loss(t, t.input(hazards), time_bin, event_observed));
}

LossBreakdown total_loss(double l_sim, double l_diff, double l_recon, double l_surv, const LossWeights& w) {
    const struct {
        const char* name;
        double v;
    } parts[] = {{"l_sim", l_sim}, {"l_diff", l_diff}, {"l_recon", l_recon}, {"l_surv", l_surv}};
    for (const auto& p : parts)
        if (!std::isfinite(p.v)) throw std::domain_error(std::string("total_loss: component ") + p.name + " is non-finite");
    LossBreakdown b{l_sim, l_diff, l_recon, l_surv, 0.0};
    b.l_total = w.alpha * l_sim + w.beta * l_diff + w.gamma * l_recon + l_surv;
    return b;
}

}  // namespace murre
