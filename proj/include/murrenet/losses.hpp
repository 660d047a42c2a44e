#pragma once

#include "murrenet/tape.hpp"

namespace murre {

// Variant switch for the similarity term: `Prose` aligns the two pooled
// modality-common representations; `Literal` penalizes L1 between the
// original and common pathology tensors instead.
enum class SimVariant { Prose, Literal };
// Sign the divergence term enters the total with.
enum class DiffSign { Plus, Minus };

struct LossWeights {
    double alpha = 1e-4;
    double beta = 1e-4;
    double gamma = 1.0;
};

struct LossBreakdown {
    double l_sim = 0.0;
    double l_diff = 0.0;
    double l_recon = 0.0;
    double l_surv = 0.0;
    double l_total = 0.0;
};

constexpr double kNllLogFloor = 1e-12;

// Tape-level loss terms (each returns a 1x1 var).
Tape::Var similarity_loss(Tape& t, Tape::Var h_p_c, Tape::Var h_g_c);
Tape::Var similarity_loss_literal(Tape& t, Tape::Var h_p_o, Tape::Var h_p_c);
Tape::Var difference_loss(Tape& t, Tape::Var h_p_c, Tape::Var h_p_s, Tape::Var h_g_c, Tape::Var h_g_s);
Tape::Var reconstruction_loss(Tape& t, Tape::Var h_p_o, Tape::Var h_p_r, Tape::Var h_g_o, Tape::Var h_g_r);
Tape::Var nll_survival_loss(Tape& t, Tape::Var hazards, int time_bin, bool event_observed);

// Plain-scalar entry points used by tests and tools.
double similarity_loss(const Mat& h_p_c, const Mat& h_g_c);
double similarity_loss_literal(const Mat& h_p_o, const Mat& h_p_c);
double difference_loss(const Mat& h_p_c, const Mat& h_p_s, const Mat& h_g_c, const Mat& h_g_s);
double reconstruction_loss(const Mat& h_p_o, const Mat& h_p_r, const Mat& h_g_o, const Mat& h_g_r);
double nll_survival_loss(const Mat& hazards, int time_bin, bool event_observed);

// l_total = alpha*l_sim + beta*l_diff + gamma*l_recon + l_surv. Throws
// naming the offending component if any input is non-finite.
LossBreakdown total_loss(double l_sim, double l_diff, double l_recon, double l_surv, const LossWeights& w);

}  // namespace murre
