#pragma once

#include <optional>

#include "murrenet/data_model.hpp"
#include "murrenet/fusion.hpp"
#include "murrenet/losses.hpp"
#include "murrenet/survival_metrics.hpp"

namespace murre {

struct ModelDims {
    int d_in_p = 0;  // taken from the cohort
    int d_in_g = 0;
    int d = 32;
    int n_heads = 8;
    int n_landmarks = 64;
    int pinv_iters = 6;
    int gate_hidden = 16;
    int n_bins = 4;
    bool pool_includes_common = true;  // whether DHOF pooling prepends f_c
};

// The ablation ladder: A = plain concat baseline, B adds representation
// decoupling, C adds the fusion stack, D/E/F add the sim/diff/recon loss
// terms (no extra parameters beyond C).
struct AblationFlags {
    bool use_mrd = true;
    bool use_dhof = true;
    bool use_sim = true;
    bool use_diff = true;
    bool use_recon = true;

    static AblationFlags ladder(char model);
    char ladder_name() const;
    // Throws std::invalid_argument on an inconsistent ladder.
    void validate() const;
};

class Model {
public:
    Model(const ModelDims& dims, const AblationFlags& flags, uint64_t seed);

    struct Forward {
        Tape::Var h_p_o, h_g_o;
        Tape::Var h_p_s, h_g_s, h_p_c, h_g_c, h_p_r, h_g_r;
        Tape::Var f_s_o, f_c_o, f_s_ca, f_c_ca, f_s, f_c, orth, f_mm;
        Tape::Var logits, hazards;
    };

    Forward run(Tape& t, const PatientRecord& rec, AttnMode mode = AttnMode::Auto) const;

    struct LossVars {
        Tape::Var total;
        LossBreakdown breakdown;
    };
    LossVars loss(Tape& t, const Forward& f, const PatientRecord& rec, const LossWeights& w, SimVariant sim_variant,
                  DiffSign diff_sign) const;

    HazardOutput predict(const PatientRecord& rec, RiskScore score = RiskScore::NegSumSurvival) const;

    ParamSet& params() { return ps_; }
    const ParamSet& params() const { return ps_; }
    const ModelDims& dims() const { return dims_; }
    const AblationFlags& flags() const { return flags_; }
    const EmbeddingHeads& heads() const { return heads_; }
    const MRDParams* mrd() const { return mrd_ ? &*mrd_ : nullptr; }
    const FusionParams* fusion() const { return fusion_ ? &*fusion_ : nullptr; }

private:
    ModelDims dims_;
    AblationFlags flags_;
    ParamSet ps_;
    EmbeddingHeads heads_;
    std::optional<MRDParams> mrd_;
    std::optional<FusionParams> fusion_;
    std::optional<MlpBlock> survival_head_;  // models A and B only
};

// Spec-facing constructor name for the ladder.
Model build_ablation(const ModelDims& dims, const AblationFlags& flags, uint64_t seed);

// Full forward on a throwaway tape; exposes every intermediate.
struct ForwardResult {
    HazardOutput hazards;
    RepresentationBundle bundle;
    FusedState fused;
};
ForwardResult forward(const PatientRecord& rec, const Model& model, RiskScore score = RiskScore::NegSumSurvival);

}  // namespace murre
