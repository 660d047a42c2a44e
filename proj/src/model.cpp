#include "murrenet/model.hpp"

namespace murre {

AblationFlags AblationFlags::ladder(char model) {
    switch (model) {
        case 'A': return {false, false, false, false, false};
        case 'B': return {true, false, false, false, false};
        case 'C': return {true, true, false, false, false};
        case 'D': return {true, true, true, false, false};
        case 'E': return {true, true, true, true, false};
        case 'F': return {true, true, true, true, true};
        default: throw std::invalid_argument(std::string("unknown ablation model '") + model + "', expected A..F");
    }
}

char AblationFlags::ladder_name() const {
    if (use_recon) return 'F';
    if (use_diff) return 'E';
    if (use_sim) return 'D';
    if (use_dhof) return 'C';
    if (use_mrd) return 'B';
    return 'A';
}

void AblationFlags::validate() const {
    if (use_dhof && !use_mrd) throw std::invalid_argument("ablation: use_dhof requires use_mrd");
    if ((use_sim || use_diff || use_recon) && !use_mrd)
        throw std::invalid_argument("ablation: loss flags require use_mrd");
}

Model::Model(const ModelDims& dims, const AblationFlags& flags, uint64_t seed) : dims_(dims), flags_(flags) {
    flags_.validate();
    if (dims.d_in_p < 1 || dims.d_in_g < 1) throw std::invalid_argument("model: input widths must be set");
    if (dims.d % dims.n_heads != 0) throw std::invalid_argument("model: d must be divisible by n_heads");
    if (dims.n_landmarks < 1) throw std::invalid_argument("model: n_landmarks must be >= 1");
    if (dims.n_bins < 1) throw std::invalid_argument("model: n_bins must be >= 1");
    Rng rng(seed);
    heads_ = EmbeddingHeads(ps_, dims.d_in_p, dims.d_in_g, dims.d, rng);
    if (flags_.use_mrd) mrd_.emplace(ps_, dims.d, dims.gate_hidden, rng);
    if (flags_.use_dhof) {
        fusion_.emplace(ps_, dims.d, dims.n_bins, dims.n_heads, dims.n_landmarks, dims.pinv_iters,
                        dims.pool_includes_common, rng);
    } else {
        const int pooled_width = flags_.use_mrd ? 4 * dims.d : 2 * dims.d;
        survival_head_.emplace(ps_, "survival_head", pooled_width, dims.d, dims.n_bins, false, rng);
    }
}

Model::Forward Model::run(Tape& t, const PatientRecord& rec, AttnMode mode) const {
    Forward f;
    Tape::Var x_p = t.input(rec.pathology_tokens);
    Tape::Var x_g = t.input(rec.genomic_groups);
    f.h_p_o = embed_pathology(t, x_p, heads_);
    f.h_g_o = embed_genomics(t, x_g, heads_);

    if (!flags_.use_mrd) {
        Tape::Var pooled = t.concat_cols(t.mean_rows(f.h_p_o), t.mean_rows(f.h_g_o));
        f.logits = survival_head_->apply(t, pooled);
        f.hazards = t.sigmoid(f.logits);
        return f;
    }

    f.h_p_s = encode_specific(t, f.h_p_o, Modality::Pathology, *mrd_);
    f.h_g_s = encode_specific(t, f.h_g_o, Modality::Genomic, *mrd_);
    CommonEncoding ce = encode_common(t, f.h_p_o, f.h_g_o, *mrd_);
    f.h_p_c = ce.h_p_c;
    f.h_g_c = ce.h_g_c;
    f.h_p_r = reconstruct(t, f.h_p_s, f.h_p_c, Modality::Pathology, *mrd_);
    f.h_g_r = reconstruct(t, f.h_g_s, f.h_g_c, Modality::Genomic, *mrd_);

    if (!flags_.use_dhof) {
        Tape::Var specific = t.concat_cols(t.mean_rows(f.h_p_s), t.mean_rows(f.h_g_s));
        Tape::Var common = t.concat_cols(t.mean_rows(f.h_p_c), t.mean_rows(f.h_g_c));
        f.logits = survival_head_->apply(t, t.concat_cols(specific, common));
        f.hazards = t.sigmoid(f.logits);
        return f;
    }

    std::tie(f.f_s_o, f.f_c_o) = concat_streams(t, f.h_p_s, f.h_g_s, f.h_p_c, f.h_g_c);
    f.f_s_ca = cross_attention(t, f.f_c_o, f.f_s_o, *fusion_);
    f.f_c_ca = cross_attention(t, f.f_s_o, f.f_c_o, *fusion_);
    f.f_s = transformer_decoder(t, f.f_s_ca, fusion_->decoder_s, fusion_->n_landmarks, fusion_->pinv_iters, mode);
    f.f_c = transformer_decoder(t, f.f_c_ca, fusion_->decoder_c, fusion_->n_landmarks, fusion_->pinv_iters, mode);
    std::tie(f.f_mm, f.orth) = dhof_fuse(t, f.f_s, f.f_c, *fusion_);
    f.logits = fusion_->final_fc.apply(t, f.f_mm);
    f.hazards = t.sigmoid(f.logits);
    return f;
}

Model::LossVars Model::loss(Tape& t, const Forward& f, const PatientRecord& rec, const LossWeights& w,
                            SimVariant sim_variant, DiffSign diff_sign) const {
    if (rec.time_bin < 0) throw DataError("loss: patient " + rec.patient_id + " has no time_bin");
    LossVars out;
    double sim = 0.0, diff = 0.0, recon = 0.0;
    Tape::Var acc{};
    auto accumulate = [&](Tape::Var term, double weight) {
        Tape::Var scaled = t.scale(term, weight);
        acc = acc.ok() ? t.add(acc, scaled) : scaled;
    };
    if (flags_.use_sim) {
        Tape::Var ls = sim_variant == SimVariant::Prose ? similarity_loss(t, f.h_p_c, f.h_g_c)
                                                        : similarity_loss_literal(t, f.h_p_o, f.h_p_c);
        sim = t.scalar(ls);
        accumulate(ls, w.alpha);
    }
    if (flags_.use_diff) {
        Tape::Var ld = difference_loss(t, f.h_p_c, f.h_p_s, f.h_g_c, f.h_g_s);
        diff = t.scalar(ld);
        accumulate(ld, diff_sign == DiffSign::Minus ? -w.beta : w.beta);
    }
    if (flags_.use_recon) {
        Tape::Var lr = reconstruction_loss(t, f.h_p_o, f.h_p_r, f.h_g_o, f.h_g_r);
        recon = t.scalar(lr);
        accumulate(lr, w.gamma);
    }
    Tape::Var lsurv = nll_survival_loss(t, f.hazards, rec.time_bin, rec.event_observed);
    acc = acc.ok() ? t.add(acc, lsurv) : lsurv;

    LossWeights effective = w;
    if (diff_sign == DiffSign::Minus) effective.beta = -w.beta;
    out.breakdown = total_loss(sim, diff, recon, t.scalar(lsurv), effective);
    out.total = acc;
    return out;
}

HazardOutput Model::predict(const PatientRecord& rec, RiskScore score) const {
    Tape t;
    Forward f = run(t, rec);
    const Mat& h = t.val(f.hazards);
    return hazards_to_output(h.a, score);
}

Model build_ablation(const ModelDims& dims, const AblationFlags& flags, uint64_t seed) {
    return Model(dims, flags, seed);
}

ForwardResult forward(const PatientRecord& rec, const Model& model, RiskScore score) {
    Tape t;
    Model::Forward f = model.run(t, rec);
    ForwardResult r;
    const Mat& h = t.val(f.hazards);
    r.hazards = hazards_to_output(h.a, score);
    auto grab = [&](Tape::Var v) { return v.ok() ? t.val(v) : Mat{}; };
    r.bundle = RepresentationBundle{grab(f.h_p_o), grab(f.h_g_o), grab(f.h_p_s), grab(f.h_g_s),
                                    grab(f.h_p_c), grab(f.h_g_c), grab(f.h_p_r), grab(f.h_g_r)};
    r.fused = FusedState{grab(f.f_s_o), grab(f.f_c_o), grab(f.f_s_ca), grab(f.f_c_ca),
                         grab(f.f_s),   grab(f.f_c),   Mat{},          grab(f.orth),
                         grab(f.f_mm)};
    if (f.f_c.ok()) {
        const Mat& fc = t.val(f.f_c);
        Mat vec(1, fc.cols);
        std::copy(fc.row(0), fc.row(0) + fc.cols, vec.a.begin());
        r.fused.f_c_vec = std::move(vec);
    }
    return r;
}

}  // namespace murre
