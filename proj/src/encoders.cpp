#include "murrenet/encoders.hpp"

namespace murre {

EmbeddingHeads::EmbeddingHeads(ParamSet& ps, int d_in_p, int d_in_g, int d, Rng& rng)
    : w_p(ps, "embed.pathology", d_in_p, d, rng), w_g(ps, "embed.genomics", d_in_g, d, rng) {}

MRDParams::MRDParams(ParamSet& ps, int d, int gate_hidden, Rng& rng)
    : gamma_p(ps, "mrd.gamma_p", d, d, d, true, rng),
      gamma_g(ps, "mrd.gamma_g", d, d, d, true, rng),
      l_p(ps, "mrd.l_p", d, d, rng),
      l_g(ps, "mrd.l_g", d, d, rng),
      m_p(ps, "mrd.gate_p", gate_hidden, rng),
      m_g(ps, "mrd.gate_g", gate_hidden, rng),
      decoder_p(ps, "mrd.decoder_p", 2 * d, d, d, false, rng),
      decoder_g(ps, "mrd.decoder_g", 2 * d, d, d, false, rng) {}

Tape::Var embed_pathology(Tape& t, Tape::Var patch_features, const EmbeddingHeads& heads) {
    return heads.w_p.apply(t, patch_features);
}

Tape::Var embed_genomics(Tape& t, Tape::Var group_vectors, const EmbeddingHeads& heads) {
    return heads.w_g.apply(t, group_vectors);
}

Tape::Var encode_specific(Tape& t, Tape::Var h_o, Modality which, const MRDParams& params) {
    if (!t.val(h_o).all_finite()) throw std::invalid_argument("encode_specific: non-finite input");
    return (which == Modality::Pathology ? params.gamma_p : params.gamma_g).apply(t, h_o);
}

CommonEncoding encode_common(Tape& t, Tape::Var h_p_o, Tape::Var h_g_o, const MRDParams& params) {
    // A = L_p(h_p_o) * L_g(h_g_o)^T, one affinity per (pathology, genomic) token pair.
    Tape::Var proj_p = params.l_p.apply(t, h_p_o);
    Tape::Var proj_g = params.l_g.apply(t, h_g_o);
    Tape::Var attn = t.matmul_nt(proj_p, proj_g);
    // Each modality is gated by the mean attention it receives from the other.
    Tape::Var gate_p = t.sigmoid(params.m_p.apply(t, t.row_means(attn)));
    Tape::Var gate_g = t.sigmoid(params.m_g.apply(t, t.col_means(attn)));
    Tape::Var h_p_c = t.col_broadcast_mul(gate_p, h_p_o);
    Tape::Var h_g_c = t.col_broadcast_mul(gate_g, h_g_o);
    return CommonEncoding{attn, gate_p, gate_g, h_p_c, h_g_c};
}

Tape::Var reconstruct(Tape& t, Tape::Var h_s, Tape::Var h_c, Modality which, const MRDParams& params) {
    require_same_shape(t.val(h_s), t.val(h_c), "reconstruct");
    Tape::Var joint = t.concat_cols(h_s, h_c);
    return (which == Modality::Pathology ? params.decoder_p : params.decoder_g).apply(t, joint);
}

Mat embed_pathology(const Mat& patch_features, const EmbeddingHeads& heads) {
    Tape t;
    return t.val(embed_pathology(t, t.input(patch_features), heads));
}

Mat embed_genomics(const Mat& group_vectors, const EmbeddingHeads& heads) {
    Tape t;
    return t.val(embed_genomics(t, t.input(group_vectors), heads));
}

Mat encode_specific(const Mat& h_o, Modality which, const MRDParams& params) {
    Tape t;
    return t.val(encode_specific(t, t.input(h_o), which, params));
}

std::pair<Mat, Mat> encode_common(const Mat& h_p_o, const Mat& h_g_o, const MRDParams& params) {
    Tape t;
    CommonEncoding ce = encode_common(t, t.input(h_p_o), t.input(h_g_o), params);
    return {t.val(ce.h_p_c), t.val(ce.h_g_c)};
}

Mat reconstruct(const Mat& h_s, const Mat& h_c, Modality which, const MRDParams& params) {
    Tape t;
    return t.val(reconstruct(t, t.input(h_s), t.input(h_c), which, params));
}

}  // namespace murre
