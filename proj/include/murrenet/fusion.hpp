#pragma once

#include "murrenet/encoders.hpp"

namespace murre {

enum class AttnMode { Auto, Exact, Nystrom };

struct MsaBlock {
    AffineBlock q, k, v, o;
    int n_heads = 1;

    MsaBlock() = default;
    MsaBlock(ParamSet& ps, const std::string& name, int d, int n_heads_, Rng& rng);
};

// Pyramid position encoding: depthwise 3/5/7 convolutions over the square
// token grid, added to the input. Kernels start at zero so the block is the
// identity at init.
struct PpegBlock {
    Parameter* k3 = nullptr;
    Parameter* k5 = nullptr;
    Parameter* k7 = nullptr;

    PpegBlock() = default;
    PpegBlock(ParamSet& ps, const std::string& name, int d);
};

struct DecoderParams {
    Parameter* class_token = nullptr;
    LayerNormBlock ln1, ln2;
    MsaBlock msa1, msa2;
    PpegBlock ppeg;

    DecoderParams() = default;
    DecoderParams(ParamSet& ps, const std::string& name, int d, int n_heads, Rng& rng);
};

struct FusionParams {
    Parameter* w_q = nullptr;  // single-head cross-attention maps, d x d, no bias
    Parameter* w_k = nullptr;
    Parameter* w_v = nullptr;
    DecoderParams decoder_s, decoder_c;
    AffineBlock fuse_fc;   // d -> d applied to the pooled DHOF tokens
    AffineBlock final_fc;  // d -> T hazard logits
    int n_landmarks = 64;
    int pinv_iters = 6;
    bool pool_includes_common = true;

    FusionParams() = default;
    FusionParams(ParamSet& ps, int d, int n_bins, int n_heads, int n_landmarks_, int pinv_iters_,
                 bool pool_includes_common_, Rng& rng);
};

struct FusedState {
    Mat f_s_o, f_c_o;      // concatenated streams, (N_p+N_g) x d
    Mat f_s_ca, f_c_ca;    // after cross-attention
    Mat f_s, f_c;          // decoder-refined, (N_p+N_g+1) x d with class token at row 0
    Mat f_c_vec;           // 1 x d
    Mat orth;              // orthogonalized specific tokens
    Mat f_mm;              // 1 x d
};

std::pair<Tape::Var, Tape::Var> concat_streams(Tape& t, Tape::Var h_p_s, Tape::Var h_g_s, Tape::Var h_p_c,
                                               Tape::Var h_g_c);
Tape::Var cross_attention(Tape& t, Tape::Var query_tokens, Tape::Var kv_tokens, const FusionParams& params);
Tape::Var multi_head_self_attention(Tape& t, Tape::Var x, const MsaBlock& mb, int n_landmarks, int pinv_iters,
                                    AttnMode mode);
Tape::Var ppeg(Tape& t, Tape::Var tokens_without_class, const PpegBlock& pb);
Tape::Var transformer_decoder(Tape& t, Tape::Var tokens, const DecoderParams& dp, int n_landmarks, int pinv_iters,
                              AttnMode mode = AttnMode::Auto);
// Projects each token of f_s onto f_c_vec and keeps the residual; eps
// regularizes the denominator on the training path (0 disables).
Tape::Var orthogonal_decompose(Tape& t, Tape::Var f_s_tokens, Tape::Var f_c_vec, double denom_eps);
std::pair<Tape::Var, Tape::Var> dhof_fuse(Tape& t, Tape::Var f_s, Tape::Var f_c,
                                          const FusionParams& params);  // -> (f_mm, orth)

// Plain-matrix wrappers.
Mat cross_attention(const Mat& query_tokens, const Mat& kv_tokens, const FusionParams& params);
Mat transformer_decoder(const Mat& tokens, const DecoderParams& dp, int n_landmarks, int pinv_iters,
                        AttnMode mode = AttnMode::Auto);
Mat ppeg(const Mat& tokens_without_class, const PpegBlock& pb);
// Hard-errors on a degenerate common vector (norm <= 1e-8); no epsilon.
Mat orthogonal_decompose(const Mat& f_s_tokens, const Mat& f_c_vec);

}  // namespace murre
