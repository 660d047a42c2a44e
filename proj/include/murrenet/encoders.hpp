#pragma once

#include "murrenet/blocks.hpp"

namespace murre {

// Per-token embedding heads lifting raw pathology / genomic feature vectors
// to the shared model width d.
struct EmbeddingHeads {
    AffineBlock w_p;  // D_in_p -> d, applied per pathology token
    AffineBlock w_g;  // D_in_g -> d, applied per genomic group vector

    EmbeddingHeads() = default;
    EmbeddingHeads(ParamSet& ps, int d_in_p, int d_in_g, int d, Rng& rng);

    int width() const { return w_p.out_dim(); }
};

// Representation decoupling parameters: modality-specific encoders, the
// co-attention common encoder, and the reconstruction decoders.
struct MRDParams {
    MlpBlock gamma_p;    // pathology-specific encoder, d -> d, residual
    MlpBlock gamma_g;    // genomic-specific encoder,   d -> d, residual
    AffineBlock l_p;     // co-attention projection, d -> d
    AffineBlock l_g;     // co-attention projection, d -> d
    GateMlp m_p;         // pathology gate, per-token scalar
    GateMlp m_g;         // genomic gate, per-token scalar
    MlpBlock decoder_p;  // reconstruction decoder, 2d -> d
    MlpBlock decoder_g;  // reconstruction decoder, 2d -> d

    MRDParams() = default;
    MRDParams(ParamSet& ps, int d, int gate_hidden, Rng& rng);
};

enum class Modality { Pathology, Genomic };

// The six decoupled tensors plus the two reconstructions of one forward pass.
struct RepresentationBundle {
    Mat h_p_o, h_g_o;
    Mat h_p_s, h_g_s;
    Mat h_p_c, h_g_c;
    Mat h_p_r, h_g_r;
};

struct CommonEncoding {
    Tape::Var attn;    // co-attention matrix, N_p x N_g
    Tape::Var gate_p;  // N_p x 1, in (0,1)
    Tape::Var gate_g;  // N_g x 1, in (0,1)
    Tape::Var h_p_c;
    Tape::Var h_g_c;
};

Tape::Var embed_pathology(Tape& t, Tape::Var patch_features, const EmbeddingHeads& heads);
Tape::Var embed_genomics(Tape& t, Tape::Var group_vectors, const EmbeddingHeads& heads);
Tape::Var encode_specific(Tape& t, Tape::Var h_o, Modality which, const MRDParams& params);
CommonEncoding encode_common(Tape& t, Tape::Var h_p_o, Tape::Var h_g_o, const MRDParams& params);
Tape::Var reconstruct(Tape& t, Tape::Var h_s, Tape::Var h_c, Modality which, const MRDParams& params);

// Plain-matrix wrappers running a throwaway tape; used by tools and tests.
Mat embed_pathology(const Mat& patch_features, const EmbeddingHeads& heads);
Mat embed_genomics(const Mat& group_vectors, const EmbeddingHeads& heads);
Mat encode_specific(const Mat& h_o, Modality which, const MRDParams& params);
std::pair<Mat, Mat> encode_common(const Mat& h_p_o, const Mat& h_g_o, const MRDParams& params);
Mat reconstruct(const Mat& h_s, const Mat& h_c, Modality which, const MRDParams& params);

}  // namespace murre
